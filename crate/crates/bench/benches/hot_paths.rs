use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fen_core::agents::{AgentTag, EpisodeOptions, Team, TeamConfig};
use fen_core::consensus::{gossip_round, NeighborGraph};
use fen_core::envs::{self, Action, EnvOptions, Environment, Scenario};
use fen_core::neural::{LossHead, Matrix, Mlp, OutputInit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp_forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Mlp::new(108, 64, 5, OutputInit::Policy, &mut rng);
    let x = Matrix::from_vec(
        100,
        108,
        (0..100 * 108).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let actions: Vec<usize> = (0..100).map(|_| rng.gen_range(0..5)).collect();
    let adv: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.bench_function("mlp_forward_108x64x5_batch100", |b| {
        b.iter(|| net.forward(&x).unwrap())
    });
    c.bench_function("mlp_loss_and_grad_batch100", |b| {
        b.iter(|| {
            net.loss_and_grad(
                &x,
                &[(
                    1.0,
                    LossHead::LogProbAdvantage {
                        actions: &actions,
                        advantages: &adv,
                    },
                )],
            )
            .unwrap()
        })
    });
}

fn env_steps(c: &mut Criterion) {
    for sc in [Scenario::JobScheduling, Scenario::Matthew, Scenario::Plant] {
        let n = sc.num_agents();
        c.bench_function(&format!("env_step_{sc}"), |b| {
            b.iter_batched(
                || {
                    (
                        envs::reset(sc, 1, &EnvOptions::default()).0,
                        ChaCha8Rng::seed_from_u64(2),
                    )
                },
                |(mut env, mut rng)| {
                    for _ in 0..100 {
                        let acts: Vec<Action> = (0..n)
                            .map(|_| Action::from_index(rng.gen_range(0..5)))
                            .collect();
                        if env.step(&acts).unwrap().done {
                            break;
                        }
                    }
                    env.observe_all()
                },
                BatchSize::SmallInput,
            )
        });
    }
}

fn gossip(c: &mut Criterion) {
    let n = 50;
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| [(i, (i + 1) % n), (i, (i + 7) % n)])
        .collect();
    let graph = NeighborGraph::from_edges(n, &edges);
    let est: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    c.bench_function("gossip_round_n50", |b| {
        b.iter(|| gossip_round(&est, &graph))
    });
}

fn training_episode(c: &mut Criterion) {
    let mut cfg = TeamConfig::for_scenario(Scenario::JobScheduling);
    cfg.hidden = 64;
    let mut team = Team::new(Scenario::JobScheduling, AgentTag::Fen, cfg, 0).unwrap();
    let mut opts = EpisodeOptions::training();
    opts.env.max_steps = Some(200);
    let mut group = c.benchmark_group("episode");
    group.sample_size(10);
    group.bench_function("fen_job_200_steps", |b| {
        b.iter(|| team.run_episode(3, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    mlp_forward_backward,
    env_steps,
    gossip,
    training_episode
);
criterion_main!(benches);
