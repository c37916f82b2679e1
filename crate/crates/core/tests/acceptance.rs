//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `FEN_ACCEPTANCE_ONLY=1,4,9` runs a subset.

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fen_core::agents::{AgentTag, Team};
use fen_core::consensus::{gossip_round, gossip_weight, self_correct, GossipState};
use fen_core::envs::{self, Action, EnvOptions, EnvState, Environment, Scenario};
use fen_core::harness::{
    build_graph, converged_episode, evaluate_team, selection_analysis, spearman, train_team,
    EvalAggregate, EvalFlags, RunConfig, Topology, CONVERGENCE_TOLERANCE, CURVE_WINDOW,
};
use fen_core::metrics::{coefficient_of_variation, Cv, ScenarioCounters};
use fen_core::neural::{LossHead, Matrix, Mlp, OutputInit};
use fen_core::ppo::{gae, Trajectory};
use fen_core::rewards::{
    fair_efficient_reward, inequity_aversion_reward, sub_policy_info_reward, team_avg_reward,
    team_min_reward, FairEfficientParams, InequityAversionParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hidden width of the desk-scale learning runs.
const HIDDEN: usize = 64;
const EVAL_EPISODES: u64 = 20;
const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1

fn formulas() -> Outcome {
    let t0 = Instant::now();
    let fe = FairEfficientParams::default();
    let ia = InequityAversionParams::default();
    let cv = |u: &[f64]| match coefficient_of_variation(u) {
        Cv::Defined(v) => v,
        Cv::Undefined => f64::NAN,
    };
    let mut traj = Trajectory::new(1);
    for (r, done) in [(0.0, false), (0.0, false), (1.0, true)] {
        traj.push(&[0.0], 0, -1.0, r, 0.0, done);
    }
    let (_, returns) = gae(&traj, 0.98, 1.0);
    let gossip2 = gossip_round(
        &[0.0, 1.0],
        &fen_core::consensus::NeighborGraph::from_edges(2, &[(0, 1)]),
    );
    let checks: Vec<(&str, f64, f64)> = vec![
        (
            "fe equal",
            fair_efficient_reward(0.25, 0.25, &fe).unwrap(),
            2.5,
        ),
        (
            "fe above",
            fair_efficient_reward(0.5, 0.25, &fe).unwrap(),
            0.25 / 1.1,
        ),
        (
            "fe below",
            fair_efficient_reward(0.0, 0.25, &fe).unwrap(),
            0.25 / 1.1,
        ),
        (
            "fe zero mean",
            fair_efficient_reward(0.0, 0.0, &fe).unwrap(),
            0.0,
        ),
        ("cv equal", cv(&[0.25; 4]), 0.0),
        ("cv one-hot", cv(&[1.0, 0.0, 0.0, 0.0]), 2.0),
        (
            "ia advantaged",
            inequity_aversion_reward(&[1.0, 0.0], 0, &ia).unwrap(),
            0.95,
        ),
        (
            "ia disadvantaged",
            inequity_aversion_reward(&[1.0, 0.0], 1, &ia).unwrap(),
            -5.0,
        ),
        (
            "ia equal",
            inequity_aversion_reward(&[0.3; 3], 2, &ia).unwrap(),
            0.3,
        ),
        ("avg", team_avg_reward(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25),
        ("min delta up", team_min_reward(0.10, 0.12), 0.02),
        ("min delta down", team_min_reward(0.2, 0.15), -0.05),
        ("info uniform", sub_policy_info_reward(0.25), 0.25f64.ln()),
        ("info clamp", sub_policy_info_reward(1e-12), 1e-8f64.ln()),
        ("weight 1-1", gossip_weight(1, 1), 0.5),
        ("weight 3-1", gossip_weight(3, 1), 0.25),
        ("gossip pair", gossip2[0], 0.5),
        (
            "self-correct",
            self_correct(
                GossipState {
                    estimate: 0.5,
                    last_self_utility: 0.4,
                },
                0.5,
            )
            .estimate,
            0.6,
        ),
        ("return t0", returns[0], 0.9604),
        ("return t1", returns[1], 0.98),
        ("return t2", returns[2], 1.0),
    ];
    let failed: Vec<_> = checks
        .iter()
        .filter(|(_, got, want)| !((got - want).abs() <= 1e-9))
        .map(|(n, g, w)| format!("{n}: {g} != {w}"))
        .collect();
    let undefined = matches!(coefficient_of_variation(&[0.0; 3]), Cv::Undefined);
    let elapsed = t0.elapsed();
    outcome(
        failed.is_empty() && undefined && elapsed < Duration::from_secs(1),
        format!(
            "{} checks, failures {:?}, undefined-cv {undefined}, {elapsed:?}",
            checks.len() + 1,
            failed
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Smallest |pre-activation| of either hidden layer over the batch.
fn kink_margin(m: &Mlp, x: &Matrix) -> f64 {
    let [d0, d1, d2, _] = m.dims();
    let p = m.params();
    let mut margin = f64::INFINITY;
    for r in 0..x.rows() {
        let layer = |inp: &[f64], off: usize, i: usize, o: usize| -> Vec<f64> {
            (0..o)
                .map(|k| {
                    p[off + i * o + k] + (0..i).map(|j| inp[j] * p[off + j * o + k]).sum::<f64>()
                })
                .collect()
        };
        let z1 = layer(x.row(r), 0, d0, d1);
        let h1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let z2 = layer(&h1, d0 * d1 + d1, d1, d2);
        for v in z1.iter().chain(&z2) {
            margin = margin.min(v.abs());
        }
    }
    margin
}

fn finite_difference(m: &Mlp, x: &Matrix, heads: &[(f64, LossHead<'_>)], h: f64) -> Vec<f64> {
    let mut probe = m.clone();
    (0..m.num_params())
        .map(|k| {
            let orig = probe.params()[k];
            probe.params_mut()[k] = orig + h;
            let up = probe.loss_and_grad(x, heads).unwrap().loss;
            probe.params_mut()[k] = orig - h;
            let down = probe.loss_and_grad(x, heads).unwrap().loss;
            probe.params_mut()[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradient_gate() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (inp, hid, out) = (
            rng.gen_range(2..7),
            rng.gen_range(3..9),
            rng.gen_range(2..6),
        );
        let m = Mlp::new(inp, hid, out, OutputInit::Value, &mut rng);
        let rows = rng.gen_range(2..7);
        let x = loop {
            let data = (0..rows * inp).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Matrix::from_vec(rows, inp, data).unwrap();
            if kink_margin(&m, &x) > 1e-3 {
                break x;
            }
        };
        let actions: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..out)).collect();
        let adv: Vec<f64> = (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect();
        // Old log-probs near the current ones keep every ratio strictly inside or outside the clip range.
        let logits = m.forward(&x).unwrap();
        let old: Vec<f64> = (0..rows)
            .map(|r| {
                let d = fen_core::neural::CategoricalDist::from_logits(logits.row(r));
                d.log_prob(actions[r]) + if rng.gen_bool(0.5) { 0.05 } else { 0.6 }
            })
            .collect();
        let targets: Vec<f64> = (0..rows).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let vm = Mlp::new(inp, hid, 1, OutputInit::Value, &mut rng);
        let cases: Vec<(&Mlp, Vec<(f64, LossHead<'_>)>)> = vec![
            (
                &m,
                vec![(
                    1.0,
                    LossHead::ClippedSurrogate {
                        actions: &actions,
                        old_log_probs: &old,
                        advantages: &adv,
                        clip_ratio: 0.2,
                    },
                )],
            ),
            (&m, vec![(1.0, LossHead::NegEntropy)]),
            (&vm, vec![(1.0, LossHead::ValueMse { targets: &targets })]),
        ];
        for (net, heads) in &cases {
            if kink_margin(net, &x) <= 1e-3 {
                continue;
            }
            let exact = net.loss_and_grad(&x, heads).unwrap().grads;
            let fd = finite_difference(net, &x, heads, 1e-5);
            for (a, b) in exact.iter().zip(&fd) {
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-6));
            }
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!("max relative error {worst:.2e} over 50 nets x 3 heads, {elapsed:?}"),
    )
}

// ---------------------------------------------------------------- 3

fn consensus_suite() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut max_sum_err, mut monotone, mut converged) = (0.0f64, true, 0);
    let mut max_rounds = 0;
    for g in 0..100 {
        let n = rng.gen_range(2..=50);
        let p = [0.0, 0.05, 0.2, 0.6][g % 4];
        let graph = build_graph(n, Topology::Random(p), &mut rng);
        assert_eq!(graph.components(), 1);
        let mut est: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = est.iter().sum();
        let mean = total / n as f64;
        for round in 1..=200_000 {
            let next = gossip_round(&est, &graph);
            let (lo, hi) = min_max(&est);
            let (nlo, nhi) = min_max(&next);
            monotone &= nlo >= lo - 1e-15 && nhi <= hi + 1e-15;
            max_sum_err = max_sum_err.max((next.iter().sum::<f64>() - total).abs());
            est = next;
            if est.iter().all(|v| (v - mean).abs() < 1e-6) {
                converged += 1;
                max_rounds = max_rounds.max(round);
                break;
            }
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        max_sum_err < 1e-9 && monotone && converged == 100 && elapsed < Duration::from_secs(60),
        format!(
            "converged {converged}/100 (max {max_rounds} rounds), sum drift {max_sum_err:.1e}, contraction {monotone}, {elapsed:?}"
        ),
    )
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        })
}

// ---------------------------------------------------------------- 4

fn step_checks(env: &EnvState, rewards: &[f64]) -> Result<(), String> {
    env.check_invariants()?;
    match env.counters() {
        ScenarioCounters::JobScheduling => {
            let total: f64 = rewards.iter().sum();
            if total != 0.0 && total != 1.0 {
                return Err(format!("job step reward total {total}"));
            }
        }
        ScenarioCounters::Matthew { .. } => {
            // One unit per ghost consumed; at most three ghosts exist.
            if rewards
                .iter()
                .any(|&r| r.fract() != 0.0 || !(0.0..=3.0).contains(&r))
            {
                return Err(format!("matthew rewards {rewards:?}"));
            }
        }
        ScenarioCounters::Plant { total_gems, .. } => {
            if total_gems > 700 {
                return Err(format!("gem budget exceeded: {total_gems}"));
            }
            if rewards.iter().any(|&r| !(0.0..=1.01 + 1e-12).contains(&r)) {
                return Err(format!("plant rewards {rewards:?}"));
            }
        }
    }
    Ok(())
}

fn random_rollout(
    scenario: Scenario,
    seed: u64,
    steps: usize,
) -> Result<(EnvState, Vec<Vec<f64>>), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = EnvOptions::default();
    let (mut env, _) = envs::reset(scenario, seed, &opts);
    let mut log = Vec::with_capacity(steps);
    let mut episode = 0;
    for _ in 0..steps {
        let acts: Vec<Action> = (0..scenario.num_agents())
            .map(|_| Action::from_index(rng.gen_range(0..Action::COUNT)))
            .collect();
        let out = env.step(&acts).map_err(|e| e.to_string())?;
        step_checks(&env, &out.rewards)?;
        if env
            .observe_all()
            .iter()
            .flatten()
            .any(|v| !(-1.0..=1.0).contains(v))
        {
            return Err("observation outside [-1, 1]".into());
        }
        log.push(out.rewards);
        if out.done {
            episode += 1;
            env = envs::reset(scenario, seed + episode, &opts).0;
        }
    }
    Ok((env, log))
}

fn environment_invariants() -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for sc in [Scenario::JobScheduling, Scenario::Matthew, Scenario::Plant] {
        match (random_rollout(sc, 5, 10_000), random_rollout(sc, 5, 10_000)) {
            (Ok(a), Ok(b)) => {
                let same = a == b;
                pass &= same;
                notes.push(format!(
                    "{sc}: ok, replay {}",
                    if same { "identical" } else { "DIFFERS" }
                ));
            }
            (Err(e), _) | (_, Err(e)) => {
                pass = false;
                notes.push(format!("{sc}: {e}"));
            }
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        pass && elapsed < Duration::from_secs(60),
        format!("{}, {elapsed:?}", notes.join("; ")),
    )
}

// ---------------------------------------------------------------- 5..10

struct Trained {
    team: Team,
    curve: Vec<f64>,
    eval: EvalAggregate,
    minutes: f64,
}

fn desk_config(scenario: Scenario, agent: AgentTag, episodes: u64) -> RunConfig {
    let mut cfg = RunConfig::new(scenario, agent);
    cfg.team.hidden = HIDDEN;
    cfg.episodes = episodes;
    cfg.seed = SEED;
    if scenario == Scenario::Plant {
        cfg.max_steps = Some(PLANT_STEP_CAP);
    }
    cfg
}

const JOB_EPISODES: u64 = 2000;
type Criterion<'a> = (u32, &'static str, Box<dyn FnMut() -> Outcome + 'a>);

const MATTHEW_EPISODES: u64 = 500;
const PLANT_EPISODES: u64 = 1000;
const PLANT_STEP_CAP: u64 = 5000;

fn train(scenario: Scenario, agent: AgentTag, episodes: u64) -> Trained {
    let t0 = Instant::now();
    let cfg = desk_config(scenario, agent, episodes);
    let mut curve = Vec::new();
    let mut team = train_team(&cfg, |_, rep| {
        curve.push(rep.mean_fair_efficient);
        Ok(())
    })
    .unwrap();
    let flags = EvalFlags {
        seed: SEED + 100,
        max_steps: cfg.max_steps,
        ..EvalFlags::default()
    };
    let (eval, _) = evaluate_team(&mut team, EVAL_EPISODES, &flags).unwrap();
    Trained {
        team,
        curve,
        eval,
        minutes: t0.elapsed().as_secs_f64() / 60.0,
    }
}

fn converged(t: &Trained) -> String {
    converged_episode(&t.curve, CURVE_WINDOW, CONVERGENCE_TOLERANCE)
        .map_or("never".into(), |e| e.to_string())
}

fn cv_of(t: &Trained) -> f64 {
    t.eval.cv.map_or(f64::INFINITY, |c| c.mean)
}

fn welfare_of(t: &Trained) -> f64 {
    t.eval.social_welfare.map_or(0.0, |w| w.mean)
}

fn products_of(t: &Trained) -> f64 {
    t.eval.num_products.map_or(0.0, |p| p.mean)
}

struct Lazy<T> {
    make: Box<dyn Fn() -> T>,
    value: Option<T>,
}

impl<T> Lazy<T> {
    fn new(make: impl Fn() -> T + 'static) -> Self {
        Self {
            make: Box::new(make),
            value: None,
        }
    }

    fn get(&mut self) -> &mut T {
        if self.value.is_none() {
            self.value = Some((self.make)());
        }
        self.value.as_mut().unwrap()
    }
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("FEN_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));

    let job_fen = RefCell::new(Lazy::new(|| {
        train(Scenario::JobScheduling, AgentTag::Fen, JOB_EPISODES)
    }));
    let job_ind = RefCell::new(Lazy::new(|| {
        train(Scenario::JobScheduling, AgentTag::Independent, JOB_EPISODES)
    }));
    let job_flat = RefCell::new(Lazy::new(|| {
        train(Scenario::JobScheduling, AgentTag::FenFlat, JOB_EPISODES)
    }));
    let mat_fen = RefCell::new(Lazy::new(|| {
        train(Scenario::Matthew, AgentTag::Fen, MATTHEW_EPISODES)
    }));
    let mat_ind = RefCell::new(Lazy::new(|| {
        train(Scenario::Matthew, AgentTag::Independent, MATTHEW_EPISODES)
    }));
    let mat_gossip = RefCell::new(Lazy::new(|| {
        train(Scenario::Matthew, AgentTag::FenGossip, MATTHEW_EPISODES)
    }));
    let plant_fen = RefCell::new(Lazy::new(|| {
        train(Scenario::Plant, AgentTag::Fen, PLANT_EPISODES)
    }));
    let plant_ind = RefCell::new(Lazy::new(|| {
        train(Scenario::Plant, AgentTag::Independent, PLANT_EPISODES)
    }));

    let mut criteria: Vec<Criterion<'_>> = vec![
        (1, "formula unit suite", Box::new(formulas)),
        (2, "gradient gate", Box::new(gradient_gate)),
        (3, "consensus suite", Box::new(consensus_suite)),
        (
            4,
            "environment invariants",
            Box::new(environment_invariants),
        ),
    ];
    criteria.push((
        5,
        "job scheduling desk scale",
        Box::new(|| {
            let (fen_cv, fen_util, fen_min, fen_conv) = {
                let mut f_cell = job_fen.borrow_mut();
                let f = f_cell.get();
                (cv_of(f), f.eval.utilization.mean, f.minutes, converged(f))
            };
            let mut i_cell = job_ind.borrow_mut();
            let i = i_cell.get();
            let (ind_cv, ind_util) = (cv_of(i), i.eval.utilization.mean);
            outcome(
                fen_cv <= 0.35 && fen_util >= 0.70 && ind_util >= 0.85 && ind_cv >= 1.0,
                format!(
                    "fen cv {fen_cv:.3} util {fen_util:.3} (converged at {fen_conv}); \
                     independent cv {ind_cv:.3} util {ind_util:.3} ({fen_min:.1}+{:.1} min)",
                    i.minutes
                ),
            )
        }),
    ));
    criteria.push((
        6,
        "matthew desk scale",
        Box::new(|| {
            let (fen_cv, fen_w) = {
                let mut f_cell = mat_fen.borrow_mut();
                let f = f_cell.get();
                (cv_of(f), welfare_of(f))
            };
            let ind_w = welfare_of(mat_ind.borrow_mut().get());
            outcome(
                fen_cv <= 0.20 && fen_w >= 0.8 * ind_w,
                format!("fen cv {fen_cv:.3} welfare {fen_w:.1}; independent welfare {ind_w:.1}"),
            )
        }),
    ));
    criteria.push((
        7,
        "plant desk scale",
        Box::new(|| {
            let fen_p = products_of(plant_fen.borrow_mut().get());
            let ind_p = products_of(plant_ind.borrow_mut().get());
            outcome(
                fen_p >= 1.5 * ind_p && fen_p > 0.0,
                format!("fen products {fen_p:.2}; independent {ind_p:.2}"),
            )
        }),
    ));
    criteria.push((
        8,
        "selection profile trend",
        Box::new(|| {
            let mut f_cell = job_fen.borrow_mut();
            let f = f_cell.get();
            let bins = selection_analysis(&mut f.team, EVAL_EPISODES, SEED + 200, None).unwrap();
            let populated: Vec<_> = bins.iter().filter(|b| b.count > 0).collect();
            let xs: Vec<f64> = populated.iter().map(|b| 0.5 * (b.lo + b.hi)).collect();
            let ys: Vec<f64> = populated.iter().map(|b| b.p_phi1.unwrap()).collect();
            let rho = spearman(&xs, &ys);
            outcome(
                populated.len() >= 6 && rho.is_some_and(|r| r < 0.0),
                format!(
                    "{} populated bins, spearman {:?}, p(phi1) {:?}",
                    populated.len(),
                    rho.map(|r| (r * 1000.0).round() / 1000.0),
                    ys.iter()
                        .map(|p| (p * 100.0).round() / 100.0)
                        .collect::<Vec<_>>()
                ),
            )
        }),
    ));
    criteria.push((
        9,
        "gossip equivalence",
        Box::new(|| {
            let (ex_cv, ex_w) = {
                let mut f_cell = mat_fen.borrow_mut();
                let f = f_cell.get();
                (cv_of(f), welfare_of(f))
            };
            let mut g_cell = mat_gossip.borrow_mut();
            let g = g_cell.get();
            let (g_cv, g_w) = (cv_of(g), welfare_of(g));
            outcome(
                (g_cv - ex_cv).abs() <= 0.05 && (g_w - ex_w).abs() <= 0.10 * ex_w,
                format!(
                    "gossip cv {g_cv:.3} welfare {g_w:.1}; exact cv {ex_cv:.3} welfare {ex_w:.1}"
                ),
            )
        }),
    ));
    criteria.push((
        10,
        "hierarchy ablation",
        Box::new(|| {
            let fen = job_fen.borrow_mut().get().eval.mean_fair_efficient.mean;
            let flat = job_flat.borrow_mut().get().eval.mean_fair_efficient.mean;
            outcome(
                flat < fen,
                format!("mean fair-efficient reward: fen-flat {flat:.3} < fen {fen:.3}"),
            )
        }),
    ));

    let mut failures = 0;
    for (n, name, run) in criteria.iter_mut() {
        if !wanted(*n) {
            continue;
        }
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !res.pass {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {}: {name}: {} [{:.1}s]",
            if res.pass { "PASS" } else { "FAIL" },
            res.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
