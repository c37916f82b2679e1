//! A population of agents driven through one environment, episode by episode.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::{flat_reward, make_baseline, BaselineAgent, StepContext};
use super::hierarchy::{FenAgent, CONTROLLER_FEATURES};
use super::nets::PolicySet;
use super::selection::SelectionRecord;
use super::{AgentTag, MinSignal, Objective, TeamConfig};
use crate::consensus::GossipNetwork;
use crate::envs::{self, Action, EnvOptions, Environment, Scenario};
use crate::error::{Error, Result};
use crate::metrics::{summarize, MetricsSummary};
use crate::neural::{CategoricalDist, Matrix};
use crate::ppo::{ppo_update, ActorCritic, LossReport, Trajectory};
use crate::rewards::{fair_efficient_reward, team_min_avg_reward};

/// Pins every agent to one behavior instead of letting controllers choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubPolicyOverride {
    /// Learned sub-policy, 0-based.
    Fixed(usize),
    /// Uniformly random actions.
    Random,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOptions {
    pub learn: bool,
    /// Mode instead of sampling, for both levels.
    pub greedy: bool,
    /// Every sub-policy other than φ₁ acts uniformly at random.
    pub random_subs: bool,
    pub force_sub: Option<SubPolicyOverride>,
    pub record_trace: bool,
    pub record_selections: bool,
    pub env: EnvOptions,
}

impl EpisodeOptions {
    pub fn training() -> Self {
        Self {
            learn: true,
            ..Self::default()
        }
    }

    pub fn evaluation() -> Self {
        Self::default()
    }
}

/// One PPO update performed during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub step: u64,
    pub net: usize,
    /// `controller`, `sub<k>` or `flat`.
    pub module: String,
    pub report: LossReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub agent: usize,
    pub x: f64,
    pub y: f64,
    pub action: usize,
    pub reward: f64,
    /// Active sub-policy, `None` for flat agents.
    pub sub_policy: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub steps: u64,
    pub utilities: Vec<f64>,
    /// Sum of environmental rewards per agent.
    pub env_reward_totals: Vec<f64>,
    pub summary: MetricsSummary,
    /// Mean over `T`-step boundaries of the population-mean fair-efficient
    /// reward computed with the exact mean utility.
    pub mean_fair_efficient: f64,
    pub boundaries: usize,
    /// Controller decisions per agent (0 for flat agents).
    pub decisions: Vec<usize>,
    pub selections: Vec<SelectionRecord>,
    pub trace: Vec<TraceRow>,
    pub updates: Vec<UpdateLog>,
    pub warnings: Vec<String>,
}

/// All agents of a run plus the parameter sets they act with.
#[derive(Debug, Clone)]
pub struct Team {
    scenario: Scenario,
    tag: AgentTag,
    config: TeamConfig,
    obs_dim: usize,
    nets: Vec<PolicySet>,
    net_of: Vec<usize>,
    fen: Vec<FenAgent>,
    flat: Vec<BaselineAgent>,
    gossip: Option<GossipNetwork>,
    rng: ChaCha8Rng,
}

impl Team {
    pub fn new(scenario: Scenario, tag: AgentTag, config: TeamConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = scenario.num_agents();
        let num_nets = if config.shared_weights { 1 } else { n };
        let obs_dim = scenario.obs_dim();
        let nets = (0..num_nets)
            .map(|_| {
                if tag.is_hierarchical() {
                    PolicySet::hierarchical(
                        obs_dim,
                        controller_dim(obs_dim, &config),
                        config.hidden,
                        Action::COUNT,
                        config.num_sub_policies,
                        &config.ppo,
                        &mut rng,
                    )
                } else {
                    PolicySet::Flat(ActorCritic::new(
                        obs_dim,
                        config.hidden,
                        Action::COUNT,
                        &config.ppo,
                        &mut rng,
                    ))
                }
            })
            .collect();
        Self::assemble(scenario, tag, config, nets, rng)
    }

    /// Rebuilds a team around existing parameter sets (e.g. from a checkpoint).
    pub fn from_nets(
        scenario: Scenario,
        tag: AgentTag,
        config: TeamConfig,
        nets: Vec<PolicySet>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let n = scenario.num_agents();
        let expected = if config.shared_weights { 1 } else { n };
        if nets.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameter sets, found {}",
                nets.len()
            )));
        }
        let obs_dim = scenario.obs_dim();
        for set in &nets {
            let (ok, got) = match (set, tag.is_hierarchical()) {
                (PolicySet::Hierarchical(h), true) => (
                    h.subs.len() == config.num_sub_policies
                        && h.controller.obs_dim() == controller_dim(obs_dim, &config)
                        && h.subs.iter().all(|s| s.obs_dim() == obs_dim),
                    h.controller.obs_dim(),
                ),
                (PolicySet::Flat(f), false) => (f.obs_dim() == obs_dim, f.obs_dim()),
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "parameter sets do not fit agent `{tag}`"
                    )))
                }
            };
            if !ok {
                return Err(Error::Checkpoint(format!(
                    "network shapes do not fit `{scenario}` (input {got})"
                )));
            }
        }
        Self::assemble(scenario, tag, config, nets, ChaCha8Rng::seed_from_u64(seed))
    }

    fn assemble(
        scenario: Scenario,
        tag: AgentTag,
        config: TeamConfig,
        nets: Vec<PolicySet>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let n = scenario.num_agents();
        let obs_dim = scenario.obs_dim();
        let net_of: Vec<usize> = (0..n)
            .map(|i| if config.shared_weights { 0 } else { i })
            .collect();
        let (fen, flat) = if tag.is_hierarchical() {
            let fen = (0..n)
                .map(|i| FenAgent::new(i, net_of[i], obs_dim, tag.objective(), &config))
                .collect();
            (fen, Vec::new())
        } else {
            let flat = (0..n)
                .map(|i| make_baseline(tag, i, net_of[i], obs_dim))
                .collect::<Result<_>>()?;
            (Vec::new(), flat)
        };
        let gossip = tag.uses_gossip().then(|| GossipNetwork::new(n));
        Ok(Self {
            scenario,
            tag,
            config,
            obs_dim,
            nets,
            net_of,
            fen,
            flat,
            gossip,
            rng,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn tag(&self) -> AgentTag {
        self.tag
    }

    pub fn config(&self) -> &TeamConfig {
        &self.config
    }

    pub fn num_agents(&self) -> usize {
        self.net_of.len()
    }

    pub fn nets(&self) -> &[PolicySet] {
        &self.nets
    }

    /// Parameter set agent `i` acts with.
    pub fn net_of(&self, agent: usize) -> usize {
        self.net_of[agent]
    }

    pub fn fen_agents(&self) -> &[FenAgent] {
        &self.fen
    }

    pub fn baseline_agents(&self) -> &[BaselineAgent] {
        &self.flat
    }

    /// Runs one episode on a fresh environment drawn from `env_seed`.
    pub fn run_episode(&mut self, env_seed: u64, opts: &EpisodeOptions) -> Result<EpisodeReport> {
        let (mut env, mut obs) = envs::reset(self.scenario, env_seed, &opts.env);
        let n = self.num_agents();
        let hier = self.tag.is_hierarchical();
        let interval = self.config.interval as u64;
        let random_subs = opts.random_subs || self.tag == AgentTag::FenRandomSub;
        let learn = opts.learn && opts.force_sub.is_none();
        if let Some(SubPolicyOverride::Fixed(k)) = opts.force_sub {
            if !hier || k >= self.config.num_sub_policies {
                return Err(Error::InvalidConfig(format!(
                    "cannot pin sub-policy {k} for `{}`",
                    self.tag
                )));
            }
        }
        for a in &mut self.fen {
            a.reset_episode();
        }
        for b in &mut self.flat {
            b.reset_episode();
        }
        if let Some(g) = &mut self.gossip {
            *g = GossipNetwork::new(n);
        }

        let mut report = EpisodeReport {
            steps: 0,
            utilities: vec![0.0; n],
            env_reward_totals: vec![0.0; n],
            summary: summarize(&vec![0.0; n], env.counters()),
            mean_fair_efficient: 0.0,
            boundaries: 0,
            decisions: vec![0; n],
            selections: Vec::new(),
            trace: Vec::new(),
            updates: Vec::new(),
            warnings: Vec::new(),
        };

        if hier {
            match opts.force_sub {
                Some(SubPolicyOverride::Fixed(k)) => self.fen.iter_mut().for_each(|a| a.active = k),
                Some(SubPolicyOverride::Random) => {}
                None => self.select_all(&obs, opts, 0, &mut report.selections)?,
            }
        }

        let mut utilities = vec![0.0; n];
        let mut fe_sum = 0.0;
        let mut interval_avg = 0.0;
        let mut interval_min_step = 0.0;
        let mut min_at_boundary = 0.0;
        let mut acts = vec![Action::Stay; n];
        let mut log_probs = vec![0.0; n];
        let mut values = vec![0.0; n];
        let mut learned = vec![false; n];
        loop {
            // Which network drives each agent this step; `None` acts uniformly.
            let driver: Vec<Option<usize>> = (0..n)
                .map(|i| {
                    if !hier {
                        return Some(0);
                    }
                    let z = self.fen[i].active;
                    match opts.force_sub {
                        Some(SubPolicyOverride::Random) => None,
                        _ if random_subs && z != 0 => None,
                        _ => Some(z),
                    }
                })
                .collect();
            let dists = self.sub_policy_dists(&obs, &driver, learn, &mut values)?;
            for i in 0..n {
                learned[i] = dists[i].is_some();
                acts[i] = match &dists[i] {
                    Some(d) => {
                        let a = if opts.greedy {
                            d.argmax()
                        } else {
                            d.sample(&mut self.rng)
                        };
                        log_probs[i] = d.log_prob(a);
                        Action::from_index(a)
                    }
                    None => Action::from_index(self.rng.gen_range(0..Action::COUNT)),
                };
            }
            let info_probs = if hier && learn && self.config.info_reward_per_step {
                self.controller_probs_of_active(&obs, &learned)?
            } else if hier {
                self.fen
                    .iter()
                    .map(|a| a.selection_probs[a.active])
                    .collect()
            } else {
                vec![1.0; n]
            };

            let out = env.step(&acts)?;
            let t = env.steps();
            let boundary = t % interval == 0 || out.done;
            for i in 0..n {
                report.env_reward_totals[i] += out.rewards[i];
            }

            if hier {
                for (i, a) in self.fen.iter_mut().enumerate() {
                    let r = a.assign_step_reward(out.rewards[i], info_probs[i]);
                    a.clock += 1;
                    utilities[i] = a.tracker.utility;
                    if learn && learned[i] {
                        a.segment.push(
                            &obs[i],
                            acts[i].index(),
                            log_probs[i],
                            r,
                            values[i],
                            out.done,
                        );
                    }
                }
                interval_avg += out.rewards.iter().sum::<f64>() / n as f64;
                interval_min_step += out.rewards.iter().copied().fold(f64::INFINITY, f64::min);
            } else {
                let prev_min = min_of(&utilities);
                for (i, b) in self.flat.iter_mut().enumerate() {
                    b.tracker.update(out.rewards[i]);
                    utilities[i] = b.tracker.utility;
                }
                let ctx = StepContext {
                    rewards: &out.rewards,
                    utilities: &utilities,
                    prev_min_utility: prev_min,
                    at_boundary: boundary,
                };
                for i in 0..n {
                    let r = flat_reward(self.tag.objective(), i, &ctx, &self.config)?;
                    if learn {
                        self.flat[i].segment.push(
                            &obs[i],
                            acts[i].index(),
                            log_probs[i],
                            r,
                            values[i],
                            out.done,
                        );
                    }
                }
            }

            if opts.record_trace {
                for (i, (x, y)) in env.positions().into_iter().enumerate() {
                    report.trace.push(TraceRow {
                        step: t,
                        agent: i,
                        x,
                        y,
                        action: acts[i].index(),
                        reward: out.rewards[i],
                        sub_policy: hier.then(|| self.fen[i].active),
                    });
                }
            }
            obs = env.observe_all();

            if boundary {
                report.boundaries += 1;
                let u_bar = utilities.iter().sum::<f64>() / n as f64;
                let mut fe = 0.0;
                for &u in &utilities {
                    fe += fair_efficient_reward(u, u_bar, &self.config.fair)?;
                }
                fe_sum += fe / n as f64;

                if learn {
                    self.flush_segments(&obs, out.done, t, &mut report.updates)?;
                }
                if hier {
                    let beliefs: Vec<f64> = match &mut self.gossip {
                        Some(g) => {
                            g.update(&utilities, &env.neighbor_graph(), self.config.gossip_rounds);
                            (0..n).map(|i| g.estimate(i).max(0.0)).collect()
                        }
                        None => vec![u_bar; n],
                    };
                    let min_now = min_of(&utilities);
                    let min_term = match self.config.min_signal {
                        MinSignal::ChangeInMinUtility => min_now - min_at_boundary,
                        MinSignal::MinStepReward => interval_min_step,
                    };
                    for (i, a) in self.fen.iter_mut().enumerate() {
                        a.average_estimate = beliefs[i];
                        let r = match a.objective {
                            Objective::FairEfficient => {
                                fair_efficient_reward(utilities[i], beliefs[i], &a.fair)?
                            }
                            Objective::Avg => interval_avg,
                            Objective::Min => min_term,
                            Objective::MinAvg => team_min_avg_reward(
                                min_term,
                                interval_avg,
                                &self.config.team_objective,
                            ),
                            Objective::Independent | Objective::InequityAversion => 0.0,
                        };
                        if !a.controller_traj.is_empty() {
                            a.reward_selection(r);
                        }
                        a.clock = 0;
                    }
                    min_at_boundary = min_now;
                    interval_avg = 0.0;
                    interval_min_step = 0.0;
                    if !out.done && opts.force_sub.is_none() {
                        self.select_all(&obs, opts, t, &mut report.selections)?;
                    }
                }
            }
            if out.done {
                report.steps = t;
                break;
            }
        }

        if hier && learn {
            self.update_controllers(report.steps, &mut report)?;
        }
        for (i, a) in self.fen.iter().enumerate() {
            report.decisions[i] = a.decisions;
        }
        report.mean_fair_efficient = fe_sum / report.boundaries.max(1) as f64;
        report.summary = summarize(&utilities, env.counters());
        report.utilities = utilities;
        Ok(report)
    }

    /// Action distributions for agents with a network driver, batched per
    /// parameter set. Fills `values` when learning.
    fn sub_policy_dists(
        &self,
        obs: &[Vec<f64>],
        driver: &[Option<usize>],
        with_values: bool,
        values: &mut [f64],
    ) -> Result<Vec<Option<CategoricalDist>>> {
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, d) in driver.iter().enumerate() {
            if let Some(k) = d {
                groups.entry((self.net_of[i], *k)).or_default().push(i);
            }
        }
        let mut dists = vec![None; driver.len()];
        for ((net, k), members) in groups {
            let ac = match &self.nets[net] {
                PolicySet::Hierarchical(h) => &h.subs[k],
                PolicySet::Flat(f) => f,
            };
            let rows: Vec<&[f64]> = members.iter().map(|&i| obs[i].as_slice()).collect();
            let x = Matrix::from_rows(&rows)?;
            let logits = ac.policy.forward(&x)?;
            if with_values {
                let v = ac.value.forward(&x)?;
                for (r, &i) in members.iter().enumerate() {
                    values[i] = v.row(r)[0];
                }
            }
            for (r, &i) in members.iter().enumerate() {
                dists[i] = Some(CategoricalDist::from_logits(logits.row(r)));
            }
        }
        Ok(dists)
    }

    /// `p_θ(z|o_t)` of each agent's active sub-policy, for the diversity reward.
    fn controller_probs_of_active(&self, obs: &[Vec<f64>], learned: &[bool]) -> Result<Vec<f64>> {
        let n = obs.len();
        let mut probs = vec![1.0; n];
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in (0..n).filter(|&i| learned[i] && self.fen[i].active != 0) {
            groups.entry(self.net_of[i]).or_default().push(i);
        }
        for (net, members) in groups {
            let h = self.nets[net].as_hierarchical().expect("hierarchical team");
            let rows: Vec<Vec<f64>> = members
                .iter()
                .map(|&i| self.fen[i].controller_input(&obs[i], self.fen[i].average_estimate))
                .collect();
            let logits = h.controller.policy.forward(&Matrix::from_rows(&rows)?)?;
            for (r, &i) in members.iter().enumerate() {
                probs[i] = CategoricalDist::from_logits(logits.row(r)).prob(self.fen[i].active);
            }
        }
        Ok(probs)
    }

    /// Every controller picks a sub-policy for the next interval.
    fn select_all(
        &mut self,
        obs: &[Vec<f64>],
        opts: &EpisodeOptions,
        step: u64,
        selections: &mut Vec<SelectionRecord>,
    ) -> Result<()> {
        let n = obs.len();
        let inputs: Vec<Vec<f64>> = self
            .fen
            .iter()
            .map(|a| a.controller_input(&obs[a.index], a.average_estimate))
            .collect();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            if self.fen[i].clock != 0 {
                return Err(Error::OffBoundarySelection {
                    clock: self.fen[i].clock,
                });
            }
            groups.entry(self.net_of[i]).or_default().push(i);
        }
        let mut dists = vec![None; n];
        let mut values = vec![0.0; n];
        for (net, members) in groups {
            let h = self.nets[net].as_hierarchical().expect("hierarchical team");
            let rows: Vec<&[f64]> = members.iter().map(|&i| inputs[i].as_slice()).collect();
            let x = Matrix::from_rows(&rows)?;
            let logits = h.controller.policy.forward(&x)?;
            let v = h.controller.value.forward(&x)?;
            for (r, &i) in members.iter().enumerate() {
                dists[i] = Some(CategoricalDist::from_logits(logits.row(r)));
                values[i] = v.row(r)[0];
            }
        }
        let u_bar = self.fen.iter().map(|a| a.tracker.utility).sum::<f64>() / n as f64;
        for i in 0..n {
            let d = dists[i].take().expect("every agent has a controller");
            let z = if opts.greedy {
                d.argmax()
            } else {
                d.sample(&mut self.rng)
            };
            let probs = d.probs();
            if opts.record_selections && u_bar > 0.0 {
                selections.push(SelectionRecord {
                    step,
                    agent: i,
                    deviation: (self.fen[i].tracker.utility - u_bar) / u_bar,
                    p_phi1: probs[0],
                    chosen: z,
                });
            }
            self.fen[i].record_selection(&inputs[i], z, d.log_prob(z), values[i], probs);
        }
        Ok(())
    }

    /// PPO on the segments gathered since the last boundary, grouped by
    /// the network that produced them.
    fn flush_segments(
        &mut self,
        obs: &[Vec<f64>],
        done: bool,
        step: u64,
        log: &mut Vec<UpdateLog>,
    ) -> Result<()> {
        let mut batches: BTreeMap<(usize, usize), Vec<Trajectory>> = BTreeMap::new();
        let obs_dim = self.obs_dim;
        if self.tag.is_hierarchical() {
            for i in 0..self.fen.len() {
                if self.fen[i].segment.is_empty() {
                    continue;
                }
                let (net, z) = (self.net_of[i], self.fen[i].active);
                let mut seg = std::mem::replace(&mut self.fen[i].segment, Trajectory::new(obs_dim));
                if !done && (z == 0 || self.config.diversity_bootstrap) {
                    let h = self.nets[net].as_hierarchical().expect("hierarchical team");
                    seg.bootstrap_value = h.subs[z].value.forward_value(&obs[i])?;
                }
                batches.entry((net, z)).or_default().push(seg);
            }
        } else {
            for i in 0..self.flat.len() {
                if self.flat[i].segment.is_empty() {
                    continue;
                }
                let net = self.net_of[i];
                let mut seg =
                    std::mem::replace(&mut self.flat[i].segment, Trajectory::new(obs_dim));
                if !done {
                    let f = self.nets[net].as_flat().expect("flat team");
                    seg.bootstrap_value = f.value.forward_value(&obs[i])?;
                }
                batches.entry((net, 0)).or_default().push(seg);
            }
        }
        for ((net, z), trajs) in batches {
            let mut ppo = self.config.ppo;
            let (ac, module) = match &mut self.nets[net] {
                PolicySet::Hierarchical(h) => {
                    if z != 0 {
                        ppo.entropy_coef = self.config.diversity_entropy_coef;
                    }
                    (&mut h.subs[z], format!("sub{z}"))
                }
                PolicySet::Flat(f) => (f, "flat".to_string()),
            };
            let report = ppo_update(ac, &trajs, &ppo)?;
            log.push(UpdateLog {
                step,
                net,
                module,
                report,
            });
        }
        Ok(())
    }

    fn update_controllers(&mut self, step: u64, report: &mut EpisodeReport) -> Result<()> {
        let mut batches: BTreeMap<usize, Vec<Trajectory>> = BTreeMap::new();
        for a in &mut self.fen {
            if a.controller_traj.is_empty() {
                continue;
            }
            a.controller_traj.mark_last_done();
            let dim = a.controller_traj.obs_dim();
            batches.entry(a.net).or_default().push(std::mem::replace(
                &mut a.controller_traj,
                Trajectory::new(dim),
            ));
        }
        if batches.is_empty() {
            report
                .warnings
                .push("no controller decisions this episode; controller update skipped".into());
        }
        for (net, trajs) in batches {
            let h = match &mut self.nets[net] {
                PolicySet::Hierarchical(h) => h,
                PolicySet::Flat(_) => unreachable!("controller on a flat parameter set"),
            };
            let mut ppo = self.config.ppo;
            ppo.entropy_coef = self.config.controller_entropy_coef;
            let r = ppo_update(&mut h.controller, &trajs, &ppo)?;
            report.updates.push(UpdateLog {
                step,
                net,
                module: "controller".into(),
                report: r,
            });
        }
        Ok(())
    }
}

fn controller_dim(obs_dim: usize, config: &TeamConfig) -> usize {
    obs_dim
        + if config.controller_utility_features {
            CONTROLLER_FEATURES
        } else {
            0
        }
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> TeamConfig {
        let mut c = TeamConfig::for_scenario(scenario);
        c.hidden = 16;
        c
    }

    fn short(steps: u64) -> EpisodeOptions {
        EpisodeOptions {
            env: EnvOptions {
                max_steps: Some(steps),
                ..EnvOptions::default()
            },
            ..EpisodeOptions::training()
        }
    }

    #[test]
    fn one_decision_per_interval() {
        let mut team = Team::new(
            Scenario::JobScheduling,
            AgentTag::Fen,
            small(Scenario::JobScheduling),
            1,
        )
        .unwrap();
        let mut opts = short(100);
        opts.record_trace = true;
        let rep = team.run_episode(5, &opts).unwrap();
        assert_eq!(rep.steps, 100);
        assert_eq!(rep.boundaries, 4);
        assert!(rep.decisions.iter().all(|&d| d == 4));
        for agent in 0..4 {
            let subs: Vec<_> = rep
                .trace
                .iter()
                .filter(|r| r.agent == agent)
                .map(|r| r.sub_policy)
                .collect();
            for chunk in subs.chunks(25) {
                assert!(chunk.iter().all(|&z| z == chunk[0]));
            }
        }
    }

    #[test]
    fn utilities_conserve_env_reward() {
        for tag in [AgentTag::Fen, AgentTag::Independent, AgentTag::FenGossip] {
            let sc = Scenario::Matthew;
            let mut team = Team::new(sc, tag, small(sc), 3).unwrap();
            let rep = team.run_episode(2, &short(120)).unwrap();
            let lhs: f64 = rep.utilities.iter().map(|u| u * rep.steps as f64).sum();
            let rhs: f64 = rep.env_reward_totals.iter().sum();
            assert!((lhs - rhs).abs() < 1e-9, "{tag}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn weight_sharing_layout() {
        let team = Team::new(
            Scenario::JobScheduling,
            AgentTag::Fen,
            small(Scenario::JobScheduling),
            0,
        )
        .unwrap();
        assert_eq!(team.nets().len(), 1);
        assert!((0..4).all(|i| team.net_of(i) == 0));
        let team = Team::new(
            Scenario::Plant,
            AgentTag::Independent,
            small(Scenario::Plant),
            0,
        )
        .unwrap();
        assert_eq!(team.nets().len(), 5);
        assert!((0..5).all(|i| team.net_of(i) == i));
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut team =
                Team::new(Scenario::Plant, AgentTag::Fen, small(Scenario::Plant), 9).unwrap();
            let a = team.run_episode(4, &short(150)).unwrap();
            let b = team.run_episode(5, &short(150)).unwrap();
            (a.utilities, b.utilities, team.nets().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn learning_changes_parameters_only_when_enabled() {
        let sc = Scenario::JobScheduling;
        let mut team = Team::new(sc, AgentTag::Fen, small(sc), 2).unwrap();
        let before = team.nets().to_vec();
        let mut eval = short(60);
        eval.learn = false;
        team.run_episode(1, &eval).unwrap();
        assert_eq!(before, team.nets());
        let rep = team.run_episode(1, &short(60)).unwrap();
        assert_ne!(before, team.nets());
        assert!(rep.updates.iter().any(|u| u.module == "controller"));
        assert!(rep.updates.iter().all(|u| u.report.policy_loss.is_finite()));
    }

    #[test]
    fn episode_shorter_than_interval_still_rewards_selection() {
        let sc = Scenario::Matthew;
        let mut team = Team::new(sc, AgentTag::Fen, small(sc), 2).unwrap();
        let rep = team.run_episode(0, &short(10)).unwrap();
        assert_eq!(rep.boundaries, 1);
        assert!(rep.decisions.iter().all(|&d| d == 1));
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn all_tags_run() {
        for tag in AgentTag::ALL {
            let sc = Scenario::JobScheduling;
            let mut team = Team::new(sc, tag, small(sc), 4).unwrap();
            let rep = team.run_episode(0, &short(60)).unwrap();
            assert!(rep.mean_fair_efficient.is_finite(), "{tag}");
        }
    }

    #[test]
    fn pinned_random_sub_policy_uses_no_controller() {
        let sc = Scenario::Matthew;
        let mut team = Team::new(sc, AgentTag::Fen, small(sc), 4).unwrap();
        let mut opts = short(60);
        opts.force_sub = Some(SubPolicyOverride::Random);
        let rep = team.run_episode(0, &opts).unwrap();
        assert!(rep.decisions.iter().all(|&d| d == 0));
        opts.force_sub = Some(SubPolicyOverride::Fixed(7));
        assert!(team.run_episode(0, &opts).is_err());
    }
}
