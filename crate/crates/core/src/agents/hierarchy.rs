//! The two-level agent: a controller choosing one of several sub-policies
//! every `T` steps, rewarded with the fair-efficient reward.

use rand::Rng;

use super::nets::HierarchicalNets;
use super::{AgentTag, Objective, TeamConfig};
use crate::envs::Action;
use crate::error::{Error, Result};
use crate::metrics::UtilityTracker;
use crate::ppo::Trajectory;
use crate::rewards::{sub_policy_info_reward, FairEfficientParams};

/// Extra controller inputs: deviation from the mean, mean utility, own utility.
pub const CONTROLLER_FEATURES: usize = 3;

/// Utility summary appended to the controller observation, each entry in `[-1, 1]`.
pub fn controller_features(u_i: f64, u_bar: f64, c: f64) -> [f64; CONTROLLER_FEATURES] {
    let deviation = if u_bar > 0.0 { u_i / u_bar - 1.0 } else { 0.0 };
    [
        deviation.clamp(-1.0, 1.0),
        (u_bar / c).clamp(0.0, 1.0),
        (u_i / c).clamp(0.0, 1.0),
    ]
}

/// Per-agent state of a hierarchical learner. Parameters live in a
/// [`HierarchicalNets`] that may be shared with other agents.
#[derive(Debug, Clone, PartialEq)]
pub struct FenAgent {
    pub index: usize,
    /// Index of the parameter set this agent acts with.
    pub net: usize,
    pub interval: usize,
    /// Source of the controller's boundary reward.
    pub objective: Objective,
    /// Active sub-policy `z`, 0-based: 0 is φ₁.
    pub active: usize,
    /// Steps since the last selection.
    pub clock: usize,
    pub tracker: UtilityTracker,
    /// This agent's belief of the mean utility (exact or gossip-estimated).
    pub average_estimate: f64,
    pub fair: FairEfficientParams,
    /// Controller distribution at the last selection.
    pub selection_probs: Vec<f64>,
    pub decisions: usize,
    pub(crate) segment: Trajectory,
    pub(crate) controller_traj: Trajectory,
    with_features: bool,
}

impl FenAgent {
    pub fn new(
        index: usize,
        net: usize,
        obs_dim: usize,
        objective: Objective,
        config: &TeamConfig,
    ) -> Self {
        let controller_dim = obs_dim
            + if config.controller_utility_features {
                CONTROLLER_FEATURES
            } else {
                0
            };
        Self {
            index,
            net,
            interval: config.interval,
            objective,
            active: 0,
            clock: 0,
            tracker: UtilityTracker::new(),
            average_estimate: 0.0,
            fair: config.fair,
            selection_probs: vec![1.0 / config.num_sub_policies as f64; config.num_sub_policies],
            decisions: 0,
            segment: Trajectory::new(obs_dim),
            controller_traj: Trajectory::new(controller_dim),
            with_features: config.controller_utility_features,
        }
    }

    pub fn reset_episode(&mut self) {
        self.active = 0;
        self.clock = 0;
        self.tracker = UtilityTracker::new();
        self.average_estimate = 0.0;
        self.decisions = 0;
        self.segment = Trajectory::new(self.segment.obs_dim());
        self.controller_traj = Trajectory::new(self.controller_traj.obs_dim());
    }

    /// Controller input for observation `obs` given the mean utility `u_bar` this agent believes.
    pub fn controller_input(&self, obs: &[f64], u_bar: f64) -> Vec<f64> {
        let mut x = obs.to_vec();
        if self.with_features {
            x.extend(controller_features(
                self.tracker.utility,
                u_bar,
                self.fair.c,
            ));
        }
        x
    }

    pub fn controller_trajectory(&self) -> &Trajectory {
        &self.controller_traj
    }

    /// Samples (or, when `greedy`, takes the mode of) `z ~ π_θ(·|o)` and
    /// opens a new controller step awaiting its boundary reward.
    pub fn controller_select<R: Rng + ?Sized>(
        &mut self,
        nets: &HierarchicalNets,
        controller_obs: &[f64],
        greedy: bool,
        rng: &mut R,
    ) -> Result<usize> {
        if self.clock != 0 {
            return Err(Error::OffBoundarySelection { clock: self.clock });
        }
        let dist = nets.controller.policy.forward_policy(controller_obs)?;
        let value = nets.controller.value.forward_value(controller_obs)?;
        let z = if greedy {
            dist.argmax()
        } else {
            dist.sample(rng)
        };
        self.record_selection(controller_obs, z, dist.log_prob(z), value, dist.probs());
        Ok(z)
    }

    pub(crate) fn record_selection(
        &mut self,
        controller_obs: &[f64],
        z: usize,
        log_prob: f64,
        value: f64,
        probs: Vec<f64>,
    ) {
        self.active = z;
        self.selection_probs = probs;
        self.decisions += 1;
        self.controller_traj
            .push(controller_obs, z, log_prob, 0.0, value, false);
    }

    /// Samples an action from the active sub-policy; with `random_subs`
    /// every sub-policy other than φ₁ acts uniformly at random.
    pub fn act<R: Rng + ?Sized>(
        &self,
        nets: &HierarchicalNets,
        obs: &[f64],
        random_subs: bool,
        rng: &mut R,
    ) -> Result<Action> {
        if random_subs && self.active != 0 {
            return Ok(Action::from_index(rng.gen_range(0..Action::COUNT)));
        }
        let dist = nets.subs[self.active].policy.forward_policy(obs)?;
        Ok(Action::from_index(dist.sample(rng)))
    }

    /// Training reward of the active sub-policy for one step. The utility
    /// tracker is always credited with the environmental reward.
    pub fn assign_step_reward(&mut self, env_reward: f64, controller_prob_z: f64) -> f64 {
        self.tracker.update(env_reward);
        if self.active == 0 {
            env_reward
        } else {
            sub_policy_info_reward(controller_prob_z)
        }
    }

    /// Attaches the boundary reward to the most recent selection.
    pub(crate) fn reward_selection(&mut self, reward: f64) {
        self.controller_traj.set_last_reward(reward);
    }
}

/// The hierarchical variant of a cooperative baseline: same controller and
/// sub-policies, with the baseline objective as the controller reward.
pub fn hierarchy_on_baseline(tag: AgentTag) -> Result<AgentTag> {
    match tag {
        AgentTag::Avg => Ok(AgentTag::HierAvg),
        AgentTag::Min => Ok(AgentTag::HierMin),
        AgentTag::MinAvg => Ok(AgentTag::HierMinAvg),
        other => Err(Error::InvalidConfig(format!(
            "no hierarchical variant of `{other}` (expected avg, min or minavg)"
        ))),
    }
}
