//! Hierarchical fair-efficient agents, the flat baselines, and the episode
//! runner that drives a whole population through an environment.

mod baseline;
mod hierarchy;
mod nets;
mod selection;
mod team;

use std::fmt;
use std::str::FromStr;

pub use baseline::{make_baseline, BaselineAgent};
pub use hierarchy::{controller_features, hierarchy_on_baseline, FenAgent, CONTROLLER_FEATURES};
pub use nets::{HierarchicalNets, NetsRecord, PolicySet};
pub use selection::{selection_profile, SelectionBin, SelectionRecord};
pub use team::{EpisodeOptions, EpisodeReport, SubPolicyOverride, Team, TraceRow, UpdateLog};

use crate::error::{Error, Result};
use crate::ppo::PpoConfig;
use crate::rewards::{FairEfficientParams, InequityAversionParams, TeamObjectiveParams};

/// Which learner a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentTag {
    Fen,
    FenGossip,
    FenFlat,
    FenRandomSub,
    Independent,
    InequityAversion,
    Avg,
    Min,
    MinAvg,
    HierAvg,
    HierMin,
    HierMinAvg,
}

impl AgentTag {
    pub const ALL: [AgentTag; 12] = [
        AgentTag::Fen,
        AgentTag::FenGossip,
        AgentTag::FenFlat,
        AgentTag::FenRandomSub,
        AgentTag::Independent,
        AgentTag::InequityAversion,
        AgentTag::Avg,
        AgentTag::Min,
        AgentTag::MinAvg,
        AgentTag::HierAvg,
        AgentTag::HierMin,
        AgentTag::HierMinAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentTag::Fen => "fen",
            AgentTag::FenGossip => "fen-gossip",
            AgentTag::FenFlat => "fen-flat",
            AgentTag::FenRandomSub => "fen-random-sub",
            AgentTag::Independent => "independent",
            AgentTag::InequityAversion => "ia",
            AgentTag::Avg => "avg",
            AgentTag::Min => "min",
            AgentTag::MinAvg => "minavg",
            AgentTag::HierAvg => "hier-avg",
            AgentTag::HierMin => "hier-min",
            AgentTag::HierMinAvg => "hier-minavg",
        }
    }

    /// Controller + sub-policies, or a single flat policy.
    pub fn is_hierarchical(self) -> bool {
        matches!(
            self,
            AgentTag::Fen
                | AgentTag::FenGossip
                | AgentTag::FenRandomSub
                | AgentTag::HierAvg
                | AgentTag::HierMin
                | AgentTag::HierMinAvg
        )
    }

    pub fn uses_gossip(self) -> bool {
        matches!(self, AgentTag::FenGossip)
    }

    /// What the learner maximizes: the controller's boundary reward for
    /// hierarchical agents, the per-step reward for flat ones.
    pub fn objective(self) -> Objective {
        match self {
            AgentTag::Fen | AgentTag::FenGossip | AgentTag::FenRandomSub | AgentTag::FenFlat => {
                Objective::FairEfficient
            }
            AgentTag::Independent => Objective::Independent,
            AgentTag::InequityAversion => Objective::InequityAversion,
            AgentTag::Avg | AgentTag::HierAvg => Objective::Avg,
            AgentTag::Min | AgentTag::HierMin => Objective::Min,
            AgentTag::MinAvg | AgentTag::HierMinAvg => Objective::MinAvg,
        }
    }
}

impl fmt::Display for AgentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTag(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Independent,
    InequityAversion,
    Avg,
    Min,
    MinAvg,
    FairEfficient,
}

/// How the `Min` objectives become a per-step signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinSignal {
    /// Change of the minimum utility since the previous step (or boundary).
    ChangeInMinUtility,
    /// Minimum of the raw step rewards.
    MinStepReward,
}

/// Hyperparameters shared by every agent of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamConfig {
    /// Controller interval `T`; also the rollout length of flat learners.
    pub interval: usize,
    pub num_sub_policies: usize,
    pub hidden: usize,
    pub fair: FairEfficientParams,
    pub inequity: InequityAversionParams,
    pub team_objective: TeamObjectiveParams,
    pub ppo: PpoConfig,
    pub gossip_rounds: usize,
    pub shared_weights: bool,
    /// Flat fair-efficient learner rewarded every step instead of every `T`.
    pub flat_reward_every_step: bool,
    /// Appends (deviation, mean utility, own utility) to the controller input.
    pub controller_utility_features: bool,
    pub min_signal: MinSignal,
    /// Diversity reward from `p_θ(z|o_t)` re-evaluated every step instead of
    /// the probability retained at the most recent selection.
    pub info_reward_per_step: bool,
    /// Entropy bonus of the diversity sub-policies φ₂..; φ₁ uses
    /// `ppo.entropy_coef`.
    pub diversity_entropy_coef: f64,
    /// Entropy bonus of the controller.
    pub controller_entropy_coef: f64,
    /// Bootstrap φ₂.. segments with their critic at interval boundaries.
    /// Off treats every diversity segment as a complete trajectory.
    pub diversity_bootstrap: bool,
}

impl TeamConfig {
    pub fn for_scenario(scenario: crate::envs::Scenario) -> Self {
        Self {
            interval: scenario.default_interval(),
            num_sub_policies: 4,
            hidden: 256,
            fair: FairEfficientParams::default(),
            inequity: InequityAversionParams::default(),
            team_objective: TeamObjectiveParams::default(),
            ppo: PpoConfig::default(),
            gossip_rounds: 1,
            shared_weights: scenario.shares_weights(),
            flat_reward_every_step: true,
            controller_utility_features: true,
            min_signal: MinSignal::ChangeInMinUtility,
            info_reward_per_step: false,
            diversity_entropy_coef: 0.1,
            controller_entropy_coef: 0.05,
            diversity_bootstrap: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::InvalidConfig("interval T must be >= 1".into()));
        }
        if self.num_sub_policies < 2 {
            return Err(Error::InvalidConfig("need at least 2 sub-policies".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden width must be >= 1".into()));
        }
        if !(self.fair.epsilon > 0.0 && self.fair.c > 0.0) {
            return Err(Error::InvalidConfig(
                "epsilon and c must be positive".into(),
            ));
        }
        if !(self.controller_entropy_coef >= 0.0) {
            return Err(Error::InvalidConfig(
                "controller_entropy_coef must be >= 0".into(),
            ));
        }
        if !(self.diversity_entropy_coef >= 0.0) {
            return Err(Error::InvalidConfig(
                "diversity_entropy_coef must be >= 0".into(),
            ));
        }
        if self.team_objective.alpha_mix < 0.0 {
            return Err(Error::InvalidConfig("alpha_mix must be >= 0".into()));
        }
        self.ppo.validate()
    }
}
