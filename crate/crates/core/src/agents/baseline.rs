//! Flat single-policy learners and their per-step training rewards.

use super::{AgentTag, MinSignal, Objective, TeamConfig};
use crate::error::{Error, Result};
use crate::metrics::UtilityTracker;
use crate::ppo::Trajectory;
use crate::rewards::{
    fair_efficient_reward, inequity_aversion_reward, team_avg_reward, team_min_avg_reward,
    team_min_reward,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAgent {
    pub index: usize,
    pub net: usize,
    pub tag: AgentTag,
    pub tracker: UtilityTracker,
    pub(crate) segment: Trajectory,
}

impl BaselineAgent {
    pub fn objective(&self) -> Objective {
        self.tag.objective()
    }

    pub fn reset_episode(&mut self) {
        self.tracker = UtilityTracker::new();
        self.segment = Trajectory::new(self.segment.obs_dim());
    }
}

/// Builds a flat learner for `tag`; hierarchical tags are rejected.
pub fn make_baseline(
    tag: AgentTag,
    index: usize,
    net: usize,
    obs_dim: usize,
) -> Result<BaselineAgent> {
    if tag.is_hierarchical() {
        return Err(Error::UnknownTag(format!("{tag} is not a flat baseline")));
    }
    Ok(BaselineAgent {
        index,
        net,
        tag,
        tracker: UtilityTracker::new(),
        segment: Trajectory::new(obs_dim),
    })
}

/// Everything a per-step training reward may depend on, after the step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepContext<'a> {
    pub rewards: &'a [f64],
    pub utilities: &'a [f64],
    pub prev_min_utility: f64,
    /// Whether this step closes a `T`-step interval.
    pub at_boundary: bool,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-step reward of flat agent `i`.
pub(crate) fn flat_reward(
    objective: Objective,
    i: usize,
    ctx: &StepContext<'_>,
    config: &TeamConfig,
) -> Result<f64> {
    let min_term = || match config.min_signal {
        MinSignal::ChangeInMinUtility => {
            team_min_reward(ctx.prev_min_utility, min_of(ctx.utilities))
        }
        MinSignal::MinStepReward => min_of(ctx.rewards),
    };
    Ok(match objective {
        Objective::Independent => ctx.rewards[i],
        Objective::InequityAversion => inequity_aversion_reward(ctx.rewards, i, &config.inequity)?,
        Objective::Avg => team_avg_reward(ctx.rewards)?,
        Objective::Min => min_term(),
        Objective::MinAvg => team_min_avg_reward(
            min_term(),
            team_avg_reward(ctx.rewards)?,
            &config.team_objective,
        ),
        Objective::FairEfficient => {
            if config.flat_reward_every_step || ctx.at_boundary {
                fair_efficient_reward(ctx.utilities[i], mean_of(ctx.utilities), &config.fair)?
            } else {
                0.0
            }
        }
    })
}
