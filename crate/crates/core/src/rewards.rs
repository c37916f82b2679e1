//! Reward functions: the fair-efficient reward, inequity-aversion shaping,
//! the team objectives of the cooperative baselines and the
//! information-theoretic sub-policy reward.

use crate::error::{Error, Result};

/// Parameters of the fair-efficient reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairEfficientParams {
    /// Largest environmental reward an agent can get in one step.
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl Default for FairEfficientParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            gamma: 0.98,
        }
    }
}

/// `(u_bar / c) / (epsilon + |u_i / u_bar - 1|)`, or 0 while `u_bar` is 0.
pub fn fair_efficient_reward(u_i: f64, u_bar: f64, params: &FairEfficientParams) -> Result<f64> {
    if u_i < 0.0 {
        return Err(Error::NegativeUtility(u_i));
    }
    if u_bar < 0.0 {
        return Err(Error::NegativeUtility(u_bar));
    }
    if u_bar == 0.0 {
        return Ok(0.0);
    }
    Ok((u_bar / params.c) / (params.epsilon + (u_i / u_bar - 1.0).abs()))
}

/// Envy/guilt weights for the inequity-aversion baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequityAversionParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for InequityAversionParams {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            beta: 0.05,
        }
    }
}

/// `r_i - alpha/(N-1) * sum max(r_j - r_i, 0) - beta/(N-1) * sum max(r_i - r_j, 0)`
pub fn inequity_aversion_reward(
    step_rewards: &[f64],
    i: usize,
    params: &InequityAversionParams,
) -> Result<f64> {
    let n = step_rewards.len();
    if n < 2 {
        return Err(Error::TooFewAgents {
            required: 2,
            got: n,
        });
    }
    let r_i = step_rewards[i];
    let (envy, guilt) = step_rewards
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold((0.0, 0.0), |(e, g), (_, &r_j)| {
            (e + (r_j - r_i).max(0.0), g + (r_i - r_j).max(0.0))
        });
    let k = (n - 1) as f64;
    Ok(r_i - params.alpha / k * envy - params.beta / k * guilt)
}

/// Weight of the average term in the regularized maximin objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeamObjectiveParams {
    pub alpha_mix: f64,
}

impl Default for TeamObjectiveParams {
    fn default() -> Self {
        Self { alpha_mix: 0.01 }
    }
}

pub fn team_avg_reward(step_rewards: &[f64]) -> Result<f64> {
    if step_rewards.is_empty() {
        return Err(Error::Empty("step rewards"));
    }
    Ok(step_rewards.iter().sum::<f64>() / step_rewards.len() as f64)
}

/// Change in the minimum utility; summed over an episode it telescopes to
/// the final minimum utility.
pub fn team_min_reward(prev_min_utility: f64, curr_min_utility: f64) -> f64 {
    curr_min_utility - prev_min_utility
}

/// `min + alpha_mix * avg` with the two terms supplied by the caller.
pub fn team_min_avg_reward(min_term: f64, avg_term: f64, params: &TeamObjectiveParams) -> f64 {
    min_term + params.alpha_mix * avg_term
}

pub const MIN_SELECTION_PROB: f64 = 1e-8;

/// Natural log of the controller's probability of the active sub-policy.
pub fn sub_policy_info_reward(controller_prob_of_z: f64) -> f64 {
    controller_prob_of_z.max(MIN_SELECTION_PROB).ln()
}
