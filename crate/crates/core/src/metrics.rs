//! Per-agent utility tracking and the fairness/efficiency statistics
//! reported for every episode.

use serde::{Deserialize, Serialize};

/// Running average of one agent's environmental reward.
///
/// Utility is defined as 0 before the first step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilityTracker {
    pub cumulative_env_reward: f64,
    pub elapsed_steps: u64,
    pub utility: f64,
}

impl UtilityTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the environmental reward of one step. Shaped rewards never go here.
    pub fn update(&mut self, r: f64) {
        self.cumulative_env_reward += r;
        self.elapsed_steps += 1;
        self.utility = self.cumulative_env_reward / self.elapsed_steps as f64;
    }
}

/// Value-returning form of [`UtilityTracker::update`].
pub fn update_utility(mut tracker: UtilityTracker, r: f64) -> UtilityTracker {
    tracker.update(r);
    tracker
}

/// Coefficient of variation; `Undefined` when the mean utility is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cv {
    Defined(f64),
    Undefined,
}

impl Cv {
    pub fn value(self) -> Option<f64> {
        match self {
            Cv::Defined(v) => Some(v),
            Cv::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Cv::Defined(_))
    }
}

/// `sqrt( 1/(n-1) * sum (u_i - mean)^2 / mean^2 )`.
///
/// Returns [`Cv::Undefined`] for a zero mean and for fewer than two agents.
pub fn coefficient_of_variation(utilities: &[f64]) -> Cv {
    let n = utilities.len();
    if n < 2 {
        return Cv::Undefined;
    }
    let mean = utilities.iter().sum::<f64>() / n as f64;
    if mean == 0.0 || !mean.is_finite() {
        return Cv::Undefined;
    }
    let ss: f64 = utilities.iter().map(|u| (u - mean).powi(2)).sum();
    Cv::Defined((ss / (n as f64 - 1.0) / (mean * mean)).sqrt())
}

/// Scenario-specific counters needed to fill a [`MetricsSummary`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioCounters {
    /// One resource with reward 1: utilization is the sum of utilities.
    JobScheduling,
    Matthew {
        ghosts_consumed: u64,
    },
    Plant {
        gems_in_products: u64,
        total_gems: u64,
        products: u64,
    },
}

/// Fairness and efficiency statistics of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub resource_utilization: f64,
    pub cv: Cv,
    pub min_utility: f64,
    pub max_utility: f64,
    pub social_welfare: Option<f64>,
    pub num_products: Option<u64>,
}

pub fn summarize(utilities: &[f64], counters: ScenarioCounters) -> MetricsSummary {
    let min_utility = utilities.iter().copied().fold(f64::INFINITY, f64::min);
    let max_utility = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (min_utility, max_utility) = if utilities.is_empty() {
        (0.0, 0.0)
    } else {
        (min_utility, max_utility)
    };
    let sum: f64 = utilities.iter().sum();
    let (resource_utilization, social_welfare, num_products) = match counters {
        ScenarioCounters::JobScheduling => (sum, None, None),
        ScenarioCounters::Matthew { ghosts_consumed } => (sum, Some(ghosts_consumed as f64), None),
        ScenarioCounters::Plant {
            gems_in_products,
            total_gems,
            products,
        } => {
            let ratio = if total_gems == 0 {
                0.0
            } else {
                gems_in_products as f64 / total_gems as f64
            };
            (ratio, None, Some(products))
        }
    };
    MetricsSummary {
        resource_utilization,
        cv: coefficient_of_variation(utilities),
        min_utility,
        max_utility,
        social_welfare,
        num_products,
    }
}

/// One JSON line of the per-episode metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: u64,
    pub utilization: f64,
    pub cv: Option<f64>,
    pub min_utility: f64,
    pub max_utility: f64,
    pub social_welfare: Option<f64>,
    pub num_products: Option<u64>,
}

impl MetricsSummary {
    pub fn record(&self, episode: u64) -> MetricsRecord {
        MetricsRecord {
            episode,
            utilization: self.resource_utilization,
            cv: self.cv.value(),
            min_utility: self.min_utility,
            max_utility: self.max_utility,
            social_welfare: self.social_welfare,
            num_products: self.num_products,
        }
    }
}
