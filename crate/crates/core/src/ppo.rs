//! Clipped-surrogate proximal policy optimization with GAE.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{adam_step, AdamState, CategoricalDist, LossHead, Matrix, Mlp, OutputInit};

/// One policy's ordered experience for a single update.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    obs_dim: usize,
    observations: Vec<f64>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    /// Value of the state following the last step; ignored when it is terminal.
    pub bootstrap_value: f64,
}

impl Trajectory {
    pub fn new(obs_dim: usize) -> Self {
        Self {
            obs_dim,
            observations: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            dones: Vec::new(),
            bootstrap_value: 0.0,
        }
    }

    pub fn push(
        &mut self,
        obs: &[f64],
        action: usize,
        log_prob: f64,
        reward: f64,
        value: f64,
        done: bool,
    ) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        self.observations.extend_from_slice(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        &self.observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dones(&self) -> &[bool] {
        &self.dones
    }

    /// Replaces the reward of the most recent step.
    pub fn set_last_reward(&mut self, reward: f64) {
        if let Some(r) = self.rewards.last_mut() {
            *r = reward;
        }
    }

    pub fn mark_last_done(&mut self) {
        if let Some(d) = self.dones.last_mut() {
            *d = true;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty("trajectory"));
        }
        let finite = self.observations.iter().all(|x| x.is_finite())
            && self.rewards.iter().all(|x| x.is_finite())
            && self.values.iter().all(|x| x.is_finite())
            && self.log_probs.iter().all(|&l| l.is_finite() && l <= 0.0)
            && self.bootstrap_value.is_finite();
        if !finite {
            return Err(Error::NonFiniteLoss);
        }
        Ok(())
    }
}

/// PPO hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub entropy_coef: f64,
    pub value_lr: f64,
    pub policy_lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 4,
            entropy_coef: 0.01,
            value_lr: 1e-3,
            policy_lr: 3e-4,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma < 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.clip_ratio > 0.0
            && self.epochs >= 1
            && self.value_lr > 0.0
            && self.policy_lr > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("ppo: {self:?}")))
        }
    }
}

/// Raw generalized advantage estimates and discounted returns.
pub fn gae(traj: &Trajectory, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = traj.len();
    let mut adv = vec![0.0; n];
    let mut next_value = traj.bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if traj.dones[t] { 0.0 } else { 1.0 };
        let delta = traj.rewards[t] + gamma * next_value * live - traj.values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = traj.values[t];
    }
    let returns = adv.iter().zip(&traj.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts to mean 0 and scales to unit (population) standard deviation.
/// Batches of one are left alone.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / std.max(1e-8);
    }
}

/// Normalized advantages and discounted returns of one trajectory.
pub fn compute_advantages(traj: &Trajectory, config: &PpoConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let (mut adv, returns) = gae(traj, config.gamma, config.gae_lambda);
    normalize_advantages(&mut adv);
    Ok((adv, returns))
}

/// Separate policy and value networks with their optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub value: Mlp,
    pub policy_opt: AdamState,
    pub value_opt: AdamState,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: usize,
        num_actions: usize,
        config: &PpoConfig,
        rng: &mut R,
    ) -> Self {
        let policy = Mlp::new(obs_dim, hidden, num_actions, OutputInit::Policy, rng);
        let value = Mlp::new(obs_dim, hidden, 1, OutputInit::Value, rng);
        Self::from_nets(policy, value, config)
    }

    pub fn from_nets(policy: Mlp, value: Mlp, config: &PpoConfig) -> Self {
        let policy_opt = AdamState::new(policy.num_params(), config.policy_lr);
        let value_opt = AdamState::new(value.num_params(), config.value_lr);
        Self {
            policy,
            value,
            policy_opt,
            value_opt,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.policy.output_dim()
    }
}

/// Final-epoch statistics of one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub samples: usize,
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoLogLine {
    pub update_index: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
}

/// Runs `config.epochs` full-batch epochs over all `trajectories`.
///
/// Advantages are estimated per trajectory and normalized over the whole batch.
pub fn ppo_update(
    net: &mut ActorCritic,
    trajectories: &[Trajectory],
    config: &PpoConfig,
) -> Result<LossReport> {
    let trajectories: Vec<&Trajectory> = trajectories.iter().filter(|t| !t.is_empty()).collect();
    if trajectories.is_empty() {
        return Err(Error::Empty("trajectory batch"));
    }
    let obs_dim = net.obs_dim();
    let total: usize = trajectories.iter().map(|t| t.len()).sum();
    let mut obs = Vec::with_capacity(total * obs_dim);
    let mut actions = Vec::with_capacity(total);
    let mut old_log_probs = Vec::with_capacity(total);
    let mut advantages = Vec::with_capacity(total);
    let mut returns = Vec::with_capacity(total);
    for t in &trajectories {
        t.validate()?;
        if t.obs_dim() != obs_dim {
            return Err(Error::DimensionMismatch {
                expected: obs_dim,
                got: t.obs_dim(),
            });
        }
        let (a, r) = gae(t, config.gamma, config.gae_lambda);
        obs.extend_from_slice(&t.observations);
        actions.extend_from_slice(&t.actions);
        old_log_probs.extend_from_slice(&t.log_probs);
        advantages.extend(a);
        returns.extend(r);
    }
    normalize_advantages(&mut advantages);
    let x = Matrix::from_vec(total, obs_dim, obs)?;

    let mut report = LossReport {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        mean_ratio: 1.0,
        samples: total,
    };
    for _ in 0..config.epochs {
        let heads = [
            (
                1.0,
                LossHead::ClippedSurrogate {
                    actions: &actions,
                    old_log_probs: &old_log_probs,
                    advantages: &advantages,
                    clip_ratio: config.clip_ratio,
                },
            ),
            (config.entropy_coef, LossHead::NegEntropy),
        ];
        let p = net.policy.loss_and_grad(&x, &heads)?;
        let v = net
            .value
            .loss_and_grad(&x, &[(1.0, LossHead::ValueMse { targets: &returns })])?;

        let (mut ent, mut ratio) = (0.0, 0.0);
        for b in 0..total {
            let d = CategoricalDist::from_logits(p.output.row(b));
            ent += d.entropy();
            ratio += (d.log_prob(actions[b]) - old_log_probs[b]).exp();
        }
        report.policy_loss = p.loss;
        report.value_loss = v.loss;
        report.entropy = ent / total as f64;
        report.mean_ratio = ratio / total as f64;

        adam_step(net.policy.params_mut(), &p.grads, &mut net.policy_opt);
        adam_step(net.value.params_mut(), &v.grads, &mut net.value_opt);
    }
    Ok(report)
}
