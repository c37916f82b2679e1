//! Run configuration: flat `key = value` text with `#` comments, layered as
//! scenario defaults, then the file, then command-line overrides.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::agents::{AgentTag, MinSignal, TeamConfig};
use crate::envs::Scenario;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub agent: AgentTag,
    pub episodes: u64,
    pub seed: u64,
    pub team: TeamConfig,
    /// Episode-length override (job, Matthew) or step cap (plant).
    pub max_steps: Option<u64>,
    pub eval_episodes: u64,
    pub greedy: bool,
    pub trajectory_dump: bool,
    pub out: PathBuf,
}

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected `key = value`", no + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::InvalidConfig(format!("line {}: empty key", no + 1)));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Defaults for a scenario/agent pair.
    pub fn new(scenario: Scenario, agent: AgentTag) -> Self {
        Self {
            scenario,
            agent,
            episodes: 100,
            seed: 0,
            team: TeamConfig::for_scenario(scenario),
            max_steps: None,
            eval_episodes: 10,
            greedy: false,
            trajectory_dump: false,
            out: PathBuf::from("runs/out"),
        }
    }

    /// Builds a config from layered pairs; later pairs win. `scenario` and
    /// `agent` are resolved first so scenario defaults apply underneath.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let last = |key: &str| {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };
        let scenario: Scenario = last("scenario").unwrap_or("job").parse()?;
        let agent: AgentTag = last("agent").unwrap_or("fen").parse()?;
        let mut cfg = Self::new(scenario, agent);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "scenario") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.team;
        match key {
            "scenario" => {
                let s: Scenario = value.parse()?;
                if s != self.scenario {
                    return Err(Error::InvalidConfig(
                        "scenario must be set before other keys".into(),
                    ));
                }
            }
            "agent" => self.agent = value.parse()?,
            "episodes" => self.episodes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "interval" | "T" => t.interval = parse(key, value)?,
            "sub_policies" => t.num_sub_policies = parse(key, value)?,
            "hidden" => t.hidden = parse(key, value)?,
            "epsilon" => t.fair.epsilon = parse(key, value)?,
            "c" => t.fair.c = parse(key, value)?,
            "gamma" => {
                t.fair.gamma = parse(key, value)?;
                t.ppo.gamma = t.fair.gamma;
            }
            "gae_lambda" => t.ppo.gae_lambda = parse(key, value)?,
            "clip_ratio" => t.ppo.clip_ratio = parse(key, value)?,
            "epochs" => t.ppo.epochs = parse(key, value)?,
            "entropy_coef" => t.ppo.entropy_coef = parse(key, value)?,
            "value_lr" => t.ppo.value_lr = parse(key, value)?,
            "policy_lr" => t.ppo.policy_lr = parse(key, value)?,
            "gossip_rounds" => t.gossip_rounds = parse(key, value)?,
            "ia_alpha" => t.inequity.alpha = parse(key, value)?,
            "ia_beta" => t.inequity.beta = parse(key, value)?,
            "alpha_mix" => t.team_objective.alpha_mix = parse(key, value)?,
            "shared_weights" => t.shared_weights = parse(key, value)?,
            "flat_reward_every_step" => t.flat_reward_every_step = parse(key, value)?,
            "controller_utility_features" => t.controller_utility_features = parse(key, value)?,
            "diversity_entropy_coef" => t.diversity_entropy_coef = parse(key, value)?,
            "info_reward_per_step" => t.info_reward_per_step = parse(key, value)?,
            "controller_entropy_coef" => t.controller_entropy_coef = parse(key, value)?,
            "diversity_bootstrap" => t.diversity_bootstrap = parse(key, value)?,
            "min_signal" => {
                t.min_signal = match value {
                    "change_in_min_utility" => MinSignal::ChangeInMinUtility,
                    "min_step_reward" => MinSignal::MinStepReward,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "bad value `{value}` for `min_signal`"
                        )))
                    }
                }
            }
            "max_steps" => {
                self.max_steps = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "greedy" => self.greedy = parse(key, value)?,
            "trajectory_dump" => self.trajectory_dump = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be >= 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        self.team.validate()
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_config_text(&self) -> String {
        let t = &self.team;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.to_string());
        kv("agent", self.agent.to_string());
        kv("episodes", self.episodes.to_string());
        kv("seed", self.seed.to_string());
        kv("interval", t.interval.to_string());
        kv("sub_policies", t.num_sub_policies.to_string());
        kv("hidden", t.hidden.to_string());
        kv("epsilon", t.fair.epsilon.to_string());
        kv("c", t.fair.c.to_string());
        kv("gamma", t.ppo.gamma.to_string());
        kv("gae_lambda", t.ppo.gae_lambda.to_string());
        kv("clip_ratio", t.ppo.clip_ratio.to_string());
        kv("epochs", t.ppo.epochs.to_string());
        kv("entropy_coef", t.ppo.entropy_coef.to_string());
        kv("value_lr", t.ppo.value_lr.to_string());
        kv("policy_lr", t.ppo.policy_lr.to_string());
        kv("gossip_rounds", t.gossip_rounds.to_string());
        kv("ia_alpha", t.inequity.alpha.to_string());
        kv("ia_beta", t.inequity.beta.to_string());
        kv("alpha_mix", t.team_objective.alpha_mix.to_string());
        kv("shared_weights", t.shared_weights.to_string());
        kv(
            "flat_reward_every_step",
            t.flat_reward_every_step.to_string(),
        );
        kv(
            "controller_utility_features",
            t.controller_utility_features.to_string(),
        );
        kv(
            "diversity_entropy_coef",
            t.diversity_entropy_coef.to_string(),
        );
        kv("info_reward_per_step", t.info_reward_per_step.to_string());
        kv(
            "controller_entropy_coef",
            t.controller_entropy_coef.to_string(),
        );
        kv("diversity_bootstrap", t.diversity_bootstrap.to_string());
        kv(
            "min_signal",
            match t.min_signal {
                MinSignal::ChangeInMinUtility => "change_in_min_utility",
                MinSignal::MinStepReward => "min_step_reward",
            }
            .to_string(),
        );
        kv(
            "max_steps",
            self.max_steps.map_or("none".to_string(), |m| m.to_string()),
        );
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("greedy", self.greedy.to_string());
        kv("trajectory_dump", self.trajectory_dump.to_string());
        kv("out", self.out.display().to_string());
        s
    }
}
