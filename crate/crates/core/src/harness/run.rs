//! Seeded training and evaluation runs, their output files, and checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::{converged_episode, moving_average, CONVERGENCE_TOLERANCE, CURVE_WINDOW};
use super::config::{parse_config_text, RunConfig};
use crate::agents::{EpisodeOptions, EpisodeReport, NetsRecord, PolicySet, Team, TraceRow};
use crate::envs::EnvOptions;
use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, MetricsSummary};

pub const CHECKPOINT_FORMAT: &str = "fen-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const VERSION_STAMP: &str = concat!("fen-core ", env!("CARGO_PKG_VERSION"));

const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// Environment seed of episode `index` in `stream`, derived from the run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Every parameter set of a run together with what is needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBundle {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub agent: String,
    pub seed: u64,
    pub episodes_trained: u64,
    /// Config snapshot in `key = value` form.
    pub config: String,
    pub nets: Vec<NetsRecord>,
}

impl CheckpointBundle {
    pub fn from_team(team: &Team, cfg: &RunConfig, episodes_trained: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            scenario: team.scenario().to_string(),
            agent: team.tag().to_string(),
            seed: cfg.seed,
            episodes_trained,
            // The output directory is not part of the model.
            config: RunConfig {
                out: RunConfig::new(cfg.scenario, cfg.agent).out,
                ..cfg.clone()
            }
            .to_config_text(),
            nets: team.nets().iter().map(PolicySet::to_record).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Checkpoint(format!("missing checkpoint {}: {e}", path.display()))
        })?;
        let bundle: Self = serde_json::from_str(&text)?;
        if bundle.format != CHECKPOINT_FORMAT || bundle.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                bundle.format, bundle.version
            )));
        }
        Ok(bundle)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::from_pairs(&parse_config_text(&self.config)?)
    }

    /// Rebuilds the trained team; `seed` drives its action sampling.
    pub fn team(&self, seed: u64) -> Result<Team> {
        let cfg = self.run_config()?;
        let nets = self
            .nets
            .iter()
            .map(|r| PolicySet::from_record(r, &cfg.team.ppo))
            .collect::<Result<_>>()?;
        Team::from_nets(cfg.scenario, cfg.agent, cfg.team, nets, seed)
    }
}

fn env_options(max_steps: Option<u64>) -> EnvOptions {
    EnvOptions {
        max_steps,
        ..EnvOptions::default()
    }
}

/// Trains in memory, calling `on_episode` after every episode.
pub fn train_team<F>(cfg: &RunConfig, mut on_episode: F) -> Result<Team>
where
    F: FnMut(u64, &EpisodeReport) -> Result<()>,
{
    cfg.validate()?;
    let mut team = Team::new(cfg.scenario, cfg.agent, cfg.team.clone(), cfg.seed)?;
    let mut opts = EpisodeOptions::training();
    opts.env = env_options(cfg.max_steps);
    for e in 0..cfg.episodes {
        opts.record_trace = cfg.trajectory_dump && e + 1 == cfg.episodes;
        let report = team.run_episode(derive_seed(cfg.seed, TRAIN_STREAM, e), &opts)?;
        on_episode(e, &report)?;
    }
    Ok(team)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct UpdateLine<'a> {
    episode: u64,
    update_index: u64,
    step: u64,
    net: usize,
    module: &'a str,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    mean_ratio: f64,
}

#[derive(Debug)]
pub struct TrainingOutcome {
    pub team: Team,
    pub records: Vec<MetricsRecord>,
    /// Mean fair-efficient reward per episode.
    pub curve: Vec<f64>,
    pub converged_at: Option<u64>,
    pub out: PathBuf,
}

/// Trains and writes the run directory: config snapshot, seed, version
/// stamp, `metrics.jsonl`, `curve.csv`, `ppo_log.jsonl`, `checkpoint.json`
/// and optionally `trajectory.csv` of the final episode.
pub fn run_training(cfg: &RunConfig) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let out = cfg.out.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.txt"), cfg.to_config_text())?;
    fs::write(out.join("seed.txt"), format!("{}\n", cfg.seed))?;
    fs::write(out.join("version.txt"), format!("{VERSION_STAMP}\n"))?;
    let mut metrics = BufWriter::new(File::create(out.join("metrics.jsonl"))?);
    let mut ppo_log = BufWriter::new(File::create(out.join("ppo_log.jsonl"))?);
    let mut records = Vec::new();
    let mut curve = Vec::new();
    let mut trace = Vec::new();
    let mut update_index = 0u64;
    let team = train_team(cfg, |e, rep| {
        let rec = rep.summary.record(e);
        serde_json::to_writer(&mut metrics, &rec)?;
        metrics.write_all(b"\n")?;
        for u in &rep.updates {
            let line = UpdateLine {
                episode: e,
                update_index,
                step: u.step,
                net: u.net,
                module: &u.module,
                policy_loss: u.report.policy_loss,
                value_loss: u.report.value_loss,
                entropy: u.report.entropy,
                mean_ratio: u.report.mean_ratio,
            };
            update_index += 1;
            serde_json::to_writer(&mut ppo_log, &line)?;
            ppo_log.write_all(b"\n")?;
        }
        for w in &rep.warnings {
            writeln!(
                ppo_log,
                "{}",
                serde_json::json!({ "episode": e, "warning": w })
            )?;
        }
        records.push(rec);
        curve.push(rep.mean_fair_efficient);
        if !rep.trace.is_empty() {
            trace = rep.trace.clone();
        }
        Ok(())
    })?;
    metrics.flush()?;
    ppo_log.flush()?;
    write_curve(&out.join("curve.csv"), &curve)?;
    if cfg.trajectory_dump {
        write_trace(&out.join("trajectory.csv"), &trace)?;
    }
    CheckpointBundle::from_team(&team, cfg, cfg.episodes).save(&out.join("checkpoint.json"))?;
    let converged_at = converged_episode(&curve, CURVE_WINDOW, CONVERGENCE_TOLERANCE);
    Ok(TrainingOutcome {
        team,
        records,
        curve,
        converged_at,
        out,
    })
}

fn write_curve(path: &Path, curve: &[f64]) -> Result<()> {
    let ma = moving_average(curve, CURVE_WINDOW);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "episode,mean_fair_efficient,moving_average")?;
    for (e, (raw, avg)) in curve.iter().zip(&ma).enumerate() {
        writeln!(w, "{e},{raw},{avg}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "step,agent,x,y,action,reward")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.step, r.agent, r.x, r.y, r.action, r.reward
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

/// Mean ± std of each metric over evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub episodes: usize,
    pub utilization: MeanStd,
    /// Over episodes with a defined CV; `None` if there were none.
    pub cv: Option<MeanStd>,
    pub min_utility: MeanStd,
    pub max_utility: MeanStd,
    pub social_welfare: Option<MeanStd>,
    pub num_products: Option<MeanStd>,
    pub mean_fair_efficient: MeanStd,
}

impl EvalAggregate {
    pub fn from_episodes(summaries: &[MetricsSummary], fair_efficient: &[f64]) -> Result<Self> {
        let pick = |f: &dyn Fn(&MetricsSummary) -> Option<f64>| -> Vec<f64> {
            summaries.iter().filter_map(f).collect()
        };
        let need = |v: Vec<f64>| MeanStd::of(&v).ok_or(Error::Empty("evaluation episodes"));
        Ok(Self {
            episodes: summaries.len(),
            utilization: need(pick(&|s| Some(s.resource_utilization)))?,
            cv: MeanStd::of(&pick(&|s| s.cv.value())),
            min_utility: need(pick(&|s| Some(s.min_utility)))?,
            max_utility: need(pick(&|s| Some(s.max_utility)))?,
            social_welfare: MeanStd::of(&pick(&|s| s.social_welfare)),
            num_products: MeanStd::of(&pick(&|s| s.num_products.map(|p| p as f64))),
            mean_fair_efficient: need(fair_efficient.to_vec())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalFlags {
    pub greedy: bool,
    /// Replace every sub-policy but φ₁ with a uniform random policy.
    pub random_subs: bool,
    pub seed: u64,
    pub max_steps: Option<u64>,
    /// Keep the step trace of the last episode.
    pub trace: bool,
}

/// Evaluates without learning; returns the aggregate and the last episode.
pub fn evaluate_team(
    team: &mut Team,
    episodes: u64,
    flags: &EvalFlags,
) -> Result<(EvalAggregate, EpisodeReport)> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be >= 1".into()));
    }
    let mut opts = EpisodeOptions::evaluation();
    opts.greedy = flags.greedy;
    opts.random_subs = flags.random_subs;
    opts.env = env_options(flags.max_steps);
    let (mut summaries, mut fe) = (Vec::new(), Vec::new());
    let mut last = None;
    for e in 0..episodes {
        opts.record_trace = flags.trace && e + 1 == episodes;
        let rep = team.run_episode(derive_seed(flags.seed, EVAL_STREAM, e), &opts)?;
        summaries.push(rep.summary);
        fe.push(rep.mean_fair_efficient);
        last = Some(rep);
    }
    let agg = EvalAggregate::from_episodes(&summaries, &fe)?;
    Ok((agg, last.expect("at least one episode")))
}

/// Loads a checkpoint and evaluates it; writes `eval.json` (and
/// `trajectory.csv` when tracing) under `out` if given.
pub fn run_eval(
    checkpoint: &Path,
    episodes: u64,
    flags: &EvalFlags,
    out: Option<&Path>,
) -> Result<EvalAggregate> {
    let bundle = CheckpointBundle::load(checkpoint)?;
    let mut team = bundle.team(flags.seed)?;
    let mut flags = *flags;
    if flags.max_steps.is_none() {
        flags.max_steps = bundle.run_config()?.max_steps;
    }
    let (agg, last) = evaluate_team(&mut team, episodes, &flags)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("eval.json"),
            serde_json::to_string_pretty(&agg)? + "\n",
        )?;
        if flags.trace {
            write_trace(&dir.join("trajectory.csv"), &last.trace)?;
        }
    }
    Ok(agg)
}
