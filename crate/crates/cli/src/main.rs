//! `fen`: train, evaluate and analyze fair-efficient multi-agent learners.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fen_core::agents::AgentTag;
use fen_core::envs::Scenario;
use fen_core::harness::{
    analyze_density, analyze_selection, gossip_bench, parse_config_text, run_eval, run_training,
    write_gossip_csv, CheckpointBundle, EvalFlags, RunConfig, Topology,
};
use fen_core::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "fen",
    version,
    about = "Fair-efficient multi-agent reinforcement learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// job, matthew or plant
    #[arg(long)]
    scenario: Option<String>,
    /// fen, fen-gossip, fen-flat, fen-random-sub, independent, ia, avg, min,
    /// minavg, hier-avg, hier-min, hier-minavg
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u64>,
    /// `key = value` config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a population and write metrics, learning curve and checkpoint
    Train {
        #[command(flatten)]
        common: Common,
        /// Dump the final episode's step trace to trajectory.csv
        #[arg(long)]
        trajectory: bool,
    },
    /// Evaluate a checkpoint without learning
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        greedy: bool,
        /// Replace every sub-policy except the first with a random policy
        #[arg(long)]
        random_subs: bool,
        #[arg(long)]
        trajectory: bool,
    },
    /// Controller probability of the first sub-policy by utility deviation
    AnalyzeSelection {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Position histogram under one sub-policy in the triangle-ghost world
    AnalyzeDensity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sub-policy index (0-based) or `random`
        #[arg(long, default_value = "0")]
        sub: String,
        /// Steps per episode
        #[arg(long, default_value_t = 1000)]
        steps: u64,
    },
    /// Convergence of gossip averaging on a synthetic graph
    GossipBench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// line, ring, star, complete or random:<p>
        #[arg(long, default_value = "random:0.2")]
        topology: String,
        #[arg(long, default_value_t = 200)]
        rounds: usize,
    },
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Config file pairs, then flags, then `--set` overrides.
fn config_pairs(c: &Common) -> Result<Vec<(String, String)>> {
    let mut pairs = match &c.config {
        Some(p) => parse_config_text(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
        None => Vec::new(),
    };
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    push("scenario", c.scenario.clone());
    push("agent", c.agent.clone());
    push("seed", c.seed.map(|s| s.to_string()));
    push("episodes", c.episodes.map(|e| e.to_string()));
    push("out", c.out.as_ref().map(|o| o.display().to_string()));
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("`--set {kv}` is not KEY=VALUE")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Rejects `--scenario`/`--agent` that contradict the checkpoint.
fn check_matches(c: &Common, bundle: &CheckpointBundle) -> Result<()> {
    if let Some(s) = &c.scenario {
        let s: Scenario = s.parse()?;
        if s.to_string() != bundle.scenario {
            return Err(Error::InvalidConfig(format!(
                "checkpoint is for scenario `{}`, not `{s}`",
                bundle.scenario
            )));
        }
    }
    if let Some(a) = &c.agent {
        let a: AgentTag = a.parse()?;
        if a.to_string() != bundle.agent && !(a == AgentTag::FenRandomSub && bundle.agent == "fen")
        {
            return Err(Error::InvalidConfig(format!(
                "checkpoint is for agent `{}`, not `{a}`",
                bundle.agent
            )));
        }
    }
    Ok(())
}

fn out_dir(c: &Common, default: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Train { common, trajectory } => {
            let mut cfg = RunConfig::from_pairs(&config_pairs(&common)?)?;
            cfg.trajectory_dump |= trajectory;
            let outcome = run_training(&cfg)?;
            Ok(json!({
                "command": "train",
                "out": outcome.out.display().to_string(),
                "episodes": outcome.records.len(),
                "final": outcome.records.last(),
                "converged_at": outcome.converged_at,
            }))
        }
        Command::Eval {
            common,
            checkpoint,
            greedy,
            random_subs,
            trajectory,
        } => {
            let bundle = CheckpointBundle::load(&checkpoint)?;
            check_matches(&common, &bundle)?;
            let random_subs = random_subs || common.agent.as_deref() == Some("fen-random-sub");
            let flags = EvalFlags {
                greedy,
                random_subs,
                seed: common.seed.unwrap_or(0),
                max_steps: None,
                trace: trajectory,
            };
            let out = out_dir(&common, "runs/eval");
            let agg = run_eval(
                &checkpoint,
                common.episodes.unwrap_or(10),
                &flags,
                Some(&out),
            )?;
            Ok(json!({ "command": "eval", "out": out.display().to_string(), "aggregate": agg }))
        }
        Command::AnalyzeSelection { common, checkpoint } => {
            let bundle = CheckpointBundle::load(&checkpoint)?;
            check_matches(&common, &bundle)?;
            let out = out_dir(&common, "runs/selection");
            let bins = analyze_selection(
                &checkpoint,
                common.episodes.unwrap_or(10),
                common.seed.unwrap_or(0),
                &out,
            )?;
            let populated = bins.iter().filter(|b| b.count > 0).count();
            Ok(json!({
                "command": "analyze-selection",
                "csv": out.join("selection.csv").display().to_string(),
                "populated_bins": populated,
            }))
        }
        Command::AnalyzeDensity {
            common,
            checkpoint,
            sub,
            steps,
        } => {
            let bundle = CheckpointBundle::load(&checkpoint)?;
            check_matches(&common, &bundle)?;
            let sub = match sub.as_str() {
                "random" => None,
                k => Some(
                    k.parse::<usize>()
                        .map_err(|_| Error::InvalidConfig(format!("bad sub-policy `{k}`")))?,
                ),
            };
            let out = out_dir(&common, "runs/density");
            let d = analyze_density(
                &checkpoint,
                sub,
                common.episodes.unwrap_or(5),
                steps,
                common.seed.unwrap_or(0),
                &out,
            )?;
            Ok(
                json!({ "command": "analyze-density", "out": out.display().to_string(), "entropy": d.entropy() }),
            )
        }
        Command::GossipBench {
            common,
            n,
            topology,
            rounds,
        } => {
            let topology: Topology = topology.parse()?;
            let rows = gossip_bench(n, topology, rounds, common.seed.unwrap_or(0))?;
            let out = out_dir(&common, "runs/gossip");
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let csv = out.join("gossip.csv");
            write_gossip_csv(&csv, &rows)?;
            Ok(json!({
                "command": "gossip-bench",
                "csv": csv.display().to_string(),
                "final_error": rows.last().map(|r| r.1),
            }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
