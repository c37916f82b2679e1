//! Post-training analyses and the learning-curve statistics.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::run::{derive_seed, CheckpointBundle};
use crate::agents::{selection_profile, EpisodeOptions, SelectionBin, SubPolicyOverride, Team};
use crate::consensus::{gossip_round, NeighborGraph};
use crate::envs::{EnvOptions, Scenario};
use crate::error::{Error, Result};

pub const CURVE_WINDOW: usize = 20;
pub const CONVERGENCE_TOLERANCE: f64 = 0.05;
pub const SELECTION_BINS: usize = 10;
pub const DENSITY_GRID: usize = 50;

const ANALYSIS_STREAM: u64 = 3;

/// Trailing mean over up to `window` values.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// First episode whose moving average lies within `tol` (relative) of the
/// final moving average.
pub fn converged_episode(curve: &[f64], window: usize, tol: f64) -> Option<u64> {
    let ma = moving_average(curve, window);
    let last = *ma.last()?;
    ma.iter()
        .position(|m| (m - last).abs() <= tol * last.abs())
        .map(|e| e as u64)
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant or there are fewer than two points.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut vx, mut vy) = (0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Controller selection profile of a hierarchical team over evaluation episodes.
pub fn selection_analysis(
    team: &mut Team,
    episodes: u64,
    seed: u64,
    max_steps: Option<u64>,
) -> Result<Vec<SelectionBin>> {
    if !team.tag().is_hierarchical() {
        return Err(Error::InvalidConfig(format!(
            "`{}` has no controller",
            team.tag()
        )));
    }
    let mut opts = EpisodeOptions::evaluation();
    opts.record_selections = true;
    opts.env = EnvOptions {
        max_steps,
        ..EnvOptions::default()
    };
    let mut records = Vec::new();
    for e in 0..episodes {
        let rep = team.run_episode(derive_seed(seed, ANALYSIS_STREAM, e), &opts)?;
        records.extend(rep.selections);
    }
    Ok(selection_profile(&records, SELECTION_BINS))
}

/// Populated bins as CSV with header `bin_lo,bin_hi,p_phi1,p_other`.
pub fn write_selection_csv(path: &Path, bins: &[SelectionBin]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bin_lo,bin_hi,p_phi1,p_other")?;
    for b in bins {
        if let (Some(p), Some(q)) = (b.p_phi1, b.p_other()) {
            writeln!(w, "{},{},{p},{q}", b.lo, b.hi)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn analyze_selection(
    checkpoint: &Path,
    episodes: u64,
    seed: u64,
    out: &Path,
) -> Result<Vec<SelectionBin>> {
    let bundle = CheckpointBundle::load(checkpoint)?;
    let max_steps = bundle.run_config()?.max_steps;
    let mut team = bundle.team(seed)?;
    let bins = selection_analysis(&mut team, episodes, seed, max_steps)?;
    fs::create_dir_all(out)?;
    write_selection_csv(&out.join("selection.csv"), &bins)?;
    Ok(bins)
}

/// Row-major `grid × grid` occupancy histogram, `cells[iy * grid + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: usize,
    pub cells: Vec<f64>,
}

impl Density {
    pub fn entropy(&self) -> f64 {
        self.cells
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    pub fn total_variation(&self, other: &Density) -> f64 {
        0.5 * self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Position histogram of every pac-man in the triangle-ghost Matthew world
/// with all agents pinned to one behavior.
pub fn density_analysis(
    team: &mut Team,
    sub: SubPolicyOverride,
    episodes: u64,
    steps: u64,
    seed: u64,
) -> Result<Density> {
    if team.scenario() != Scenario::Matthew {
        return Err(Error::InvalidConfig(
            "density analysis needs the matthew scenario".into(),
        ));
    }
    let mut opts = EpisodeOptions::evaluation();
    opts.force_sub = Some(sub);
    opts.record_trace = true;
    opts.env = EnvOptions {
        max_steps: Some(steps),
        triangle_ghosts: true,
    };
    let grid = DENSITY_GRID;
    let mut counts = vec![0u64; grid * grid];
    for e in 0..episodes {
        let rep = team.run_episode(derive_seed(seed, ANALYSIS_STREAM, e), &opts)?;
        for r in &rep.trace {
            let ix = ((r.x * grid as f64) as usize).min(grid - 1);
            let iy = ((r.y * grid as f64) as usize).min(grid - 1);
            counts[iy * grid + ix] += 1;
        }
    }
    let total = counts.iter().sum::<u64>().max(1) as f64;
    Ok(Density {
        grid,
        cells: counts.iter().map(|&c| c as f64 / total).collect(),
    })
}

/// CSV with header `ix,iy,density`.
pub fn write_density_csv(path: &Path, d: &Density) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ix,iy,density")?;
    for iy in 0..d.grid {
        for ix in 0..d.grid {
            writeln!(w, "{ix},{iy},{}", d.cells[iy * d.grid + ix])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `sub = None` analyzes the uniformly random policy.
pub fn analyze_density(
    checkpoint: &Path,
    sub: Option<usize>,
    episodes: u64,
    steps: u64,
    seed: u64,
    out: &Path,
) -> Result<Density> {
    let bundle = CheckpointBundle::load(checkpoint)?;
    let mut team = bundle.team(seed)?;
    let pin = sub.map_or(SubPolicyOverride::Random, SubPolicyOverride::Fixed);
    let d = density_analysis(&mut team, pin, episodes, steps, seed)?;
    fs::create_dir_all(out)?;
    let name = sub.map_or("density_random.csv".to_string(), |k| {
        format!("density_sub{k}.csv")
    });
    write_density_csv(&out.join(name), &d)?;
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Line,
    Ring,
    Star,
    Complete,
    /// Erdős–Rényi with edge probability `p`, plus a random spanning tree
    /// so the graph is connected.
    Random(f64),
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(Topology::Line),
            "ring" => Ok(Topology::Ring),
            "star" => Ok(Topology::Star),
            "complete" => Ok(Topology::Complete),
            _ => s
                .strip_prefix("random:")
                .and_then(|p| p.parse::<f64>().ok())
                .filter(|p| (0.0..=1.0).contains(p))
                .map(Topology::Random)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown topology `{s}`"))),
        }
    }
}

pub fn build_graph<R: Rng + ?Sized>(n: usize, topology: Topology, rng: &mut R) -> NeighborGraph {
    let mut edges = Vec::new();
    match topology {
        Topology::Line => edges.extend((1..n).map(|i| (i - 1, i))),
        Topology::Ring => {
            edges.extend((1..n).map(|i| (i - 1, i)));
            if n > 2 {
                edges.push((n - 1, 0));
            }
        }
        Topology::Star => edges.extend((1..n).map(|i| (0, i))),
        Topology::Complete => {
            for i in 0..n {
                edges.extend((i + 1..n).map(|j| (i, j)));
            }
        }
        Topology::Random(p) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            for k in 1..n {
                edges.push((order[rng.gen_range(0..k)], order[k]));
            }
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    NeighborGraph::from_edges(n, &edges)
}

/// Max absolute error to the true mean after each round, starting at round 0.
pub fn gossip_bench(
    n: usize,
    topology: Topology,
    rounds: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if n == 0 {
        return Err(Error::TooFewAgents {
            required: 1,
            got: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = build_graph(n, topology, &mut rng);
    let mut est: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let mean = est.iter().sum::<f64>() / n as f64;
    let err = |e: &[f64]| e.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let mut rows = vec![(0, err(&est))];
    for r in 1..=rounds {
        est = gossip_round(&est, &graph);
        rows.push((r, err(&est)));
    }
    Ok(rows)
}

/// CSV with header `round,max_abs_error`.
pub fn write_gossip_csv(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "round,max_abs_error")?;
    for (r, e) in rows {
        writeln!(w, "{r},{e}")?;
    }
    w.flush()?;
    Ok(())
}
