//! Ten pac-men of unequal size and speed competing for three ghosts in the
//! unit square. Eating makes a pac-man bigger and faster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_action_count, Action, EnvOptions, Environment, Scenario, StepOutcome};
use crate::error::Result;
use crate::metrics::ScenarioCounters;

pub const NUM_AGENTS: usize = 10;
pub const NUM_GHOSTS: usize = 3;
pub const EPISODE_LEN: u64 = 1000;
pub const OBSERVED_PACMEN: usize = 3;
/// Own (x, y, size, speed) + 3 × (dx, dy, size, speed) + nearest ghost (dx, dy).
pub const OBS_DIM: usize = 4 + OBSERVED_PACMEN * 4 + 2;

pub const INIT_SIZE: (f64, f64) = (0.01, 0.04);
pub const INIT_SPEED: (f64, f64) = (0.018, 0.042);
pub const SIZE_GAIN: f64 = 0.005;
pub const SPEED_GAIN: f64 = 0.004;
pub const MAX_SIZE: f64 = 0.15;
pub const MAX_SPEED: f64 = 0.13;

const TRIANGLE: [(f64, f64); NUM_GHOSTS] = [(0.5, 0.65), (0.370_096, 0.425), (0.629_904, 0.425)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacMan {
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub speed: f64,
    pub income: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matthew {
    pacmen: Vec<PacMan>,
    ghosts: Vec<(f64, f64)>,
    t: u64,
    episode_len: u64,
    triangle: bool,
    consumed: u64,
    rng: ChaCha8Rng,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

impl Matthew {
    pub fn new(seed: u64, options: &EnvOptions) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pacmen = (0..NUM_AGENTS)
            .map(|_| PacMan {
                x: rng.gen(),
                y: rng.gen(),
                size: rng.gen_range(INIT_SIZE.0..INIT_SIZE.1),
                speed: rng.gen_range(INIT_SPEED.0..INIT_SPEED.1),
                income: 0,
            })
            .collect();
        let ghosts = if options.triangle_ghosts {
            TRIANGLE.to_vec()
        } else {
            (0..NUM_GHOSTS).map(|_| (rng.gen(), rng.gen())).collect()
        };
        Self {
            pacmen,
            ghosts,
            t: 0,
            episode_len: options.max_steps.unwrap_or(EPISODE_LEN),
            triangle: options.triangle_ghosts,
            consumed: 0,
            rng,
        }
    }

    pub fn pacmen(&self) -> &[PacMan] {
        &self.pacmen
    }

    pub fn pacman_mut(&mut self, i: usize) -> &mut PacMan {
        &mut self.pacmen[i]
    }

    pub fn ghosts(&self) -> &[(f64, f64)] {
        &self.ghosts
    }

    pub fn set_ghost(&mut self, g: usize, at: (f64, f64)) {
        self.ghosts[g] = at;
    }

    fn pos(&self, i: usize) -> (f64, f64) {
        (self.pacmen[i].x, self.pacmen[i].y)
    }

    /// Other pac-men ordered by distance (ties by index).
    fn nearest_others(&self, i: usize) -> Vec<usize> {
        let me = self.pos(i);
        let mut others: Vec<usize> = (0..NUM_AGENTS).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            dist2(me, self.pos(a))
                .total_cmp(&dist2(me, self.pos(b)))
                .then(a.cmp(&b))
        });
        others.truncate(OBSERVED_PACMEN);
        others
    }

    fn nearest_ghost(&self, i: usize) -> (f64, f64) {
        let me = self.pos(i);
        *self
            .ghosts
            .iter()
            .min_by(|a, b| dist2(me, **a).total_cmp(&dist2(me, **b)))
            .expect("ghosts are never empty")
    }
}

impl Environment for Matthew {
    fn scenario(&self) -> Scenario {
        Scenario::Matthew
    }

    fn steps(&self) -> u64 {
        self.t
    }

    /// Moves every pac-man by its speed (clamped to the square), then each
    /// ghost within reach is eaten by the closest pac-man whose size exceeds
    /// the distance, and respawns.
    fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        check_action_count(actions, NUM_AGENTS)?;
        for (p, a) in self.pacmen.iter_mut().zip(actions) {
            let (dx, dy) = a.delta();
            p.x = (p.x + dx as f64 * p.speed).clamp(0.0, 1.0);
            p.y = (p.y + dy as f64 * p.speed).clamp(0.0, 1.0);
        }
        let mut rewards = vec![0.0; NUM_AGENTS];
        for g in 0..NUM_GHOSTS {
            let ghost = self.ghosts[g];
            let eater = (0..NUM_AGENTS)
                .map(|i| (i, dist2(ghost, self.pos(i)).sqrt()))
                .filter(|&(i, d)| d < self.pacmen[i].size)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((i, _)) = eater {
                let p = &mut self.pacmen[i];
                p.income += 1;
                p.size = (p.size + SIZE_GAIN).min(MAX_SIZE);
                p.speed = (p.speed + SPEED_GAIN).min(MAX_SPEED);
                rewards[i] += 1.0;
                self.consumed += 1;
                self.ghosts[g] = if self.triangle {
                    TRIANGLE[g]
                } else {
                    (self.rng.gen(), self.rng.gen())
                };
            }
        }
        self.t += 1;
        Ok(StepOutcome {
            rewards,
            done: self.t >= self.episode_len,
        })
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let me = self.pacmen[agent];
        let mut obs = Vec::with_capacity(OBS_DIM);
        obs.extend([me.x, me.y, me.size / MAX_SIZE, me.speed / MAX_SPEED]);
        let near = self.nearest_others(agent);
        for k in 0..OBSERVED_PACMEN {
            match near.get(k) {
                Some(&j) => {
                    let o = self.pacmen[j];
                    obs.extend([
                        o.x - me.x,
                        o.y - me.y,
                        o.size / MAX_SIZE,
                        o.speed / MAX_SPEED,
                    ]);
                }
                None => obs.extend([0.0; 4]),
            }
        }
        let g = self.nearest_ghost(agent);
        obs.extend([g.0 - me.x, g.1 - me.y]);
        obs
    }

    fn visible_agents(&self, agent: usize) -> Vec<usize> {
        self.nearest_others(agent)
    }

    fn counters(&self) -> ScenarioCounters {
        ScenarioCounters::Matthew {
            ghosts_consumed: self.consumed,
        }
    }

    fn positions(&self) -> Vec<(f64, f64)> {
        (0..NUM_AGENTS).map(|i| self.pos(i)).collect()
    }

    fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.ghosts.len() != NUM_GHOSTS {
            return Err(format!("{} ghosts", self.ghosts.len()));
        }
        for (i, p) in self.pacmen.iter().enumerate() {
            if !(INIT_SIZE.0..=MAX_SIZE).contains(&p.size) {
                return Err(format!("pac-man {i} size {}", p.size));
            }
            if !(INIT_SPEED.0..=MAX_SPEED).contains(&p.speed) {
                return Err(format!("pac-man {i} speed {}", p.speed));
            }
            if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                return Err(format!("pac-man {i} outside the square"));
            }
        }
        let income: u64 = self.pacmen.iter().map(|p| p.income).sum();
        if income != self.consumed {
            return Err(format!("income {income} != consumed {}", self.consumed));
        }
        Ok(())
    }
}
