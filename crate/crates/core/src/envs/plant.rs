//! Five agents with distinct gem requirements manufacturing parts on an
//! 8×8 grid from a finite gem supply.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::Cell;
use super::{check_action_count, Action, EnvOptions, Environment, Scenario, StepOutcome};
use crate::error::Result;
use crate::metrics::ScenarioCounters;

pub const GRID: i32 = 8;
pub const NUM_AGENTS: usize = 5;
pub const GEMS_ON_GRID: usize = 8;
pub const TOTAL_GEMS: u64 = 700;
pub const GEM_TYPES: usize = 3;
pub const GEM_REWARD: f64 = 0.01;
pub const PART_REWARD: f64 = 1.0;
/// Gems of each type (y, g, b) each agent needs for one part.
pub const REQUIREMENTS: [[u32; GEM_TYPES]; NUM_AGENTS] =
    [[2, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 0], [0, 1, 2]];
const VIEW: i32 = 2;
const VIEW_CELLS: usize = 25;
/// 5×5 cells × (other agents, y, g, b) + own (x, y) + inventory + requirement.
pub const OBS_DIM: usize = VIEW_CELLS * 4 + 2 + GEM_TYPES + GEM_TYPES;

/// Gems consumed by one complete product (one part from every agent).
pub fn gems_per_product() -> u64 {
    REQUIREMENTS.iter().flatten().map(|&g| g as u64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gem {
    pub cell: (i32, i32),
    pub kind: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    agents: Vec<Cell>,
    inventory: Vec<[u32; GEM_TYPES]>,
    parts: Vec<u64>,
    gems: Vec<(Cell, usize)>,
    spawned: u64,
    collected: u64,
    t: u64,
    max_steps: Option<u64>,
    rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(seed: u64, options: &EnvOptions) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<Cell> = (0..GRID * GRID)
            .map(|k| Cell {
                x: k % GRID,
                y: k / GRID,
            })
            .collect();
        cells.shuffle(&mut rng);
        let agents = cells[..NUM_AGENTS].to_vec();
        let mut env = Self {
            agents,
            inventory: vec![[0; GEM_TYPES]; NUM_AGENTS],
            parts: vec![0; NUM_AGENTS],
            gems: Vec::with_capacity(GEMS_ON_GRID),
            spawned: 0,
            collected: 0,
            t: 0,
            max_steps: options.max_steps,
            rng,
        };
        for _ in 0..GEMS_ON_GRID {
            env.spawn_gem();
        }
        env
    }

    /// Uniform empty cell, uniform type, while the supply lasts.
    fn spawn_gem(&mut self) {
        if self.spawned >= TOTAL_GEMS {
            return;
        }
        let free: Vec<Cell> = (0..GRID * GRID)
            .map(|k| Cell {
                x: k % GRID,
                y: k / GRID,
            })
            .filter(|c| !self.agents.contains(c) && !self.gems.iter().any(|g| g.0 == *c))
            .collect();
        let Some(&cell) = free.choose(&mut self.rng) else {
            return;
        };
        let kind = self.rng.gen_range(0..GEM_TYPES);
        self.gems.push((cell, kind));
        self.spawned += 1;
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    pub fn inventory(&self, i: usize) -> [u32; GEM_TYPES] {
        self.inventory[i]
    }

    pub fn gems(&self) -> Vec<Gem> {
        self.gems
            .iter()
            .map(|&(c, kind)| Gem {
                cell: (c.x, c.y),
                kind,
            })
            .collect()
    }

    pub fn gems_spawned(&self) -> u64 {
        self.spawned
    }

    pub fn gems_collected(&self) -> u64 {
        self.collected
    }

    /// Number of complete products: the smallest part count.
    pub fn products(&self) -> u64 {
        self.parts.iter().copied().min().unwrap_or(0)
    }

    pub fn set_inventory(&mut self, i: usize, inv: [u32; GEM_TYPES]) {
        self.inventory[i] = inv;
    }

    pub fn agent_cell(&self, i: usize) -> (i32, i32) {
        (self.agents[i].x, self.agents[i].y)
    }

    /// Drops a gem at `cell` (tests and scripted checks); counts against the supply.
    pub fn place_gem(&mut self, cell: (i32, i32), kind: usize) {
        let c = Cell {
            x: cell.0,
            y: cell.1,
        };
        self.gems.retain(|g| g.0 != c);
        self.gems.push((c, kind));
    }

    /// Consumes one part's worth of gems if the inventory covers the requirement.
    fn try_manufacture(&mut self, i: usize) -> bool {
        let req = REQUIREMENTS[i];
        let inv = &mut self.inventory[i];
        if inv.iter().zip(&req).all(|(have, need)| have >= need) {
            for (have, need) in inv.iter_mut().zip(&req) {
                *have -= need;
            }
            self.parts[i] += 1;
            true
        } else {
            false
        }
    }

    fn finished(&self) -> bool {
        self.collected >= TOTAL_GEMS || self.max_steps.is_some_and(|m| self.t >= m)
    }
}

impl Environment for Plant {
    fn scenario(&self) -> Scenario {
        Scenario::Plant
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        check_action_count(actions, NUM_AGENTS)?;
        let mut rewards = vec![0.0; NUM_AGENTS];
        let mut order: Vec<usize> = (0..NUM_AGENTS).collect();
        order.shuffle(&mut self.rng);
        for i in order {
            let target = self.agents[i].offset(actions[i].delta());
            if target == self.agents[i] || !target.in_bounds(GRID) || self.agents.contains(&target)
            {
                continue;
            }
            self.agents[i] = target;
            if let Some(k) = self.gems.iter().position(|g| g.0 == target) {
                let (_, kind) = self.gems.swap_remove(k);
                self.inventory[i][kind] += 1;
                self.collected += 1;
                rewards[i] += GEM_REWARD;
                self.spawn_gem();
                if self.try_manufacture(i) {
                    rewards[i] += PART_REWARD;
                }
            }
        }
        self.t += 1;
        Ok(StepOutcome {
            rewards,
            done: self.finished(),
        })
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let me = self.agents[agent];
        let mut obs = vec![0.0; OBS_DIM];
        let mut k = 0;
        for dy in -VIEW..=VIEW {
            for dx in -VIEW..=VIEW {
                let c = me.offset((dx, dy));
                if self
                    .agents
                    .iter()
                    .enumerate()
                    .any(|(j, &a)| j != agent && a == c)
                {
                    obs[k] = 1.0;
                }
                if let Some(&(_, kind)) = self.gems.iter().find(|g| g.0 == c) {
                    obs[VIEW_CELLS * (1 + kind) + k] = 1.0;
                }
                k += 1;
            }
        }
        let base = VIEW_CELLS * 4;
        obs[base] = me.x as f64 / (GRID - 1) as f64;
        obs[base + 1] = me.y as f64 / (GRID - 1) as f64;
        for g in 0..GEM_TYPES {
            obs[base + 2 + g] = (self.inventory[agent][g] as f64 / 5.0).min(1.0);
            obs[base + 2 + GEM_TYPES + g] = REQUIREMENTS[agent][g] as f64 / 2.0;
        }
        obs
    }

    fn visible_agents(&self, agent: usize) -> Vec<usize> {
        let me = self.agents[agent];
        (0..NUM_AGENTS)
            .filter(|&j| j != agent && me.chebyshev(self.agents[j]) <= VIEW)
            .collect()
    }

    fn counters(&self) -> ScenarioCounters {
        let products = self.products();
        ScenarioCounters::Plant {
            gems_in_products: products * gems_per_product(),
            total_gems: TOTAL_GEMS,
            products,
        }
    }

    fn positions(&self) -> Vec<(f64, f64)> {
        self.agents
            .iter()
            .map(|c| (c.x as f64, c.y as f64))
            .collect()
    }

    fn check_invariants(&self) -> std::result::Result<(), String> {
        for (i, a) in self.agents.iter().enumerate() {
            if !a.in_bounds(GRID) || self.agents[..i].contains(a) {
                return Err(format!("agent {i} at invalid cell {a:?}"));
            }
        }
        if self.spawned > TOTAL_GEMS {
            return Err(format!("{} gems spawned", self.spawned));
        }
        let expected_on_grid = (TOTAL_GEMS - self.spawned.min(TOTAL_GEMS)).min(GEMS_ON_GRID as u64);
        let on_grid = self.gems.len() as u64;
        if self.spawned < TOTAL_GEMS && on_grid != GEMS_ON_GRID as u64 {
            return Err(format!(
                "{on_grid} gems on grid before supply ran out ({expected_on_grid})"
            ));
        }
        if self.spawned != self.collected + on_grid {
            return Err("gem accounting broken".into());
        }
        for (i, g) in self.gems.iter().enumerate() {
            if self.agents.contains(&g.0) || self.gems[..i].iter().any(|o| o.0 == g.0) {
                return Err(format!("gem on occupied cell {:?}", g.0));
            }
        }
        let held: u64 = (0..NUM_AGENTS)
            .map(|i| {
                let consumed: u64 =
                    REQUIREMENTS[i].iter().map(|&r| r as u64).sum::<u64>() * self.parts[i];
                consumed + self.inventory[i].iter().map(|&g| g as u64).sum::<u64>()
            })
            .sum();
        if held != self.collected {
            return Err(format!(
                "inventory + consumed {held} != collected {}",
                self.collected
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_neighbor(env: &Plant, i: usize) -> Option<(Action, (i32, i32))> {
        let me = env.agents[i];
        Action::ALL[..4].iter().find_map(|&a| {
            let c = me.offset(a.delta());
            (c.in_bounds(GRID) && !env.agents.contains(&c)).then_some((a, (c.x, c.y)))
        })
    }

    #[test]
    fn completing_a_requirement_makes_a_part() {
        let mut env = Plant::new(5, &EnvOptions::default());
        env.set_inventory(0, [2, 0, 0]);
        let (a, cell) = free_neighbor(&env, 0).unwrap();
        env.place_gem(cell, 1);
        let mut actions = [Action::Stay; NUM_AGENTS];
        actions[0] = a;
        let out = env.step(&actions).unwrap();
        assert!((out.rewards[0] - (GEM_REWARD + PART_REWARD)).abs() < 1e-12);
        assert_eq!(env.inventory(0), [0, 0, 0]);
        assert_eq!(env.parts()[0], 1);
    }

    #[test]
    fn products_are_the_least_part_count() {
        let mut env = Plant::new(1, &EnvOptions::default());
        env.parts = vec![3, 5, 4, 3, 6];
        assert_eq!(env.products(), 3);
        assert_eq!(gems_per_product(), 12);
    }

    #[test]
    fn view_layout() {
        let env = Plant::new(2, &EnvOptions::default());
        let o = env.observe(0);
        assert_eq!(o.len(), 108);
        assert_eq!(&o[105..108], &[1.0, 0.5, 0.0]);
        assert!(env.check_invariants().is_ok());
    }

    #[test]
    fn step_cap_ends_episode() {
        let opts = EnvOptions {
            max_steps: Some(10),
            ..EnvOptions::default()
        };
        let mut env = Plant::new(2, &opts);
        let dones: Vec<bool> = (0..10)
            .map(|_| env.step(&[Action::Stay; 5]).unwrap().done)
            .collect();
        assert_eq!(dones.iter().filter(|d| **d).count(), 1);
        assert!(dones[9]);
    }
}
