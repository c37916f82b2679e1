//! Four agents sharing one resource on a 5×5 grid.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::Cell;
use super::{check_action_count, Action, EnvOptions, Environment, Scenario, StepOutcome};
use crate::error::Result;
use crate::metrics::ScenarioCounters;

pub const GRID: i32 = 5;
pub const NUM_AGENTS: usize = 4;
pub const EPISODE_LEN: u64 = 1000;
const VIEW: i32 = 1;
/// 3×3 cells × (other agents, resource) + own (x, y).
pub const OBS_DIM: usize = 9 * 2 + 2;

#[derive(Debug, Clone, PartialEq)]
pub struct JobScheduling {
    agents: Vec<Cell>,
    resource: Cell,
    t: u64,
    episode_len: u64,
    rng: ChaCha8Rng,
}

impl JobScheduling {
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
        let resource = Cell {
            x: rng.gen_range(0..GRID),
            y: rng.gen_range(0..GRID),
        };
        Self {
            agents,
            resource,
            t: 0,
            episode_len: options.max_steps.unwrap_or(EPISODE_LEN),
            rng,
        }
    }

    /// Places agents and resource explicitly (tests and scripted checks).
    pub fn with_layout(agents: [(i32, i32); NUM_AGENTS], resource: (i32, i32), seed: u64) -> Self {
        let mut env = Self::new(seed, &EnvOptions::default());
        env.agents = agents.iter().map(|&(x, y)| Cell { x, y }).collect();
        env.resource = Cell {
            x: resource.0,
            y: resource.1,
        };
        env
    }

    pub fn agent_cell(&self, i: usize) -> (i32, i32) {
        (self.agents[i].x, self.agents[i].y)
    }

    pub fn resource_cell(&self) -> (i32, i32) {
        (self.resource.x, self.resource.y)
    }
}

impl Environment for JobScheduling {
    fn scenario(&self) -> Scenario {
        Scenario::JobScheduling
    }

    fn steps(&self) -> u64 {
        self.t
    }

    /// Moves resolve in a fresh random order; a move into an occupied or
    /// out-of-bounds cell fails and the agent stays.
    fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        check_action_count(actions, NUM_AGENTS)?;
        let mut order: Vec<usize> = (0..NUM_AGENTS).collect();
        order.shuffle(&mut self.rng);
        for i in order {
            let target = self.agents[i].offset(actions[i].delta());
            if target.in_bounds(GRID) && !self.agents.contains(&target) {
                self.agents[i] = target;
            }
        }
        let rewards = self
            .agents
            .iter()
            .map(|&c| if c == self.resource { 1.0 } else { 0.0 })
            .collect();
        self.t += 1;
        Ok(StepOutcome {
            rewards,
            done: self.t >= self.episode_len,
        })
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let me = self.agents[agent];
        let mut obs = vec![0.0; OBS_DIM];
        let mut k = 0;
        for dy in -VIEW..=VIEW {
            for dx in -VIEW..=VIEW {
                let c = me.offset((dx, dy));
                let other = self
                    .agents
                    .iter()
                    .enumerate()
                    .any(|(j, &a)| j != agent && a == c);
                obs[k] = if other { 1.0 } else { 0.0 };
                obs[9 + k] = if c == self.resource { 1.0 } else { 0.0 };
                k += 1;
            }
        }
        obs[18] = me.x as f64 / (GRID - 1) as f64;
        obs[19] = me.y as f64 / (GRID - 1) as f64;
        obs
    }

    fn visible_agents(&self, agent: usize) -> Vec<usize> {
        let me = self.agents[agent];
        (0..NUM_AGENTS)
            .filter(|&j| j != agent && me.chebyshev(self.agents[j]) <= VIEW)
            .collect()
    }

    fn counters(&self) -> ScenarioCounters {
        ScenarioCounters::JobScheduling
    }

    fn positions(&self) -> Vec<(f64, f64)> {
        self.agents
            .iter()
            .map(|c| (c.x as f64, c.y as f64))
            .collect()
    }

    fn check_invariants(&self) -> std::result::Result<(), String> {
        for (i, a) in self.agents.iter().enumerate() {
            if !a.in_bounds(GRID) {
                return Err(format!("agent {i} out of bounds at {a:?}"));
            }
            if self.agents[..i].contains(a) {
                return Err(format!("two agents share cell {a:?}"));
            }
        }
        if !self.resource.in_bounds(GRID) {
            return Err("resource out of bounds".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staying_on_resource_pays_one() {
        let mut env = JobScheduling::with_layout([(2, 2), (0, 0), (4, 4), (0, 4)], (2, 2), 1);
        let out = env.step(&[Action::Stay; 4]).unwrap();
        assert_eq!(out.rewards, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(!out.done);
    }

    #[test]
    fn blocked_moves_fail() {
        let mut env = JobScheduling::with_layout([(0, 0), (1, 0), (4, 4), (3, 3)], (2, 2), 1);
        env.step(&[Action::Right, Action::Stay, Action::Up, Action::Left])
            .unwrap();
        assert_eq!(env.agent_cell(0), (0, 0));
        assert_eq!(env.agent_cell(2), (4, 4));
        assert_eq!(env.agent_cell(3), (2, 3));
        assert!(env.check_invariants().is_ok());
    }

    #[test]
    fn resource_channel_and_neighbors() {
        let env = JobScheduling::with_layout([(2, 2), (3, 2), (0, 0), (4, 4)], (1, 1), 1);
        let o = env.observe(0);
        // dy=-1,dx=-1 is the first cell of the view
        assert_eq!(o[9], 1.0);
        assert_eq!(o[9..18].iter().sum::<f64>(), 1.0);
        // agent 1 at dx=+1, dy=0 → index 5
        assert_eq!(o[5], 1.0);
        assert_eq!(o[..9].iter().sum::<f64>(), 1.0);
        assert_eq!(env.neighbors(0), vec![1]);
        assert_eq!(env.neighbors(1), vec![0]);
        assert!(env.neighbors(2).is_empty());
    }

    #[test]
    fn episode_ends_after_1000_steps() {
        let mut env = JobScheduling::new(3, &EnvOptions::default());
        let mut done = false;
        let mut steps = 0;
        while !done {
            done = env.step(&[Action::Stay; 4]).unwrap().done;
            steps += 1;
        }
        assert_eq!(steps, 1000);
        assert!(env.step(&[Action::Stay; 3]).is_err());
    }
}
