//! The three resource-allocation scenarios behind one interface.

mod job;
mod matthew;
mod plant;

use std::fmt;
use std::str::FromStr;

pub use job::JobScheduling;
pub use matthew::Matthew;
pub use plant::Plant;

use crate::consensus::NeighborGraph;
use crate::error::{Error, Result};
use crate::metrics::ScenarioCounters;

/// Move to one of the four neighboring cells or stay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Stay,
    ];

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit displacement `(dx, dy)`; `Up` increases `y`.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    JobScheduling,
    Matthew,
    Plant,
}

impl Scenario {
    pub fn num_agents(self) -> usize {
        match self {
            Scenario::JobScheduling => job::NUM_AGENTS,
            Scenario::Matthew => matthew::NUM_AGENTS,
            Scenario::Plant => plant::NUM_AGENTS,
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            Scenario::JobScheduling => job::OBS_DIM,
            Scenario::Matthew => matthew::OBS_DIM,
            Scenario::Plant => plant::OBS_DIM,
        }
    }

    /// Controller interval `T`.
    pub fn default_interval(self) -> usize {
        match self {
            Scenario::JobScheduling => 25,
            Scenario::Matthew | Scenario::Plant => 50,
        }
    }

    /// Homogeneous agents share one set of weights.
    pub fn shares_weights(self) -> bool {
        !matches!(self, Scenario::Plant)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::JobScheduling => "job",
            Scenario::Matthew => "matthew",
            Scenario::Plant => "plant",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "job" | "job-scheduling" => Ok(Scenario::JobScheduling),
            "matthew" => Ok(Scenario::Matthew),
            "plant" | "manufacturing-plant" => Ok(Scenario::Plant),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Per-step result of a joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnvOptions {
    /// Overrides the scenario's episode length (job, Matthew) or adds a
    /// step cap (plant, which otherwise ends when all gems are collected).
    pub max_steps: Option<u64>,
    /// Matthew only: three fixed ghosts in a triangle at the center.
    pub triangle_ghosts: bool,
}

pub trait Environment {
    fn scenario(&self) -> Scenario;

    fn num_agents(&self) -> usize {
        self.scenario().num_agents()
    }

    fn obs_dim(&self) -> usize {
        self.scenario().obs_dim()
    }

    fn steps(&self) -> u64;

    fn step(&mut self, actions: &[Action]) -> Result<StepOutcome>;

    /// Flat observation with entries in `[-1, 1]`.
    fn observe(&self, agent: usize) -> Vec<f64>;

    /// Agents `agent` can see, before symmetric closure.
    fn visible_agents(&self, agent: usize) -> Vec<usize>;

    fn counters(&self) -> ScenarioCounters;

    /// Agent positions for trajectory dumps (grid cells or unit-square points).
    fn positions(&self) -> Vec<(f64, f64)>;

    /// Describes the first violated state invariant, if any.
    fn check_invariants(&self) -> std::result::Result<(), String>;

    fn observe_all(&self) -> Vec<Vec<f64>> {
        (0..self.num_agents()).map(|i| self.observe(i)).collect()
    }

    /// Undirected gossip graph: `j ∈ N_i` iff either agent sees the other.
    fn neighbor_graph(&self) -> NeighborGraph {
        let lists: Vec<Vec<usize>> = (0..self.num_agents())
            .map(|i| self.visible_agents(i))
            .collect();
        NeighborGraph::from_directed(&lists)
    }

    fn neighbors(&self, agent: usize) -> Vec<usize> {
        self.neighbor_graph().neighbors(agent).to_vec()
    }
}

/// World state of any scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvState {
    Job(JobScheduling),
    Matthew(Matthew),
    Plant(Plant),
}

impl EnvState {
    fn inner(&self) -> &dyn Environment {
        match self {
            EnvState::Job(e) => e,
            EnvState::Matthew(e) => e,
            EnvState::Plant(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            EnvState::Job(e) => e,
            EnvState::Matthew(e) => e,
            EnvState::Plant(e) => e,
        }
    }
}

/// Draws an initial state; identical seeds give identical states.
pub fn reset(scenario: Scenario, seed: u64, options: &EnvOptions) -> (EnvState, Vec<Vec<f64>>) {
    let state = match scenario {
        Scenario::JobScheduling => EnvState::Job(JobScheduling::new(seed, options)),
        Scenario::Matthew => EnvState::Matthew(Matthew::new(seed, options)),
        Scenario::Plant => EnvState::Plant(Plant::new(seed, options)),
    };
    let obs = state.observe_all();
    (state, obs)
}

impl Environment for EnvState {
    fn scenario(&self) -> Scenario {
        self.inner().scenario()
    }
    fn steps(&self) -> u64 {
        self.inner().steps()
    }
    fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        self.inner_mut().step(actions)
    }
    fn observe(&self, agent: usize) -> Vec<f64> {
        self.inner().observe(agent)
    }
    fn visible_agents(&self, agent: usize) -> Vec<usize> {
        self.inner().visible_agents(agent)
    }
    fn counters(&self) -> ScenarioCounters {
        self.inner().counters()
    }
    fn positions(&self) -> Vec<(f64, f64)> {
        self.inner().positions()
    }
    fn check_invariants(&self) -> std::result::Result<(), String> {
        self.inner().check_invariants()
    }
}

pub(crate) fn check_action_count(actions: &[Action], n: usize) -> Result<()> {
    if actions.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: actions.len(),
        });
    }
    Ok(())
}

/// Cell-wise grid helpers shared by the two grid worlds.
pub(crate) mod grid {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct Cell {
        pub x: i32,
        pub y: i32,
    }

    impl Cell {
        pub fn offset(self, d: (i32, i32)) -> Cell {
            Cell {
                x: self.x + d.0,
                y: self.y + d.1,
            }
        }

        pub fn in_bounds(self, size: i32) -> bool {
            (0..size).contains(&self.x) && (0..size).contains(&self.y)
        }

        pub fn chebyshev(self, other: Cell) -> i32 {
            (self.x - other.x).abs().max((self.y - other.y).abs())
        }
    }
}
