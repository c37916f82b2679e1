//! Decentralized multi-agent learning of fair and efficient resource sharing.
//!
//! Agents optimize a per-agent fair-efficient reward through a two-level
//! policy: a controller that switches every `T` steps between sub-policies,
//! one maximizing the environmental reward and the others trained for
//! diversity. The average utility each agent needs is either computed
//! exactly or estimated with neighbor-only gossip.

pub mod agents;
pub mod consensus;
pub mod envs;
mod error;
pub mod harness;
pub mod metrics;
pub mod neural;
pub mod ppo;
pub mod rewards;

pub use error::{Error, Result};
