//! Reward identification for inverse reinforcement learning by choosing
//! the environments an agent is observed in.
//!
//! The crate covers finite MDPs with state rewards, the polytope of rewards
//! consistent with observed optimal behavior, an omnipotent experimenter
//! that can build arbitrary dynamics, greedy selection among random mazes,
//! and a benchmark harness comparing the approaches.

pub mod agent;
pub mod design;
pub mod error;
pub mod geometry;
pub mod gridworld;
pub mod harness;
pub mod lp;
pub mod mdp;
pub mod omnipotent;
pub mod reward;
pub mod seed;
pub mod stats;

pub use agent::{Agent, PolicyOracle, Trajectory};
pub use error::{Error, Result};
pub use mdp::{ActionId, Environment, Policy};
pub use reward::{Bounds, Reward};
