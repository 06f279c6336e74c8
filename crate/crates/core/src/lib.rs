//! Two-stage traffic engineering for segment-routed networks.
//!
//! Given a topology, its link capacities, a traffic matrix and OSPF weights,
//! the engine picks at most one SR midpoint per demand so as to minimize the
//! maximum link utilization. A graph neural network policy trained with PPO
//! proposes a configuration in one pass over the most critical demands, and a
//! hill-climbing local search then refines it.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod gnn;
pub mod network;
pub mod pipeline;
pub mod ppo;
pub mod routing;
pub mod scenarios;
pub mod search;
pub mod synthetic;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
