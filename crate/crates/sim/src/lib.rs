//! Deterministic simulation of replicas exchanging operations over a lossy,
//! partitionable network, with Byzantine peers.
//!
//! [`run`] executes a [`Scenario`] until quiescence and checks
//! self-update, eventual update and strong convergence across the correct
//! replicas. [`explore`] enumerates every interleaving of a small model.

pub mod byzantine;
pub mod explore;
pub mod metrics;
pub mod node;
pub mod run;
pub mod scenario;
pub mod transcript;
pub mod verdict;

pub use metrics::Metrics;
pub use run::{run, Outcome, RunOptions, SimError};
pub use scenario::{Scenario, ScenarioError};
pub use verdict::SecVerdict;
