//! Distributed optimization over directed graphs: GradConsensus with finite-time
//! terminated ε-Consensus, the DGD/EXTRA/PushPull baselines, theoretical bound
//! calculators and an experiment harness.
//!
//! State matrices are `p × n` with one column per agent.

pub mod baselines;
pub mod bounds;
pub mod consensus;
pub mod error;
pub mod gradconsensus;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod problems;
pub mod trace;

pub use error::{Error, Result};
pub use graph::{ColumnStochasticMatrix, Digraph};
pub use problems::{Objective, ReferenceSolution};
pub use trace::{IterationRecord, RunTrace};
