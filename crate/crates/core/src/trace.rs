use nalgebra::{DMatrix, DVector};

use crate::problems::Objective;

/// Counters for one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// Consensus tolerance `ε(k)`; `None` for algorithms without an inner loop.
    pub eps: Option<f64>,
    /// Communication rounds spent in this iteration (`k_c(k)` for GradConsensus).
    pub rounds: usize,
    /// Cumulative communication rounds.
    pub cum_comm: usize,
    /// Cumulative local gradient evaluations over all agents.
    pub cum_grads: usize,
    pub wall_ms: f64,
}

/// Result of one distributed run. `states[k-1]` holds every agent's iterate after
/// outer iteration `k`; `initial` is the state at `k = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub algorithm: String,
    pub initial: DMatrix<f64>,
    pub records: Vec<IterationRecord>,
    pub states: Vec<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

impl RunTrace {
    pub fn new(algorithm: impl Into<String>, initial: DMatrix<f64>) -> Self {
        RunTrace { algorithm: algorithm.into(), initial, records: Vec::new(), states: Vec::new(), warnings: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Agent states after the last iteration (the initial state for an empty trace).
    pub fn final_states(&self) -> &DMatrix<f64> {
        self.states.last().unwrap_or(&self.initial)
    }

    /// State at outer iteration `k` (0 = initial).
    pub fn state(&self, k: usize) -> &DMatrix<f64> {
        if k == 0 {
            &self.initial
        } else {
            &self.states[k - 1]
        }
    }

    pub(crate) fn push(&mut self, record: IterationRecord, state: DMatrix<f64>) {
        self.records.push(record);
        self.states.push(state);
    }

    pub(crate) fn warn(&mut self, message: String) {
        log::warn!("{}: {message}", self.algorithm);
        self.warnings.push(message);
    }
}

/// Stop when `f(x̂(k)) - f* ≤ target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTarget {
    pub f_star: f64,
    pub target: f64,
}

impl ObjectiveTarget {
    pub(crate) fn reached(&self, oracle: &dyn Objective, states: &DMatrix<f64>) -> bool {
        let mean: DVector<f64> = states.column_mean();
        oracle.total_value(mean.as_slice()) - self.f_star <= self.target
    }
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
