//! The GradConsensus optimizer: a local gradient step followed by ε(k)-Consensus on the
//! results, so every agent's iterate stays within ε(k) of the network average at every
//! outer iteration.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::consensus::{run_eps_consensus_capped, DEFAULT_ROUND_CAP};
use crate::error::{Error, Result};
use crate::graph::{ColumnStochasticMatrix, Digraph};
use crate::problems::Objective;
use crate::trace::{all_finite, IterationRecord, ObjectiveTarget, RunTrace};

/// Consensus tolerance sequence `ε(k)`, `k ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Constant {
        eps0: f64,
    },
    /// `ε0 / k^{1+η}`.
    Polynomial {
        eps0: f64,
        eta: f64,
    },
    /// `μ^k`.
    Geometric {
        mu: f64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant { eps0 } if !(eps0 > 0.0 && eps0.is_finite()) => {
                Err(Error::InvalidArgument(format!("eps0 must be positive, got {eps0}")))
            }
            Schedule::Polynomial { eps0, .. } if !(eps0 > 0.0 && eps0.is_finite()) => {
                Err(Error::InvalidArgument(format!("eps0 must be positive, got {eps0}")))
            }
            Schedule::Polynomial { eta, .. } if !(eta > 0.0 && eta < 1.0) => {
                Err(Error::InvalidArgument(format!("eta must lie in (0,1), got {eta}")))
            }
            Schedule::Geometric { mu } if !(mu > 0.0 && mu < 1.0) => {
                Err(Error::InvalidArgument(format!("mu must lie in (0,1), got {mu}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eps_at(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        let kf = k as f64;
        match *self {
            Schedule::Constant { eps0 } => eps0,
            Schedule::Polynomial { eps0, eta } => eps0 / kf.powf(1.0 + eta),
            Schedule::Geometric { mu } => mu.powf(kf),
        }
    }

    /// `Σ_{s=1}^{k} ε(s)`.
    pub fn partial_sum(&self, k: usize) -> f64 {
        (1..=k).map(|s| self.eps_at(s)).sum()
    }
}

pub fn eps_at(schedule: &Schedule, k: usize) -> f64 {
    schedule.eps_at(k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcConfig {
    /// Local step size `α`; the centralized-equivalent step is `α̂ = α/n`.
    pub alpha: f64,
    pub schedule: Schedule,
    pub max_outer: usize,
    pub objective_target: Option<ObjectiveTarget>,
    /// Safety cap on inner rounds per consensus call.
    pub round_cap: usize,
    /// Record wall-clock time per iteration (otherwise written as 0).
    pub wall_time: bool,
}

impl GcConfig {
    pub fn new(alpha: f64, schedule: Schedule, max_outer: usize) -> Self {
        GcConfig { alpha, schedule, max_outer, objective_target: None, round_cap: DEFAULT_ROUND_CAP, wall_time: false }
    }

    pub fn alpha_hat(&self, agents: usize) -> f64 {
        self.alpha / agents as f64
    }
}

/// Runs GradConsensus from `x^i(0) = 0`.
pub fn run_grad_consensus(
    cfg: &GcConfig,
    graph: &Digraph,
    weights: &ColumnStochasticMatrix,
    oracle: &dyn Objective,
) -> Result<RunTrace> {
    let n = oracle.agents();
    if graph.n() != n || weights.n() != n {
        return Err(Error::InvalidArgument(format!(
            "oracle has {n} agents, graph {}, weights {}",
            graph.n(),
            weights.n()
        )));
    }
    if !(cfg.alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {}", cfg.alpha)));
    }
    cfg.schedule.validate()?;
    graph.require_strongly_connected()?;

    let mut x = DMatrix::zeros(oracle.dim(), n);
    let mut trace = RunTrace::new("gradconsensus", x.clone());
    let c = oracle.constants();
    let alpha_hat = cfg.alpha_hat(n);
    match cfg.schedule {
        Schedule::Geometric { .. } if c.sigma > 0.0 && alpha_hat > 2.0 / (c.sigma + c.l_f) => trace.warn(format!(
            "alpha_hat = {alpha_hat:e} exceeds 2/(sigma+L_f) = {:e}; linear-rate guarantee void",
            2.0 / (c.sigma + c.l_f)
        )),
        _ if alpha_hat > 2.0 / c.l_f => {
            trace.warn(format!("alpha_hat = {alpha_hat:e} exceeds 2/L_f = {:e}; descent guarantee void", 2.0 / c.l_f))
        }
        _ => {}
    }

    let start = Instant::now();
    let mut cum_comm = 0;
    for k in 1..=cfg.max_outer {
        let eps = cfg.schedule.eps_at(k);
        let z = &x - cfg.alpha * oracle.local_gradients(&x);
        if !all_finite(&z) {
            return Err(Error::Diverged { algorithm: trace.algorithm, iteration: k });
        }
        let res = run_eps_consensus_capped(&z, weights, graph, eps, cfg.round_cap)?;
        x = res.values;
        cum_comm += res.rounds_used;
        let wall_ms = if cfg.wall_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let record =
            IterationRecord { k, eps: Some(eps), rounds: res.rounds_used, cum_comm, cum_grads: n * k, wall_ms };
        let done = cfg.objective_target.is_some_and(|t| t.reached(oracle, &x));
        trace.push(record, x.clone());
        if done {
            break;
        }
    }
    Ok(trace)
}
