//! Comparison methods sharing the GradConsensus trace format: DGD and EXTRA on doubly
//! stochastic weights, PushPull on a row/column-stochastic pair.
//!
//! Mixing is written for `p × n` state matrices, so `W x` in the usual row-per-agent
//! notation becomes `x Wᵀ` here.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{AuxMatrices, ColumnStochasticMatrix};
use crate::problems::Objective;
use crate::trace::{all_finite, IterationRecord, ObjectiveTarget, RunTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Baseline {
    Dgd,
    Extra,
    PushPull,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Dgd => "dgd",
            Baseline::Extra => "extra",
            Baseline::PushPull => "pushpull",
        }
    }

    /// Matrix exchanges per iteration.
    pub fn rounds_per_iteration(self) -> usize {
        match self {
            Baseline::PushPull => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub algorithm: Baseline,
    pub alpha: f64,
    pub max_iter: usize,
    pub objective_target: Option<ObjectiveTarget>,
    pub wall_time: bool,
}

impl BaselineConfig {
    pub fn new(algorithm: Baseline, alpha: f64, max_iter: usize) -> Self {
        BaselineConfig { algorithm, alpha, max_iter, objective_target: None, wall_time: false }
    }
}

/// Weights a baseline may need; which ones must be present depends on the algorithm.
#[derive(Clone, Copy, Debug, Default)]
pub struct BaselineMatrices<'a> {
    pub doubly_stochastic: Option<&'a DMatrix<f64>>,
    pub row_stochastic: Option<&'a DMatrix<f64>>,
    pub column_stochastic: Option<&'a ColumnStochasticMatrix>,
}

impl<'a> BaselineMatrices<'a> {
    pub fn from_aux(aux: &'a AuxMatrices, column: &'a ColumnStochasticMatrix) -> Self {
        BaselineMatrices {
            doubly_stochastic: Some(&aux.doubly_stochastic),
            row_stochastic: Some(&aux.row_stochastic),
            column_stochastic: Some(column),
        }
    }
}

struct Runner<'a> {
    cfg: &'a BaselineConfig,
    oracle: &'a dyn Objective,
    trace: RunTrace,
    start: Instant,
    cum_comm: usize,
    cum_grads: usize,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a BaselineConfig, oracle: &'a dyn Objective, n: usize) -> Result<Self> {
        if oracle.agents() != n {
            return Err(Error::InvalidArgument(format!(
                "oracle has {} agents, weights are {n} × {n}",
                oracle.agents()
            )));
        }
        if !(cfg.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {}", cfg.alpha)));
        }
        let initial = DMatrix::zeros(oracle.dim(), n);
        Ok(Runner {
            cfg,
            oracle,
            trace: RunTrace::new(cfg.algorithm.name(), initial),
            start: Instant::now(),
            cum_comm: 0,
            cum_grads: 0,
        })
    }

    fn gradients(&mut self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.cum_grads += self.oracle.agents();
        self.oracle.local_gradients(x)
    }

    /// Records iteration `k`; returns true when the run should stop.
    fn record(&mut self, k: usize, x: &DMatrix<f64>) -> Result<bool> {
        if !all_finite(x) {
            return Err(Error::Diverged { algorithm: self.trace.algorithm.clone(), iteration: k });
        }
        let rounds = self.cfg.algorithm.rounds_per_iteration();
        self.cum_comm += rounds;
        let wall_ms = if self.cfg.wall_time { self.start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let record =
            IterationRecord { k, eps: None, rounds, cum_comm: self.cum_comm, cum_grads: self.cum_grads, wall_ms };
        self.trace.push(record, x.clone());
        Ok(self.cfg.objective_target.is_some_and(|t| t.reached(self.oracle, x)))
    }
}

fn check_square(w: &DMatrix<f64>, what: &str) -> Result<usize> {
    if !w.is_square() {
        return Err(Error::InvalidWeights(format!("{what} matrix is not square")));
    }
    Ok(w.nrows())
}

/// `x^i(k) = Σ_j w_ij x^j(k-1) - α ∇f_i(x^i(k-1))`.
pub fn run_dgd(cfg: &BaselineConfig, w: &DMatrix<f64>, oracle: &dyn Objective) -> Result<RunTrace> {
    let n = check_square(w, "doubly stochastic")?;
    let mut run = Runner::new(cfg, oracle, n)?;
    let wt = w.transpose();
    let mut x = run.trace.initial.clone();
    for k in 1..=cfg.max_iter {
        let g = run.gradients(&x);
        x = &x * &wt - cfg.alpha * g;
        if run.record(k, &x)? {
            break;
        }
    }
    Ok(run.trace)
}

/// EXTRA with `W̃ = (I + W)/2`:
/// `x(1) = W x(0) - α∇F(x(0))`,
/// `x(k+1) = (I + W) x(k) - W̃ x(k-1) - α(∇F(x(k)) - ∇F(x(k-1)))`.
///
/// Evaluated in the equivalent summed form
/// `x(k+1) = W x(k) - α∇F(x(k)) + Σ_{t<k} (W - W̃) x(t)`, which keeps rounding from
/// piling up in the second difference.
pub fn run_extra(cfg: &BaselineConfig, w: &DMatrix<f64>, oracle: &dyn Objective) -> Result<RunTrace> {
    let n = check_square(w, "doubly stochastic")?;
    let mut run = Runner::new(cfg, oracle, n)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let wt = w.transpose();
    // W - W̃ = (W - I)/2
    let correction_t = ((w - &eye) * 0.5).transpose();

    let mut x = run.trace.initial.clone();
    let mut acc = DMatrix::zeros(x.nrows(), n);
    for k in 1..=cfg.max_iter {
        let g = run.gradients(&x);
        let x_next = &x * &wt - cfg.alpha * g + &acc;
        acc += &x * &correction_t;
        x = x_next;
        if run.record(k, &x)? {
            break;
        }
    }
    Ok(run.trace)
}

/// PushPull gradient tracking with row-stochastic `R` and column-stochastic `C`:
/// `x(k+1) = R(x(k) - α y(k))`, `y(k+1) = C y(k) + ∇F(x(k+1)) - ∇F(x(k))`,
/// `y(0) = ∇F(x(0))`. Each iteration exchanges twice.
pub fn run_pushpull(
    cfg: &BaselineConfig,
    row: &DMatrix<f64>,
    column: &ColumnStochasticMatrix,
    oracle: &dyn Objective,
) -> Result<RunTrace> {
    run_pushpull_tracked(cfg, row, column, oracle).map(|(trace, _)| trace)
}

/// [`run_pushpull`] that also returns the tracking variable `y(k)` for `k = 0..=K`.
pub fn run_pushpull_tracked(
    cfg: &BaselineConfig,
    row: &DMatrix<f64>,
    column: &ColumnStochasticMatrix,
    oracle: &dyn Objective,
) -> Result<(RunTrace, Vec<DMatrix<f64>>)> {
    let n = check_square(row, "row stochastic")?;
    if column.n() != n {
        return Err(Error::InvalidWeights("row and column stochastic matrices differ in size".into()));
    }
    let mut run = Runner::new(cfg, oracle, n)?;
    if cfg.max_iter == 0 {
        return Ok((run.trace, Vec::new()));
    }
    let rt = row.transpose();
    let ct = column.as_matrix().transpose();
    let mut x = run.trace.initial.clone();
    let mut g = run.gradients(&x);
    let mut y = g.clone();
    let mut tracked = vec![y.clone()];
    for k in 1..=cfg.max_iter {
        let x_next = (&x - cfg.alpha * &y) * &rt;
        let g_next = run.gradients(&x_next);
        y = &y * &ct + (&g_next - &g);
        x = x_next;
        g = g_next;
        tracked.push(y.clone());
        if run.record(k, &x)? {
            break;
        }
    }
    Ok((run.trace, tracked))
}

/// Runs `cfg.algorithm`, checking that the weights it needs are present.
pub fn run_baseline(cfg: &BaselineConfig, matrices: BaselineMatrices<'_>, oracle: &dyn Objective) -> Result<RunTrace> {
    let missing = |what: &str| Error::InvalidArgument(format!("{} needs a {what} matrix", cfg.algorithm.name()));
    match cfg.algorithm {
        Baseline::Dgd => run_dgd(cfg, matrices.doubly_stochastic.ok_or_else(|| missing("doubly stochastic"))?, oracle),
        Baseline::Extra => {
            run_extra(cfg, matrices.doubly_stochastic.ok_or_else(|| missing("doubly stochastic"))?, oracle)
        }
        Baseline::PushPull => run_pushpull(
            cfg,
            matrices.row_stochastic.ok_or_else(|| missing("row stochastic"))?,
            matrices.column_stochastic.ok_or_else(|| missing("column stochastic"))?,
            oracle,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{baseline_matrices, equal_neighbor_weights, generate_erdos_renyi, Digraph};
    use crate::problems::{quadratic_oracle, reference_solution, QuadraticOracle};

    fn single_agent() -> (Digraph, DMatrix<f64>, ColumnStochasticMatrix, QuadraticOracle) {
        let g = Digraph::from_edges(1, []).unwrap();
        let aux = baseline_matrices(&g).unwrap();
        let c = equal_neighbor_weights(&g).unwrap();
        let o = quadratic_oracle(
            DMatrix::from_column_slice(2, 1, &[1.0, -3.0]),
            DMatrix::from_column_slice(2, 1, &[0.5, 2.0]),
        )
        .unwrap();
        (g, aux.doubly_stochastic, c, o)
    }

    fn centralized_gd(o: &dyn Objective, alpha: f64, iters: usize) -> Vec<DMatrix<f64>> {
        let mut x = DMatrix::zeros(o.dim(), 1);
        (0..iters)
            .map(|_| {
                x = &x - alpha * o.local_gradients(&x);
                x.clone()
            })
            .collect()
    }

    #[test]
    fn dgd_single_agent_is_gradient_descent() {
        let (_, w, _, o) = single_agent();
        let trace = run_dgd(&BaselineConfig::new(Baseline::Dgd, 0.3, 50), &w, &o).unwrap();
        assert_eq!(trace.states, centralized_gd(&o, 0.3, 50));
    }

    #[test]
    fn zero_gradient_consensual_start_is_constant() {
        let g = generate_erdos_renyi(5, 0.5, 1).unwrap();
        let aux = baseline_matrices(&g).unwrap();
        let c = equal_neighbor_weights(&g).unwrap();
        let o = quadratic_oracle(DMatrix::zeros(2, 5), DMatrix::from_element(2, 5, 1.0)).unwrap();
        for alg in [Baseline::Dgd, Baseline::Extra, Baseline::PushPull] {
            let trace =
                run_baseline(&BaselineConfig::new(alg, 0.2, 10), BaselineMatrices::from_aux(&aux, &c), &o).unwrap();
            assert!(trace.states.iter().all(|s| s.iter().all(|&v| v == 0.0)), "{alg:?}");
            assert_eq!(trace.records.last().unwrap().cum_comm, 10 * alg.rounds_per_iteration());
        }
    }

    #[test]
    fn extra_fixed_point_at_optimum() {
        let g = generate_erdos_renyi(4, 0.6, 2).unwrap();
        let aux = baseline_matrices(&g).unwrap();
        // every agent's target is the same point, which is then the optimum and the start
        let o = quadratic_oracle(DMatrix::zeros(3, 4), DMatrix::from_fn(3, 4, |i, j| 1.0 + (i + j) as f64)).unwrap();
        let trace = run_extra(&BaselineConfig::new(Baseline::Extra, 0.1, 20), &aux.doubly_stochastic, &o).unwrap();
        assert!(trace.states.iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn extra_reaches_exact_optimum() {
        let g = generate_erdos_renyi(8, 0.4, 4).unwrap();
        let aux = baseline_matrices(&g).unwrap();
        let o = QuadraticOracle::random(8, 3, 9).unwrap();
        let x_star = reference_solution(&o, 1e-12).unwrap().x_star;
        let alpha = 0.5 / o.constants().l_h;
        let trace = run_extra(&BaselineConfig::new(Baseline::Extra, alpha, 3000), &aux.doubly_stochastic, &o).unwrap();
        let worst = trace.final_states().column_iter().map(|c| (c - &x_star).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn dgd_has_bias_floor() {
        let g = generate_erdos_renyi(8, 0.4, 4).unwrap();
        let aux = baseline_matrices(&g).unwrap();
        let o = QuadraticOracle::random(8, 3, 9).unwrap();
        let x_star = reference_solution(&o, 1e-12).unwrap().x_star;
        let alpha = 0.05;
        let trace = run_dgd(&BaselineConfig::new(Baseline::Dgd, alpha, 10_000), &aux.doubly_stochastic, &o).unwrap();
        let fin = trace.final_states();
        let best = fin.column_iter().map(|c| (c - &x_star).norm()).fold(f64::INFINITY, f64::min);
        let spread = fin.column_iter().map(|c| (c - fin.column(0)).norm()).fold(0.0, f64::max);
        // consensus error decays to O(α) but the iterate does not reach x*
        assert!(best > 1e-6, "best {best}");
        assert!(best < 10.0 * alpha * x_star.norm().max(1.0), "best {best}");
        assert!(spread < 1.0, "spread {spread}");
    }

    #[test]
    fn pushpull_tracks_gradient_sum_and_converges() {
        let g = generate_erdos_renyi(10, 0.3, 6).unwrap();
        let aux = baseline_matrices(&g).unwrap();
        let c = equal_neighbor_weights(&g).unwrap();
        let o = QuadraticOracle::random(10, 3, 2).unwrap();
        let x_star = reference_solution(&o, 1e-12).unwrap().x_star;
        let alpha = 0.3 / o.constants().l_h;
        let trace =
            run_pushpull(&BaselineConfig::new(Baseline::PushPull, alpha, 2000), &aux.row_stochastic, &c, &o).unwrap();
        let worst = trace.final_states().column_iter().map(|c| (c - &x_star).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
        assert_eq!(trace.records[0].cum_grads, 20);
        assert_eq!(trace.records[1].cum_grads, 30);
    }

    #[test]
    fn tracking_variable_sums_to_gradient_sum() {
        let g = generate_erdos_renyi(6, 0.4, 8).unwrap();
        let aux = baseline_matrices(&g).unwrap();
        let c = equal_neighbor_weights(&g).unwrap();
        let o = QuadraticOracle::random(6, 2, 4).unwrap();
        let cfg = BaselineConfig::new(Baseline::PushPull, 0.1, 50);
        let (trace, ys) = run_pushpull_tracked(&cfg, &aux.row_stochastic, &c, &o).unwrap();
        assert_eq!(ys.len(), trace.len() + 1);
        for (k, y) in ys.iter().enumerate() {
            let grads = o.local_gradients(trace.state(k)).column_sum();
            assert!((y.column_sum() - grads).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn missing_matrix_is_an_error() {
        let (_, _, _, o) = single_agent();
        let cfg = BaselineConfig::new(Baseline::PushPull, 0.1, 3);
        assert!(run_baseline(&cfg, BaselineMatrices::default(), &o).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (_, w, _, o) = single_agent();
        let err = run_dgd(&BaselineConfig::new(Baseline::Dgd, 1e4, 400), &w, &o).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }
}
