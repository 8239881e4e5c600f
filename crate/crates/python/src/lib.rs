//! Python bindings. Vectors cross the boundary as plain lists; per-agent data is a list
//! with one entry per agent (`values[j]` belongs to agent `j`).

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gradcons::baselines::{run_baseline as core_run_baseline, Baseline, BaselineConfig, BaselineMatrices};
use gradcons::bounds::{self, BoundMode, GraphParams};
use gradcons::consensus;
use gradcons::gradconsensus::{run_grad_consensus, GcConfig, Schedule as CoreSchedule};
use gradcons::graph::{self, baseline_matrices, equal_neighbor_weights};
use gradcons::harness;
use gradcons::metrics::{residuals, AgentSelection};
use gradcons::problems::{
    default_reference_tol, generate_logistic, reference_solution, LogisticOracle, LogisticParams, Objective,
    QuadraticOracle,
};
use gradcons::Error;

/// Row-major list of lists.
type Rows = Vec<Vec<f64>>;
/// `(label, repetition, trace path, final residual)`.
type RunSummary = (String, usize, Option<String>, f64);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Config { .. } | Error::InvalidWeights(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::NotStronglyConnected { .. } | Error::Disconnected => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Agent-major rows to a `p × n` matrix.
fn columns(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("expected a non-empty list of equal-length vectors, one per agent"));
    }
    Ok(DMatrix::from_fn(p, n, |c, j| rows[j][c]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn dense_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Directed graph; the pair `(i, j)` means agent `j` sends to agent `i`.
#[pyclass(name = "Digraph", module = "pygradcons", skip_from_py_object)]
#[derive(Clone)]
struct PyDigraph {
    inner: graph::Digraph,
}

#[pymethods]
impl PyDigraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        graph::Digraph::from_edges(n, edges).map(|inner| PyDigraph { inner }).map_err(to_py)
    }

    /// Strongly connected Erdős–Rényi digraph, resampled until strongly connected.
    #[staticmethod]
    #[pyo3(signature = (n, prob, seed = 0))]
    fn erdos_renyi(n: usize, prob: f64, seed: u64) -> PyResult<Self> {
        graph::generate_erdos_renyi(n, prob, seed).map(|inner| PyDigraph { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn cycle(n: usize) -> PyResult<Self> {
        graph::Digraph::cycle(n).map(|inner| PyDigraph { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn complete(n: usize) -> PyResult<Self> {
        graph::Digraph::complete(n).map(|inner| PyDigraph { inner }).map_err(to_py)
    }

    /// Parses the `"i j"`-per-line edge list format.
    #[staticmethod]
    fn from_edge_list(n: usize, text: &str) -> PyResult<Self> {
        graph::Digraph::from_edge_list(n, text).map(|inner| PyDigraph { inner }).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().iter().copied().collect()
    }

    #[getter]
    fn diameter(&self) -> Option<usize> {
        self.inner.diameter()
    }

    fn is_strongly_connected(&self) -> bool {
        self.inner.is_strongly_connected()
    }

    fn symmetrized(&self) -> Self {
        PyDigraph { inner: self.inner.symmetrized() }
    }

    fn edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    /// Column-stochastic push-sum weights as a dense row-major list of lists.
    fn equal_neighbor_weights(&self) -> PyResult<Vec<Vec<f64>>> {
        equal_neighbor_weights(&self.inner).map(|w| dense_rows(w.as_matrix())).map_err(to_py)
    }

    /// `(row_stochastic, doubly_stochastic)` matrices used by the baselines.
    fn baseline_matrices(&self) -> PyResult<(Rows, Rows)> {
        let aux = baseline_matrices(&self.inner).map_err(to_py)?;
        Ok((dense_rows(&aux.row_stochastic), dense_rows(&aux.doubly_stochastic)))
    }

    fn __repr__(&self) -> String {
        format!("Digraph(n={}, edges={})", self.inner.n(), self.inner.edges().len())
    }
}

/// Consensus tolerance sequence.
#[pyclass(name = "Schedule", module = "pygradcons", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PySchedule {
    inner: CoreSchedule,
}

#[pymethods]
impl PySchedule {
    #[staticmethod]
    fn constant(eps0: f64) -> PyResult<Self> {
        Self::checked(CoreSchedule::Constant { eps0 })
    }

    #[staticmethod]
    fn polynomial(eps0: f64, eta: f64) -> PyResult<Self> {
        Self::checked(CoreSchedule::Polynomial { eps0, eta })
    }

    #[staticmethod]
    fn geometric(mu: f64) -> PyResult<Self> {
        Self::checked(CoreSchedule::Geometric { mu })
    }

    fn eps_at(&self, k: usize) -> PyResult<f64> {
        if k == 0 {
            return Err(PyValueError::new_err("schedules start at k = 1"));
        }
        Ok(self.inner.eps_at(k))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

impl PySchedule {
    fn checked(inner: CoreSchedule) -> PyResult<Self> {
        inner.validate().map_err(to_py)?;
        Ok(PySchedule { inner })
    }
}

/// A separable objective `f = Σ_i f_i` with one private function per agent.
#[pyclass(name = "Problem", module = "pygradcons", frozen)]
struct PyProblem {
    oracle: Box<dyn Objective>,
    kind: &'static str,
}

#[pymethods]
impl PyProblem {
    /// Random diagonal quadratics `½ (x − a_i)ᵀ Q_i (x − a_i)`.
    #[staticmethod]
    #[pyo3(signature = (agents, dim, seed = 0))]
    fn quadratic(agents: usize, dim: usize, seed: u64) -> PyResult<Self> {
        let q = QuadraticOracle::random(agents, dim, seed).map_err(to_py)?;
        Ok(PyProblem { oracle: Box::new(q), kind: "quadratic" })
    }

    /// Quadratics from explicit targets and diagonal curvatures (one vector per agent).
    #[staticmethod]
    fn quadratic_from(targets: Vec<Vec<f64>>, curvatures: Vec<Vec<f64>>) -> PyResult<Self> {
        let q = QuadraticOracle::new(columns(&targets)?, columns(&curvatures)?).map_err(to_py)?;
        Ok(PyProblem { oracle: Box::new(q), kind: "quadratic" })
    }

    /// Synthetic two-class logistic regression.
    #[staticmethod]
    #[pyo3(signature = (agents, samples_per_agent = 20, dim = 10, mu1 = 0.2, sigma1 = 1.0, mu2 = -0.2, sigma2 = 1.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn logistic(
        agents: usize,
        samples_per_agent: usize,
        dim: usize,
        mu1: f64,
        sigma1: f64,
        mu2: f64,
        sigma2: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let params = LogisticParams { agents, samples_per_agent, dim, mu1, sigma1, mu2, sigma2, seed };
        let data = generate_logistic(&params).map_err(to_py)?;
        let oracle = LogisticOracle::new(&data).map_err(to_py)?;
        Ok(PyProblem { oracle: Box::new(oracle), kind: "logistic" })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.kind
    }

    #[getter]
    fn agents(&self) -> usize {
        self.oracle.agents()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn value(&self, agent: usize, x: Vec<f64>) -> PyResult<f64> {
        self.check(agent, &x)?;
        Ok(self.oracle.value(agent, &x))
    }

    fn gradient(&self, agent: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(agent, &x)?;
        Ok(self.oracle.gradient(agent, &x).iter().copied().collect())
    }

    fn total_value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(0, &x)?;
        Ok(self.oracle.total_value(&x))
    }

    /// Lipschitz, gradient-bound and strong-convexity constants.
    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.oracle.constants();
        let d = PyDict::new(py);
        d.set_item("lipschitz", c.lipschitz.clone())?;
        d.set_item("l_f", c.l_f)?;
        d.set_item("l_h", c.l_h)?;
        d.set_item("h_m", c.h_m())?;
        d.set_item("l_0", c.l_0)?;
        d.set_item("sigma", c.sigma)?;
        Ok(d)
    }

    /// `(x_star, f_star)` of the centralized problem.
    #[pyo3(signature = (tol = None))]
    fn reference_solution(&self, tol: Option<f64>) -> PyResult<(Vec<f64>, f64)> {
        let tol = tol.unwrap_or_else(|| default_reference_tol(self.oracle.as_ref()));
        let r = reference_solution(self.oracle.as_ref(), tol).map_err(to_py)?;
        Ok((r.x_star.iter().copied().collect(), r.f_star))
    }
}

impl PyProblem {
    fn check(&self, agent: usize, x: &[f64]) -> PyResult<()> {
        if agent >= self.oracle.agents() {
            return Err(PyValueError::new_err(format!("agent {agent} out of range")));
        }
        if x.len() != self.oracle.dim() {
            return Err(PyValueError::new_err(format!("expected a vector of length {}", self.oracle.dim())));
        }
        Ok(())
    }
}

/// One algorithm run: per-iteration records plus every agent's iterates.
#[pyclass(name = "Trace", module = "pygradcons", frozen)]
struct PyTrace {
    inner: gradcons::RunTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn algorithm(&self) -> String {
        self.inner.algorithm.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Iterates at outer iteration `k` (0 is the initial point), one vector per agent.
    fn state(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        if k > self.inner.len() {
            return Err(PyValueError::new_err(format!("k = {k} beyond {} iterations", self.inner.len())));
        }
        Ok(rows(self.inner.state(k)))
    }

    #[getter]
    fn final_states(&self) -> Vec<Vec<f64>> {
        rows(self.inner.final_states())
    }

    /// Per-iteration `k`, `eps`, `rounds`, `cum_comm`, `cum_grads` as a list of dicts.
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("k", r.k)?;
                d.set_item("eps", r.eps)?;
                d.set_item("rounds", r.rounds)?;
                d.set_item("cum_comm", r.cum_comm)?;
                d.set_item("cum_grads", r.cum_grads)?;
                Ok(d)
            })
            .collect()
    }

    /// Residual series against the problem's reference solution, indexed by `k = 0..=K`.
    #[pyo3(signature = (problem, worst = false))]
    fn residuals<'py>(&self, py: Python<'py>, problem: &PyProblem, worst: bool) -> PyResult<Bound<'py, PyDict>> {
        let oracle = problem.oracle.as_ref();
        let reference = reference_solution(oracle, default_reference_tol(oracle)).map_err(to_py)?;
        let selection = if worst { AgentSelection::Worst } else { AgentSelection::Best };
        let report = residuals(&self.inner, &reference, oracle, selection).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("solution", report.solution_residual)?;
        d.set_item("objective", report.objective_residual)?;
        d.set_item("violation", report.violation)?;
        d.set_item("cum_comm", report.cum_comm)?;
        d.set_item("cum_grads", report.cum_grads)?;
        d.set_item("fitted_rate", report.fitted_rate)?;
        Ok(d)
    }
}

/// ε-Consensus on `z` (one vector per agent); returns `(values, rounds_used)`.
#[pyfunction]
fn eps_consensus(graph: &PyDigraph, z: Vec<Vec<f64>>, eps: f64) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let w = equal_neighbor_weights(&graph.inner).map_err(to_py)?;
    let res = consensus::run_eps_consensus(&columns(&z)?, &w, &graph.inner, eps).map_err(to_py)?;
    Ok((rows(&res.values), res.rounds_used))
}

/// Neighborhood-max flooding; `rounds` defaults to the graph diameter.
#[pyfunction]
#[pyo3(signature = (graph, values, rounds = None))]
fn max_consensus(graph: &PyDigraph, values: Vec<f64>, rounds: Option<usize>) -> PyResult<Vec<f64>> {
    if values.len() != graph.inner.n() {
        return Err(PyValueError::new_err("one value per agent expected"));
    }
    let rounds = match rounds {
        Some(r) => r,
        None => graph.inner.require_strongly_connected().map_err(to_py)?,
    };
    Ok(consensus::max_consensus(&values, &graph.inner, rounds))
}

#[pyfunction]
fn zeta(s: f64) -> PyResult<f64> {
    bounds::zeta(s).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (graph, problem, alpha, schedule, max_outer = 1000))]
fn run_gradconsensus(
    graph: &PyDigraph,
    problem: &PyProblem,
    alpha: f64,
    schedule: &PySchedule,
    max_outer: usize,
) -> PyResult<PyTrace> {
    let w = equal_neighbor_weights(&graph.inner).map_err(to_py)?;
    let cfg = GcConfig::new(alpha, schedule.inner, max_outer);
    run_grad_consensus(&cfg, &graph.inner, &w, problem.oracle.as_ref()).map(|inner| PyTrace { inner }).map_err(to_py)
}

/// Runs `"dgd"`, `"extra"` or `"pushpull"` on the graph's baseline matrices.
#[pyfunction]
#[pyo3(signature = (name, graph, problem, alpha, max_iter = 1000))]
fn run_baseline(name: &str, graph: &PyDigraph, problem: &PyProblem, alpha: f64, max_iter: usize) -> PyResult<PyTrace> {
    let algorithm = match name {
        "dgd" => Baseline::Dgd,
        "extra" => Baseline::Extra,
        "pushpull" => Baseline::PushPull,
        other => return Err(PyValueError::new_err(format!("unknown baseline {other:?}"))),
    };
    let aux = baseline_matrices(&graph.inner).map_err(to_py)?;
    let w = equal_neighbor_weights(&graph.inner).map_err(to_py)?;
    let cfg = BaselineConfig::new(algorithm, alpha, max_iter);
    core_run_baseline(&cfg, BaselineMatrices::from_aux(&aux, &w), problem.oracle.as_ref())
        .map(|inner| PyTrace { inner })
        .map_err(to_py)
}

/// Inner-round bound at outer iteration `k`. `mode` is `"bounded_gradients"` or
/// `"lipschitz_only"`; omitted `lam`/`delta` select the worst-case graph constants.
#[pyfunction]
#[pyo3(signature = (k, problem, alpha, schedule, mode = "bounded_gradients", lam = None, delta = None))]
fn comm_bound(
    k: usize,
    problem: &PyProblem,
    alpha: f64,
    schedule: &PySchedule,
    mode: &str,
    lam: Option<f64>,
    delta: Option<f64>,
) -> PyResult<u64> {
    let mode = match mode {
        "bounded_gradients" => BoundMode::BoundedGradients,
        "lipschitz_only" => BoundMode::LipschitzOnly,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let cfg = GcConfig::new(alpha, schedule.inner, k);
    let params = GraphParams { lambda: lam, delta };
    bounds::comm_bound(k, &cfg, problem.oracle.agents(), problem.oracle.constants(), mode, params)
        .map(|b| b.rounds)
        .map_err(to_py)
}

/// `(lambda, delta)` measured by running push-sum on the graph's weights.
#[pyfunction]
#[pyo3(signature = (graph, rounds = 2000))]
fn empirical_graph_params(graph: &PyDigraph, rounds: usize) -> PyResult<(f64, f64)> {
    let w = equal_neighbor_weights(&graph.inner).map_err(to_py)?;
    let p = bounds::empirical_graph_params(&w, rounds).map_err(to_py)?;
    Ok((p.lambda.unwrap_or(f64::NAN), p.delta.unwrap_or(f64::NAN)))
}

/// Convex-case constants `e`, `floor`, `beta` for a polynomial schedule.
#[pyfunction]
fn theorem3_constants<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    alpha: f64,
    schedule: &PySchedule,
    initial_distance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = GcConfig::new(alpha, schedule.inner, 1);
    let t = bounds::theorem3_constants(problem.oracle.constants(), problem.oracle.agents(), &cfg, initial_distance)
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("e", t.e)?;
    d.set_item("floor", t.floor)?;
    d.set_item("beta", t.beta)?;
    d.set_item("proof_threshold", t.proof_threshold)?;
    d.set_item("warnings", t.warnings)?;
    Ok(d)
}

/// Strongly convex constants `rho`, `c` for a geometric schedule.
#[pyfunction]
fn theorem4_constants<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    alpha: f64,
    schedule: &PySchedule,
    initial_distance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = GcConfig::new(alpha, schedule.inner, 1);
    let t = bounds::theorem4_constants(problem.oracle.constants(), problem.oracle.agents(), &cfg, initial_distance)
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("rho", t.rho)?;
    d.set_item("c", t.c)?;
    d.set_item("warnings", t.warnings)?;
    Ok(d)
}

/// Runs a TOML experiment config and writes traces to `output` (or the configured
/// directory); returns one `(label, repetition, path, final_residual)` per run.
#[pyfunction]
#[pyo3(signature = (path, output = None))]
fn run_config(path: PathBuf, output: Option<PathBuf>) -> PyResult<Vec<RunSummary>> {
    let cfg = harness::parse_config(&path).map_err(to_py)?;
    let dir = output.unwrap_or_else(|| cfg.output_directory());
    let result = harness::run_experiment_to(&cfg, Some(&dir)).map_err(to_py)?;
    Ok(result
        .runs
        .into_iter()
        .map(|r| {
            let last = r.report.solution_residual.last().copied().unwrap_or(f64::NAN);
            (r.label, r.repetition, r.path.map(|p| p.display().to_string()), last)
        })
        .collect())
}

#[pymodule]
fn pygradcons(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDigraph>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(eps_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(max_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(run_gradconsensus, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(comm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_graph_params, m)?)?;
    m.add_function(wrap_pyfunction!(theorem3_constants, m)?)?;
    m.add_function(wrap_pyfunction!(theorem4_constants, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("TRACE_HEADER", harness::TRACE_HEADER)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_rows_round_trip_through_columns() {
        let agents = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let m = columns(&agents).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 2)], 6.0);
        assert_eq!(rows(&m), agents);
    }

    #[test]
    fn ragged_input_is_rejected() {
        assert!(columns(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(columns(&[]).is_err());
    }
}
