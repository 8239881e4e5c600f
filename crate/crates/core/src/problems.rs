//! Per-agent objectives `f_i`, synthetic data, and centralized reference solutions.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Smoothness and boundedness constants of a distributed objective `f = Σ f_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveConstants {
    /// Per-agent gradient Lipschitz constants `L_i`.
    pub lipschitz: Vec<f64>,
    /// `L_f = Σ L_i`.
    pub l_f: f64,
    /// `L_h = max L_i`.
    pub l_h: f64,
    /// Per-agent gradient norm bounds `h_i`, when the gradients are bounded.
    pub grad_bounds: Option<Vec<f64>>,
    /// `max ‖∇f_i(0)‖`.
    pub l_0: f64,
    /// Strong convexity modulus of `f` (0 when merely convex).
    pub sigma: f64,
}

impl ObjectiveConstants {
    fn new(lipschitz: Vec<f64>, grad_bounds: Option<Vec<f64>>, l_0: f64, sigma: f64) -> Self {
        let l_f = lipschitz.iter().sum();
        let l_h = lipschitz.iter().copied().fold(0.0, f64::max);
        ObjectiveConstants { lipschitz, l_f, l_h, grad_bounds, l_0, sigma }
    }

    /// `h_m = max h_i`.
    pub fn h_m(&self) -> Option<f64> {
        self.grad_bounds.as_ref().map(|h| h.iter().copied().fold(0.0, f64::max))
    }
}

/// Value/gradient oracle for each agent's private function.
pub trait Objective: Send + Sync {
    fn agents(&self) -> usize;
    fn dim(&self) -> usize;
    fn value(&self, agent: usize, x: &[f64]) -> f64;
    fn gradient_into(&self, agent: usize, x: &[f64], out: &mut [f64]);
    fn constants(&self) -> &ObjectiveConstants;

    fn closed_form_optimum(&self) -> Option<DVector<f64>> {
        None
    }

    /// `∇²f_i(x)` when the oracle can supply it; used only by the reference solver.
    fn hessian(&self, _agent: usize, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn gradient(&self, agent: usize, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.gradient_into(agent, x, g.as_mut_slice());
        g
    }

    /// `f(x) = Σ_i f_i(x)`.
    fn total_value(&self, x: &[f64]) -> f64 {
        (0..self.agents()).map(|i| self.value(i, x)).sum()
    }

    /// `∇f(x) = Σ_i ∇f_i(x)`.
    fn total_gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        let mut g = DVector::zeros(self.dim());
        for i in 0..self.agents() {
            self.gradient_into(i, x, g.as_mut_slice());
            acc += &g;
        }
        acc
    }

    /// Column `i` of the result is `∇f_i` evaluated at column `i` of `x`.
    fn local_gradients(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), self.agents());
        for i in 0..self.agents() {
            let xi = x.column(i).clone_owned();
            self.gradient_into(i, xi.as_slice(), out.column_mut(i).as_mut_slice());
        }
        out
    }
}

/// `ln(1 + e^{-m})` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1 / (1 + e^{m})` without overflow.
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

/// Private training data of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentData {
    /// `n_i × p`; row `j` is the feature vector `A_ij`.
    pub features: DMatrix<f64>,
    /// Labels in {-1, +1}.
    pub labels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticParams {
    pub agents: usize,
    pub samples_per_agent: usize,
    pub dim: usize,
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub seed: u64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            agents: 10,
            samples_per_agent: 20,
            dim: 10,
            mu1: 0.2,
            sigma1: 1.0,
            mu2: -0.2,
            sigma2: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticDataset {
    pub agents: Vec<AgentData>,
    pub params: LogisticParams,
}

/// Two Gaussian classes per agent: the first `⌈n_i/2⌉` samples are drawn coordinatewise
/// from `N(μ1, σ1²)` with label +1, the rest from `N(μ2, σ2²)` with label -1.
pub fn generate_logistic(params: &LogisticParams) -> Result<LogisticDataset> {
    let LogisticParams { agents, samples_per_agent: ni, dim, mu1, sigma1, mu2, sigma2, seed } = *params;
    if agents == 0 || ni == 0 || dim == 0 {
        return Err(Error::InvalidArgument("agents, samples_per_agent and dim must be positive".into()));
    }
    if !(sigma1 > 0.0 && sigma2 > 0.0) {
        return Err(Error::InvalidArgument("class standard deviations must be positive".into()));
    }
    let pos = Normal::new(mu1, sigma1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let neg = Normal::new(mu2, sigma2).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = ni.div_ceil(2);
    let data = (0..agents)
        .map(|_| {
            let mut features = DMatrix::zeros(ni, dim);
            let mut labels = Vec::with_capacity(ni);
            for j in 0..ni {
                let (dist, y) = if j < n_pos { (&pos, 1.0) } else { (&neg, -1.0) };
                for c in 0..dim {
                    features[(j, c)] = dist.sample(&mut rng);
                }
                labels.push(y);
            }
            AgentData { features, labels }
        })
        .collect();
    Ok(LogisticDataset { agents: data, params: params.clone() })
}

impl LogisticDataset {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// One row per sample: `agent_id,y,x0..x{p-1}`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let p = self.dim();
        let mut out = String::from("agent_id,y");
        for c in 0..p {
            out.push_str(&format!(",x{c}"));
        }
        out.push('\n');
        for (i, a) in self.agents.iter().enumerate() {
            for (j, y) in a.labels.iter().enumerate() {
                out.push_str(&format!("{i},{y}"));
                for c in 0..p {
                    out.push_str(&format!(",{:.16e}", a.features[(j, c)]));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a dataset written by [`LogisticDataset::to_csv`]. Generation parameters that
    /// cannot be recovered from the samples are left at their defaults.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        if headers.len() < 3 || &headers[0] != "agent_id" || &headers[1] != "y" {
            return Err(Error::Trace(format!("{}: not a dataset CSV", path.display())));
        }
        let p = headers.len() - 2;
        let mut rows: Vec<(usize, f64, Vec<f64>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let bad = |what: &str| Error::Trace(format!("{}: bad {what} in {:?}", path.display(), rec));
            let agent = rec[0].parse().map_err(|_| bad("agent_id"))?;
            let y: f64 = rec[1].parse().map_err(|_| bad("label"))?;
            let x = (2..rec.len())
                .map(|c| rec[c].parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("feature"))?;
            rows.push((agent, y, x));
        }
        let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let mine: Vec<_> = rows.iter().filter(|r| r.0 == i).collect();
            let features = DMatrix::from_fn(mine.len(), p, |j, c| mine[j].2[c]);
            let labels = mine.iter().map(|r| r.1).collect();
            agents.push(AgentData { features, labels });
        }
        let ni = agents.first().map_or(0, |a| a.labels.len());
        let params = LogisticParams { agents: n, samples_per_agent: ni, dim: p, ..Default::default() };
        Ok(LogisticDataset { agents, params })
    }
}

/// `f_i(x) = (1/n_i) Σ_j ln(1 + exp(-y_ij A_ij x))`.
#[derive(Clone, Debug)]
pub struct LogisticOracle {
    data: Vec<AgentData>,
    dim: usize,
    constants: ObjectiveConstants,
}

impl LogisticOracle {
    pub fn new(dataset: &LogisticDataset) -> Result<Self> {
        let dim = dataset.dim();
        for (i, a) in dataset.agents.iter().enumerate() {
            if a.features.ncols() != dim || a.features.nrows() != a.labels.len() || a.labels.is_empty() {
                return Err(Error::InvalidArgument(format!("agent {i}: inconsistent data dimensions")));
            }
            if a.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                return Err(Error::InvalidArgument(format!("agent {i}: labels must be ±1")));
            }
        }
        let mut oracle = LogisticOracle {
            data: dataset.agents.clone(),
            dim,
            constants: ObjectiveConstants::new(vec![], None, 0.0, 0.0),
        };
        let lipschitz = oracle
            .data
            .iter()
            .map(|a| a.features.row_iter().map(|r| r.norm_squared()).sum::<f64>() / (4.0 * a.labels.len() as f64))
            .collect();
        let bounds = oracle
            .data
            .iter()
            .map(|a| a.features.row_iter().map(|r| r.norm()).sum::<f64>() / a.labels.len() as f64)
            .collect();
        let zero = vec![0.0; dim];
        let l_0 = (0..oracle.data.len()).map(|i| oracle.gradient(i, &zero).norm()).fold(0.0, f64::max);
        oracle.constants = ObjectiveConstants::new(lipschitz, Some(bounds), l_0, 0.0);
        Ok(oracle)
    }

    fn margin(a: &AgentData, j: usize, x: &[f64]) -> f64 {
        let row = a.features.row(j);
        a.labels[j] * row.iter().zip(x).map(|(u, v)| u * v).sum::<f64>()
    }
}

pub fn logistic_oracle(dataset: &LogisticDataset) -> Result<LogisticOracle> {
    LogisticOracle::new(dataset)
}

impl Objective for LogisticOracle {
    fn agents(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, agent: usize, x: &[f64]) -> f64 {
        let a = &self.data[agent];
        let total: f64 = (0..a.labels.len()).map(|j| softplus_neg(Self::margin(a, j, x))).sum();
        total / a.labels.len() as f64
    }

    fn gradient_into(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        let a = &self.data[agent];
        out.fill(0.0);
        let scale = 1.0 / a.labels.len() as f64;
        for j in 0..a.labels.len() {
            let coef = -a.labels[j] * sigmoid_neg(Self::margin(a, j, x)) * scale;
            for (o, f) in out.iter_mut().zip(a.features.row(j).iter()) {
                *o += coef * f;
            }
        }
    }

    fn constants(&self) -> &ObjectiveConstants {
        &self.constants
    }

    fn hessian(&self, agent: usize, x: &[f64]) -> Option<DMatrix<f64>> {
        let a = &self.data[agent];
        let mut h = DMatrix::zeros(self.dim, self.dim);
        let scale = 1.0 / a.labels.len() as f64;
        for j in 0..a.labels.len() {
            let s = sigmoid_neg(Self::margin(a, j, x));
            let row = a.features.row(j);
            h.ger(s * (1.0 - s) * scale, &row.transpose(), &row.transpose(), 1.0);
        }
        Some(h)
    }
}

/// `f_i(x) = ½ (x - a_i)ᵀ Q_i (x - a_i)` with diagonal positive-definite `Q_i`.
#[derive(Clone, Debug)]
pub struct QuadraticOracle {
    /// Column `i` is `a_i`.
    targets: DMatrix<f64>,
    /// Column `i` is `diag(Q_i)`.
    curvatures: DMatrix<f64>,
    constants: ObjectiveConstants,
}

impl QuadraticOracle {
    pub fn new(targets: DMatrix<f64>, curvatures: DMatrix<f64>) -> Result<Self> {
        if targets.shape() != curvatures.shape() || targets.ncols() == 0 || targets.nrows() == 0 {
            return Err(Error::InvalidArgument("targets and curvatures must be non-empty p × n".into()));
        }
        if curvatures.iter().any(|&q| !(q > 0.0) || !q.is_finite()) {
            return Err(Error::InvalidArgument("quadratic curvatures must be positive".into()));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("quadratic targets must be finite".into()));
        }
        let lipschitz = curvatures.column_iter().map(|q| q.max()).collect();
        let sigma = curvatures.column_sum().min();
        let l_0 = targets
            .column_iter()
            .zip(curvatures.column_iter())
            .map(|(a, q)| a.component_mul(&q).norm())
            .fold(0.0, f64::max);
        let constants = ObjectiveConstants::new(lipschitz, None, l_0, sigma);
        Ok(QuadraticOracle { targets, curvatures, constants })
    }

    /// Targets `a_i ~ N(0, 1)` and curvatures `Q_i` uniform on `[0.5, 2]`.
    pub fn random(agents: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let uniform = Uniform::new(0.5, 2.0).unwrap();
        let targets = DMatrix::from_fn(dim, agents, |_, _| normal.sample(&mut rng));
        let curvatures = DMatrix::from_fn(dim, agents, |_, _| uniform.sample(&mut rng));
        QuadraticOracle::new(targets, curvatures)
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn curvatures(&self) -> &DMatrix<f64> {
        &self.curvatures
    }
}

pub fn quadratic_oracle(targets: DMatrix<f64>, curvatures: DMatrix<f64>) -> Result<QuadraticOracle> {
    QuadraticOracle::new(targets, curvatures)
}

impl Objective for QuadraticOracle {
    fn agents(&self) -> usize {
        self.targets.ncols()
    }

    fn dim(&self) -> usize {
        self.targets.nrows()
    }

    fn value(&self, agent: usize, x: &[f64]) -> f64 {
        let a = self.targets.column(agent);
        let q = self.curvatures.column(agent);
        0.5 * x.iter().enumerate().map(|(c, &v)| q[c] * (v - a[c]).powi(2)).sum::<f64>()
    }

    fn gradient_into(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        let a = self.targets.column(agent);
        let q = self.curvatures.column(agent);
        for (c, o) in out.iter_mut().enumerate() {
            *o = q[c] * (x[c] - a[c]);
        }
    }

    fn constants(&self) -> &ObjectiveConstants {
        &self.constants
    }

    /// `x* = (Σ Q_i)⁻¹ Σ Q_i a_i`, coordinatewise since every `Q_i` is diagonal.
    fn closed_form_optimum(&self) -> Option<DVector<f64>> {
        let weighted = self.curvatures.component_mul(&self.targets).column_sum();
        Some(weighted.component_div(&self.curvatures.column_sum()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
}

pub const REFERENCE_MAX_ITERATIONS: usize = 1_000_000;

/// Default gradient tolerance `1e-12 · n`.
pub fn default_reference_tol(oracle: &dyn Objective) -> f64 {
    1e-12 * oracle.agents() as f64
}

/// Centralized minimizer of `Σ f_i`: closed form when the oracle has one, otherwise
/// damped Newton (or gradient descent when no Hessian is available) with Armijo
/// backtracking until `‖∇f‖ ≤ tol`.
pub fn reference_solution(oracle: &dyn Objective, tol: f64) -> Result<ReferenceSolution> {
    if let Some(x_star) = oracle.closed_form_optimum() {
        let f_star = oracle.total_value(x_star.as_slice());
        let grad_norm = oracle.total_gradient(x_star.as_slice()).norm();
        return Ok(ReferenceSolution { x_star, f_star, grad_norm });
    }
    let mut x = DVector::zeros(oracle.dim());
    let mut fx = oracle.total_value(x.as_slice());
    let mut g = oracle.total_gradient(x.as_slice());
    let l_f = oracle.constants().l_f;
    let mut gd_step = if l_f > 0.0 { 1.0 / l_f } else { 1.0 };
    for iteration in 0..REFERENCE_MAX_ITERATIONS {
        let gn = g.norm();
        if gn <= tol {
            return Ok(ReferenceSolution { x_star: x, f_star: fx, grad_norm: gn });
        }
        let newton = newton_direction(oracle, &x, &g);
        let is_newton = newton.is_some();
        let (direction, mut step) = match newton {
            Some(d) => (d, 1.0),
            // try a longer step first, then backtrack
            None => (-&g, 2.0 * gd_step),
        };
        let slope = g.dot(&direction);
        loop {
            let cand = &x + step * &direction;
            let fc = oracle.total_value(cand.as_slice());
            let accepted = if fc <= fx + 1e-4 * step * slope {
                Some(oracle.total_gradient(cand.as_slice()))
            } else if (fx - fc).abs() <= 16.0 * f64::EPSILON * fx.abs().max(1.0) {
                // f no longer resolves the decrease near the optimum; accept on gradient progress
                Some(oracle.total_gradient(cand.as_slice())).filter(|gc| gc.norm() < gn)
            } else {
                None
            };
            if let Some(gc) = accepted {
                x = cand;
                fx = fc;
                g = gc;
                if !is_newton {
                    gd_step = step;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::ReferenceNotConverged { tol, iterations: iteration, grad_norm: gn });
            }
        }
    }
    Err(Error::ReferenceNotConverged { tol, iterations: REFERENCE_MAX_ITERATIONS, grad_norm: g.norm() })
}

/// `-(∇²f)⁻¹ ∇f` when every agent supplies a Hessian and the sum is positive definite.
fn newton_direction(oracle: &dyn Objective, x: &DVector<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let mut h = DMatrix::zeros(oracle.dim(), oracle.dim());
    for i in 0..oracle.agents() {
        h += oracle.hessian(i, x.as_slice())?;
    }
    let d = h.cholesky()?.solve(&(-g));
    (g.dot(&d) < 0.0 && d.iter().all(|v| v.is_finite())).then_some(d)
}
