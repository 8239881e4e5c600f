//! Directed communication topologies and the stochastic weight matrices built on them.
//!
//! Edge orientation: the pair `(i, j)` means agent `j` sends to agent `i`, so `j` is an
//! in-neighbor of `i` and `i` is an out-neighbor of `j`. Self-loops are never stored in
//! the edge set; self-weights live only in the matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance on row/column sums of every weight matrix built here.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Default number of regenerations before [`generate_erdos_renyi`] gives up.
pub const DEFAULT_RETRY_BUDGET: u32 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    in_neighbors: Vec<Vec<usize>>,
    out_neighbors: Vec<Vec<usize>>,
    diameter: Option<usize>,
    diameter_bound: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Connectivity {
    pub strongly_connected: bool,
    /// Longest shortest directed path; `None` unless strongly connected.
    pub diameter: Option<usize>,
}

impl Digraph {
    /// Builds a graph from `(receiver, sender)` pairs. Strong connectivity is not required
    /// here; algorithms that need it call [`Digraph::require_strongly_connected`].
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop ({i}, {i}) not allowed")));
            }
            set.insert((i, j));
        }
        let mut in_neighbors = vec![Vec::new(); n];
        let mut out_neighbors = vec![Vec::new(); n];
        for &(i, j) in &set {
            in_neighbors[i].push(j);
            out_neighbors[j].push(i);
        }
        for list in out_neighbors.iter_mut() {
            list.sort_unstable();
        }
        let mut g = Digraph { n, edges: set, in_neighbors, out_neighbors, diameter: None, diameter_bound: None };
        let info = analyze(&g);
        g.diameter = info.diameter;
        g.diameter_bound = info.diameter;
        Ok(g)
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 2 {
            return Digraph::from_edges(n, []);
        }
        Digraph::from_edges(n, (0..n).map(|j| ((j + 1) % n, j)))
    }

    /// Directed path `0 -> 1 -> ... -> n-1` (not strongly connected for n > 1).
    pub fn path(n: usize) -> Result<Self> {
        Digraph::from_edges(n, (1..n).map(|i| (i, i - 1)))
    }

    /// Every ordered pair of distinct nodes.
    pub fn complete(n: usize) -> Result<Self> {
        Digraph::from_edges(n, (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))))
    }

    /// Adds the reverse of every edge.
    pub fn symmetrized(&self) -> Self {
        let edges = self.edges.iter().flat_map(|&(i, j)| [(i, j), (j, i)]);
        Digraph::from_edges(self.n, edges).expect("symmetrizing a valid graph")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, receiver: usize, sender: usize) -> bool {
        self.edges.contains(&(receiver, sender))
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    pub fn out_neighbors(&self, j: usize) -> &[usize] {
        &self.out_neighbors[j]
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.diameter.is_some()
    }

    /// Exact diameter computed at construction, if strongly connected.
    pub fn diameter(&self) -> Option<usize> {
        self.diameter
    }

    /// The block length used by the termination detector.
    pub fn diameter_bound(&self) -> Option<usize> {
        self.diameter_bound
    }

    /// Replaces the diameter bound with a (possibly loose) over-estimate.
    pub fn with_diameter_bound(mut self, bound: usize) -> Result<Self> {
        let d = self.diameter.ok_or(Error::Disconnected)?;
        if bound < d {
            return Err(Error::InvalidArgument(format!("diameter bound {bound} is below the exact diameter {d}")));
        }
        self.diameter_bound = Some(bound);
        Ok(self)
    }

    pub fn require_strongly_connected(&self) -> Result<usize> {
        self.diameter_bound.ok_or(Error::Disconnected)
    }

    /// One `i j` line per stored pair, 0-based, receiver first.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(i, j) in &self.edges {
            writeln!(out, "{i} {j}").unwrap();
        }
        out
    }

    /// Inverse of [`Digraph::to_edge_list`]. Blank lines and `#` comments are skipped.
    pub fn from_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "edge list line {}: expected `i j`, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Digraph::from_edges(n, edges)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// Breadth-first distances from `source` along out-edges.
fn bfs_distances(g: &Digraph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in &g.out_neighbors[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// All-pairs BFS: strong connectivity and exact directed diameter.
pub fn analyze(g: &Digraph) -> Connectivity {
    let mut diameter = 0;
    for source in 0..g.n {
        for d in bfs_distances(g, source) {
            match d {
                Some(d) => diameter = diameter.max(d),
                None => return Connectivity { strongly_connected: false, diameter: None },
            }
        }
    }
    Connectivity { strongly_connected: true, diameter: Some(diameter) }
}

/// Erdős–Rényi digraph: every ordered pair is an edge independently with probability
/// `prob`. Disconnected draws are regenerated on a fresh ChaCha stream derived from the
/// attempt number, so the result is a pure function of `(n, prob, seed)`.
pub fn generate_erdos_renyi(n: usize, prob: f64, seed: u64) -> Result<Digraph> {
    generate_erdos_renyi_with_budget(n, prob, seed, DEFAULT_RETRY_BUDGET)
}

pub fn generate_erdos_renyi_with_budget(n: usize, prob: f64, seed: u64, retry_budget: u32) -> Result<Digraph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Erdős–Rényi graph needs n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::InvalidArgument(format!("edge probability {prob} outside [0, 1]")));
    }
    for attempt in 0..retry_budget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(attempt));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random_bool(prob) {
                    edges.push((i, j));
                }
            }
        }
        let g = Digraph::from_edges(n, edges)?;
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(Error::NotStronglyConnected { n, prob, attempts: retry_budget })
}

/// Primitive column-stochastic weights `P = [p_ij]` supported on the edges plus the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStochasticMatrix {
    dense: DMatrix<f64>,
    /// Row `j` as `(l, p_jl)` for every `l` with `p_jl > 0`, diagonal included.
    rows: Vec<Vec<(usize, f64)>>,
}

impl ColumnStochasticMatrix {
    /// Validates column sums, the support condition against `g`, and positive diagonals.
    pub fn new(g: &Digraph, dense: DMatrix<f64>) -> Result<Self> {
        let n = g.n();
        if dense.shape() != (n, n) {
            return Err(Error::InvalidWeights(format!("shape {:?}, expected ({n}, {n})", dense.shape())));
        }
        for j in 0..n {
            let sum: f64 = dense.column(j).iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidWeights(format!("column {j} sums to {sum}")));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let w = dense[(i, j)];
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidWeights(format!("p[{i},{j}] = {w} outside [0,1]")));
                }
                let supported = i == j || g.has_edge(i, j);
                if supported != (w > 0.0) {
                    return Err(Error::InvalidWeights(format!(
                        "support condition at ({i}, {j}): weight {w}, edge present {supported}"
                    )));
                }
            }
        }
        let rows =
            (0..n).map(|j| (0..n).filter(|&l| dense[(j, l)] > 0.0).map(|l| (l, dense[(j, l)])).collect()).collect();
        Ok(ColumnStochasticMatrix { dense, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dense[(i, j)]
    }

    /// Nonzero entries of row `j`: the weights agent `j` applies to what it receives.
    pub fn row(&self, j: usize) -> &[(usize, f64)] {
        &self.rows[j]
    }
}

/// Out-degree based equal neighbor weights: column `j` spreads `1/(|N_j^out| + 1)` over
/// `j` itself and each of its out-neighbors.
pub fn equal_neighbor_weights(g: &Digraph) -> Result<ColumnStochasticMatrix> {
    g.require_strongly_connected()?;
    let n = g.n();
    let mut p = DMatrix::zeros(n, n);
    for j in 0..n {
        let w = 1.0 / (g.out_neighbors(j).len() + 1) as f64;
        p[(j, j)] = w;
        for &i in g.out_neighbors(j) {
            p[(i, j)] = w;
        }
    }
    ColumnStochasticMatrix::new(g, p)
}

/// Weights for the doubly/row-stochastic baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxMatrices {
    /// Row `i` spreads `1/(|N_i^in| + 1)` over `i` and its in-neighbors.
    pub row_stochastic: DMatrix<f64>,
    /// Metropolis weights on the symmetrized graph.
    pub doubly_stochastic: DMatrix<f64>,
}

pub fn baseline_matrices(g: &Digraph) -> Result<AuxMatrices> {
    g.require_strongly_connected()?;
    let n = g.n();

    let mut row = DMatrix::zeros(n, n);
    for i in 0..n {
        let w = 1.0 / (g.in_neighbors(i).len() + 1) as f64;
        row[(i, i)] = w;
        for &j in g.in_neighbors(i) {
            row[(i, j)] = w;
        }
    }

    let sym = g.symmetrized();
    let degree: Vec<usize> = (0..n).map(|i| sym.in_neighbors(i).len()).collect();
    let mut doubly = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for &j in sym.in_neighbors(i) {
            let w = 1.0 / (1 + degree[i].max(degree[j])) as f64;
            doubly[(i, j)] = w;
            off += w;
        }
        doubly[(i, i)] = 1.0 - off;
    }

    Ok(AuxMatrices { row_stochastic: row, doubly_stochastic: doubly })
}
