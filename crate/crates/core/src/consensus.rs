//! Push-sum ratio consensus with finite-time ε-termination.
//!
//! States are `p × n` matrices whose column `j` belongs to agent `j`. Every round is a
//! pure function of the previous one; all agents step in lockstep.
//!
//! Termination detection runs max/min flooding in blocks of `D` rounds (`D` = diameter
//! bound). At the start of each block the trackers restart from the current ratios, so
//! at round `uD` every agent holds the exact componentwise extrema of `r((u-1)D)`. An
//! agent stops once `‖M^j - m^j‖₂ < ε`; the ratios only contract inside that box
//! afterwards, so the returned `r(uD)` is within `ε` of the true average.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{ColumnStochasticMatrix, Digraph};

pub const DEFAULT_ROUND_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PushSumState {
    pub s: DMatrix<f64>,
    pub t: DVector<f64>,
    pub r: DMatrix<f64>,
    pub round: usize,
}

impl PushSumState {
    pub fn new(z: &DMatrix<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("push-sum input contains non-finite entries".into()));
        }
        Ok(PushSumState { s: z.clone(), t: DVector::from_element(z.ncols(), 1.0), r: z.clone(), round: 0 })
    }

    pub fn agents(&self) -> usize {
        self.t.len()
    }

    /// One synchronous round: each agent mixes its own and its in-neighbors' numerators
    /// and denominators with the weights `p_jl` of its row.
    pub fn step(&mut self, weights: &ColumnStochasticMatrix) {
        let (p, n) = self.s.shape();
        debug_assert_eq!(weights.n(), n);
        let mut s_next = DMatrix::zeros(p, n);
        let mut t_next = DVector::zeros(n);
        for j in 0..n {
            let mut col = s_next.column_mut(j);
            let mut t = 0.0;
            for &(l, w) in weights.row(j) {
                col.axpy(w, &self.s.column(l), 1.0);
                t += w * self.t[l];
            }
            t_next[j] = t;
        }
        // r_j(k+1) is a convex combination of the in-neighbor ratios r_l(k). Dividing
        // s by t can land an ulp outside their range, so the quotient is clamped back.
        let mut r_next = s_next.clone();
        for (j, mut col) in r_next.column_iter_mut().enumerate() {
            col /= t_next[j];
            for c in 0..p {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &(l, _) in weights.row(j) {
                    lo = lo.min(self.r[(c, l)]);
                    hi = hi.max(self.r[(c, l)]);
                }
                if lo <= hi {
                    col[c] = col[c].clamp(lo, hi);
                }
            }
        }
        self.s = s_next;
        self.t = t_next;
        self.r = r_next;
        self.round += 1;
    }
}

pub fn init_push_sum(z: &DMatrix<f64>) -> Result<PushSumState> {
    PushSumState::new(z)
}

pub fn push_sum_round(mut state: PushSumState, weights: &ColumnStochasticMatrix) -> PushSumState {
    state.step(weights);
    state
}

/// Componentwise global maximum and minimum over agents (columns).
pub fn global_extrema(r: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let p = r.nrows();
    let mut hi = DVector::from_element(p, f64::NEG_INFINITY);
    let mut lo = DVector::from_element(p, f64::INFINITY);
    for col in r.column_iter() {
        for c in 0..p {
            hi[c] = hi[c].max(col[c]);
            lo[c] = lo[c].min(col[c]);
        }
    }
    (hi, lo)
}

/// Restarted max/min flooding over in-neighborhoods.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxTracker {
    pub max: DMatrix<f64>,
    pub min: DMatrix<f64>,
    /// Number of completed blocks.
    pub block_index: usize,
    /// Flooding rounds done in the current block; 0 means the next call restarts.
    pub rounds_in_block: usize,
    block_len: usize,
}

impl MinMaxTracker {
    /// `block_len` is the diameter bound; a single-node graph (D = 0) uses blocks of one round.
    pub fn new(p: usize, n: usize, block_len: usize) -> Self {
        MinMaxTracker {
            max: DMatrix::zeros(p, n),
            min: DMatrix::zeros(p, n),
            block_index: 0,
            rounds_in_block: 0,
            block_len: block_len.max(1),
        }
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// True right after a block has finished, i.e. at rounds `uD`, `u ≥ 1`.
    pub fn block_complete(&self) -> bool {
        self.rounds_in_block == 0 && self.block_index > 0
    }

    /// One flooding round. At a block start, `M` and `m` first restart from `snapshot`.
    pub fn step(&mut self, g: &Digraph, snapshot: &DMatrix<f64>) {
        if self.rounds_in_block == 0 {
            self.max.copy_from(snapshot);
            self.min.copy_from(snapshot);
        }
        let mut max_next = self.max.clone();
        let mut min_next = self.min.clone();
        for j in 0..g.n() {
            for &l in g.in_neighbors(j) {
                for c in 0..self.max.nrows() {
                    max_next[(c, j)] = max_next[(c, j)].max(self.max[(c, l)]);
                    min_next[(c, j)] = min_next[(c, j)].min(self.min[(c, l)]);
                }
            }
        }
        self.max = max_next;
        self.min = min_next;
        self.rounds_in_block += 1;
        if self.rounds_in_block == self.block_len {
            self.rounds_in_block = 0;
            self.block_index += 1;
        }
    }

    /// `‖M^j - m^j‖₂` for agent `j`.
    pub fn spread(&self, j: usize) -> f64 {
        (self.max.column(j) - self.min.column(j)).norm()
    }
}

pub fn minmax_round(mut tracker: MinMaxTracker, g: &Digraph, snapshot: &DMatrix<f64>) -> MinMaxTracker {
    tracker.step(g, snapshot);
    tracker
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsConsensusResult {
    /// Per-agent ε-close estimates of the initial average.
    pub values: DMatrix<f64>,
    /// Rounds until every agent stopped; a positive multiple of the block length.
    pub rounds_used: usize,
    /// Diagnostic: `max_j ‖values_j - mean(z)‖₂`, computed with global knowledge.
    pub true_average_gap: Option<f64>,
}

/// Runs push-sum with restarted max/min tracking until every agent certifies a spread
/// below `eps`.
pub fn run_eps_consensus(
    z: &DMatrix<f64>,
    weights: &ColumnStochasticMatrix,
    g: &Digraph,
    eps: f64,
) -> Result<EpsConsensusResult> {
    run_eps_consensus_capped(z, weights, g, eps, DEFAULT_ROUND_CAP)
}

pub fn run_eps_consensus_capped(
    z: &DMatrix<f64>,
    weights: &ColumnStochasticMatrix,
    g: &Digraph,
    eps: f64,
    round_cap: usize,
) -> Result<EpsConsensusResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("consensus tolerance must be positive, got {eps}")));
    }
    let d = g.require_strongly_connected()?;
    let n = g.n();
    if z.ncols() != n || weights.n() != n {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: z has {} agents, graph {n}, weights {}",
            z.ncols(),
            weights.n()
        )));
    }
    let mut state = PushSumState::new(z)?;
    let mut tracker = MinMaxTracker::new(z.nrows(), n, d);
    let mut last_spread = f64::INFINITY;
    while state.round < round_cap {
        tracker.step(g, &state.r);
        state.step(weights);
        if tracker.block_complete() {
            // every agent checks its own tracker; with D ≥ diameter they agree
            let stopped = (0..n).filter(|&j| tracker.spread(j) < eps).count();
            last_spread = (0..n).map(|j| tracker.spread(j)).fold(0.0, f64::max);
            if stopped == n {
                // a zero spread means every ratio already equalled the tracked value at
                // the block start, which is then the exact average
                for j in 0..n {
                    if tracker.spread(j) == 0.0 {
                        state.r.set_column(j, &tracker.max.column(j));
                    }
                }
                let mean = z.column_mean();
                let gap = state.r.column_iter().map(|c| (c - &mean).norm()).fold(0.0, f64::max);
                return Ok(EpsConsensusResult {
                    values: state.r,
                    rounds_used: state.round,
                    true_average_gap: Some(gap),
                });
            }
        }
    }
    Err(Error::NoTermination { rounds: state.round, spread: last_spread, eps })
}

/// Neighborhood-max flooding for `rounds` rounds; returns every agent's value.
pub fn max_consensus(values: &[f64], g: &Digraph, rounds: usize) -> Vec<f64> {
    let mut cur = values.to_vec();
    for _ in 0..rounds {
        let next = (0..g.n()).map(|j| g.in_neighbors(j).iter().fold(cur[j], |acc, &l| acc.max(cur[l]))).collect();
        cur = next;
    }
    cur
}

/// Agrees on the largest value (e.g. a proposed step size) within `D` rounds.
pub fn max_consensus_scalar(values: &[f64], g: &Digraph) -> Result<f64> {
    if values.len() != g.n() {
        return Err(Error::InvalidArgument(format!("{} values for {} agents", values.len(), g.n())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("max consensus on non-finite values".into()));
    }
    let d = g.require_strongly_connected()?;
    let out = max_consensus(values, g, d);
    debug_assert!(out.iter().all(|&v| v == out[0]));
    Ok(out[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{equal_neighbor_weights, generate_erdos_renyi};

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    #[test]
    fn init_zeros() {
        let st = init_push_sum(&DMatrix::zeros(2, 4)).unwrap();
        assert!(st.s.iter().all(|&v| v == 0.0));
        assert!(st.r.iter().all(|&v| v == 0.0));
        assert!(st.t.iter().all(|&v| v == 1.0));
        assert_eq!(st.t.sum(), 4.0);
        assert_eq!(st.round, 0);
    }

    #[test]
    fn init_rejects_non_finite() {
        let mut z = DMatrix::zeros(1, 3);
        z[(0, 1)] = f64::NAN;
        assert!(init_push_sum(&z).is_err());
    }

    #[test]
    fn identical_columns_are_fixed() {
        let g = generate_erdos_renyi(6, 0.5, 1).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let c = [1.5, -2.0, 0.25];
        let z = DMatrix::from_fn(3, 6, |i, _| c[i]);
        let mut st = init_push_sum(&z).unwrap();
        for _ in 0..20 {
            st = push_sum_round(st, &p);
            for col in st.r.column_iter() {
                for i in 0..3 {
                    assert!((col[i] - c[i]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn one_round_on_three_cycle() {
        let g = Digraph::cycle(3).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let st = push_sum_round(init_push_sum(&row(&[0.0, 3.0, 6.0])).unwrap(), &p);
        // agent j receives from j-1: s_j = (z_j + z_{j-1}) / 2
        assert_eq!(st.s, row(&[3.0, 1.5, 4.5]));
        assert_eq!(st.t, DVector::from_element(3, 1.0));
        assert_eq!(st.r, st.s);
        assert_eq!(st.round, 1);
    }

    #[test]
    fn converges_to_mean_on_random_graph() {
        let g = generate_erdos_renyi(10, 0.3, 17).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let z = DMatrix::from_fn(2, 10, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let mean = z.column_mean();
        let mut st = init_push_sum(&z).unwrap();
        for _ in 0..200 {
            st.step(&p);
        }
        let gap = st.r.column_iter().map(|c| (c - &mean).norm()).fold(0.0, f64::max);
        assert!(gap < 1e-8, "gap {gap}");
    }

    #[test]
    fn tracker_single_node() {
        let g = Digraph::from_edges(1, []).unwrap();
        let mut tr = MinMaxTracker::new(2, 1, 0);
        let r = DMatrix::from_column_slice(2, 1, &[3.0, -1.0]);
        for _ in 0..3 {
            tr = minmax_round(tr, &g, &r);
            assert_eq!(tr.max, r);
            assert_eq!(tr.min, r);
        }
    }

    #[test]
    fn tracker_path_propagation() {
        // directed cycle 0 -> 1 -> 2 -> 3 -> 0 has diameter 3; the extreme at agent 0
        // reaches agent 3 (the far end of the path) exactly at round 3.
        let g = Digraph::cycle(4).unwrap();
        let r = row(&[10.0, 0.0, 0.0, 0.0]);
        let mut tr = MinMaxTracker::new(1, 4, 3);
        let mut arrival = None;
        for round in 1..=3 {
            tr.step(&g, &r);
            if arrival.is_none() && tr.max[(0, 3)] == 10.0 {
                arrival = Some(round);
            }
        }
        assert_eq!(arrival, Some(3));
        assert!(tr.block_complete());
        assert!(tr.max.iter().all(|&v| v == 10.0));
        assert!(tr.min.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tracker_equal_agents() {
        let g = Digraph::cycle(5).unwrap();
        let r = row(&[2.0; 5]);
        let mut tr = MinMaxTracker::new(1, 5, 4);
        for _ in 0..6 {
            tr.step(&g, &r);
            assert_eq!(tr.max, tr.min);
        }
    }

    #[test]
    fn eps_larger_than_spread_stops_after_one_block() {
        let g = Digraph::cycle(3).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let z = row(&[0.0, 3.0, 6.0]);
        let res = run_eps_consensus(&z, &p, &g, 7.0).unwrap();
        assert_eq!(res.rounds_used, 2);
        let mut st = init_push_sum(&z).unwrap();
        st.step(&p);
        st.step(&p);
        assert_eq!(res.values, st.r);
    }

    #[test]
    fn eps_three_cycle_tight() {
        let g = Digraph::cycle(3).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let res = run_eps_consensus(&row(&[0.0, 3.0, 6.0]), &p, &g, 1e-6).unwrap();
        assert!(res.values.iter().all(|v| (v - 3.0).abs() < 1e-6));
        assert_eq!(res.rounds_used % 2, 0);
        assert!(res.true_average_gap.unwrap() < 1e-6);
    }

    #[test]
    fn eps_identical_input_returns_input() {
        let g = generate_erdos_renyi(7, 0.4, 2).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let z = DMatrix::from_fn(2, 7, |i, _| i as f64 + 0.5);
        let res = run_eps_consensus(&z, &p, &g, 1e-9).unwrap();
        assert_eq!(res.rounds_used, g.diameter_bound().unwrap());
        assert_eq!(res.values, z);
    }

    #[test]
    fn eps_rejects_bad_tolerance() {
        let g = Digraph::cycle(3).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        assert!(run_eps_consensus(&row(&[0.0, 1.0, 2.0]), &p, &g, 0.0).is_err());
    }

    #[test]
    fn round_cap_reports_no_termination() {
        let g = Digraph::cycle(3).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let err = run_eps_consensus_capped(&row(&[0.0, 3.0, 6.0]), &p, &g, 1e-12, 4).unwrap_err();
        assert!(matches!(err, Error::NoTermination { rounds: 4, .. }));
    }

    #[test]
    fn max_consensus_cases() {
        let g = Digraph::cycle(3).unwrap();
        assert_eq!(max_consensus_scalar(&[0.1, 0.5, 0.3], &g).unwrap(), 0.5);
        assert_eq!(max_consensus(&[0.1, 0.5, 0.3], &g, 2), vec![0.5; 3]);
        assert_eq!(max_consensus_scalar(&[4.0; 3], &g).unwrap(), 4.0);
        let single = Digraph::from_edges(1, []).unwrap();
        assert_eq!(max_consensus_scalar(&[-2.5], &single).unwrap(), -2.5);
    }
}
