//! Residual, constraint-violation and rate-fit computations over finished traces.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problems::{Objective, ReferenceSolution};
use crate::trace::RunTrace;

/// Consensus violation of one state matrix relative to the initial one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    /// Ratio when the initial mismatch is nonzero, raw mismatch otherwise.
    pub value: f64,
    pub normalized: bool,
}

/// `Σ_{i,j} ‖x^i − x^j‖₂` over ordered pairs.
pub fn pairwise_mismatch(x: &DMatrix<f64>) -> f64 {
    let n = x.ncols();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (x.column(i) - x.column(j)).norm();
        }
    }
    2.0 * total
}

/// `max_{i,j} ‖x^i − x^j‖₂`.
pub fn max_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((x.column(i) - x.column(j)).norm());
        }
    }
    worst
}

pub fn consensus_violation(current: &DMatrix<f64>, initial: &DMatrix<f64>) -> Result<Violation> {
    if current.shape() != initial.shape() {
        return Err(Error::InvalidArgument(format!(
            "state shapes differ: {:?} vs {:?}",
            current.shape(),
            initial.shape()
        )));
    }
    let num = pairwise_mismatch(current);
    let den = pairwise_mismatch(initial);
    Ok(if den > 0.0 {
        Violation { value: num / den, normalized: true }
    } else {
        Violation { value: num, normalized: false }
    })
}

/// `‖Σ_i ∇f_i(x^i) − Σ_i ∇f_i(x̂)‖₂` with `x̂` the column mean.
pub fn gradient_mismatch(oracle: &dyn Objective, x: &DMatrix<f64>) -> f64 {
    let mean = x.column_mean();
    let local = oracle.local_gradients(x).column_sum();
    let at_mean = oracle.total_gradient(mean.as_slice());
    (local - at_mean).norm()
}

/// Which agent's solution residual a report follows at each iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AgentSelection {
    #[default]
    Best,
    Worst,
}

/// Series indexed by `k = 0..=K`; entry 0 describes the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub selection: AgentSelection,
    /// `‖x^i(k) − x*‖ / ‖x^i(0) − x*‖` for the selected agent.
    pub solution_residual: Vec<f64>,
    /// `f(x̂(k)) − f*`, clamped at 0.
    pub objective_residual: Vec<f64>,
    pub violation: Vec<f64>,
    /// False when the initial state is consensual and `violation` holds raw mismatch.
    pub violation_normalized: bool,
    /// False when some agent starts at `x*` and its residual is left unnormalized.
    pub solution_normalized: bool,
    pub cum_comm: Vec<usize>,
    pub cum_grads: Vec<usize>,
    /// Geometric ratio fitted to the positive part of the solution residual series.
    pub fitted_rate: Option<f64>,
}

impl MetricReport {
    pub fn len(&self) -> usize {
        self.solution_residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solution_residual.is_empty()
    }

    /// First `k` with solution residual `≤ target`.
    pub fn first_reaching(&self, target: f64) -> Option<usize> {
        self.solution_residual.iter().position(|&r| r <= target)
    }
}

pub fn residuals(
    trace: &RunTrace,
    reference: &ReferenceSolution,
    oracle: &dyn Objective,
    selection: AgentSelection,
) -> Result<MetricReport> {
    let x_star = &reference.x_star;
    let initial = &trace.initial;
    if initial.nrows() != x_star.len() {
        return Err(Error::InvalidArgument(format!(
            "reference has dimension {}, trace {}",
            x_star.len(),
            initial.nrows()
        )));
    }
    let denominators: Vec<f64> = initial.column_iter().map(|c| (c - x_star).norm()).collect();
    let solution_normalized = denominators.iter().all(|&d| d > 0.0);
    let initial_mismatch = pairwise_mismatch(initial);
    let violation_normalized = initial_mismatch > 0.0;

    let count = trace.len() + 1;
    let mut report = MetricReport {
        selection,
        solution_residual: Vec::with_capacity(count),
        objective_residual: Vec::with_capacity(count),
        violation: Vec::with_capacity(count),
        violation_normalized,
        solution_normalized,
        cum_comm: Vec::with_capacity(count),
        cum_grads: Vec::with_capacity(count),
        fitted_rate: None,
    };
    for k in 0..count {
        let x = trace.state(k);
        let per_agent = x.column_iter().zip(&denominators).map(|(c, &d)| {
            let r = (c - x_star).norm();
            if solution_normalized {
                r / d
            } else {
                r
            }
        });
        let sol = match selection {
            AgentSelection::Best => per_agent.fold(f64::INFINITY, f64::min),
            AgentSelection::Worst => per_agent.fold(0.0, f64::max),
        };
        let mean = x.column_mean();
        let obj = (oracle.total_value(mean.as_slice()) - reference.f_star).max(0.0);
        let mismatch = pairwise_mismatch(x);
        report.solution_residual.push(sol);
        report.objective_residual.push(obj);
        report.violation.push(if violation_normalized { mismatch / initial_mismatch } else { mismatch });
        let (comm, grads) = match k {
            0 => (0, 0),
            _ => (trace.records[k - 1].cum_comm, trace.records[k - 1].cum_grads),
        };
        report.cum_comm.push(comm);
        report.cum_grads.push(grads);
    }
    let positive = report.solution_residual.iter().take_while(|&&r| r > 0.0).count();
    if positive >= 2 {
        report.fitted_rate = fit_geometric_rate(&report.solution_residual, 0..positive).ok();
    }
    Ok(report)
}

/// Least-squares slope of `ln(series[k])` against `k` over `window`, returned as `exp(slope)`.
pub fn fit_geometric_rate(series: &[f64], window: std::ops::Range<usize>) -> Result<f64> {
    if window.end > series.len() || window.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} must hold at least two points of a series of length {}",
            series.len()
        )));
    }
    if let Some((k, v)) = window.clone().map(|k| (k, series[k])).find(|&(_, v)| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("series value at {k} is not positive: {v}")));
    }
    let m = window.len() as f64;
    let k_mean = window.clone().map(|k| k as f64).sum::<f64>() / m;
    let y_mean = window.clone().map(|k| series[k].ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for k in window {
        let dk = k as f64 - k_mean;
        sxy += dk * (series[k].ln() - y_mean);
        sxx += dk * dk;
    }
    Ok((sxy / sxx).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{quadratic_oracle, reference_solution};
    use crate::trace::IterationRecord;

    #[test]
    fn violation_examples() {
        let x0 = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let xk = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(consensus_violation(&xk, &x0).unwrap(), Violation { value: 0.5, normalized: true });
        assert_eq!(consensus_violation(&x0, &x0).unwrap().value, 1.0);
        let flat = DMatrix::from_element(3, 4, 1.5);
        assert_eq!(consensus_violation(&flat, &x0.clone().resize(3, 4, 0.0)).unwrap().value, 0.0);
        let v = consensus_violation(&xk, &DMatrix::zeros(1, 2)).unwrap();
        assert_eq!(v, Violation { value: 2.0, normalized: false });
    }

    #[test]
    fn rate_fits() {
        let exact: Vec<f64> = (0..40).map(|k| 0.9f64.powi(k)).collect();
        assert!((fit_geometric_rate(&exact, 0..40).unwrap() - 0.9).abs() < 1e-12);
        assert!((fit_geometric_rate(&[3.0; 10], 2..9).unwrap() - 1.0).abs() < 1e-15);
        let noisy: Vec<f64> =
            (0..60).map(|k| 5.0 * 0.8f64.powi(k) * (1.0 + 0.01 * ((k * 7919 % 13) as f64 / 6.0 - 1.0))).collect();
        assert!((fit_geometric_rate(&noisy, 0..60).unwrap() - 0.8).abs() < 0.01);
        assert!(fit_geometric_rate(&[1.0, 0.0, 0.5], 0..3).is_err());
        assert!(fit_geometric_rate(&[1.0], 0..1).is_err());
    }

    fn two_agent_trace(states: Vec<DMatrix<f64>>) -> RunTrace {
        let mut trace = RunTrace::new("test", DMatrix::zeros(1, 2));
        for (i, s) in states.into_iter().enumerate() {
            let record = IterationRecord {
                k: i + 1,
                eps: None,
                rounds: 1,
                cum_comm: i + 1,
                cum_grads: 2 * (i + 1),
                wall_ms: 0.0,
            };
            trace.push(record, s);
        }
        trace
    }

    #[test]
    fn residual_series() {
        let o = quadratic_oracle(DMatrix::from_row_slice(1, 2, &[0.0, 4.0]), DMatrix::from_element(1, 2, 1.0)).unwrap();
        let r = reference_solution(&o, 1e-14).unwrap();
        let trace = two_agent_trace(vec![
            DMatrix::from_row_slice(1, 2, &[1.0, 3.0]),
            DMatrix::from_row_slice(1, 2, &[2.0, 2.0]),
        ]);
        let rep = residuals(&trace, &r, &o, AgentSelection::Best).unwrap();
        assert_eq!(rep.len(), 3);
        assert_eq!(rep.solution_residual[0], 1.0);
        assert_eq!(rep.solution_residual[1], 0.5);
        assert_eq!(rep.solution_residual[2], 0.0);
        // x̂(1) = 2 = x*, so the objective residual is 0 even while agents disagree
        assert_eq!(rep.objective_residual[1], 0.0);
        assert_eq!(rep.objective_residual[0], o.total_value(&[0.0]) - r.f_star);
        assert!(!rep.violation_normalized);
        assert_eq!(rep.violation, vec![0.0, 4.0, 0.0]);
        assert_eq!(rep.cum_grads, vec![0, 2, 4]);
        let worst = residuals(&trace, &r, &o, AgentSelection::Worst).unwrap();
        assert_eq!(worst.solution_residual[1], 0.5);
        assert_eq!(rep.first_reaching(0.6), Some(1));
        assert_eq!(rep.first_reaching(-1.0), None);
    }

    #[test]
    fn gradient_mismatch_on_quadratic() {
        let o =
            quadratic_oracle(DMatrix::from_row_slice(1, 2, &[0.0, 4.0]), DMatrix::from_row_slice(1, 2, &[1.0, 3.0]))
                .unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        // Σ Q_i (x^i − a_i) − Σ Q_i (2 − a_i) = (1·1 + 3·(−1)) − (2 − 6) = 2
        assert!((gradient_mismatch(&o, &x) - 2.0).abs() < 1e-14);
    }
}
