//! Worst-case inner-round bounds and convergence-rate constants for GradConsensus.
//!
//! The worst-case graph constants `λ = 1 - 1/nⁿ`, `δ = 1/nⁿ` underflow for modest `n`,
//! so every bound here is assembled in the log domain.

use nalgebra::DMatrix;

use crate::consensus::PushSumState;
use crate::error::{Error, Result};
use crate::gradconsensus::{GcConfig, Schedule};
use crate::graph::ColumnStochasticMatrix;
use crate::metrics::fit_geometric_rate;
use crate::problems::ObjectiveConstants;

/// Riemann zeta for `s > 1`: partial sum plus an Euler–Maclaurin tail, error well below 1e-12.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("zeta diverges for s = {s}; need s > 1")));
    }
    const N: u32 = 64;
    let nf = f64::from(N);
    // smallest terms first
    let head: f64 = (1..N).rev().map(|k| f64::from(k).powf(-s)).sum();
    let tail = nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s * nf.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * nf.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * nf.powf(-s - 5.0) / 30240.0;
    Ok(head + tail)
}

/// Measures mixing on a concrete matrix by running push-sum from the unit vectors:
/// `λ` is the geometric rate fitted to `max_j ‖r_j − 1/n‖` while it stays above 1e-13,
/// `δ` the smallest push-sum weight `t_j / n` seen over `rounds` rounds.
pub fn empirical_graph_params(weights: &ColumnStochasticMatrix, rounds: usize) -> Result<GraphParams> {
    let n = weights.n();
    let mut state = PushSumState::new(&DMatrix::identity(n, n))?;
    let target = 1.0 / n as f64;
    let mut errors = Vec::with_capacity(rounds + 1);
    let mut delta = 1.0 / n as f64;
    let gap = |r: &DMatrix<f64>| r.iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
    errors.push(gap(&state.r));
    for _ in 0..rounds {
        state.step(weights);
        delta = delta.min(state.t.min() / n as f64);
        errors.push(gap(&state.r));
    }
    let usable = errors.iter().take_while(|&&e| e > 1e-13).count();
    let lambda = if usable >= 2 {
        fit_geometric_rate(&errors, 0..usable)?
    } else {
        // exact after one round (complete graphs): any small rate bounds it
        f64::EPSILON
    };
    Ok(GraphParams { lambda: Some(lambda.clamp(f64::EPSILON, 1.0 - f64::EPSILON)), delta: Some(delta) })
}

/// How the magnitude of the consensus inputs is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    /// Uses the gradient bound `h_m`.
    BoundedGradients,
    /// Uses only Lipschitz constants: `γ = 1 + α L_h` and `L_0`.
    LipschitzOnly,
}

/// Graph mixing parameters. `None` selects the worst case `λ = 1 - 1/nⁿ`, `δ = 1/nⁿ`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GraphParams {
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommBound {
    /// `⌈bound⌉`, at least 1, saturating at `u64::MAX`.
    pub rounds: u64,
    /// Natural log of the unrounded bound; finite even when `rounds` saturates.
    pub ln_rounds: f64,
}

/// `ln(x)` for `x = Σ exp(terms)`.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn ln_one_over_delta(n: usize, params: &GraphParams) -> Result<f64> {
    match params.delta {
        Some(d) if d > 0.0 => Ok(-d.ln()),
        Some(d) => Err(Error::InvalidArgument(format!("delta must be positive, got {d}"))),
        None => Ok(n as f64 * (n as f64).ln()),
    }
}

/// `ln(-ln λ)`.
fn ln_neg_ln_lambda(n: usize, params: &GraphParams) -> Result<f64> {
    match params.lambda {
        Some(l) if l > 0.0 && l < 1.0 => Ok((-l.ln()).ln()),
        Some(l) => Err(Error::InvalidArgument(format!("lambda must lie in (0,1), got {l}"))),
        None => {
            // -ln(1 - x) with x = n^{-n}; for tiny x it equals x to double precision
            let ln_x = -(n as f64) * (n as f64).ln();
            if ln_x > -30.0 {
                Ok((-(-ln_x.exp()).ln_1p()).ln())
            } else {
                Ok(ln_x)
            }
        }
    }
}

/// `ln` of the bound on `‖z^i(k)‖` that drives the inner-round count at outer iteration `k`.
fn ln_input_bound(k: usize, cfg: &GcConfig, constants: &ObjectiveConstants, mode: BoundMode) -> Result<f64> {
    let alpha = cfg.alpha;
    match mode {
        BoundMode::BoundedGradients => {
            let h_m = constants.h_m().ok_or_else(|| {
                Error::InvalidArgument("bounded_gradients mode needs finite gradient bounds h_i".into())
            })?;
            let s = cfg.schedule.partial_sum(k.saturating_sub(1)) + alpha * k as f64 * h_m;
            Ok(s.ln())
        }
        BoundMode::LipschitzOnly => {
            let ln_gamma = (alpha * constants.l_h).ln_1p();
            let kf = k as f64;
            let mut terms: Vec<f64> =
                (1..k).map(|s| cfg.schedule.eps_at(s).ln() + (kf - s as f64) * ln_gamma).collect();
            // (γ^k - 1)/(γ - 1) · α L_0
            if constants.l_0 > 0.0 {
                let ln_geom = if ln_gamma * kf < 30.0 {
                    (ln_gamma * kf).exp_m1().ln()
                } else {
                    kf * ln_gamma + (-(-kf * ln_gamma).exp()).ln_1p()
                } - (alpha * constants.l_h).ln();
                terms.push(ln_geom + (alpha * constants.l_0).ln());
            }
            Ok(log_sum_exp(&terms))
        }
    }
}

/// Worst-case inner rounds guaranteeing `‖x^i(k) - ẑ(k)‖ ≤ ε(k)` at outer iteration `k`.
/// The sum of past tolerances runs over `s = 1..k-1`, so `k = 1` contributes none.
pub fn comm_bound(
    k: usize,
    cfg: &GcConfig,
    agents: usize,
    constants: &ObjectiveConstants,
    mode: BoundMode,
    params: GraphParams,
) -> Result<CommBound> {
    if k == 0 {
        return Err(Error::InvalidArgument("outer iteration index starts at 1".into()));
    }
    let n = agents;
    let ln_numerator_terms = -cfg.schedule.eps_at(k).ln()
        + (8.0 * n as f64).ln()
        + ln_one_over_delta(n, &params)?
        + ln_input_bound(k, cfg, constants, mode)?;
    let ln_denominator = ln_neg_ln_lambda(n, &params)?;
    if !(ln_numerator_terms > 0.0) {
        return Ok(CommBound { rounds: 1, ln_rounds: f64::NEG_INFINITY });
    }
    let ln_rounds = ln_numerator_terms.ln() - ln_denominator;
    let rounds = if ln_rounds >= (u64::MAX as f64).ln() { u64::MAX } else { (ln_rounds.exp().ceil() as u64).max(1) };
    Ok(CommBound { rounds, ln_rounds })
}

/// `Σ_{s=1}^{k}` of [`comm_bound`], saturating.
pub fn total_comm_bound(
    k: usize,
    cfg: &GcConfig,
    agents: usize,
    constants: &ObjectiveConstants,
    mode: BoundMode,
    params: GraphParams,
) -> Result<u64> {
    let mut total: u64 = 0;
    for s in 1..=k {
        total = total.saturating_add(comm_bound(s, cfg, agents, constants, mode, params)?.rounds);
    }
    Ok(total)
}

/// Constants of the sublinear-schedule (convex) guarantee.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem3Constants {
    /// Bound on `‖x̂(k) - x*‖` for all k.
    pub e: f64,
    /// Residual level above which `r̂` contracts by `beta` per iteration.
    pub floor: f64,
    pub beta: f64,
    /// The `2 n e ε0 L_h` threshold used midway through the descent argument.
    pub proof_threshold: f64,
    pub warnings: Vec<String>,
}

pub fn theorem3_constants(
    constants: &ObjectiveConstants,
    agents: usize,
    cfg: &GcConfig,
    initial_distance: f64,
) -> Result<Theorem3Constants> {
    let Schedule::Polynomial { eps0, eta } = cfg.schedule else {
        return Err(Error::InvalidArgument("convex-case constants need a polynomial schedule".into()));
    };
    cfg.schedule.validate()?;
    let n = agents as f64;
    let alpha = cfg.alpha;
    let alpha_hat = alpha / n;
    let (l_h, l_f) = (constants.l_h, constants.l_f);
    let e = initial_distance + (2.0 * alpha * eps0 * l_h + 1.0) * zeta(1.0 + eta)?;
    let floor = 2.0 * e * ((4.0 * alpha * n * l_h * l_h + l_f + 2.0 / alpha_hat) / alpha_hat).sqrt() * eps0;
    let beta = 1.0 - alpha / (4.0 * e) * l_h * eps0;
    let mut warnings = Vec::new();
    if !(beta > 0.0 && beta < 1.0) {
        warnings.push(format!("beta = {beta} outside (0,1); rate claim is vacuous"));
    }
    if alpha_hat > 2.0 / l_f {
        warnings.push(format!("alpha_hat = {alpha_hat:e} exceeds 2/L_f = {:e}", 2.0 / l_f));
    }
    Ok(Theorem3Constants { e, floor, beta, proof_threshold: 2.0 * n * e * eps0 * l_h, warnings })
}

/// Constants of the geometric-schedule (strongly convex) guarantee
/// `‖x^i(k) - x*‖ ≤ C μ^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem4Constants {
    pub rho: f64,
    pub c: f64,
    pub warnings: Vec<String>,
}

/// `ρ = sqrt(1 - 2 α̂ σ L_f / (σ + L_f))`, clamped at 0 against round-off.
pub fn contraction_rho(sigma: f64, l_f: f64, alpha_hat: f64) -> f64 {
    (1.0 - 2.0 * alpha_hat * sigma * l_f / (sigma + l_f)).max(0.0).sqrt()
}

pub fn theorem4_constants(
    constants: &ObjectiveConstants,
    agents: usize,
    cfg: &GcConfig,
    initial_distance: f64,
) -> Result<Theorem4Constants> {
    let Schedule::Geometric { mu } = cfg.schedule else {
        return Err(Error::InvalidArgument("strongly convex constants need a geometric schedule".into()));
    };
    let sigma = constants.sigma;
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("strong convexity modulus must be positive".into()));
    }
    let alpha_hat = cfg.alpha / agents as f64;
    let rho = contraction_rho(sigma, constants.l_f, alpha_hat);
    if mu <= rho {
        return Err(Error::InvalidArgument(format!("mu = {mu} must exceed rho = {rho} for a finite C")));
    }
    let c = initial_distance + (2.0 * cfg.alpha * constants.l_h + 1.0) * mu / (mu - rho) + 1.0;
    let mut warnings = Vec::new();
    if alpha_hat > 2.0 / (sigma + constants.l_f) {
        warnings.push(format!("alpha_hat = {alpha_hat:e} exceeds 2/(sigma+L_f) = {:e}", 2.0 / (sigma + constants.l_f)));
    }
    if mu >= 1.0 {
        warnings.push(format!("mu = {mu} is not below 1"));
    }
    Ok(Theorem4Constants { rho, c, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn consts(lipschitz: Vec<f64>, h: Option<Vec<f64>>, l_0: f64, sigma: f64) -> ObjectiveConstants {
        let l_f = lipschitz.iter().sum();
        let l_h = lipschitz.iter().copied().fold(0.0, f64::max);
        ObjectiveConstants { lipschitz, l_f, l_h, grad_bounds: h, l_0, sigma }
    }

    #[test]
    fn zeta_closed_forms() {
        assert!((zeta(2.0).unwrap() - PI * PI / 6.0).abs() < 1e-9);
        assert!((zeta(4.0).unwrap() - PI.powi(4) / 90.0).abs() < 1e-9);
        assert!((zeta(1.5).unwrap() - 2.612_375_348_685_488).abs() < 1e-9);
        assert!((zeta(50.0).unwrap() - (1.0 + 2f64.powi(-50))).abs() < 1e-15);
        assert!(zeta(1.0).is_err());
        assert!(zeta(0.5).is_err());
    }

    #[test]
    fn comm_bound_at_least_one() {
        let c = consts(vec![1.0; 3], Some(vec![1e-9; 3]), 0.0, 0.0);
        let cfg = GcConfig::new(1e-9, Schedule::Constant { eps0: 0.999 }, 10);
        let params = GraphParams { lambda: Some(0.01), delta: Some(1.0) };
        let b = comm_bound(1, &cfg, 3, &c, BoundMode::BoundedGradients, params).unwrap();
        assert!(b.rounds >= 1);
    }

    #[test]
    fn comm_bound_first_iteration_substitution() {
        let (n, eps0, alpha, h_m, lambda, delta) = (4usize, 0.05, 0.3, 2.5, 0.6, 0.2);
        let c = consts(vec![1.0; n], Some(vec![1.0, h_m, 2.0, 0.5]), 0.0, 0.0);
        let cfg = GcConfig::new(alpha, Schedule::Constant { eps0 }, 10);
        let params = GraphParams { lambda: Some(lambda), delta: Some(delta) };
        let b = comm_bound(1, &cfg, n, &c, BoundMode::BoundedGradients, params).unwrap();
        let expect = (((1.0f64 / eps0).ln() + (8.0 * n as f64 * alpha * h_m / delta).ln()) / -lambda.ln()).ceil();
        assert_eq!(b.rounds, expect as u64);
    }

    #[test]
    fn comm_bound_worst_case_is_log_safe() {
        let n = 100;
        let c = consts(vec![1.0; n], Some(vec![1.0; n]), 1.0, 0.0);
        let cfg = GcConfig::new(0.1, Schedule::Polynomial { eps0: 0.01, eta: 0.5 }, 10);
        let b = comm_bound(5, &cfg, n, &c, BoundMode::BoundedGradients, GraphParams::default()).unwrap();
        assert_eq!(b.rounds, u64::MAX);
        // ln(n^n) ≈ 460.5 dominates
        assert!(b.ln_rounds > 460.0 && b.ln_rounds.is_finite());
        let small = comm_bound(
            1,
            &cfg,
            3,
            &consts(vec![1.0; 3], Some(vec![1.0; 3]), 1.0, 0.0),
            BoundMode::BoundedGradients,
            GraphParams::default(),
        )
        .unwrap();
        assert!(small.rounds > 1 && small.rounds < u64::MAX);
    }

    #[test]
    fn lipschitz_mode_matches_direct_formula() {
        let n = 3;
        let (alpha, l_h, l_0, lambda, delta) = (0.2, 1.5, 0.8, 0.7, 0.1);
        let c = consts(vec![1.0, l_h, 0.5], None, l_0, 0.0);
        let cfg = GcConfig::new(alpha, Schedule::Geometric { mu: 0.9 }, 10);
        let params = GraphParams { lambda: Some(lambda), delta: Some(delta) };
        for k in 1..8 {
            let gamma: f64 = 1.0 + alpha * l_h;
            let kf = k as i32;
            let past: f64 = (1..k).map(|s| 0.9f64.powi(s as i32) / gamma.powi(s as i32)).sum();
            let input = gamma.powi(kf) * past + (gamma.powi(kf) - 1.0) / (gamma - 1.0) * alpha * l_0;
            let direct = ((1.0 / 0.9f64.powi(kf)).ln() + (8.0 * n as f64 / delta * input).ln()) / -lambda.ln();
            let b = comm_bound(k, &cfg, n, &c, BoundMode::LipschitzOnly, params).unwrap();
            assert_eq!(b.rounds, direct.ceil() as u64, "k={k}");
        }
        assert!(comm_bound(1, &cfg, n, &c, BoundMode::BoundedGradients, params).is_err());
    }

    #[test]
    fn convex_constants_small_eps_limit() {
        let c = consts(vec![2.0; 4], Some(vec![1.0; 4]), 1.0, 0.0);
        let mut prev_floor = f64::INFINITY;
        for eps0 in [1e-2, 1e-4, 1e-8, 1e-12] {
            let cfg = GcConfig::new(0.5, Schedule::Polynomial { eps0, eta: 0.5 }, 10);
            let t = theorem3_constants(&c, 4, &cfg, 1.0).unwrap();
            assert!(t.floor < prev_floor);
            prev_floor = t.floor;
            assert!(t.beta < 1.0 && t.beta > 1.0 - 1e-1);
        }
        assert!(prev_floor < 1e-9);
    }

    #[test]
    fn strongly_convex_rho_zero_cases() {
        // σ = L_f and α̂ = 1/L_f
        let c = consts(vec![1.0, 1.0], None, 0.0, 2.0);
        let cfg = GcConfig::new(2.0 * 0.5, Schedule::Geometric { mu: 0.5 }, 10);
        let t = theorem4_constants(&c, 2, &cfg, 0.0).unwrap();
        assert_eq!(t.rho, 0.0);
        assert!((t.c - ((2.0 * 1.0 * 1.0 + 1.0) * 1.0 + 1.0)).abs() < 1e-15);
        assert_eq!(contraction_rho(3.0, 3.0, 1.0 / 3.0), 0.0);
    }

    #[test]
    fn strongly_convex_rejects_mu_at_rho() {
        let c = consts(vec![1.0, 1.0], None, 0.0, 0.5);
        let alpha = 2.0 * 0.25;
        let rho = contraction_rho(0.5, 2.0, 0.25);
        let cfg = GcConfig::new(alpha, Schedule::Geometric { mu: rho }, 10);
        assert!(theorem4_constants(&c, 2, &cfg, 0.0).is_err());
        let cfg = GcConfig::new(alpha, Schedule::Polynomial { eps0: 0.1, eta: 0.5 }, 10);
        assert!(theorem4_constants(&c, 2, &cfg, 0.0).is_err());
    }
}
