//! Text reports behind the `bounds` and `consensus-demo` subcommands.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AlgorithmName, ExperimentConfig};
use super::run::build_instance;
use crate::bounds::{
    comm_bound, empirical_graph_params, theorem3_constants, theorem4_constants, total_comm_bound, BoundMode, CommBound,
    GraphParams,
};
use crate::consensus::run_eps_consensus;
use crate::error::Result;
use crate::gradconsensus::{GcConfig, Schedule};
use crate::graph::{equal_neighbor_weights, generate_erdos_renyi};

/// Rounds used to estimate `λ` and `δ` on the configured graph.
const MIXING_PROBE_ROUNDS: usize = 2000;

fn show(b: Result<CommBound>) -> String {
    match b {
        Ok(b) if b.rounds == u64::MAX => format!("e^{:.1}", b.ln_rounds),
        Ok(b) => b.rounds.to_string(),
        Err(_) => "n/a".into(),
    }
}

/// Bound-calculator output for every GradConsensus entry of `cfg`, evaluated on the
/// repetition-0 instance for outer iterations `1..=iterations`.
pub fn bounds_report(cfg: &ExperimentConfig, iterations: usize) -> Result<String> {
    let inst = build_instance(cfg, 0)?;
    let n = inst.graph.n();
    let c = inst.oracle.constants();
    let mut out = String::new();
    writeln!(out, "experiment {}  problem {}", cfg.name, inst.problem_hash).unwrap();
    writeln!(
        out,
        "graph: n={n} edges={} diameter={}",
        inst.graph.edges().len(),
        inst.graph.diameter_bound().map_or("-".into(), |d| d.to_string())
    )
    .unwrap();
    writeln!(
        out,
        "objective: L_f={:.6e} L_h={:.6e} h_m={} L_0={:.6e} sigma={:.6e}",
        c.l_f,
        c.l_h,
        c.h_m().map_or("-".into(), |h| format!("{h:.6e}")),
        c.l_0,
        c.sigma
    )
    .unwrap();
    let distance = inst.reference.x_star.norm();
    writeln!(out, "reference: f*={:.16e} |x(0)-x*|={distance:.6e}", inst.reference.f_star).unwrap();
    let fitted = empirical_graph_params(&inst.weights, MIXING_PROBE_ROUNDS)?;
    writeln!(
        out,
        "mixing: worst-case lambda=1-n^-n delta=n^-n; fitted lambda={:.6} delta={:.6e}",
        fitted.lambda.unwrap_or(f64::NAN),
        fitted.delta.unwrap_or(f64::NAN)
    )
    .unwrap();

    let gc_entries: Vec<_> = cfg.algorithms.iter().filter(|a| a.name == AlgorithmName::GradConsensus).collect();
    if gc_entries.is_empty() {
        writeln!(out, "no gradconsensus entries; nothing further to bound").unwrap();
    }
    for algo in gc_entries {
        let schedule = algo.schedule.as_ref().expect("validated").to_schedule("schedule")?;
        let alpha = algo.alpha.unwrap_or_else(|| inst.default_alpha(algo.name));
        let gc = GcConfig::new(alpha, schedule, algo.max_outer);
        writeln!(
            out,
            "\n[{}] alpha={alpha:.6e} alpha_hat={:.6e} schedule={schedule:?}",
            algo.label(),
            alpha / n as f64
        )
        .unwrap();
        writeln!(
            out,
            "{:>5}  {:>12}  {:>14}  {:>14}  {:>14}  {:>14}",
            "k", "eps(k)", "bnd-worst", "bnd-fitted", "lip-worst", "lip-fitted"
        )
        .unwrap();
        let worst = GraphParams::default();
        for k in 1..=iterations {
            let cell = |mode, params| show(comm_bound(k, &gc, n, c, mode, params));
            writeln!(
                out,
                "{k:>5}  {:>12.4e}  {:>14}  {:>14}  {:>14}  {:>14}",
                schedule.eps_at(k),
                cell(BoundMode::BoundedGradients, worst),
                cell(BoundMode::BoundedGradients, fitted),
                cell(BoundMode::LipschitzOnly, worst),
                cell(BoundMode::LipschitzOnly, fitted),
            )
            .unwrap();
        }
        if let Ok(total) = total_comm_bound(iterations, &gc, n, c, BoundMode::BoundedGradients, fitted) {
            writeln!(out, "total rounds over {iterations} iterations (bounded gradients, fitted): {total}").unwrap();
        }
        match schedule {
            Schedule::Polynomial { .. } => match theorem3_constants(c, n, &gc, distance) {
                Ok(t) => {
                    writeln!(
                        out,
                        "convex case: e={:.6e} floor={:.6e} beta={:.12} threshold={:.6e}",
                        t.e, t.floor, t.beta, t.proof_threshold
                    )
                    .unwrap();
                    for w in t.warnings {
                        writeln!(out, "  warning: {w}").unwrap();
                    }
                }
                Err(e) => writeln!(out, "convex case: {e}").unwrap(),
            },
            Schedule::Geometric { .. } => match theorem4_constants(c, n, &gc, distance) {
                Ok(t) => {
                    writeln!(out, "strongly convex case: rho={:.12} C={:.6e}", t.rho, t.c).unwrap();
                    for w in t.warnings {
                        writeln!(out, "  warning: {w}").unwrap();
                    }
                }
                Err(e) => writeln!(out, "strongly convex case: {e}").unwrap(),
            },
            Schedule::Constant { .. } => {
                writeln!(out, "constant schedule: rate constants need a polynomial or geometric schedule").unwrap();
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoParams {
    pub n: usize,
    pub prob: f64,
    pub dim: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams { n: 20, prob: 0.3, dim: 3, eps: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoOutcome {
    pub diameter: usize,
    pub rounds: usize,
    /// `max_j ‖x_j − mean(z)‖₂`.
    pub final_gap: f64,
}

/// ε-Consensus on inputs drawn uniformly from `[-10, 10]`.
pub fn consensus_demo(params: &DemoParams) -> Result<DemoOutcome> {
    let g = generate_erdos_renyi(params.n, params.prob, params.seed)?;
    let p = equal_neighbor_weights(&g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let z = DMatrix::from_fn(params.dim, params.n, |_, _| rng.random_range(-10.0..=10.0));
    let res = run_eps_consensus(&z, &p, &g, params.eps)?;
    let mean = z.column_mean();
    let final_gap = res.values.column_iter().map(|c| (c - &mean).norm()).fold(0.0, f64::max);
    Ok(DemoOutcome { diameter: g.diameter_bound().unwrap_or(0), rounds: res.rounds_used, final_gap })
}
