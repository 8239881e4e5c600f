//! Builds problem instances from a config and runs every algorithm on them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{AlgorithmConfig, AlgorithmName, ExperimentConfig, ProblemKind};
use super::tracefile::write_trace_csv;
use crate::baselines::{run_baseline, BaselineConfig, BaselineMatrices};
use crate::error::{Error, Result};
use crate::gradconsensus::{run_grad_consensus, GcConfig};
use crate::graph::{
    baseline_matrices, equal_neighbor_weights, generate_erdos_renyi_with_budget, AuxMatrices, ColumnStochasticMatrix,
    Digraph,
};
use crate::metrics::{residuals, AgentSelection, MetricReport};
use crate::problems::{
    default_reference_tol, generate_logistic, reference_solution, LogisticDataset, LogisticOracle, LogisticParams,
    Objective, QuadraticOracle, ReferenceSolution,
};
use crate::trace::{ObjectiveTarget, RunTrace};

/// Everything shared by the algorithms of one repetition.
pub struct Instance {
    pub repetition: usize,
    pub graph_seed: u64,
    pub problem_seed: u64,
    pub graph: Digraph,
    pub weights: ColumnStochasticMatrix,
    pub aux: AuxMatrices,
    pub oracle: Box<dyn Objective>,
    pub dataset: Option<LogisticDataset>,
    pub reference: ReferenceSolution,
    /// SHA-256 over the edge list and the problem data.
    pub problem_hash: String,
}

impl Instance {
    /// Step size used when a config leaves `alpha` unset: half of each method's
    /// sufficient step bound. GradConsensus gets `α̂ = 1/L_f` (bound `2/L_f`); the
    /// baselines get `λ_min(W̃)/L_h` with `W̃ = (I+W)/2` (bound `2λ_min(W̃)/L_h`).
    pub fn default_alpha(&self, algorithm: AlgorithmName) -> f64 {
        let c = self.oracle.constants();
        match algorithm {
            AlgorithmName::GradConsensus => self.graph.n() as f64 / c.l_f,
            _ => {
                let lambda_min_w = self.aux.doubly_stochastic.clone().symmetric_eigenvalues().min();
                0.5 * (1.0 + lambda_min_w) / c.l_h
            }
        }
    }
}

pub struct RunOutcome {
    pub label: String,
    pub algorithm: AlgorithmName,
    pub repetition: usize,
    pub alpha: f64,
    pub trace: RunTrace,
    pub report: MetricReport,
    pub path: Option<PathBuf>,
}

pub struct ExperimentResult {
    /// Problem hash per repetition.
    pub problem_hashes: Vec<String>,
    pub runs: Vec<RunOutcome>,
    pub output_directory: Option<PathBuf>,
}

fn with_context(e: Error, context: &str) -> Error {
    match e {
        Error::Config { .. } | Error::Io { .. } | Error::Csv { .. } => e,
        other => Error::Trace(format!("{context}: {other}")),
    }
}

pub fn build_instance(cfg: &ExperimentConfig, repetition: usize) -> Result<Instance> {
    let offset = repetition as u64 * cfg.seed_stride;
    let graph_seed = cfg.graph.seed.wrapping_add(offset);
    let problem_seed = cfg.problem.seed.wrapping_add(offset);
    let mut graph = generate_erdos_renyi_with_budget(cfg.graph.n, cfg.graph.prob, graph_seed, cfg.graph.retry_budget)?;
    if let Some(d) = cfg.graph.diameter_override {
        graph = graph.with_diameter_bound(d).map_err(|e| Error::config("graph.diameter_override", e.to_string()))?;
    }
    let weights = equal_neighbor_weights(&graph)?;
    let aux = baseline_matrices(&graph)?;

    let mut hasher = Sha256::new();
    hasher.update(graph.to_edge_list().as_bytes());
    let p = &cfg.problem;
    let (oracle, dataset): (Box<dyn Objective>, _) = match p.kind {
        ProblemKind::Logistic => {
            let params = LogisticParams {
                agents: cfg.graph.n,
                samples_per_agent: p.samples_per_agent,
                dim: p.dim,
                mu1: p.mu1,
                sigma1: p.sigma1,
                mu2: p.mu2,
                sigma2: p.sigma2,
                seed: problem_seed,
            };
            let data = generate_logistic(&params)?;
            hasher.update(b"logistic\n");
            hasher.update(data.to_csv().as_bytes());
            (Box::new(LogisticOracle::new(&data)?), Some(data))
        }
        ProblemKind::Quadratic => {
            let q = QuadraticOracle::random(cfg.graph.n, p.dim, problem_seed)?;
            let mut text = String::from("quadratic\n");
            for (a, c) in q.targets().iter().zip(q.curvatures().iter()) {
                writeln!(text, "{a:.16e} {c:.16e}").unwrap();
            }
            hasher.update(text.as_bytes());
            (Box::new(q), None)
        }
    };
    let problem_hash = hasher.finalize().iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    });
    let tol = cfg.reference_tol.unwrap_or_else(|| default_reference_tol(oracle.as_ref()));
    let reference = reference_solution(oracle.as_ref(), tol)?;
    Ok(Instance { repetition, graph_seed, problem_seed, graph, weights, aux, oracle, dataset, reference, problem_hash })
}

/// Runs one configured algorithm on an instance.
pub fn run_algorithm(instance: &Instance, algo: &AlgorithmConfig, wall_time: bool) -> Result<(RunTrace, f64)> {
    let oracle = instance.oracle.as_ref();
    let alpha = algo.alpha.unwrap_or_else(|| instance.default_alpha(algo.name));
    let target = algo.stop_target.map(|target| ObjectiveTarget { f_star: instance.reference.f_star, target });
    let trace = match algo.name.baseline() {
        None => {
            let schedule = algo
                .schedule
                .as_ref()
                .ok_or_else(|| Error::config("schedule", "missing required key"))?
                .to_schedule("schedule")?;
            let mut gc = GcConfig::new(alpha, schedule, algo.max_outer);
            gc.objective_target = target;
            gc.wall_time = wall_time;
            if let Some(cap) = algo.round_cap {
                gc.round_cap = cap;
            }
            run_grad_consensus(&gc, &instance.graph, &instance.weights, oracle)?
        }
        Some(baseline) => {
            let mut bc = BaselineConfig::new(baseline, alpha, algo.max_outer);
            bc.objective_target = target;
            bc.wall_time = wall_time;
            let matrices = BaselineMatrices::from_aux(&instance.aux, &instance.weights);
            run_baseline(&bc, matrices, oracle)?
        }
    };
    Ok((trace, alpha))
}

/// Trace file name for one run.
pub fn trace_file_name(label: &str, instance: &Instance) -> String {
    format!("{label}_rep{}_seed{}.csv", instance.repetition, instance.graph_seed)
}

/// Runs every (repetition, algorithm) pair; writes files when `output` is given.
pub fn run_experiment_to(cfg: &ExperimentConfig, output: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate()?;
    if let Some(dir) = output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let instances: Vec<Instance> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| build_instance(cfg, r).map_err(|e| with_context(e, &format!("repetition {r}"))))
        .collect::<Result<_>>()?;

    if let Some(dir) = output {
        for inst in &instances {
            if cfg.output.write_dataset {
                if let Some(data) = &inst.dataset {
                    data.write_csv(&dir.join(format!("dataset_rep{}.csv", inst.repetition)))?;
                }
            }
            if cfg.output.write_edge_list {
                inst.graph.write_edge_list(&dir.join(format!("graph_rep{}.txt", inst.repetition)))?;
            }
        }
    }

    let jobs: Vec<(&Instance, &AlgorithmConfig)> =
        instances.iter().flat_map(|inst| cfg.algorithms.iter().map(move |a| (inst, a))).collect();
    let runs = jobs
        .into_par_iter()
        .map(|(inst, algo)| {
            let context = format!("{} (repetition {})", algo.label(), inst.repetition);
            let (mut trace, alpha) =
                run_algorithm(inst, algo, cfg.output.wall_time).map_err(|e| with_context(e, &context))?;
            trace.algorithm = algo.label().to_string();
            let report = residuals(&trace, &inst.reference, inst.oracle.as_ref(), AgentSelection::Best)
                .map_err(|e| with_context(e, &context))?;
            let path = match output {
                Some(dir) => {
                    let path = dir.join(trace_file_name(algo.label(), inst));
                    write_trace_csv(&trace, &report, &path, Some(&inst.problem_hash))?;
                    Some(path)
                }
                None => None,
            };
            Ok(RunOutcome {
                label: algo.label().to_string(),
                algorithm: algo.name,
                repetition: inst.repetition,
                alpha,
                trace,
                report,
                path,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        problem_hashes: instances.iter().map(|i| i.problem_hash.clone()).collect(),
        runs,
        output_directory: output.map(Path::to_path_buf),
    })
}

/// Runs the experiment and writes into [`ExperimentConfig::output_directory`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let dir = cfg.output_directory();
    run_experiment_to(cfg, Some(&dir))
}
