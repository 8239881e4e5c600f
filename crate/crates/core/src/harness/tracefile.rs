//! Trace CSV files: one row per outer iteration, floats with 17 significant digits.
//! The harness prepends a `# problem_hash=<hex>` comment line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::trace::RunTrace;

pub const TRACE_HEADER: &str = "algo,k,eps_k,kc_k,cum_comm,cum_grads,obj_residual,sol_residual_best,violation,wall_ms";
const HASH_PREFIX: &str = "# problem_hash=";

/// One parsed row; `eps_k` is empty for algorithms without an inner loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub algo: String,
    pub k: usize,
    pub eps_k: Option<f64>,
    pub kc_k: usize,
    pub cum_comm: usize,
    pub cum_grads: usize,
    pub obj_residual: f64,
    pub sol_residual_best: f64,
    pub violation: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub problem_hash: Option<String>,
    pub rows: Vec<TraceRow>,
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_csv_string(trace: &RunTrace, report: &MetricReport, problem_hash: Option<&str>) -> Result<String> {
    if report.len() != trace.len() + 1 {
        return Err(Error::Trace(format!(
            "report has {} entries for a trace of {} iterations",
            report.len(),
            trace.len()
        )));
    }
    let mut out = String::new();
    if let Some(hash) = problem_hash {
        writeln!(out, "{HASH_PREFIX}{hash}").unwrap();
    }
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (idx, r) in trace.records.iter().enumerate() {
        let k = idx + 1;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            trace.algorithm,
            r.k,
            r.eps.map(float).unwrap_or_default(),
            r.rounds,
            r.cum_comm,
            r.cum_grads,
            float(report.objective_residual[k]),
            float(report.solution_residual[k]),
            float(report.violation[k]),
            float(r.wall_ms),
        )
        .unwrap();
    }
    Ok(out)
}

pub fn write_trace_csv(trace: &RunTrace, report: &MetricReport, path: &Path, problem_hash: Option<&str>) -> Result<()> {
    let text = trace_csv_string(trace, report, problem_hash)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// True when `text` starts like a trace file (optionally after the hash line).
pub fn looks_like_trace(text: &str) -> bool {
    text.lines().find(|l| !l.starts_with('#')) == Some(TRACE_HEADER)
}

pub fn parse_trace_csv(text: &str, origin: &Path) -> Result<TraceTable> {
    let problem_hash = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(HASH_PREFIX))
        .map(|h| h.trim().to_string());
    if !looks_like_trace(text) {
        return Err(Error::Trace(format!("{}: header is not `{TRACE_HEADER}`", origin.display())));
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(origin, e))?;
        let bad = |field: &str| Error::Trace(format!("{}: row {}: bad `{field}`", origin.display(), line + 1));
        let get = |i: usize| record.get(i).unwrap_or("");
        let int = |i: usize, name: &str| get(i).parse::<usize>().map_err(|_| bad(name));
        let num = |i: usize, name: &str| get(i).parse::<f64>().map_err(|_| bad(name));
        rows.push(TraceRow {
            algo: get(0).to_string(),
            k: int(1, "k")?,
            eps_k: match get(2) {
                "" => None,
                _ => Some(num(2, "eps_k")?),
            },
            kc_k: int(3, "kc_k")?,
            cum_comm: int(4, "cum_comm")?,
            cum_grads: int(5, "cum_grads")?,
            obj_residual: num(6, "obj_residual")?,
            sol_residual_best: num(7, "sol_residual_best")?,
            violation: num(8, "violation")?,
            wall_ms: num(9, "wall_ms")?,
        });
    }
    Ok(TraceTable { problem_hash, rows })
}

pub fn read_trace_csv(path: &Path) -> Result<TraceTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradconsensus::{run_grad_consensus, GcConfig, Schedule};
    use crate::graph::{equal_neighbor_weights, Digraph};
    use crate::metrics::{residuals, AgentSelection};
    use crate::problems::{reference_solution, QuadraticOracle};

    fn sample(iterations: usize) -> (RunTrace, MetricReport) {
        let g = Digraph::cycle(4).unwrap();
        let p = equal_neighbor_weights(&g).unwrap();
        let o = QuadraticOracle::random(4, 2, 3).unwrap();
        let r = reference_solution(&o, 1e-12).unwrap();
        let trace =
            run_grad_consensus(&GcConfig::new(0.5, Schedule::Constant { eps0: 0.01 }, iterations), &g, &p, &o).unwrap();
        let report = residuals(&trace, &r, &o, AgentSelection::Best).unwrap();
        (trace, report)
    }

    #[test]
    fn empty_trace_is_header_only() {
        let (t, r) = sample(0);
        assert_eq!(trace_csv_string(&t, &r, None).unwrap(), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn five_iterations_six_lines() {
        let (t, r) = sample(5);
        let text = trace_csv_string(&t, &r, None).unwrap();
        assert_eq!(text.lines().count(), 6);
        let first = text.lines().nth(1).unwrap();
        let eps_field = first.split(',').nth(2).unwrap();
        assert_eq!(eps_field, "1.0000000000000000e-2");
    }

    #[test]
    fn round_trip_is_exact() {
        let (t, r) = sample(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trace_csv(&t, &r, &path, Some("abc123")).unwrap();
        let back = read_trace_csv(&path).unwrap();
        assert_eq!(back.problem_hash.as_deref(), Some("abc123"));
        assert_eq!(back.rows.len(), 7);
        for (k, row) in back.rows.iter().enumerate() {
            assert_eq!(row.sol_residual_best, r.solution_residual[k + 1]);
            assert_eq!(row.obj_residual, r.objective_residual[k + 1]);
            assert_eq!(row.violation, r.violation[k + 1]);
            assert_eq!(row.cum_comm, t.records[k].cum_comm);
            assert_eq!(row.eps_k, Some(0.01));
        }
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(parse_trace_csv("agent_id,y,x0\n0,1,0.5\n", Path::new("d.csv")).is_err());
        assert!(!looks_like_trace("a,b\n"));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let (t, mut r) = sample(3);
        r.solution_residual.pop();
        assert!(trace_csv_string(&t, &r, None).is_err());
    }
}
