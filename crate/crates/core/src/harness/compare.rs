//! Cost-to-target summary over a directory of trace files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::tracefile::{looks_like_trace, parse_trace_csv, TraceRow, TraceTable};
use crate::error::{Error, Result};

pub const DEFAULT_TARGETS: [f64; 3] = [1e-2, 1e-5, 1e-8];
/// Placeholder for targets a run never reached.
pub const UNREACHED: &str = "—";

/// Counters at the first iteration whose best-agent solution residual is `≤ target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reached {
    pub k: usize,
    pub cum_comm: usize,
    pub cum_grads: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub algo: String,
    pub file: PathBuf,
    pub iterations: usize,
    pub reached: Vec<Option<Reached>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareTable {
    pub problem_hash: Option<String>,
    pub targets: Vec<f64>,
    pub rows: Vec<CompareRow>,
}

fn first_reaching(rows: &[TraceRow], target: f64) -> Option<Reached> {
    rows.iter().find(|r| r.sol_residual_best <= target).map(|r| Reached {
        k: r.k,
        cum_comm: r.cum_comm,
        cum_grads: r.cum_grads,
        wall_ms: r.wall_ms,
    })
}

/// Summarizes traces that share one problem instance.
pub fn compare_tables(tables: &[(PathBuf, TraceTable)], targets: &[f64]) -> Result<CompareTable> {
    let problem_hash = tables.first().and_then(|(_, t)| t.problem_hash.clone());
    if let Some((path, t)) = tables.iter().find(|(_, t)| t.problem_hash != problem_hash) {
        return Err(Error::Trace(format!(
            "{} was produced on a different problem instance (hash {} vs {}); compare one repetition at a time",
            path.display(),
            t.problem_hash.as_deref().unwrap_or("none"),
            problem_hash.as_deref().unwrap_or("none"),
        )));
    }
    let rows = tables
        .iter()
        .map(|(path, t)| CompareRow {
            algo: t.rows.first().map(|r| r.algo.clone()).unwrap_or_else(|| stem(path)),
            file: path.clone(),
            iterations: t.rows.len(),
            reached: targets.iter().map(|&tg| first_reaching(&t.rows, tg)).collect(),
        })
        .collect();
    Ok(CompareTable { problem_hash, targets: targets.to_vec(), rows })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads every trace CSV in `dir` (sorted by name), optionally only repetition `rep`.
pub fn load_trace_dir(dir: &Path, repetition: Option<usize>) -> Result<Vec<(PathBuf, TraceTable)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            paths.push(path);
        }
    }
    paths.sort();
    let tag = repetition.map(|r| format!("_rep{r}_"));
    let mut tables = Vec::new();
    for path in paths {
        if tag.as_ref().is_some_and(|t| !stem(&path).contains(t.as_str())) {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        if looks_like_trace(&text) {
            let table = parse_trace_csv(&text, &path)?;
            tables.push((path, table));
        }
    }
    if tables.is_empty() {
        return Err(Error::Trace(format!("no trace files found in {}", dir.display())));
    }
    Ok(tables)
}

pub fn compare_dir(dir: &Path, targets: &[f64], repetition: Option<usize>) -> Result<CompareTable> {
    compare_tables(&load_trace_dir(dir, repetition)?, targets)
}

impl CompareTable {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["algo".to_string(), "iterations".to_string()];
        for t in &self.targets {
            for what in ["k", "comm", "grads", "wall_ms"] {
                h.push(format!("{what}@{t:e}"));
            }
        }
        h
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|row| {
                let mut cells = vec![row.algo.clone(), row.iterations.to_string()];
                for r in &row.reached {
                    match r {
                        Some(r) => cells.extend([
                            r.k.to_string(),
                            r.cum_comm.to_string(),
                            r.cum_grads.to_string(),
                            format!("{:.1}", r.wall_ms),
                        ]),
                        None => cells.extend(std::iter::repeat_n(UNREACHED.to_string(), 4)),
                    }
                }
                cells
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for row in self.cells() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Column-aligned text rendering.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let cells = self.cells();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0))
            .collect();
        let line = |row: &[String]| {
            let mut s = String::new();
            for (c, cell) in row.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    write!(s, "{cell}{}", " ".repeat(pad)).unwrap();
                } else {
                    write!(s, "  {}{cell}", " ".repeat(pad)).unwrap();
                }
            }
            s.push('\n');
            s
        };
        let mut out = String::new();
        if let Some(h) = &self.problem_hash {
            writeln!(out, "problem {h}").unwrap();
        }
        out.push_str(&line(&header));
        for row in &cells {
            out.push_str(&line(row));
        }
        out
    }
}
