use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradcons::harness::{self, DemoParams};
use gradcons::Error;

#[derive(Parser)]
#[command(name = "gradcons", version, about = "Distributed optimization experiments over directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm of an experiment config and write trace CSVs.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and GRADCONS_OUTPUT_DIR).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize the trace CSVs in a directory.
    Compare {
        dir: PathBuf,
        /// Comma-separated solution-residual targets.
        #[arg(long, value_delimiter = ',', default_values_t = harness::DEFAULT_TARGETS.to_vec())]
        targets: Vec<f64>,
        /// Only use traces of this repetition.
        #[arg(long)]
        repetition: Option<usize>,
    },
    /// Run ε-Consensus once on random inputs and report rounds and the final gap.
    ConsensusDemo {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        prob: f64,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print inner-round bounds and rate constants for a config.
    Bounds {
        config: PathBuf,
        /// Outer iterations to tabulate.
        #[arg(long, default_value_t = 10)]
        iterations: usize,
    },
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, output } => {
            let cfg = harness::parse_config(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output_directory());
            let result = harness::run_experiment_to(&cfg, Some(&dir))?;
            for run in &result.runs {
                let final_residual = run.report.solution_residual.last().copied().unwrap_or(f64::NAN);
                println!(
                    "{:<16} rep {:<3} iterations {:<6} residual {:.3e}  -> {}",
                    run.label,
                    run.repetition,
                    run.trace.len(),
                    final_residual,
                    run.path.as_ref().map_or("-".into(), |p| p.display().to_string())
                );
            }
            Ok(())
        }
        Command::Compare { dir, targets, repetition } => {
            let table = harness::compare_dir(&dir, &targets, repetition)?;
            print!("{}", table.to_text());
            let path = dir.join("summary.csv");
            std::fs::write(&path, table.to_csv()).map_err(|e| Error::Io { path, source: e })
        }
        Command::ConsensusDemo { n, prob, dim, eps, seed } => {
            let out = harness::consensus_demo(&DemoParams { n, prob, dim, eps, seed })?;
            println!("n={n} diameter={} eps={eps:e}", out.diameter);
            println!("rounds={} final_gap={:.3e}", out.rounds, out.final_gap);
            Ok(())
        }
        Command::Bounds { config, iterations } => {
            let cfg = harness::parse_config(&config)?;
            print!("{}", harness::bounds_report(&cfg, iterations)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config_error() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
