use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use emtlab::config::RunConfig;
use emtlab::export;
use emtlab::pipeline::{self, Analysis, Outcome, Prepared, RunReport, SolveStatus, Solved};

const EXIT_CONFIG: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "emtlab", version, about = "Energy-momentum tensor laboratory for radial Lagrangians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Euler-Lagrange equation and persist the solution.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output.directory` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tensor, P-function and identity analyses of a persisted solution.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Evaluate every invariant check on a persisted solution.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Validate a configuration and the pilot hypotheses without solving.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the full report for a persisted solution.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Fail on a-posteriori hypothesis violations.
        #[arg(long)]
        strict: bool,
    },
    /// Solve, analyse and report in one go.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
}

enum Failure {
    Config(String),
    Io(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Config(m) => {
                eprintln!("configuration error: {m}");
                ExitCode::from(EXIT_CONFIG)
            }
            Failure::Io(m) => {
                eprintln!("error: {m}");
                ExitCode::from(EXIT_IO)
            }
        }
    }
}

fn io<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Io(e.to_string())
}

fn prepare(path: &Path) -> Result<Prepared, Failure> {
    let cfg = RunConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    Prepared::new(cfg).map_err(|e| Failure::Config(e.to_string()))
}

fn out_dir(out: Option<PathBuf>, prepared: &Prepared) -> Result<PathBuf, Failure> {
    out.or_else(|| prepared.config.output.as_ref().map(|o| o.directory.clone()))
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set output.directory".into()))
}

fn load(dir: &Path) -> Result<Solved, Failure> {
    Solved::load(dir).map_err(|e| match e {
        pipeline::StateError::Config(c) => Failure::Config(c.to_string()),
        other => Failure::Io(other.to_string()),
    })
}

fn solve_exit(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::Unconverged | SolveStatus::Failed => 1,
        SolveStatus::Skipped => 2,
    }
}

fn print_checks(report: &RunReport) {
    for c in &report.checks {
        println!(
            "{} {:<44} {:>12.4e} {:?} {:.1e} ({:?})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.tolerance,
            c.severity
        );
    }
    println!("outcome: {:?} (exit {})", report.outcome, report.exit_code);
}

#[derive(Serialize)]
struct AnalysisFile<'a> {
    realized_hypotheses: &'a Option<emtlab::lagrangian::HypothesisReport>,
    radial_reference: &'a Option<pipeline::RadialComparison>,
    spectral: &'a Option<emtlab::tensor::SpectralSummary>,
    divergence: &'a Option<pipeline::DivergenceSummary>,
    pfunction: &'a Option<emtlab::pfunction::PReport>,
    gradient_bound: &'a Option<emtlab::pfunction::GradientBound>,
    pp_conditions: &'a Option<emtlab::pfunction::PpConditions>,
    identities: &'a Option<emtlab::identities::IdentityReport>,
    notes: &'a [String],
}

fn write_all(dir: &Path, solved: &Solved, a: &Analysis, report: &RunReport) -> Result<(), Failure> {
    pipeline::write_outputs(dir, solved, a, report).map_err(io)?;
    pipeline::write_timings(dir, solved, a).map_err(io)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Check { config } => {
            let prepared = prepare(&config)?;
            let pilot = prepared.pilot_hypotheses();
            println!("{}", serde_json::to_string_pretty(&pilot).map_err(io)?);
            let d = &prepared.domain;
            eprintln!("grid: {} nodes, {} boundary samples, spacing {}", d.len(), d.boundary().len(), d.spacing());
            Ok(if pilot.convexity_ok { 0 } else { 2 })
        }
        Command::Solve { config, out } => {
            let prepared = prepare(&config)?;
            let dir = out_dir(out, &prepared)?;
            let solved = pipeline::solve_stage(prepared);
            solved.persist(&dir).map_err(io)?;
            pipeline::write_timings(&dir, &solved, &Analysis::default()).map_err(io)?;
            let r = solved.log.residual_history.last().copied().unwrap_or(f64::NAN);
            println!("{:?} after {} iterations, residual {r:.3e}", solved.log.status, solved.log.log.len());
            if let Some(e) = &solved.log.error {
                eprintln!("{e}");
            }
            Ok(solve_exit(solved.log.status))
        }
        Command::Analyze { input } => {
            let solved = load(&input)?;
            let a = pipeline::analyze(&solved);
            let report = pipeline::build_report(&solved, &a, false);
            let file = AnalysisFile {
                realized_hypotheses: &report.realized_hypotheses,
                radial_reference: &report.radial_reference,
                spectral: &report.spectral,
                divergence: &report.divergence,
                pfunction: &report.pfunction,
                gradient_bound: &report.gradient_bound,
                pp_conditions: &report.pp_conditions,
                identities: &report.identities,
                notes: &report.notes,
            };
            export::write_json(&input.join("analysis.json"), &file).map_err(io)?;
            pipeline::write_fields(&input, &solved, &a).map_err(io)?;
            pipeline::write_timings(&input, &solved, &a).map_err(io)?;
            Ok(solve_exit(solved.log.status))
        }
        Command::Verify { input } => {
            let solved = load(&input)?;
            let a = pipeline::analyze(&solved);
            let report = pipeline::build_report(&solved, &a, false);
            export::write_json(&input.join("checks.json"), &report.checks).map_err(io)?;
            print_checks(&report);
            Ok(match report.outcome {
                Outcome::InvariantViolation => 3,
                Outcome::Unconverged => 1,
                Outcome::HypothesisViolation => 2,
                Outcome::Ok => 0,
            })
        }
        Command::Report { input, strict } => {
            let solved = load(&input)?;
            let strict = strict || solved.prepared.config.analysis.strict;
            let a = pipeline::analyze(&solved);
            let report = pipeline::build_report(&solved, &a, strict);
            write_all(&input, &solved, &a, &report)?;
            print_checks(&report);
            Ok(report.exit_code as u8)
        }
        Command::Run { config, out, strict } => {
            let prepared = prepare(&config)?;
            let dir = out_dir(out, &prepared)?;
            let strict = strict || prepared.config.analysis.strict;
            let solved = pipeline::solve_stage(prepared);
            solved.persist(&dir).map_err(io)?;
            let a = pipeline::analyze(&solved);
            let report = pipeline::build_report(&solved, &a, strict);
            write_all(&dir, &solved, &a, &report)?;
            print_checks(&report);
            Ok(report.exit_code as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("EMTLAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: cannot configure thread pool: {e}");
                }
            }
            _ => return Failure::Config(format!("EMTLAB_THREADS must be a positive integer, got '{v}'")).exit(),
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => f.exit(),
    }
}
