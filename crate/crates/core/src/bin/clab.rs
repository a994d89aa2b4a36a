use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clab::harness::{self, AnalysisKind, AnalysisToggles, CellStatus, ExperimentConfig};
use clab::Error;

/// Continual-learning experiment runner.
#[derive(Debug, Parser)]
#[command(name = "clab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every learner of a config at one (lr, seed) cell.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Run the full learner × lr × seed grid, resuming finished cells.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Post-hoc analysis of one stored cell.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: AnalysisKind,
    },
    /// Aggregate a sweep directory into report tables.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<AnalysisKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Analysis toggles of the sweep owning `run`, defaults otherwise.
fn toggles_for(run: &Path) -> clab::Result<AnalysisToggles> {
    match run.parent().map(|p| p.join("config.json")) {
        Some(p) if p.exists() => Ok(ExperimentConfig::load(&p)?.analysis),
        _ => Ok(AnalysisToggles::default()),
    }
}

fn execute(cmd: Command) -> clab::Result<bool> {
    match cmd {
        Command::Run { config, lr, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            for dir in harness::run_experiment(&cfg, lr, seed)? {
                println!("{}", dir.display());
            }
            Ok(true)
        }
        Command::Sweep { config, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let manifest = harness::sweep(&cfg, jobs)?;
            let mut ok = true;
            for c in &manifest.cells {
                let tag = match c.status {
                    CellStatus::Ok => "ok",
                    CellStatus::Aborted => "aborted",
                    CellStatus::Failed => {
                        ok = false;
                        "FAILED"
                    }
                };
                let how = if c.computed { "computed" } else { "cached" };
                match &c.error {
                    Some(e) => println!("{tag:8} {how:8} {} ({e})", c.dir),
                    None => println!("{tag:8} {how:8} {}", c.dir),
                }
            }
            println!("{}", cfg.output_path().display());
            Ok(ok)
        }
        Command::Analyze { run, kind } => {
            let toggles = toggles_for(&run)?;
            harness::analyze_checkpoint(&run, kind, &toggles)?;
            println!("{}", run.join(format!("analysis_{kind}.csv")).display());
            Ok(true)
        }
        Command::Report { dir } => {
            harness::report(&dir)?;
            let text = std::fs::read_to_string(dir.join("report.txt")).map_err(|e| Error::Io {
                path: dir.join("report.txt"),
                source: e,
            })?;
            print!("{text}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
