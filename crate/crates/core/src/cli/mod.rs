//! Command-line front end: argument and config handling, subcommand
//! dispatch, output files and process exit codes.

mod commands;
pub mod config;
pub mod road;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{bench_qp, line_fit, load_powertrain, scenario, LineFit, ARTIFACT_FILES};
pub use config::{BenchSettings, CaseLabel, OracleSettings, RouteSource, RunConfig, SpeedBand};
pub use road::{ingest_road, parse_road};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ecodrive", version, about = "Energy-optimal speed planning for heavy vehicles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; built-in CV defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Road CSV replacing the configured route.
    #[arg(long, global = true)]
    pub route: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of the synthetic route.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub case: Option<CaseLabel>,
    /// Number of samples: route intervals for closed-loop runs, horizon
    /// intervals for `solve`, `oracle` and `bench`.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Log filter, e.g. `info` or `ecodrive::mpc=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Synthesise the powertrain and write the fitted JSON artifacts.
    FitMaps,
    /// Write the optimal gear map and its contour table.
    GearMap,
    /// One horizon solve at fixed or root-found costate.
    Solve,
    /// Closed-loop MPC drive with a per-update log.
    Mpc,
    /// Heuristic, case 1 and case 2 side by side.
    Compare,
    /// Dynamic-programming cross-check on a short segment.
    Oracle,
    /// Comfort-weight trade-off table.
    SweepW2,
    /// QP solve time against the number of samples.
    Bench,
}

impl Cli {
    /// Configuration file plus command-line overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::for_kind(crate::powertrain::PowertrainKind::Cv),
        };
        if let Some(path) = &self.route {
            let band = match &cfg.route {
                RouteSource::File { band, .. } => *band,
                RouteSource::Synthetic(_) => SpeedBand::default(),
            };
            cfg.route = RouteSource::File { path: path.clone(), band };
        }
        if let Some(seed) = self.seed {
            match &mut cfg.route {
                RouteSource::Synthetic(r) => r.seed = seed,
                RouteSource::File { .. } => {
                    return Err(Error::Config("--seed applies to the synthetic route only".into()))
                }
            }
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(case) = self.case {
            cfg.case = case;
        }
        if self.n == Some(0) {
            return Err(Error::Config("--n must be positive".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Process exit status for an error: 2 bad input, 3 infeasible, 4 solver.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => 3,
        Error::Solver(_) | Error::Fit(_) | Error::Construction(_) => 4,
        _ => 2,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Domain(_) => "domain",
        Error::OutOfRange { .. } => "out_of_range",
        Error::InvalidParams(_) => "invalid_params",
        Error::Construction(_) => "construction",
        Error::Fit(_) => "fit",
        Error::Infeasible(_) => "infeasible",
        Error::Solver(_) => "solver",
        Error::Dimension(_) => "dimension",
        Error::Parse { .. } => "parse",
        Error::Config(_) => "config",
        Error::Schema(_) => "schema",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

/// One-line machine-readable error report.
pub fn error_json(err: &Error) -> String {
    let mut doc = serde_json::json!({
        "error": error_kind(err),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    });
    if let Error::Parse { line, .. } = err {
        doc["line"] = (*line).into();
    }
    doc.to_string()
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = cli.resolve()?;
    std::fs::create_dir_all(&cfg.out)?;
    match cli.command {
        Command::FitMaps => commands::fit_maps(&cfg),
        Command::GearMap => commands::gear_map(&cfg),
        Command::Solve => commands::solve(&cfg, cli.n),
        Command::Mpc => commands::mpc(&cfg, cli.n),
        Command::Compare => commands::compare(&cfg, cli.n),
        Command::Oracle => commands::oracle(&cfg, cli.n),
        Command::SweepW2 => commands::sweep(&cfg, cli.n),
        Command::Bench => commands::bench(&cfg, cli.n),
    }
}
