//! Command-line interface to the orthogonal-system toolkit: catalog charts,
//! residual verification, the associated/dual constructions, Bäcklund and
//! Ribaucour transforms, coordinate-surface family analysis, and mesh/table
//! export.
//!
//! Exit codes: 0 — run complete and every requested check passed;
//! 2 — a check or a transform precondition failed; 1 — usage, configuration
//! or I/O error. Reports go to stdout as versioned JSON (`orthonet/1`),
//! optionally duplicated to `--report`; identical configurations yield
//! byte-identical reports.

mod config;
mod export;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "orthonet",
    version,
    about = "Triply orthogonal systems: Guichard nets and their transformation theory on sampled grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List catalog charts with classification and recommended boxes
    ListCharts,
    /// Sample a chart and run residual checks
    Verify(VerifyArgs),
    /// Build the associated 1-system at family parameter c
    Associate(CommonArgs),
    /// Build the dual Guichard net at family parameter c
    Dualize(CommonArgs),
    /// Integrate a Bianchi system and apply the Bäcklund transform
    Backlund(BacklundArgs),
    /// Decompose the inversion-induced Ribaucour transform
    Decompose(DecomposeArgs),
    /// Classify coordinate-surface families and check slice geometry
    Analyze(CommonArgs),
    /// Export coordinate surfaces as OBJ meshes and fields as CSV
    Export(ExportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Catalog chart name (hyphens and underscores interchangeable)
    #[arg(long)]
    chart: Option<String>,
    /// Family parameter (parametric charts; associate/dualize parameter)
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Grid points per axis [default: 17]
    #[arg(long)]
    n: Option<usize>,
    /// Bounding box x0,x1,y0,y1,z0,z1 [default: the chart's recommended box]
    #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true)]
    bounds: Option<Vec<f64>>,
    /// Finite-difference order, 2 or 4 [default: 2]
    #[arg(long)]
    order: Option<u8>,
    /// Boundary collar excluded from residual norms [default: 2]
    #[arg(long)]
    collar: Option<usize>,
    /// Fixed tolerance overriding the grid-aware default
    #[arg(long)]
    tolerance: Option<f64>,
    /// Also write the JSON report to this file
    #[arg(long)]
    report: Option<PathBuf>,
    /// JSON run configuration; its fields supersede the flags
    #[arg(long)]
    config: Option<PathBuf>,
}

impl CommonArgs {
    /// Flags as a run configuration, with the `--config` file (if any)
    /// superseding them field by field.
    fn into_config(self) -> Result<RunConfig> {
        let bounds = match self.bounds {
            None => None,
            Some(v) if v.len() == 6 => Some([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]]]),
            Some(v) => anyhow::bail!(
                "--box needs six values x0,x1,y0,y1,z0,z1 (got {})",
                v.len()
            ),
        };
        let mut cfg = RunConfig {
            chart: self.chart,
            c: self.c,
            n: self.n,
            bounds,
            order: self.order,
            collar: self.collar,
            tolerance: self.tolerance,
            report: self.report,
            ..RunConfig::default()
        };
        if let Some(path) = &self.config {
            cfg = cfg.superseded_by(RunConfig::load(path)?);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated checks: orthogonality, parametrization, frame,
    /// determinant, lame, point, guichard [default: all]
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
}

#[derive(Args)]
struct BacklundArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spectral parameter α ≠ 0 [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Sphere-congruence parameter λ [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Bianchi seed γ₁,γ₂,γ₃,γ̄₁,γ̄₂,γ̄₃ at the grid center
    /// [default: 1,1,0,1,1,0]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    seed: Option<Vec<f64>>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sphere-congruence parameter λ of the inversion data [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Coordinate-surface selectors axis:index, comma separated
    #[arg(long, value_delimiter = ',')]
    slices: Option<Vec<String>>,
    /// Directory receiving one OBJ file per selected slice
    #[arg(long)]
    obj_dir: Option<PathBuf>,
    /// Scalar field for CSV export: h1, h2, h3, chi, fx, fy or fz
    /// [default: chi]
    #[arg(long)]
    csv_field: Option<String>,
    /// CSV output path
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("orthonet: {err:#}");
            ExitCode::from(classify_exit(&err))
        }
    }
}

/// Failed transform preconditions are check failures (2); everything else
/// aborting a run — unknown charts, invalid grids, schema violations,
/// masked divisions, I/O — is a usage or configuration error (1).
fn classify_exit(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(lib) = cause.downcast_ref::<orthonet::Error>() {
            return match lib {
                orthonet::Error::Precondition(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

/// Prints the report to stdout and duplicates it to `--report` if set.
fn emit(cfg: &RunConfig, report: &runner::Report) -> Result<()> {
    let text = report.render();
    print!("{text}");
    if let Some(path) = &cfg.report {
        std::fs::write(path, &text)
            .with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let (cfg, report) = match cli.command {
        Cmd::ListCharts => {
            print!("{}", runner::list_charts());
            return Ok(true);
        }
        Cmd::Verify(args) => {
            let mut cfg = args.common.into_config()?;
            if cfg.checks.is_none() {
                cfg.checks = args.checks;
            }
            let report = runner::verify(&cfg)?;
            (cfg, report)
        }
        Cmd::Associate(common) => {
            let cfg = common.into_config()?;
            let report = runner::associate(&cfg)?;
            (cfg, report)
        }
        Cmd::Dualize(common) => {
            let cfg = common.into_config()?;
            let report = runner::dualize(&cfg)?;
            (cfg, report)
        }
        Cmd::Backlund(args) => {
            let mut cfg = args.common.into_config()?;
            if cfg.alpha.is_none() {
                cfg.alpha = args.alpha;
            }
            if cfg.lambda.is_none() {
                cfg.lambda = args.lambda;
            }
            if cfg.bianchi_seed.is_none() && cfg.seed.is_none() {
                cfg.seed = args.seed;
            }
            let report = runner::run_backlund(&cfg)?;
            (cfg, report)
        }
        Cmd::Decompose(args) => {
            let mut cfg = args.common.into_config()?;
            if cfg.lambda.is_none() {
                cfg.lambda = args.lambda;
            }
            let report = runner::decompose(&cfg)?;
            (cfg, report)
        }
        Cmd::Analyze(common) => {
            let cfg = common.into_config()?;
            let report = runner::analyze(&cfg)?;
            (cfg, report)
        }
        Cmd::Export(args) => {
            let mut cfg = args.common.into_config()?;
            if cfg.slices.is_none() {
                cfg.slices = args.slices;
            }
            if cfg.obj_dir.is_none() {
                cfg.obj_dir = args.obj_dir;
            }
            if cfg.csv_field.is_none() {
                cfg.csv_field = args.csv_field;
            }
            if cfg.csv.is_none() {
                cfg.csv = args.csv;
            }
            let report = runner::run_export(&cfg)?;
            (cfg, report)
        }
    };
    emit(&cfg, &report)?;
    Ok(report.pass)
}
