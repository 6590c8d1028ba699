use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use matsol_cli::run::{parse_axis, parse_order};
use matsol_cli::{run, CliError, Command, RunConfig, Source};
use matsol_core::quadrature::StencilOrder;
use matsol_core::verify::StencilSpec;
use matsol_core::EvalPath;

/// Exact matrix mKdV solitons: evaluation, PDE verification, diagnostics and export.
#[derive(Parser)]
#[command(name = "matsol", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Evaluate the solution on the scenario grid and write field.csv.
    Evaluate(Common),
    /// Certify the mKdV, KdV and pKdV residuals at random points.
    Verify(Common),
    /// Conserved-functional series, energy partition and peak tracks.
    Diagnose(Common),
    /// Per-entry |V_ij| heatmaps (PPM) plus a gnuplot script.
    Render(Common),
    /// Run the built-in invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario document (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: fig2, fig3, fig4, scalar1, scalar2.
    #[arg(long)]
    preset: Option<String>,
    /// Evaluation path; defaults to the scenario's choice.
    #[arg(long, value_parser = |s: &str| s.parse::<EvalPath>())]
    path: Option<EvalPath>,
    /// Finite-difference step before scaling by the largest |k|.
    #[arg(long, default_value_t = matsol_core::verify::DEFAULT_STEP)]
    h: f64,
    /// Stencil accuracy order.
    #[arg(long, default_value = "4", value_parser = parse_order)]
    order: StencilOrder,
    /// Apply one Richardson extrapolation step to every derivative.
    #[arg(long)]
    richardson: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Normalize all heatmaps to one common scale.
    #[arg(long)]
    shared_scale: bool,
    /// Override the x grid as min,max,count.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    x: Option<(f64, f64, usize)>,
    /// Override the t grid as min,max,count.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    t: Option<(f64, f64, usize)>,
    /// Random sample points for the mKdV check.
    #[arg(long, default_value_t = 25)]
    points: usize,
    /// Points (a prefix of the sample) for the KdV and pKdV checks.
    #[arg(long, default_value_t = 4)]
    chain_points: usize,
    /// Seed of the sample-point generator.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Smallest ‖V‖_F peak height that is tracked.
    #[arg(long, default_value_t = 0.1)]
    min_height: f64,
}

#[derive(Args)]
struct SelftestArgs {
    /// Directory for the report and scratch artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn config(command: Command, c: Common) -> RunConfig {
    let source = match (c.scenario, c.preset) {
        (Some(path), _) => Some(Source::File(path)),
        (None, Some(name)) => Some(Source::Preset(name)),
        (None, None) => None,
    };
    let mut cfg = RunConfig::new(command, source, c.out);
    cfg.path = c.path;
    cfg.stencil = StencilSpec {
        h: c.h,
        order: c.order,
        richardson: c.richardson,
    };
    cfg.shared_scale = c.shared_scale;
    cfg.x = c.x;
    cfg.t = c.t;
    cfg.points = c.points;
    cfg.chain_points = c.chain_points;
    cfg.seed = c.seed;
    cfg.min_height = c.min_height;
    cfg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.command {
        Sub::Evaluate(c) => config(Command::Evaluate, c),
        Sub::Verify(c) => config(Command::Verify, c),
        Sub::Diagnose(c) => config(Command::Diagnose, c),
        Sub::Render(c) => config(Command::Render, c),
        Sub::Selftest(a) => RunConfig::new(Command::Selftest, None, a.out),
    };
    let result = run(&cfg).with_context(|| format!("matsol {} failed", cfg.command.name()));
    match result {
        Ok(report) => {
            print!("{}", report.to_text());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name.as_str())
                    .collect();
                eprintln!("threshold failure: {}", failed.join("; "));
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
