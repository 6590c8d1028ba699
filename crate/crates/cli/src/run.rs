//! Subcommand execution.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use matsol_core::diagnostics::{
    decayed_t_range, energy_partition_over, functional_series, functional_series_over,
    track_peaks, Functional,
};
use matsol_core::eval::evaluate_grid;
use matsol_core::presets::{Preset, UnknownPreset};
use matsol_core::quadrature::StencilOrder;
use matsol_core::spectral::{build_operator_data, validate_scenario, ValidScenario};
use matsol_core::verify::{
    convergence_study, probe_miura_sign, random_unmasked_points, KdvOp, MkdvOp, PkdvOp,
    ResidualOp, SolutionSampler, StencilSpec, VerifyError, FLOOR_MARGIN, KDV_TOLERANCE,
};
use matsol_core::{EvalPath, EvalPoint, GridSpec, MatrixField};
use thiserror::Error;

use crate::csv::write_field;
use crate::ppm::{plot_script, render_entries};
use crate::report::{
    Check, DiagnosticsSummary, EntryShare, FunctionalSummary, MiuraSummary, ResidualSummary,
    RunReport, ScenarioEcho, SolitonSummary, Timing,
};
use crate::scenario::{parse_scenario, ScenarioError};
use crate::selftest;

/// Sup bound on the mKdV residual at the default step.
pub const MKDV_TOLERANCE: f64 = 1e-5;
/// Sup bound on the pKdV residual of the quadrature potential.
pub const PKDV_TOLERANCE: f64 = 1e-4;
/// Allowed relative deviation of a halving ratio from `2^order`.
pub const RATIO_TOLERANCE: f64 = 0.3;

pub const CSV_FILE: &str = "field.csv";
pub const PLOT_FILE: &str = "plot.gp";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evaluate,
    Verify,
    Diagnose,
    Render,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evaluate => "evaluate",
            Command::Verify => "verify",
            Command::Diagnose => "diagnose",
            Command::Render => "render",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Preset(String),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub source: Option<Source>,
    pub path: Option<EvalPath>,
    pub stencil: StencilSpec,
    pub out: PathBuf,
    pub shared_scale: bool,
    pub x: Option<(f64, f64, usize)>,
    pub t: Option<(f64, f64, usize)>,
    /// Random sample points for the mKdV check.
    pub points: usize,
    /// Leading subset of the points used for the KdV and pKdV checks.
    pub chain_points: usize,
    pub seed: u64,
    /// Peaks of ‖V‖_F below this height are ignored when tracking.
    pub min_height: f64,
}

impl RunConfig {
    pub fn new(command: Command, source: Option<Source>, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            source,
            path: None,
            stencil: StencilSpec::default(),
            out: out.into(),
            shared_scale: false,
            x: None,
            t: None,
            points: 25,
            chain_points: 4,
            seed: 1,
            min_height: 0.1,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{file}: {source}")]
    Scenario {
        file: String,
        #[source]
        source: ScenarioError,
    },
    #[error(transparent)]
    Preset(#[from] UnknownPreset),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl CliError {
    /// 1 for parse and validation failures, 3 for I/O failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 3,
            _ => 1,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

pub fn load_scenario(cfg: &RunConfig) -> Result<ValidScenario, CliError> {
    let valid = match &cfg.source {
        None => return Err(CliError::Usage("one of --scenario or --preset is required".into())),
        Some(Source::Preset(name)) => validate_scenario(name.parse::<Preset>()?.scenario())
            .map_err(|e| CliError::Usage(e.to_string()))?,
        Some(Source::File(path)) => {
            let text = fs::read_to_string(path)
                .map_err(io_err(format!("reading {}", path.display())))?;
            let stem = path
                .file_stem()
                .map_or_else(|| "scenario".to_string(), |s| s.to_string_lossy().into_owned());
            parse_scenario(&text, &stem).map_err(|source| CliError::Scenario {
                file: path.display().to_string(),
                source,
            })?
        }
    };
    if cfg.x.is_none() && cfg.t.is_none() {
        return Ok(valid);
    }
    let mut s = valid.scenario;
    let g = s.grid;
    s.grid = GridSpec::new(
        cfg.x.unwrap_or((g.x_min, g.x_max, g.nx)),
        cfg.t.unwrap_or((g.t_min, g.t_max, g.nt)),
    );
    validate_scenario(s).map_err(|e| CliError::Usage(e.to_string()))
}

struct Clock(Vec<Timing>);

impl Clock {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push(Timing {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], report: &mut RunReport) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(format!("writing {}", path.display())))?;
    report.artifacts.push(name.to_string());
    Ok(())
}

/// Runs one subcommand, writes its artifacts and report under `cfg.out`, and
/// returns the report. Threshold failures are reported through
/// [`RunReport::passed`], not as errors.
pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.stencil.validate()?;
    fs::create_dir_all(&cfg.out).map_err(io_err(format!("creating {}", cfg.out.display())))?;
    let mut clock = Clock(Vec::new());
    let mut report = RunReport {
        command: cfg.command.name().to_string(),
        ..RunReport::default()
    };

    if cfg.command == Command::Selftest {
        report.checks = clock.time("selftest", || selftest::run_suite(&cfg.out))?;
    } else {
        let valid = clock.time("parse", || load_scenario(cfg))?;
        let s = &valid.scenario;
        let path = cfg.path.unwrap_or(s.options.path);
        report.scenario = Some(ScenarioEcho::new(&valid));
        report.convention = Some(s.convention().to_string());
        report.path = Some(path.to_string());
        report.warnings = valid.warnings.iter().map(|w| w.to_string()).collect();
        let od = clock
            .time("assemble", || build_operator_data(s))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        write_file(&cfg.out, "scenario.toml", crate::scenario::to_document(s).as_bytes(), &mut report)?;

        match cfg.command {
            Command::Evaluate | Command::Render => {
                let field = clock.time("evaluate", || evaluate_grid(&od, &s.grid, path));
                report.grid_points = Some(field.grid.len());
                report.masked_points = Some(field.masked_count());
                let mut csv = Vec::new();
                write_field(&field, &mut csv).expect("writing to memory cannot fail");
                write_file(&cfg.out, CSV_FILE, &csv, &mut report)?;
                if cfg.command == Command::Render {
                    let images = clock.time("render", || render_entries(&field, cfg.shared_scale));
                    for (info, bytes) in images {
                        write_file(&cfg.out, &info.file, &bytes, &mut report)?;
                        report.images.push(info);
                    }
                    let script = plot_script(CSV_FILE, s.d, &s.label);
                    write_file(&cfg.out, PLOT_FILE, script.as_bytes(), &mut report)?;
                }
            }
            Command::Verify => {
                let sampler = SolutionSampler::new(&od, path);
                clock.time("verify", || verify(cfg, s.grid, &sampler, &mut report))?;
            }
            Command::Diagnose => {
                let field = clock.time("evaluate", || evaluate_grid(&od, &s.grid, path));
                report.grid_points = Some(field.grid.len());
                report.masked_points = Some(field.masked_count());
                clock.time("diagnose", || diagnose(cfg, &field, s.n(), &mut report))?;
            }
            Command::Selftest => unreachable!(),
        }
    }

    report.timings = clock.0;
    report.artifacts.extend([REPORT_JSON.to_string(), REPORT_TEXT.to_string()]);
    for (name, body) in [(REPORT_JSON, report.to_json()), (REPORT_TEXT, report.to_text())] {
        let path = cfg.out.join(name);
        fs::write(&path, body).map_err(io_err(format!("writing {}", path.display())))?;
    }
    Ok(report)
}

/// Convergence study of `op` over `steps`, folded into a report row.
pub fn study(
    op: &(impl ResidualOp + ?Sized),
    points: &[EvalPoint],
    steps: &[f64],
    s: &StencilSpec,
) -> ResidualSummary {
    let expected_ratio = 2f64.powi(s.effective_order() as i32);
    let mut row = ResidualSummary {
        equation: op.equation().tag().to_string(),
        order: s.effective_order(),
        points: points.len(),
        skipped: 0,
        steps: steps.to_vec(),
        sup: Vec::new(),
        rms: Vec::new(),
        floor: Vec::new(),
        ratios: Vec::new(),
        expected_ratio,
        slope: None,
        roundoff_limited: false,
        worst: Vec::new(),
        error: None,
    };
    match convergence_study(op, points, steps, s) {
        Ok(c) => {
            row.skipped = points.len() - c.runs[0].samples;
            row.sup = c.runs.iter().map(|r| r.sup).collect();
            row.rms = c.runs.iter().map(|r| r.rms).collect();
            row.floor = c.runs.iter().map(|r| r.floor).collect();
            row.ratios = c.ratios.clone();
            row.slope = c.slope;
            row.roundoff_limited = c.roundoff_limited;
            row.worst = c.runs.iter().filter_map(|r| r.worst).map(|p| [p.x, p.t]).collect();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Checks on a study row: sup at step `gate` against `bound`, then every
/// halving ratio between two runs that both sit above the rounding floor.
pub fn study_checks(row: &ResidualSummary, gate: usize, bound: f64) -> Vec<Check> {
    let eq = &row.equation;
    let Some(&sup) = row.sup.get(gate) else {
        let why = row.error.as_deref().unwrap_or("no runs");
        return vec![Check::at_most(format!("{eq} residual ({why})"), f64::NAN, bound)];
    };
    let mut out = vec![Check::at_most(format!("{eq} sup residual at h = {}", row.steps[gate]), sup, bound)];
    for (k, &ratio) in row.ratios.iter().enumerate() {
        let clean = |i: usize| row.sup[i] > FLOOR_MARGIN * row.floor[i];
        if clean(k) && clean(k + 1) {
            out.push(Check::relative(
                format!("{eq} halving ratio h = {} -> {}", row.steps[k], row.steps[k + 1]),
                ratio,
                row.expected_ratio,
                RATIO_TOLERANCE,
            ));
        }
    }
    out
}

/// Steps of the mKdV study around `h`. The coarser steps keep at least one
/// halving above the rounding floor for |k| up to about 2.
pub fn mkdv_steps(h: f64) -> [f64; 4] {
    [4.0 * h, 2.0 * h, h, h / 2.0]
}

fn verify(
    cfg: &RunConfig,
    grid: GridSpec,
    sampler: &SolutionSampler,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let s = &cfg.stencil;
    let h = s.h;
    let points = random_unmasked_points(
        sampler,
        (grid.x_min, grid.x_max),
        (grid.t_min, grid.t_max),
        cfg.points,
        cfg.seed,
        s,
    );
    if points.is_empty() {
        return Err(VerifyError::AllMasked.into());
    }
    let mkdv = study(&MkdvOp(sampler), &points, &mkdv_steps(h), s);
    report.checks.extend(study_checks(&mkdv, 2, MKDV_TOLERANCE));
    report.residuals.push(mkdv);

    let chain = &points[..cfg.chain_points.min(points.len())];
    let probe = probe_miura_sign(sampler, chain, s)?;
    report.miura = Some(MiuraSummary {
        residual_plus: probe.residual_plus,
        residual_minus: probe.residual_minus,
        selected: probe.selected,
    });
    let sign = probe.selected.unwrap_or(1);
    report.checks.push(Check::at_most(
        "miura sign probe: best KdV residual",
        probe.residual_plus.min(probe.residual_minus),
        KDV_TOLERANCE,
    ));
    let steps = [h, h / 2.0];
    let kdv = study(&KdvOp { inner: sampler, sign }, chain, &steps, s);
    report.checks.extend(study_checks(&kdv, 0, KDV_TOLERANCE).into_iter().take(1));
    report.residuals.push(kdv);
    let pkdv = study(&PkdvOp { inner: sampler, sign }, chain, &steps, s);
    report.checks.extend(study_checks(&pkdv, 0, PKDV_TOLERANCE).into_iter().take(1));
    report.residuals.push(pkdv);
    Ok(())
}

fn diagnose(
    cfg: &RunConfig,
    field: &MatrixField,
    n: usize,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let g = &field.grid;
    let d = field.d;
    let range = decayed_t_range(field);
    let mut summary = DiagnosticsSummary {
        min_height: cfg.min_height,
        ..DiagnosticsSummary::default()
    };
    let mut conserved = String::from("t,functional,re,im\n");
    for tag in Functional::ALL {
        let series = match &range {
            Some(r) => functional_series_over(field, tag, r.clone()),
            None => functional_series(field, tag),
        };
        summary.functionals.push(match series {
            Ok(s) => {
                for (t, v) in s.t.iter().zip(&s.values) {
                    conserved.push_str(&format!("{t:.16e},{},{:.16e},{:.16e}\n", tag.tag(), v.re, v.im));
                }
                FunctionalSummary {
                    functional: tag.tag().to_string(),
                    t_range: Some([s.t[0], *s.t.last().unwrap()]),
                    slices: s.t.len(),
                    initial: Some([s.values[0].re, s.values[0].im]),
                    drift: Some(s.drift),
                    error: None,
                }
            }
            Err(e) => FunctionalSummary {
                functional: tag.tag().to_string(),
                t_range: None,
                slices: 0,
                initial: None,
                drift: None,
                error: Some(e.to_string()),
            },
        });
    }
    write_file(&cfg.out, "conserved.csv", conserved.as_bytes(), report)?;

    let partition = match &range {
        Some(r) => energy_partition_over(field, r.clone()),
        None => energy_partition_over(field, 0..g.nt),
    };
    match partition {
        Ok(p) => {
            let shares = p.peak_shares();
            let mut table = String::from("t,i,j,value\n");
            for (k, t) in p.t.iter().enumerate() {
                for e in 0..d * d {
                    table.push_str(&format!("{t:.16e},{},{},{:.16e}\n", e / d + 1, e % d + 1, p.entries[e][k]));
                }
            }
            write_file(&cfg.out, "partition.csv", table.as_bytes(), report)?;
            summary.partition = (0..d * d)
                .map(|e| EntryShare {
                    i: e / d + 1,
                    j: e % d + 1,
                    initial: p.entries[e][0],
                    peak_share: shares[e],
                })
                .collect();
        }
        Err(e) => summary.partition_error = Some(e.to_string()),
    }

    match track_peaks(field, cfg.min_height, Some(n)) {
        Ok(tr) => {
            let mut table = String::from("t,x,height\n");
            for (t, peaks) in tr.t.iter().zip(&tr.peaks) {
                for p in peaks {
                    table.push_str(&format!("{t:.16e},{:.16e},{:.16e}\n", p.x, p.height));
                }
            }
            write_file(&cfg.out, "peaks.csv", table.as_bytes(), report)?;
            summary.solitons = tr
                .solitons
                .iter()
                .map(|f| SolitonSummary {
                    pre_speed: f.pre_speed,
                    post_speed: f.post_speed,
                    pre_height: f.pre_height,
                    post_height: f.post_height,
                })
                .collect();
            summary.peak_warnings = tr.warnings;
        }
        Err(e) => summary.peak_warnings.push(e.to_string()),
    }
    report.diagnostics = Some(summary);
    Ok(())
}

/// Parses `min,max,count`.
pub fn parse_axis(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected min,max,count, got `{s}`"));
    }
    let f = |p: &str| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    let n = parts[2]
        .parse::<usize>()
        .map_err(|e| format!("`{}`: {e}", parts[2]))?;
    Ok((f(parts[0])?, f(parts[1])?, n))
}

pub fn parse_order(s: &str) -> Result<StencilOrder, String> {
    s.parse::<u32>()
        .ok()
        .and_then(StencilOrder::from_value)
        .ok_or_else(|| format!("stencil order must be 2, 4 or 6, got `{s}`"))
}
