//! Run reports.
//!
//! A [`RunReport`] is serialized once to JSON; the text rendering walks that
//! JSON tree, so both renderings print identical number strings.

use matsol_core::spectral::ValidScenario;
use serde::Serialize;
use serde_json::Value;

use crate::ppm::ImageInfo;

#[derive(Debug, Clone, Serialize)]
pub struct GridEcho {
    pub x: (f64, f64, usize),
    pub t: (f64, f64, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEcho {
    pub label: String,
    pub d: usize,
    pub n: usize,
    /// `[re, im]` per soliton.
    pub eigenvalues: Vec<[f64; 2]>,
    /// Spectral matrices as written, `[re, im]` per entry.
    pub weights: Vec<Vec<Vec<[f64; 2]>>>,
    pub grid: GridEcho,
}

impl ScenarioEcho {
    pub fn new(v: &ValidScenario) -> Self {
        let s = &v.scenario;
        let g = &s.grid;
        Self {
            label: s.label.clone(),
            d: s.d,
            n: s.n(),
            eigenvalues: s.entries.iter().map(|e| [e.k.re, e.k.im]).collect(),
            weights: s
                .entries
                .iter()
                .map(|e| {
                    (0..e.weight.rows())
                        .map(|i| {
                            (0..e.weight.cols())
                                .map(|j| [e.weight[(i, j)].re, e.weight[(i, j)].im])
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            grid: GridEcho {
                x: (g.x_min, g.x_max, g.nx),
                t: (g.t_min, g.t_max, g.nt),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualSummary {
    pub equation: String,
    pub order: u32,
    pub points: usize,
    pub skipped: usize,
    /// Steps of the convergence study, coarsest first.
    pub steps: Vec<f64>,
    pub sup: Vec<f64>,
    pub rms: Vec<f64>,
    /// Estimated rounding floor per step.
    pub floor: Vec<f64>,
    /// `sup(h) / sup(h/2)` for consecutive steps.
    pub ratios: Vec<f64>,
    pub expected_ratio: f64,
    pub slope: Option<f64>,
    pub roundoff_limited: bool,
    /// `[x, t]` of the largest residual, per step.
    pub worst: Vec<[f64; 2]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MiuraSummary {
    pub residual_plus: f64,
    pub residual_minus: f64,
    pub selected: Option<i8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalSummary {
    pub functional: String,
    pub t_range: Option<[f64; 2]>,
    pub slices: usize,
    pub initial: Option<[f64; 2]>,
    pub drift: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryShare {
    pub i: usize,
    pub j: usize,
    pub initial: f64,
    pub peak_share: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolitonSummary {
    pub pre_speed: f64,
    pub post_speed: f64,
    pub pre_height: f64,
    pub post_height: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DiagnosticsSummary {
    pub functionals: Vec<FunctionalSummary>,
    pub partition: Vec<EntryShare>,
    pub partition_error: Option<String>,
    pub min_height: f64,
    pub solitons: Vec<SolitonSummary>,
    pub peak_warnings: Vec<String>,
}

/// One gated comparison.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }

    /// Passes when `|value - target| <= tol·|target|`; `bound` records the tolerance.
    pub fn relative(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: tol,
            pass: (value - target).abs() <= tol * target.abs(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    pub scenario: Option<ScenarioEcho>,
    pub convention: Option<String>,
    pub path: Option<String>,
    pub warnings: Vec<String>,
    pub grid_points: Option<usize>,
    pub masked_points: Option<usize>,
    pub residuals: Vec<ResidualSummary>,
    pub miura: Option<MiuraSummary>,
    pub diagnostics: Option<DiagnosticsSummary>,
    pub images: Vec<ImageInfo>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let value = serde_json::to_value(self).expect("report is serializable");
        render_text(&value)
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn is_inline(v: &Value) -> bool {
    match v {
        Value::Array(a) => a.iter().all(is_inline),
        other => is_scalar(other),
    }
}

fn inline(v: &Value) -> String {
    match v {
        Value::Null => "-".to_string(),
        Value::Array(a) => format!("[{}]", a.iter().map(inline).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

/// Indented `key: value` rendering of a JSON tree. Strings stay quoted and
/// numbers keep their JSON spelling.
pub fn render_text(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(map) => {
            for (k, item) in map {
                match item {
                    Value::Array(a) if a.is_empty() => out.push_str(&format!("{pad}{k}: none\n")),
                    item if is_inline(item) => {
                        out.push_str(&format!("{pad}{k}: {}\n", inline(item)))
                    }
                    item => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        write_value(out, item, indent + 1);
                    }
                }
            }
        }
        Value::Array(a) => {
            for item in a {
                if is_inline(item) {
                    out.push_str(&format!("{pad}- {}\n", inline(item)));
                } else {
                    out.push_str(&format!("{pad}-\n"));
                    write_value(out, item, indent + 1);
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", inline(other))),
    }
}

/// Number spellings in document order, ignoring quoted strings and keys.
pub fn numbers_in_text(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let body = line.trim_start().trim_start_matches("- ");
        let value = match body.split_once(": ") {
            Some((_, v)) => v,
            None => body,
        };
        let mut in_str = false;
        let mut escaped = false;
        let mut tok = String::new();
        for c in value.chars().chain(std::iter::once(' ')) {
            if in_str {
                match (escaped, c) {
                    (true, _) => escaped = false,
                    (false, '\\') => escaped = true,
                    (false, '"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match c {
                '"' => in_str = true,
                '[' | ']' | ',' | ' ' => {
                    if !tok.is_empty() && tok.parse::<f64>().is_ok() {
                        out.push(std::mem::take(&mut tok));
                    }
                    tok.clear();
                }
                c => tok.push(c),
            }
        }
    }
    out
}

/// Number spellings in a JSON tree, in document order.
pub fn numbers_in_json(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Number(n) => out.push(n.to_string()),
            Value::Array(a) => a.iter().for_each(|x| walk(x, out)),
            Value::Object(m) => m.values().for_each(|x| walk(x, out)),
            _ => {}
        }
    }
    walk(v, &mut out);
    out
}
