//! Scenario documents (TOML).
//!
//! ```toml
//! d = 1
//!
//! [[solitons]]
//! k = [1.0, 0.0]
//! B = [[1.0]]            # entries: bare reals or [re, im] pairs
//!
//! [grid]
//! x = [-10.0, 10.0, 401] # [min, max, count]
//! t = [-5.0, 5.0, 101]
//!
//! [options]              # optional table
//! imaginary_weights = true
//! path = "fast"          # or "det"
//! label = "scalar"
//! ```
//!
//! Syntax errors, schema violations and spectral validation failures are
//! distinct [`ScenarioError`] variants, each carrying a line and column.

use std::fmt;
use std::ops::Range;

use matsol_core::spectral::{
    validate_scenario, EvalPath, GridSpec, ScenarioOptions, SolitonEntry, ValidScenario,
    ValidationIssue,
};
use matsol_core::{Complex, ComplexMatrix, Scenario};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

/// 1-based line and column of a byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl Position {
    pub fn at(text: &str, offset: usize) -> Self {
        let offset = offset.min(text.len());
        let before = &text[..offset];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let column = text[line_start..offset].chars().count() + 1;
        Self { line, column }
    }

    fn of(text: &str, span: Option<Range<usize>>) -> Self {
        Self::at(text, span.map_or(0, |r| r.start))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Position, message: String },
    #[error("schema error at {pos}: {message}")]
    Schema { pos: Position, message: String },
    #[error("validation failed: {}", render_issues(.issues))]
    Validation { issues: Vec<(Position, ValidationIssue)> },
}

fn render_issues(issues: &[(Position, ValidationIssue)]) -> String {
    issues
        .iter()
        .map(|(p, i)| format!("{i} (at {p})"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// A real number or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ComplexValue(Complex);

impl<'de> Deserialize<'de> for ComplexValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ComplexValue;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a real number or an [re, im] pair")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Ok(ComplexValue(Complex::new(v, 0.0)))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let re: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let im: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<f64>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(ComplexValue(Complex::new(re, im)))
            }
        }
        deserializer.deserialize_any(V)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSoliton {
    k: ComplexValue,
    #[serde(rename = "B")]
    b: Spanned<Vec<Vec<ComplexValue>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    x: (f64, f64, usize),
    t: (f64, f64, usize),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    imaginary_weights: Option<bool>,
    path: Option<Spanned<String>>,
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    d: Spanned<usize>,
    solitons: Spanned<Vec<Spanned<RawSoliton>>>,
    grid: Spanned<RawGrid>,
    #[serde(default)]
    options: RawOptions,
}

/// Parses and validates a scenario document. `default_label` is used when
/// the document sets no `options.label`.
pub fn parse_scenario(text: &str, default_label: &str) -> Result<ValidScenario, ScenarioError> {
    if let Err(e) = text.parse::<toml::Table>() {
        return Err(ScenarioError::Syntax {
            pos: Position::of(text, e.span()),
            message: e.message().to_string(),
        });
    }
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Schema {
        pos: Position::of(text, e.span()),
        message: e.message().to_string(),
    })?;
    let schema = |span: Range<usize>, message: String| ScenarioError::Schema {
        pos: Position::at(text, span.start),
        message,
    };

    let mut entries = Vec::with_capacity(raw.solitons.get_ref().len());
    for (index, s) in raw.solitons.get_ref().iter().enumerate() {
        let rows: Vec<Vec<Complex>> = s
            .get_ref()
            .b
            .get_ref()
            .iter()
            .map(|r| r.iter().map(|c| c.0).collect())
            .collect();
        let weight = if rows.is_empty() {
            ComplexMatrix::zeros(0, 0)
        } else {
            ComplexMatrix::from_rows(&rows).map_err(|_| {
                schema(
                    s.get_ref().b.span(),
                    format!("soliton {index}: rows of `B` differ in length"),
                )
            })?
        };
        entries.push(SolitonEntry {
            k: s.get_ref().k.0,
            weight,
        });
    }

    let mut options = ScenarioOptions::default();
    if let Some(w) = raw.options.imaginary_weights {
        options.imaginary_weights = w;
    }
    if let Some(p) = &raw.options.path {
        options.path = p
            .get_ref()
            .parse::<EvalPath>()
            .map_err(|m| schema(p.span(), m))?;
    }
    let g = raw.grid.get_ref();
    let scenario = Scenario {
        d: *raw.d.get_ref(),
        entries,
        grid: GridSpec::new(g.x, g.t),
        label: raw
            .options
            .label
            .clone()
            .unwrap_or_else(|| default_label.to_string()),
        options,
    };

    validate_scenario(scenario).map_err(|e| ScenarioError::Validation {
        issues: e
            .issues
            .into_iter()
            .map(|issue| {
                let span = match &issue {
                    ValidationIssue::ZeroDimension => raw.d.span(),
                    ValidationIssue::NoSolitons => raw.solitons.span(),
                    ValidationIssue::InvalidGrid(_) => raw.grid.span(),
                    other => match other.entry() {
                        Some(i) => raw.solitons.get_ref()[i].span(),
                        None => 0..0,
                    },
                };
                (Position::at(text, span.start), issue)
            })
            .collect(),
    })
}

fn format_complex(z: Complex) -> String {
    if z.im == 0.0 {
        format!("{:?}", z.re)
    } else {
        format!("[{:?}, {:?}]", z.re, z.im)
    }
}

/// Writes a scenario as a document that [`parse_scenario`] reads back to the
/// same data.
pub fn to_document(s: &Scenario) -> String {
    let mut out = format!("d = {}\n", s.d);
    for e in &s.entries {
        out.push_str(&format!("\n[[solitons]]\nk = {}\nB = [\n", format_complex(e.k)));
        for i in 0..e.weight.rows() {
            let row: Vec<String> = (0..e.weight.cols())
                .map(|j| format_complex(e.weight[(i, j)]))
                .collect();
            out.push_str(&format!("  [{}],\n", row.join(", ")));
        }
        out.push_str("]\n");
    }
    let g = &s.grid;
    out.push_str(&format!(
        "\n[grid]\nx = [{:?}, {:?}, {}]\nt = [{:?}, {:?}, {}]\n",
        g.x_min, g.x_max, g.nx, g.t_min, g.t_max, g.nt
    ));
    out.push_str(&format!(
        "\n[options]\nimaginary_weights = {}\npath = \"{}\"\nlabel = {:?}\n",
        s.options.imaginary_weights, s.options.path, s.label
    ));
    out
}
