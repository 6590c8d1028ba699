//! Field export as `x,t,i,j,re,im` rows.
//!
//! Row order is t-major, then x, then i, then j; indices are 1-based.
//! Numbers carry 17 significant digits, so reading a file back reproduces
//! every value bit for bit. Masked points are written as `NaN`.

use std::io::{self, BufRead, Write};

use matsol_core::eval::MaskReason;
use matsol_core::{Complex, ComplexMatrix, GridSpec, MatrixField};
use thiserror::Error;

pub const HEADER: &str = "x,t,i,j,re,im";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_field(field: &MatrixField, out: &mut impl Write) -> io::Result<()> {
    let g = &field.grid;
    writeln!(out, "{HEADER}")?;
    for it in 0..g.nt {
        let t = num(g.t(it));
        for ix in 0..g.nx {
            let x = num(g.x(ix));
            let v = field.value(ix, it);
            for i in 0..field.d {
                for j in 0..field.d {
                    let z = v[(i, j)];
                    writeln!(out, "{x},{t},{},{},{},{}", i + 1, j + 1, num(z.re), num(z.im))?;
                }
            }
        }
    }
    Ok(())
}

pub fn field_to_string(field: &MatrixField) -> String {
    let mut buf = Vec::new();
    write_field(field, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

struct Row {
    x: f64,
    t: f64,
    i: usize,
    j: usize,
    z: Complex,
}

fn parse_row(line: &str, n: usize) -> Result<Row, CsvError> {
    let bad = |message: String| CsvError::Format { line: n, message };
    let cols: Vec<&str> = line.split(',').collect();
    if cols.len() != 6 {
        return Err(bad(format!("expected 6 columns, found {}", cols.len())));
    }
    let f = |k: usize| {
        cols[k]
            .trim()
            .parse::<f64>()
            .map_err(|e| bad(format!("column {}: {e}", k + 1)))
    };
    let u = |k: usize| {
        cols[k]
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| bad(format!("column {}: expected a 1-based index", k + 1)))
    };
    Ok(Row {
        x: f(0)?,
        t: f(1)?,
        i: u(2)? - 1,
        j: u(3)? - 1,
        z: Complex::new(f(4)?, f(5)?),
    })
}

/// Reads a file written by [`write_field`]. The grid is reconstructed from
/// the first and last coordinates and every row is checked against it.
pub fn read_field(input: impl BufRead) -> Result<MatrixField, CsvError> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == HEADER => {}
        Some(Err(e)) => return Err(e.into()),
        _ => {
            return Err(CsvError::Format {
                line: 1,
                message: format!("expected header `{HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push((k + 2, parse_row(&line, k + 2)?));
    }
    let empty = || CsvError::Format {
        line: 2,
        message: "no data rows".into(),
    };
    let first = &rows.first().ok_or_else(empty)?.1;
    let last = &rows.last().ok_or_else(empty)?.1;
    let d = last.i + 1;
    let per_point = d * d;
    let nx = rows
        .iter()
        .take_while(|(_, r)| r.t.to_bits() == first.t.to_bits())
        .count()
        / per_point;
    if nx == 0 || rows.len() % (nx * per_point) != 0 {
        return Err(CsvError::Format {
            line: rows.len() + 1,
            message: "row count does not match a rectangular grid".into(),
        });
    }
    let nt = rows.len() / (nx * per_point);
    if (nx > 1 && !(first.x < last.x)) || (nt > 1 && !(first.t < last.t)) {
        return Err(CsvError::Format {
            line: rows.last().map_or(2, |r| r.0),
            message: "grid coordinates must increase".into(),
        });
    }
    let grid = GridSpec::new((first.x, last.x, nx), (first.t, last.t, nt));

    let mut values = Vec::with_capacity(nx * nt);
    let mut mask = Vec::with_capacity(nx * nt);
    for (p, chunk) in rows.chunks(per_point).enumerate() {
        let (ix, it) = (p % nx, p / nx);
        let mut m = ComplexMatrix::zeros(d, d);
        for (e, (line, r)) in chunk.iter().enumerate() {
            let expected = (grid.x(ix), grid.t(it), e / d, e % d);
            if r.x.to_bits() != expected.0.to_bits()
                || r.t.to_bits() != expected.1.to_bits()
                || (r.i, r.j) != (expected.2, expected.3)
            {
                return Err(CsvError::Format {
                    line: *line,
                    message: format!(
                        "row out of order: expected x = {}, t = {}, i = {}, j = {}",
                        expected.0,
                        expected.1,
                        expected.2 + 1,
                        expected.3 + 1
                    ),
                });
            }
            m[(r.i, r.j)] = r.z;
        }
        let masked = m.as_slice().iter().all(|z| z.re.is_nan() && z.im.is_nan());
        mask.push(masked.then_some(MaskReason::Singular {
            det_plus: f64::NAN,
            det_minus: f64::NAN,
        }));
        values.push(m);
    }
    Ok(MatrixField {
        grid,
        d,
        values,
        mask,
    })
}
