//! Composite Simpson integration and central finite-difference stencils.

use crate::matrix::{Complex, ComplexMatrix};

/// Integrates uniformly spaced samples with spacing `h`.
///
/// An odd sample count uses composite Simpson throughout. An even count uses
/// Simpson on the leading samples and the 3/8 rule on the last four, so the
/// result stays fourth-order accurate. Two samples fall back to the trapezoid.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    simpson_by(values.len(), h, 0.0, |i| values[i], |a, w| a * w, |a, b| a + b)
}

pub fn simpson_complex(values: &[Complex], h: f64) -> Complex {
    simpson_by(
        values.len(),
        h,
        Complex::new(0.0, 0.0),
        |i| values[i],
        |a, w| a * w,
        |a, b| a + b,
    )
}

/// Simpson integration of matrix-valued samples, entrywise.
pub fn simpson_matrix(values: &[ComplexMatrix], h: f64) -> Option<ComplexMatrix> {
    let first = values.first()?;
    let (r, c) = (first.rows(), first.cols());
    Some(simpson_by(
        values.len(),
        h,
        ComplexMatrix::zeros(r, c),
        |i| values[i].clone(),
        |a, w| a.scale(Complex::new(w, 0.0)),
        |a, b| a.add(&b).expect("samples share a shape"),
    ))
}

fn simpson_by<T: Clone>(
    n: usize,
    h: f64,
    zero: T,
    at: impl Fn(usize) -> T,
    mul: impl Fn(T, f64) -> T,
    add: impl Fn(T, T) -> T,
) -> T {
    match n {
        0 | 1 => zero,
        2 => mul(add(at(0), at(1)), h / 2.0),
        _ if n % 2 == 1 => simpson_odd(0, n, h, zero, &at, &mul, &add),
        _ => {
            let head = if n == 4 {
                zero
            } else {
                simpson_odd(0, n - 3, h, zero, &at, &mul, &add)
            };
            let s = n - 4;
            let tail = [1.0, 3.0, 3.0, 1.0]
                .iter()
                .enumerate()
                .map(|(j, &w)| mul(at(s + j), w * 3.0 * h / 8.0))
                .reduce(&add)
                .expect("four samples");
            add(head, tail)
        }
    }
}

// Samples start..start+len, len odd.
fn simpson_odd<T>(
    start: usize,
    len: usize,
    h: f64,
    zero: T,
    at: &impl Fn(usize) -> T,
    mul: &impl Fn(T, f64) -> T,
    add: &impl Fn(T, T) -> T,
) -> T {
    let mut acc = zero;
    for j in 0..len {
        let w = if j == 0 || j == len - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc = add(acc, mul(at(start + j), w * h / 3.0));
    }
    acc
}

/// Formal accuracy of a central stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum StencilOrder {
    Second,
    #[default]
    Fourth,
    Sixth,
}

impl StencilOrder {
    pub fn value(self) -> u32 {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
            StencilOrder::Sixth => 6,
        }
    }

    pub fn from_value(p: u32) -> Option<Self> {
        match p {
            2 => Some(StencilOrder::Second),
            4 => Some(StencilOrder::Fourth),
            6 => Some(StencilOrder::Sixth),
            _ => None,
        }
    }
}

/// Central-difference weights for the derivative of order `deriv` (1..=3).
///
/// Offsets run from `-m` to `m` with `m = weights.len() / 2`; the derivative is
/// `Σ w_j f(x + (j - m) h) / h^deriv`.
pub fn central_weights(deriv: u32, order: StencilOrder) -> &'static [f64] {
    use StencilOrder::*;
    match (deriv, order) {
        (1, Second) => &[-0.5, 0.0, 0.5],
        (1, Fourth) => &[1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
        (1, Sixth) => &[
            -1.0 / 60.0,
            3.0 / 20.0,
            -3.0 / 4.0,
            0.0,
            3.0 / 4.0,
            -3.0 / 20.0,
            1.0 / 60.0,
        ],
        (2, Second) => &[1.0, -2.0, 1.0],
        (2, Fourth) => &[-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        (2, Sixth) => &[
            1.0 / 90.0,
            -3.0 / 20.0,
            3.0 / 2.0,
            -49.0 / 18.0,
            3.0 / 2.0,
            -3.0 / 20.0,
            1.0 / 90.0,
        ],
        (3, Second) => &[-0.5, 1.0, 0.0, -1.0, 0.5],
        (3, Fourth) => &[1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0],
        (3, Sixth) => &[
            -7.0 / 240.0,
            3.0 / 10.0,
            -169.0 / 120.0,
            61.0 / 30.0,
            0.0,
            -61.0 / 30.0,
            169.0 / 120.0,
            -3.0 / 10.0,
            7.0 / 240.0,
        ],
        _ => panic!("no stencil for derivative order {deriv}"),
    }
}

/// Half-width of the widest stencil used for derivatives up to third order.
pub fn stencil_reach(order: StencilOrder) -> usize {
    central_weights(3, order).len() / 2
}

/// Applies a stencil to samples `f(x0 + j h)` for offsets `j = -m..=m`.
pub fn apply_stencil<T, F>(weights: &[f64], h: f64, deriv: u32, mut sample: F) -> Option<T>
where
    F: FnMut(i64) -> Option<T>,
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let m = (weights.len() / 2) as i64;
    let mut acc: Option<T> = None;
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let term = sample(j as i64 - m)? * w;
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    acc.map(|a| a * h.powi(-(deriv as i32)))
}
