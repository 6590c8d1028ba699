//! Dense complex linear algebra for the small operators of the soliton
//! construction (typically at most 12×12).
//!
//! Everything here is a pure function of its inputs. Storage is row-major and
//! dense; there is no attempt at blocking or SIMD since the sizes involved are
//! tiny and the hot loops live in [`crate::eval`].

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

/// Scalar type of every matrix entry.
pub type Complex = Complex64;

/// Pivots below this fraction of the input's largest row sum count as zero.
pub const PIVOT_RELATIVE_THRESHOLD: f64 = 1e-13;

/// Largest real exponent accepted by [`expm`] before reporting overflow.
const EXP_OVERFLOW_LIMIT: f64 = 709.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op} needs a square matrix, got {rows}×{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is numerically singular: pivot magnitude {pivot:e} at step {step}")]
    Singular { step: usize, pivot: f64 },
    #[error("matrix exponential overflows: exponent scale {scale:e}")]
    Overflow { scale: f64 },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("non-finite entry produced by {0}")]
    NonFinite(&'static str),
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}×{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(1.0, 0.0);
        }
        m
    }

    /// Matrix with every entry NaN; used as the placeholder value of masked points.
    pub fn nan(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(f64::NAN, f64::NAN); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::InvalidShape(format!("{rows}×{cols}")));
        }
        if data.len() != rows * cols {
            return Err(MatrixError::InvalidShape(format!(
                "{} entries for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex>]) -> Result<Self, MatrixError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(MatrixError::InvalidShape("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    /// Builds a complex matrix from real row data.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let rows: Vec<Vec<Complex>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| Complex::new(v, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_diagonal(diag: &[Complex]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &z) in diag.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[Complex] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_diagonal(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| i == j || self[(i, j)] == Complex::new(0.0, 0.0))
            })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: Complex) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex) -> Complex) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(Complex, Complex) -> Complex,
    ) -> Result<Self, MatrixError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MatrixError::DimensionMismatch {
                op,
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatrixError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Largest entry modulus.
    pub fn norm_sup(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Copy of the `nr`×`nc` block starting at (`r0`, `c0`).
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, src: &Self) {
        for i in 0..src.rows {
            for j in 0..src.cols {
                self[(r0 + i, c0 + j)] = src[(i, j)];
            }
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Matrix product `a · b`.
pub fn mat_mul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
    if a.cols != b.rows {
        return Err(MatrixError::DimensionMismatch {
            op: "mat_mul",
            left: (a.rows, a.cols),
            right: (b.rows, b.cols),
        });
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == Complex::new(0.0, 0.0) {
                continue;
            }
            for (o, &bkj) in orow.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

fn check_same_square(
    op: &'static str,
    t: &ComplexMatrix,
    s: &ComplexMatrix,
) -> Result<(), MatrixError> {
    if !t.is_square() {
        return Err(MatrixError::NotSquare {
            op,
            rows: t.rows,
            cols: t.cols,
        });
    }
    if t.rows != s.rows || t.cols != s.cols {
        return Err(MatrixError::DimensionMismatch {
            op,
            left: (t.rows, t.cols),
            right: (s.rows, s.cols),
        });
    }
    Ok(())
}

/// `{T, S} = TS + ST`.
pub fn anticommutator(t: &ComplexMatrix, s: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
    check_same_square("anticommutator", t, s)?;
    mat_mul(t, s)?.add(&mat_mul(s, t)?)
}

/// `[T, S] = TS − ST`.
pub fn commutator(t: &ComplexMatrix, s: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
    check_same_square("commutator", t, s)?;
    mat_mul(t, s)?.sub(&mat_mul(s, t)?)
}

/// LU factorization with partial pivoting, `P·A = L·U`.
///
/// Factoring never fails on a square input: exactly-zero pivot columns are
/// skipped so the determinant comes out as zero. Whether a pivot counts as
/// numerically zero is decided against [`PIVOT_RELATIVE_THRESHOLD`] times the
/// largest row sum of the input and recorded in [`Lu::singular_pivot`].
#[derive(Debug, Clone)]
pub struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
    parity: f64,
    row_scale: f64,
    min_pivot: (usize, f64),
}

impl Lu {
    pub fn factor(a: &ComplexMatrix) -> Result<Self, MatrixError> {
        if !a.is_square() {
            return Err(MatrixError::NotSquare {
                op: "lu",
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let row_scale = a.norm_inf();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = 1.0;
        let mut min_pivot = (0, f64::INFINITY);

        for k in 0..n {
            let (mut p, mut best) = (k, lu[(k, k)].norm());
            for i in k + 1..n {
                let v = lu[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < min_pivot.1 {
                min_pivot = (k, best);
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                parity = -parity;
            }
            if best == 0.0 {
                continue;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let m = lu[(i, k)] / pivot;
                lu[(i, k)] = m;
                if m == Complex::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..n {
                    let ukj = lu[(k, j)];
                    lu[(i, j)] -= m * ukj;
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            parity,
            row_scale,
            min_pivot,
        })
    }

    pub fn size(&self) -> usize {
        self.lu.rows
    }

    pub fn det(&self) -> Complex {
        let n = self.lu.rows;
        (0..n).map(|i| self.lu[(i, i)]).product::<Complex>() * self.parity
    }

    /// Step and magnitude of the smallest pivot when it falls below the
    /// relative threshold.
    pub fn singular_pivot(&self) -> Option<(usize, f64)> {
        let threshold = PIVOT_RELATIVE_THRESHOLD * self.row_scale;
        (self.min_pivot.1 < threshold || self.min_pivot.1 == 0.0).then_some(self.min_pivot)
    }

    pub fn is_singular(&self) -> bool {
        self.singular_pivot().is_some()
    }

    /// Solves `A·X = rhs`, rejecting numerically singular factorizations.
    pub fn solve(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
        if let Some((step, pivot)) = self.singular_pivot() {
            return Err(MatrixError::Singular { step, pivot });
        }
        self.solve_unguarded(rhs)
    }

    /// Solves `A·X = rhs` without the relative pivot guard; only an exactly
    /// zero pivot is an error. Callers that decide singularity by their own
    /// criterion (graded matrices whose rows differ by many orders of
    /// magnitude) use this.
    pub fn solve_unguarded(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
        let n = self.lu.rows;
        if rhs.rows != n {
            return Err(MatrixError::DimensionMismatch {
                op: "lu_solve",
                left: (n, n),
                right: (rhs.rows, rhs.cols),
            });
        }
        if self.min_pivot.1 == 0.0 {
            return Err(MatrixError::Singular {
                step: self.min_pivot.0,
                pivot: 0.0,
            });
        }
        let m = rhs.cols;
        let mut x = ComplexMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            for j in 0..m {
                x[(i, j)] = rhs[(p, j)];
            }
        }
        for j in 0..m {
            for i in 1..n {
                let mut acc = x[(i, j)];
                for k in 0..i {
                    acc -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, j)];
                for k in i + 1..n {
                    acc -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = acc / self.lu[(i, i)];
            }
        }
        if !x.is_finite() {
            return Err(MatrixError::NonFinite("lu_solve"));
        }
        Ok(x)
    }
}

/// Result of [`lu_det_solve`].
#[derive(Debug, Clone)]
pub struct DetSolve {
    pub det: Complex,
    /// Set when a pivot fell below the relative threshold; `det` is then
    /// a numerically-zero value rather than an error.
    pub singular: bool,
    pub solution: Option<ComplexMatrix>,
}

/// Determinant by partial-pivot LU, optionally solving `a·X = rhs`.
pub fn lu_det_solve(
    a: &ComplexMatrix,
    rhs: Option<&ComplexMatrix>,
) -> Result<DetSolve, MatrixError> {
    let lu = Lu::factor(a)?;
    let solution = rhs.map(|b| lu.solve(b)).transpose()?;
    Ok(DetSolve {
        det: lu.det(),
        singular: lu.is_singular(),
        solution,
    })
}

pub fn det(a: &ComplexMatrix) -> Result<Complex, MatrixError> {
    Ok(Lu::factor(a)?.det())
}

/// Determinant normalized by the Hadamard bound, `|det A| / Π‖row_i‖₂`.
///
/// The ratio lies in `[0, 1]`, is invariant under row scaling and equals one
/// exactly for matrices with orthogonal rows, which makes it a usable
/// singularity measure for graded matrices.
pub fn hadamard_ratio(a: &ComplexMatrix, det: Complex) -> f64 {
    let mut log_bound = 0.0;
    for i in 0..a.rows {
        let r = a.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if r == 0.0 {
            return 0.0;
        }
        log_bound += r.ln();
    }
    let m = det.norm();
    if m == 0.0 {
        return 0.0;
    }
    (m.ln() - log_bound).exp().min(1.0)
}

const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Matrix exponential.
///
/// Diagonal inputs (the block-scalar operators of the soliton construction)
/// are exponentiated entrywise; everything else goes through [`expm_pade`].
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
    if !a.is_square() {
        return Err(MatrixError::NotSquare {
            op: "expm",
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.is_diagonal() {
        let n = a.rows;
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let z = a[(i, i)];
            if z.re > EXP_OVERFLOW_LIMIT {
                return Err(MatrixError::Overflow { scale: z.re });
            }
            diag.push(z.exp());
        }
        return Ok(ComplexMatrix::from_diagonal(&diag));
    }
    expm_pade(a)
}

/// Scaling and squaring with the diagonal (6,6) Padé approximant; the
/// scaled matrix has 1-norm at most 0.5.
pub fn expm_pade(a: &ComplexMatrix) -> Result<ComplexMatrix, MatrixError> {
    if !a.is_square() {
        return Err(MatrixError::NotSquare {
            op: "expm",
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let norm = a.norm_one();
    if !norm.is_finite() {
        return Err(MatrixError::NonFinite("expm"));
    }
    if norm > EXP_OVERFLOW_LIMIT {
        // The spectral abscissa may still be small; only report overflow if
        // the result actually blows up.
        log_scale_guard(a)?;
    }
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(Complex::new(0.5f64.powi(squarings), 0.0));

    let ident = ComplexMatrix::identity(n);
    let mut power = ident.clone();
    let mut num = ident.clone();
    let mut den = ident;
    for (k, &c) in PADE6.iter().enumerate().skip(1) {
        power = mat_mul(&power, &scaled)?;
        let term = power.scale(Complex::new(c, 0.0));
        num = num.add(&term)?;
        den = if k % 2 == 0 {
            den.add(&term)?
        } else {
            den.sub(&term)?
        };
    }
    let mut r = Lu::factor(&den)?.solve(&num)?;
    for _ in 0..squarings {
        r = mat_mul(&r, &r)?;
        if !r.is_finite() {
            return Err(MatrixError::Overflow { scale: norm });
        }
    }
    Ok(r)
}

fn log_scale_guard(a: &ComplexMatrix) -> Result<(), MatrixError> {
    // Gershgorin bound on the largest real part of the spectrum.
    let bound = (0..a.rows)
        .map(|i| {
            let off: f64 = (0..a.cols)
                .filter(|&j| j != i)
                .map(|j| a[(i, j)].norm())
                .sum();
            a[(i, i)].re + off
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if bound > EXP_OVERFLOW_LIMIT {
        return Err(MatrixError::Overflow { scale: bound });
    }
    Ok(())
}

/// Rank-revealing elimination with complete pivoting.
///
/// Returns `(X, Y)` with `a ≈ X·Y`, `X` of size rows×r with full column rank
/// and `Y` of size r×cols with full row rank, where r is the numerical rank:
/// elimination stops once the largest remaining entry is below
/// `rel_tol · max|a_ij|`. A zero matrix yields `None`.
pub fn rank_factorization(
    a: &ComplexMatrix,
    rel_tol: f64,
) -> Option<(ComplexMatrix, ComplexMatrix)> {
    let (m, n) = (a.rows, a.cols);
    let scale = a.norm_sup();
    if scale == 0.0 {
        return None;
    }
    let tol = rel_tol * scale;
    let mut w = a.clone();
    let mut rp: Vec<usize> = (0..m).collect();
    let mut cp: Vec<usize> = (0..n).collect();
    let mut r = 0;
    while r < m.min(n) {
        let (mut bi, mut bj, mut best) = (r, r, 0.0);
        for i in r..m {
            for j in r..n {
                let v = w[(i, j)].norm();
                if v > best {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if best <= tol {
            break;
        }
        if bi != r {
            for j in 0..n {
                w.data.swap(r * n + j, bi * n + j);
            }
            rp.swap(r, bi);
        }
        if bj != r {
            for i in 0..m {
                w.data.swap(i * n + r, i * n + bj);
            }
            cp.swap(r, bj);
        }
        let pivot = w[(r, r)];
        for i in r + 1..m {
            let f = w[(i, r)] / pivot;
            w[(i, r)] = f;
            for j in r + 1..n {
                let wrj = w[(r, j)];
                w[(i, j)] -= f * wrj;
            }
        }
        r += 1;
    }
    // P·a·Q = L·U, so a = Pᵀ·L · U·Qᵀ.
    let mut x = ComplexMatrix::zeros(m, r);
    for i in 0..m {
        for k in 0..r {
            let v = match i.cmp(&k) {
                std::cmp::Ordering::Equal => Complex::new(1.0, 0.0),
                std::cmp::Ordering::Greater => w[(i, k)],
                std::cmp::Ordering::Less => Complex::new(0.0, 0.0),
            };
            x[(rp[i], k)] = v;
        }
    }
    let mut y = ComplexMatrix::zeros(r, n);
    for k in 0..r {
        for j in k..n {
            y[(k, cp[j])] = w[(k, j)];
        }
    }
    Some((x, y))
}

/// Numerical rank via [`rank_factorization`].
pub fn numerical_rank(a: &ComplexMatrix, rel_tol: f64) -> usize {
    rank_factorization(a, rel_tol).map_or(0, |(x, _)| x.cols)
}

/// Solves `z·Y = v` for a full-row-rank `Y` (r×n, r ≤ n) in the least-norm
/// sense restricted to the row space: returns `None` when `v` is not in the
/// row space of `Y` to relative accuracy `rel_tol`.
pub fn solve_row_space(y: &ComplexMatrix, v: &[Complex], rel_tol: f64) -> Option<Vec<Complex>> {
    let (r, n) = (y.rows, y.cols);
    debug_assert_eq!(v.len(), n);
    // Normal equations z·(Y·Yᴴ) = v·Yᴴ; Y has full row rank so Y·Yᴴ is SPD.
    let yh = ComplexMatrix::from_fn(n, r, |i, j| y[(j, i)].conj());
    let gram = mat_mul(y, &yh).ok()?;
    let vrow = ComplexMatrix::from_vec(1, n, v.to_vec()).ok()?;
    let rhs = mat_mul(&vrow, &yh).ok()?;
    // Solve Gramᵀ zᵀ = rhsᵀ.
    let z = Lu::factor(&gram.transpose()).ok()?.solve(&rhs.transpose()).ok()?;
    let zrow = z.transpose();
    let back = mat_mul(&zrow, y).ok()?;
    let vnorm = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let err = back
        .as_slice()
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if err > rel_tol * vnorm.max(y.norm_sup()).max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(zrow.as_slice().to_vec())
}
