//! Spectral data, its validation, and assembly of the operator pair (A, B).
//!
//! A scenario of N solitons in d×d matrices becomes operators on ℂ^{N·d}:
//! `A = blockdiag(k₁I, …, k_N I)` and `B` with block (m, n) equal to
//! `i/(k_m + k_n) · B_n`. Because every block of A is a scalar, block (m, n)
//! of `AB + BA` collapses to `i·B_n`, which gives the canonical rank-≤d
//! factorization without any numerical decomposition.

use std::fmt;

use thiserror::Error;

use crate::matrix::{mat_mul, numerical_rank, rank_factorization, Complex, ComplexMatrix, Lu};

/// Relative tolerance for the dyad-sum residual check.
pub const FACTORIZATION_TOLERANCE: f64 = 1e-12;

/// Relative tolerance used when deciding the numerical rank of covectors.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Rectangular (x, t) sampling window; both counts include the endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,
}

impl GridSpec {
    pub fn new(x: (f64, f64, usize), t: (f64, f64, usize)) -> Self {
        Self {
            x_min: x.0,
            x_max: x.1,
            nx: x.2,
            t_min: t.0,
            t_max: t.1,
            nt: t.2,
        }
    }

    fn coord(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n <= 1 {
            lo
        } else if i + 1 == n {
            // The last node is the bound itself, bit for bit.
            hi
        } else {
            lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        Self::coord(self.x_min, self.x_max, self.nx, i)
    }

    pub fn t(&self, j: usize) -> f64 {
        Self::coord(self.t_min, self.t_max, self.nt, j)
    }

    pub fn dx(&self) -> f64 {
        if self.nx <= 1 {
            0.0
        } else {
            (self.x_max - self.x_min) / (self.nx - 1) as f64
        }
    }

    pub fn dt(&self) -> f64 {
        if self.nt <= 1 {
            0.0
        } else {
            (self.t_max - self.t_min) / (self.nt - 1) as f64
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let bounds = [self.x_min, self.x_max, self.t_min, self.t_max];
        if bounds.iter().any(|v| !v.is_finite()) {
            out.push("grid bounds must be finite".to_string());
        }
        if self.nx == 0 || self.nt == 0 {
            out.push("grid counts must be at least 1".to_string());
        }
        if self.nx > 1 && self.x_max <= self.x_min {
            out.push("x_max must exceed x_min".to_string());
        }
        if self.nt > 1 && self.t_max <= self.t_min {
            out.push("t_max must exceed t_min".to_string());
        }
        out
    }
}

/// Which evaluation route a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalPath {
    /// Ratios of determinants, literally as in the solution formula.
    Det,
    /// Stabilized resolvent form derived from the determinant lemma.
    #[default]
    Fast,
}

impl fmt::Display for EvalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalPath::Det => "det",
            EvalPath::Fast => "fast",
        })
    }
}

impl std::str::FromStr for EvalPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" => Ok(EvalPath::Det),
            "fast" => Ok(EvalPath::Fast),
            other => Err(format!("unknown evaluation path `{other}` (expected det|fast)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    /// Multiply every spectral matrix by `i` before assembly. With real
    /// weights this is the convention under which the scalar reduction is the
    /// real sech soliton.
    pub imaginary_weights: bool,
    pub path: EvalPath,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            imaginary_weights: false,
            path: EvalPath::Fast,
        }
    }
}

/// One discrete eigenvalue and its spectral matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonEntry {
    pub k: Complex,
    pub weight: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub d: usize,
    pub entries: Vec<SolitonEntry>,
    pub grid: GridSpec,
    pub label: String,
    pub options: ScenarioOptions,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    /// Spectral matrices after the weight convention is applied.
    pub fn effective_weights(&self) -> Vec<ComplexMatrix> {
        let factor = if self.options.imaginary_weights {
            Complex::new(0.0, 1.0)
        } else {
            Complex::new(1.0, 0.0)
        };
        self.entries.iter().map(|e| e.weight.scale(factor)).collect()
    }

    pub fn convention(&self) -> &'static str {
        if self.options.imaginary_weights {
            "imaginary-weights"
        } else {
            "as-written"
        }
    }
}

/// One problem found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    ZeroDimension,
    NoSolitons,
    NonFiniteData { index: usize },
    NonPositiveRealPart { index: usize, k: Complex },
    WeightSizeMismatch { index: usize, rows: usize, cols: usize, d: usize },
    VanishingEigenvalueSum { i: usize, j: usize },
    InvalidGrid(String),
    /// Non-fatal: the covectors d⁽ʲ⁾ are linearly dependent.
    DependentCovectors { rank: usize, d: usize },
}

impl ValidationIssue {
    pub fn code(&self) -> &'static str {
        match self {
            ValidationIssue::ZeroDimension => "E-DIM",
            ValidationIssue::NoSolitons => "E-EMPTY",
            ValidationIssue::NonFiniteData { .. } => "E-NONFINITE",
            ValidationIssue::NonPositiveRealPart { .. } => "E-EIGEN-RE",
            ValidationIssue::WeightSizeMismatch { .. } => "E-SIZE",
            ValidationIssue::VanishingEigenvalueSum { .. } => "E-EIGEN-SUM",
            ValidationIssue::InvalidGrid(_) => "E-GRID",
            ValidationIssue::DependentCovectors { .. } => "W-DEGENERATE",
        }
    }

    pub fn is_fatal(&self) -> bool {
        !matches!(self, ValidationIssue::DependentCovectors { .. })
    }

    /// Index of the soliton entry the issue refers to, if any.
    pub fn entry(&self) -> Option<usize> {
        match *self {
            ValidationIssue::NonFiniteData { index }
            | ValidationIssue::NonPositiveRealPart { index, .. }
            | ValidationIssue::WeightSizeMismatch { index, .. } => Some(index),
            ValidationIssue::VanishingEigenvalueSum { i, .. } => Some(i),
            _ => None,
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] ", self.code())?;
        match self {
            ValidationIssue::ZeroDimension => write!(f, "matrix dimension d must be positive"),
            ValidationIssue::NoSolitons => write!(f, "at least one soliton entry is required"),
            ValidationIssue::NonFiniteData { index } => {
                write!(f, "soliton {index}: non-finite eigenvalue or spectral matrix entry")
            }
            ValidationIssue::NonPositiveRealPart { index, k } => write!(
                f,
                "soliton {index}: eigenvalue real part must be positive (k = {}{:+}i)",
                k.re, k.im
            ),
            ValidationIssue::WeightSizeMismatch { index, rows, cols, d } => write!(
                f,
                "soliton {index}: spectral matrix is {rows}×{cols}, expected {d}×{d}"
            ),
            ValidationIssue::VanishingEigenvalueSum { i, j } => {
                write!(f, "eigenvalues {i} and {j} sum to zero")
            }
            ValidationIssue::InvalidGrid(msg) => write!(f, "grid: {msg}"),
            ValidationIssue::DependentCovectors { rank, d } => write!(
                f,
                "degenerate spectral matrices: covectors d^(j) span rank {rank} < d = {d}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scenario: {}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub issues: Vec<ValidationIssue>,
}

/// A scenario that passed validation, with its non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidScenario {
    pub scenario: Scenario,
    pub warnings: Vec<ValidationIssue>,
}

/// Checks every hypothesis of the construction and reports all violations.
///
/// Linear dependence of the covectors is a warning: the determinant formula
/// stays evaluable and the residual checks decide whether it still solves
/// the equation.
pub fn validate_scenario(s: Scenario) -> Result<ValidScenario, ValidationError> {
    let mut issues = Vec::new();
    if s.d == 0 {
        issues.push(ValidationIssue::ZeroDimension);
    }
    if s.entries.is_empty() {
        issues.push(ValidationIssue::NoSolitons);
    }
    for (index, e) in s.entries.iter().enumerate() {
        if !(e.k.re.is_finite() && e.k.im.is_finite()) || !e.weight.is_finite() {
            issues.push(ValidationIssue::NonFiniteData { index });
        }
        if !(e.k.re > 0.0) {
            issues.push(ValidationIssue::NonPositiveRealPart { index, k: e.k });
        }
        if e.weight.rows() != s.d || e.weight.cols() != s.d {
            issues.push(ValidationIssue::WeightSizeMismatch {
                index,
                rows: e.weight.rows(),
                cols: e.weight.cols(),
                d: s.d,
            });
        }
    }
    for i in 0..s.entries.len() {
        for j in i..s.entries.len() {
            let sum = s.entries[i].k + s.entries[j].k;
            if sum.norm() == 0.0 {
                issues.push(ValidationIssue::VanishingEigenvalueSum { i, j });
            }
        }
    }
    for msg in s.grid.problems() {
        issues.push(ValidationIssue::InvalidGrid(msg));
    }
    if !issues.is_empty() {
        return Err(ValidationError { issues });
    }

    let mut warnings = Vec::new();
    let rank = numerical_rank(&covector_matrix(&s.effective_weights(), s.d), RANK_TOLERANCE);
    if rank < s.d {
        warnings.push(ValidationIssue::DependentCovectors { rank, d: s.d });
    }
    Ok(ValidScenario {
        scenario: s,
        warnings,
    })
}

/// The d×Nd matrix `(iB₁ | iB₂ | … | iB_N)` whose rows are the covectors.
fn covector_matrix(weights: &[ComplexMatrix], d: usize) -> ComplexMatrix {
    let n = weights.len();
    let mut m = ComplexMatrix::zeros(d, n * d);
    let i = Complex::new(0.0, 1.0);
    for (b, w) in weights.iter().enumerate() {
        m.set_block(0, b * d, &w.scale(i));
    }
    m
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorizationError {
    #[error("dyad sum residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("degenerate spectral matrices: covectors span rank {rank} < d = {d}")]
    Degenerate { rank: usize, d: usize },
    #[error("gauge transform is singular")]
    SingularGauge,
    #[error("gauge transform must be {d}×{d}, got {rows}×{cols}")]
    GaugeShape { d: usize, rows: usize, cols: usize },
}

/// `AB + BA = Σⱼ d⁽ʲ⁾ ⊗ c⁽ʲ⁾`, stored as matrices: the columns of `c` are
/// the vectors c⁽ʲ⁾ ∈ ℂ^{Nd}, the rows of `d` the covectors d⁽ʲ⁾.
///
/// The dyad `d ⊗ c` is the map `v ↦ (d·v)·c`, i.e. the matrix `c·dᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadFactorization {
    pub c: ComplexMatrix,
    pub d: ComplexMatrix,
    pub covector_rank: usize,
}

impl DyadFactorization {
    pub fn c_vector(&self, j: usize) -> Vec<Complex> {
        self.c.column(j)
    }

    pub fn d_covector(&self, i: usize) -> &[Complex] {
        self.d.row(i)
    }

    /// `Σⱼ d⁽ʲ⁾ ⊗ c⁽ʲ⁾` as an Nd×Nd matrix.
    pub fn dyad_sum(&self) -> ComplexMatrix {
        mat_mul(&self.c, &self.d).expect("factorization shapes are consistent")
    }

    pub fn is_independent(&self) -> bool {
        self.covector_rank == self.d.rows()
    }

    /// Strict form of the independence hypothesis.
    pub fn require_independent(&self) -> Result<(), FactorizationError> {
        if self.is_independent() {
            Ok(())
        } else {
            Err(FactorizationError::Degenerate {
                rank: self.covector_rank,
                d: self.d.rows(),
            })
        }
    }
}

/// Assembled operators for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorData {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub fact: DyadFactorization,
    pub d: usize,
    pub n: usize,
    /// Discrete eigenvalues k_m.
    pub k: Vec<Complex>,
    /// Spectral matrices after the weight convention.
    pub weights: Vec<ComplexMatrix>,
    pub(crate) reduced: Option<ReducedForm>,
    pub warnings: Vec<ValidationIssue>,
}

/// Rank-compressed form of B used by the stabilized evaluator.
///
/// With `B_n = X_n·Y_n` (full-rank factors of size d×r_n and r_n×d),
/// `B = i·(K⊗I)·blockdiag(X)·blockdiag(Y)` where `K_mn = 1/(k_m + k_n)`.
/// The evaluator works with the R×R core `Ŷ = blockdiag(Y)·(K⊗I)·blockdiag(X)`
/// (R = Σ r_n) instead of the Nd×Nd operator.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ReducedForm {
    /// Soliton index owning each reduced coordinate.
    pub owner: Vec<usize>,
    pub core: ComplexMatrix,
    /// blockdiag(Y), R×Nd.
    pub y: ComplexMatrix,
}

impl OperatorData {
    pub fn nd(&self) -> usize {
        self.n * self.d
    }

    /// Same operators, different dyadic factorization (gauge).
    pub fn with_factorization(&self, fact: DyadFactorization) -> Self {
        Self {
            fact,
            ..self.clone()
        }
    }

    /// Largest |k_m|; sets the narrowest length scale of the solution.
    pub fn max_abs_k(&self) -> f64 {
        self.k.iter().map(|k| k.norm()).fold(0.0, f64::max)
    }

    pub fn min_re_k(&self) -> f64 {
        self.k.iter().map(|k| k.re).fold(f64::INFINITY, f64::min)
    }
}

/// Assembles `A`, `B` and the canonical factorization.
pub fn build_operator_data(s: &Scenario) -> Result<OperatorData, ValidationError> {
    let valid = validate_scenario(s.clone())?;
    Ok(assemble(&valid))
}

pub fn assemble(valid: &ValidScenario) -> OperatorData {
    let s = &valid.scenario;
    let (d, n) = (s.d, s.n());
    let nd = n * d;
    let k: Vec<Complex> = s.entries.iter().map(|e| e.k).collect();
    let weights = s.effective_weights();
    let i = Complex::new(0.0, 1.0);

    let mut a = ComplexMatrix::zeros(nd, nd);
    let mut b = ComplexMatrix::zeros(nd, nd);
    for m in 0..n {
        for r in 0..d {
            a[(m * d + r, m * d + r)] = k[m];
        }
        for (col, w) in weights.iter().enumerate() {
            let factor = i / (k[m] + k[col]);
            b.set_block(m * d, col * d, &w.scale(factor));
        }
    }

    let c = ComplexMatrix::from_fn(nd, d, |row, j| {
        if row % d == j {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        }
    });
    let dcov = covector_matrix(&weights, d);
    let covector_rank = numerical_rank(&dcov, RANK_TOLERANCE);
    let fact = DyadFactorization {
        c,
        d: dcov,
        covector_rank,
    };

    OperatorData {
        reduced: reduce(&k, &weights, d),
        a,
        b,
        fact,
        d,
        n,
        k,
        weights,
        warnings: valid.warnings.clone(),
    }
}

fn reduce(k: &[Complex], weights: &[ComplexMatrix], d: usize) -> Option<ReducedForm> {
    let n = weights.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut owner = Vec::new();
    for (m, w) in weights.iter().enumerate() {
        if let Some((x, y)) = rank_factorization(w, 1e-13) {
            owner.extend(std::iter::repeat_n(m, x.cols()));
            xs.push((m, x));
            ys.push((m, y));
        }
    }
    let r = owner.len();
    if r == 0 {
        return None;
    }
    let mut y_all = ComplexMatrix::zeros(r, n * d);
    let mut row = 0;
    for (m, y) in &ys {
        y_all.set_block(row, m * d, y);
        row += y.rows();
    }
    let mut core = ComplexMatrix::zeros(r, r);
    let (mut r0, mut c0);
    r0 = 0;
    for (m, y) in &ys {
        c0 = 0;
        for (nn, x) in &xs {
            let kmn = Complex::new(1.0, 0.0) / (k[*m] + k[*nn]);
            let blk = mat_mul(y, x).expect("shapes agree").scale(kmn);
            core.set_block(r0, c0, &blk);
            c0 += x.cols();
        }
        r0 += y.rows();
    }
    Some(ReducedForm {
        owner,
        core,
        y: y_all,
    })
}

/// The canonical factorization of `AB + BA`, verified against the
/// assembled operators.
pub fn canonical_factorization(od: &OperatorData) -> Result<DyadFactorization, FactorizationError> {
    let ab = mat_mul(&od.a, &od.b).expect("square operators");
    let ba = mat_mul(&od.b, &od.a).expect("square operators");
    let target = ab.add(&ba).expect("square operators");
    let residual = target
        .sub(&od.fact.dyad_sum())
        .expect("same size")
        .norm_sup();
    let tolerance = FACTORIZATION_TOLERANCE * target.norm_sup();
    if residual > tolerance {
        return Err(FactorizationError::Residual {
            residual,
            tolerance,
        });
    }
    Ok(od.fact.clone())
}

/// Changes basis of the factorization: `c′ = c·T`, `d′ = T⁻¹·d`.
pub fn regauge_factorization(
    f: &DyadFactorization,
    t: &ComplexMatrix,
) -> Result<DyadFactorization, FactorizationError> {
    let d = f.d.rows();
    if t.rows() != d || t.cols() != d {
        return Err(FactorizationError::GaugeShape {
            d,
            rows: t.rows(),
            cols: t.cols(),
        });
    }
    let lu = Lu::factor(t).map_err(|_| FactorizationError::SingularGauge)?;
    let t_inv = lu
        .solve(&ComplexMatrix::identity(d))
        .map_err(|_| FactorizationError::SingularGauge)?;
    Ok(DyadFactorization {
        c: mat_mul(&f.c, t).expect("shapes agree"),
        d: mat_mul(&t_inv, &f.d).expect("shapes agree"),
        covector_rank: f.covector_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn scalar(entries: &[(f64, f64)]) -> Scenario {
        Scenario {
            d: 1,
            entries: entries
                .iter()
                .map(|&(k, b)| SolitonEntry {
                    k: c(k, 0.0),
                    weight: ComplexMatrix::from_real_rows(&[vec![b]]).unwrap(),
                })
                .collect(),
            grid: GridSpec::new((-1.0, 1.0, 3), (0.0, 1.0, 2)),
            label: "test".into(),
            options: ScenarioOptions::default(),
        }
    }

    #[test]
    fn minimal_scalar_is_valid() {
        let v = validate_scenario(scalar(&[(1.0, 1.0)])).unwrap();
        assert!(v.warnings.is_empty());
    }

    #[test]
    fn negative_eigenvalue_rejected_with_message() {
        let err = validate_scenario(scalar(&[(-1.0, 1.0)])).unwrap_err();
        assert_eq!(err.issues.len(), 1);
        assert_eq!(err.issues[0].code(), "E-EIGEN-RE");
        assert!(err.to_string().contains("eigenvalue real part must be positive"));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut s = scalar(&[(-1.0, 1.0), (0.0, 2.0)]);
        s.entries[1].weight = ComplexMatrix::identity(2);
        s.grid.nx = 0;
        let err = validate_scenario(s).unwrap_err();
        let codes: Vec<_> = err.issues.iter().map(|i| i.code()).collect();
        assert!(codes.contains(&"E-EIGEN-RE"));
        assert!(codes.contains(&"E-SIZE"));
        assert!(codes.contains(&"E-GRID"));
        assert_eq!(codes.iter().filter(|&&c| c == "E-EIGEN-RE").count(), 2);
    }

    #[test]
    fn scalar_single_soliton_operators() {
        let od = build_operator_data(&scalar(&[(1.0, 3.0)])).unwrap();
        assert_eq!(od.a[(0, 0)], c(1.0, 0.0));
        assert!((od.b[(0, 0)] - c(0.0, 1.5)).norm() < 1e-15);
        let f = canonical_factorization(&od).unwrap();
        assert_eq!(f.c[(0, 0)], c(1.0, 0.0));
        assert!((f.d[(0, 0)] - c(0.0, 3.0)).norm() < 1e-15);
    }

    #[test]
    fn scalar_two_soliton_operators() {
        let od = build_operator_data(&scalar(&[(1.0, 5.0), (2.0, 7.0)])).unwrap();
        let want = [
            [c(0.0, 5.0 / 2.0), c(0.0, 7.0 / 3.0)],
            [c(0.0, 5.0 / 3.0), c(0.0, 7.0 / 4.0)],
        ];
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                assert!((od.b[(i, j)] - w).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_gauge_is_noop() {
        let od = build_operator_data(&scalar(&[(1.0, 1.0), (2.0, 1.0)])).unwrap();
        let g = regauge_factorization(&od.fact, &ComplexMatrix::identity(1)).unwrap();
        assert_eq!(g, od.fact);
        let doubled = regauge_factorization(&od.fact, &ComplexMatrix::from_diagonal(&[c(2.0, 0.0)])).unwrap();
        assert_eq!(doubled.c, od.fact.c.scale(c(2.0, 0.0)));
        assert!(doubled.dyad_sum().sub(&od.fact.dyad_sum()).unwrap().norm_sup() < 1e-13);
        assert!(matches!(
            regauge_factorization(&od.fact, &ComplexMatrix::zeros(1, 1)),
            Err(FactorizationError::SingularGauge)
        ));
    }

    #[test]
    fn imaginary_convention_multiplies_by_i() {
        let mut s = scalar(&[(1.0, 2.0)]);
        s.options.imaginary_weights = true;
        assert_eq!(s.effective_weights()[0][(0, 0)], c(0.0, 2.0));
    }
}
