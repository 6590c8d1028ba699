//! Finite-difference certification of the mKdV solution and its Miura (KdV)
//! and potential (pKdV) images.
//!
//! Every stencil node is a fresh exact evaluation; nothing is interpolated
//! from stored grids. Steps are dimensionless: with `κ = max(1, max|k_m|)` the
//! x-step is `h/κ` and the t-step `h/κ³`, so a given `h` resolves every
//! scenario's fastest soliton equally well.

use rayon::prelude::*;

use crate::eval::{EvalError, EvalPoint, FastEvaluator, MaskReason};
use crate::matrix::{anticommutator, mat_mul, Complex, ComplexMatrix, MatrixError};
use crate::quadrature::{central_weights, simpson_matrix, StencilOrder};
use crate::spectral::{EvalPath, OperatorData};

pub const DEFAULT_STEP: f64 = 1e-2;

/// Simpson step of the potential quadrature (in units of `1/κ`).
pub const DEFAULT_QUADRATURE_STEP: f64 = 1e-3;

/// Simpson step inside the pKdV check. Its quadrature error in W is
/// `O(step⁴)`, about 1e-9 here, far below the residual tolerance.
pub const PKDV_QUADRATURE_STEP: f64 = 1e-2;

/// `‖U(x_cut, t)‖` must fall below this for the potential's lower limit.
pub const DECAY_THRESHOLD: f64 = 1e-10;

const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, thiserror::Error)]
pub enum VerifyError {
    #[error("stencil crosses singularity at x = {x}, t = {t}: {reason:?}")]
    StencilCrossesSingularity { x: f64, t: f64, reason: MaskReason },
    #[error("x_cut = {x_cut} is not in the decay region at t = {t}: ‖U‖ = {norm:e}")]
    NotDecayed { x_cut: f64, t: f64, norm: f64 },
    #[error("no decay region found left of x = {x} at t = {t}")]
    NoDecayRegion { x: f64, t: f64 },
    #[error("all sample points are masked")]
    AllMasked,
    #[error("convergence study needs at least two step sizes")]
    TooFewSteps,
    #[error("invalid stencil: {0}")]
    InvalidStencil(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

impl VerifyError {
    /// True when the failure is a masked node rather than a numerical fault.
    pub fn is_masked(&self) -> bool {
        matches!(self, VerifyError::StencilCrossesSingularity { .. })
    }
}

fn from_eval(e: EvalError, x: f64, t: f64) -> VerifyError {
    match e.mask_reason() {
        Some(reason) => VerifyError::StencilCrossesSingularity { x, t, reason },
        None => match e {
            EvalError::Matrix(m) => VerifyError::Matrix(m),
            _ => unreachable!("non-matrix evaluation errors carry a mask reason"),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilSpec {
    pub h: f64,
    pub order: StencilOrder,
    /// Combine steps `h` and `h/2` to cancel the leading truncation term.
    pub richardson: bool,
}

impl Default for StencilSpec {
    fn default() -> Self {
        Self {
            h: DEFAULT_STEP,
            order: StencilOrder::Fourth,
            richardson: false,
        }
    }
}

impl StencilSpec {
    pub fn new(h: f64, order: StencilOrder) -> Self {
        Self {
            h,
            order,
            richardson: false,
        }
    }

    pub fn with_step(self, h: f64) -> Self {
        Self { h, ..self }
    }

    pub fn validate(&self) -> Result<(), VerifyError> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(VerifyError::InvalidStencil(format!(
                "step must be positive, got {}",
                self.h
            )));
        }
        Ok(())
    }

    /// Effective order of the combined derivative estimate.
    pub fn effective_order(&self) -> u32 {
        self.order.value() + if self.richardson { 2 } else { 0 }
    }
}

/// A pure, thread-safe source of d×d samples of a field.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;

    fn sample(&self, x: f64, t: f64) -> Result<ComplexMatrix, VerifyError>;

    /// Characteristic wavenumber `κ ≥ 1` used to scale stencil steps.
    fn scale(&self) -> f64 {
        1.0
    }
}

/// Exact samples of V from the soliton formula.
pub struct SolutionSampler<'a> {
    od: &'a OperatorData,
    path: EvalPath,
    fast: FastEvaluator<'a>,
}

impl<'a> SolutionSampler<'a> {
    pub fn new(od: &'a OperatorData, path: EvalPath) -> Self {
        Self {
            od,
            path,
            fast: FastEvaluator::new(od),
        }
    }

    pub fn operator_data(&self) -> &OperatorData {
        self.od
    }
}

impl Sampler for SolutionSampler<'_> {
    fn dim(&self) -> usize {
        self.od.d
    }

    fn sample(&self, x: f64, t: f64) -> Result<ComplexMatrix, VerifyError> {
        let p = EvalPoint::new(x, t);
        let v = match self.path {
            EvalPath::Fast => self.fast.evaluate(p),
            EvalPath::Det => crate::eval::evaluate_point_det(self.od, p),
        };
        v.map_err(|e| from_eval(e, x, t))
    }

    fn scale(&self) -> f64 {
        self.od.max_abs_k().max(1.0)
    }
}

/// A sampler backed by a closure; used for synthetic and perturbed fields.
pub struct FnSampler<F> {
    dim: usize,
    scale: f64,
    f: F,
}

impl<F> FnSampler<F>
where
    F: Fn(f64, f64) -> Result<ComplexMatrix, VerifyError> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, scale: 1.0, f }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale.max(1.0);
        self
    }
}

impl<F> Sampler for FnSampler<F>
where
    F: Fn(f64, f64) -> Result<ComplexMatrix, VerifyError> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, x: f64, t: f64) -> Result<ComplexMatrix, VerifyError> {
        (self.f)(x, t)
    }

    fn scale(&self) -> f64 {
        self.scale
    }
}

/// The identically zero d×d field.
pub fn zero_sampler(d: usize) -> impl Sampler {
    FnSampler::new(d, move |_, _| Ok(ComplexMatrix::zeros(d, d)))
}

/// `factor · inner`, a detector-sensitivity probe.
pub struct ScaledSampler<'a, S: ?Sized> {
    pub inner: &'a S,
    pub factor: f64,
}

impl<S: Sampler + ?Sized> Sampler for ScaledSampler<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample(&self, x: f64, t: f64) -> Result<ComplexMatrix, VerifyError> {
        Ok(self
            .inner
            .sample(x, t)?
            .scale(Complex::new(self.factor, 0.0)))
    }

    fn scale(&self) -> f64 {
        self.inner.scale()
    }
}

/// Steps actually used along x and t.
pub fn effective_steps(sampler: &(impl Sampler + ?Sized), s: &StencilSpec) -> (f64, f64) {
    let kappa = sampler.scale().max(1.0);
    (s.h / kappa, s.h / kappa.powi(3))
}

/// V and its stencil derivatives at one point.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub v: ComplexMatrix,
    pub vx: ComplexMatrix,
    pub vxx: ComplexMatrix,
    pub vxxx: ComplexMatrix,
    pub vt: ComplexMatrix,
}

fn combine(samples: &[ComplexMatrix], weights: &[f64], inv_scale: f64) -> ComplexMatrix {
    let (r, c) = (samples[0].rows(), samples[0].cols());
    let mut acc = ComplexMatrix::zeros(r, c);
    let m = weights.len() / 2;
    let center = samples.len() / 2;
    let antisymmetric = (0..=m).all(|j| weights[j] == -weights[2 * m - j]);
    // Both forms are exact on constants: weights sum to zero.
    for j in 0..weights.len() {
        let w = weights[j];
        if w == 0.0 || j == m || (antisymmetric && j < m) {
            continue;
        }
        let s = samples[center + j - m].as_slice();
        let base = if antisymmetric {
            samples[center + m - j].as_slice()
        } else {
            samples[center].as_slice()
        };
        for ((a, b), z) in acc.as_mut_slice().iter_mut().zip(s).zip(base) {
            *a += (b - z) * w;
        }
    }
    acc.scale(Complex::new(inv_scale, 0.0))
}

fn raw_derivatives(
    f: &(impl Sampler + ?Sized),
    p: EvalPoint,
    order: StencilOrder,
    (hx, ht): (f64, f64),
    max_deriv: u32,
    need_t: bool,
) -> Result<Derivatives, VerifyError> {
    let reach = (1..=max_deriv)
        .map(|k| central_weights(k, order).len() / 2)
        .max()
        .unwrap_or(0) as i64;
    let xs: Vec<ComplexMatrix> = (-reach..=reach)
        .map(|j| f.sample(p.x + j as f64 * hx, p.t))
        .collect::<Result<_, _>>()?;
    let v = xs[reach as usize].clone();
    let zero = || ComplexMatrix::zeros(v.rows(), v.cols());
    let deriv = |k: u32| {
        if k <= max_deriv {
            combine(&xs, central_weights(k, order), hx.powi(-(k as i32)))
        } else {
            zero()
        }
    };
    let (vx, vxx, vxxx) = (deriv(1), deriv(2), deriv(3));
    let vt = if need_t {
        time_stencil(f, p, order, ht, Some(&v))?
    } else {
        zero()
    };
    Ok(Derivatives {
        v,
        vx,
        vxx,
        vxxx,
        vt,
    })
}

/// First t-derivative; the centre node is skipped when its weight is zero.
fn time_stencil(
    f: &(impl Sampler + ?Sized),
    p: EvalPoint,
    order: StencilOrder,
    ht: f64,
    centre: Option<&ComplexMatrix>,
) -> Result<ComplexMatrix, VerifyError> {
    let w1 = central_weights(1, order);
    let m = (w1.len() / 2) as i64;
    let ts: Vec<ComplexMatrix> = (-m..=m)
        .map(|j| match (j, centre) {
            (0, Some(c)) => Ok(c.clone()),
            (0, None) => Ok(ComplexMatrix::zeros(f.dim(), f.dim())),
            _ => f.sample(p.x, p.t + j as f64 * ht),
        })
        .collect::<Result<_, _>>()?;
    Ok(combine(&ts, w1, 1.0 / ht))
}

fn richardson_mix(coarse: &ComplexMatrix, fine: &ComplexMatrix, p: u32) -> ComplexMatrix {
    let f = f64::from(1u32 << p);
    fine.scale(Complex::new(f / (f - 1.0), 0.0))
        .sub(&coarse.scale(Complex::new(1.0 / (f - 1.0), 0.0)))
        .expect("same shape")
}

fn derivatives_with(
    f: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
    max_deriv: u32,
    need_t: bool,
) -> Result<Derivatives, VerifyError> {
    s.validate()?;
    let (hx, ht) = effective_steps(f, s);
    let coarse = raw_derivatives(f, p, s.order, (hx, ht), max_deriv, need_t)?;
    if !s.richardson {
        return Ok(coarse);
    }
    let fine = raw_derivatives(f, p, s.order, (hx / 2.0, ht / 2.0), max_deriv, need_t)?;
    let q = s.order.value();
    Ok(Derivatives {
        v: fine.v.clone(),
        vx: richardson_mix(&coarse.vx, &fine.vx, q),
        vxx: richardson_mix(&coarse.vxx, &fine.vxx, q),
        vxxx: richardson_mix(&coarse.vxxx, &fine.vxxx, q),
        vt: richardson_mix(&coarse.vt, &fine.vt, q),
    })
}

/// `(V, V_x, V_xx, V_xxx, V_t)` by central differences of fresh samples.
pub fn sample_derivatives(
    f: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
) -> Result<Derivatives, VerifyError> {
    derivatives_with(f, p, s, 3, true)
}

/// `V_t − V_xxx − 3{V², V_x}`.
pub fn mkdv_residual(
    f: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
) -> Result<ComplexMatrix, VerifyError> {
    let dv = sample_derivatives(f, p, s)?;
    let v2 = mat_mul(&dv.v, &dv.v)?;
    let nonlinear = anticommutator(&v2, &dv.vx)?.scale(Complex::new(3.0, 0.0));
    Ok(dv.vt.sub(&dv.vxxx)?.sub(&nonlinear)?)
}

/// Miura image `U = sign·i·V_x + V²` at one point.
pub fn miura_map(
    f: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
    sign: i8,
) -> Result<ComplexMatrix, VerifyError> {
    let dv = derivatives_with(f, p, s, 1, false)?;
    miura_from(&dv, sign)
}

fn miura_from(dv: &Derivatives, sign: i8) -> Result<ComplexMatrix, VerifyError> {
    let lin = dv.vx.scale(Complex::new(0.0, f64::from(sign.signum())));
    Ok(lin.add(&mat_mul(&dv.v, &dv.v)?)?)
}

/// U as a field in its own right, so KdV derivatives re-sample the map.
pub struct MiuraSampler<'a, S: ?Sized> {
    pub inner: &'a S,
    pub stencil: StencilSpec,
    pub sign: i8,
}

impl<'a, S: Sampler + ?Sized> MiuraSampler<'a, S> {
    pub fn new(inner: &'a S, stencil: StencilSpec, sign: i8) -> Self {
        Self {
            inner,
            stencil,
            sign,
        }
    }
}

impl<S: Sampler + ?Sized> Sampler for MiuraSampler<'_, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample(&self, x: f64, t: f64) -> Result<ComplexMatrix, VerifyError> {
        miura_map(self.inner, EvalPoint::new(x, t), &self.stencil, self.sign)
    }

    fn scale(&self) -> f64 {
        self.inner.scale()
    }
}

/// `U_t − U_xxx − 3{U, U_x}`.
pub fn kdv_residual(
    u: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
) -> Result<ComplexMatrix, VerifyError> {
    let du = sample_derivatives(u, p, s)?;
    let nonlinear = anticommutator(&du.v, &du.vx)?.scale(Complex::new(3.0, 0.0));
    Ok(du.vt.sub(&du.vxxx)?.sub(&nonlinear)?)
}

/// `W(x, t) = ∫_{x_cut}^{x} U(s, t) ds` by composite Simpson.
///
/// `step` is the nominal Simpson spacing; the interval is split into an even
/// number of panels no wider than it.
pub fn potential_map(
    u: &(impl Sampler + ?Sized),
    t: f64,
    x_cut: f64,
    x: f64,
    step: f64,
) -> Result<ComplexMatrix, VerifyError> {
    let d = u.dim();
    let tail = u.sample(x_cut, t)?.norm_fro();
    if !(tail < DECAY_THRESHOLD) {
        return Err(VerifyError::NotDecayed {
            x_cut,
            t,
            norm: tail,
        });
    }
    let span = x - x_cut;
    if span == 0.0 {
        return Ok(ComplexMatrix::zeros(d, d));
    }
    let mut panels = (span.abs() / step).ceil().max(2.0) as usize;
    panels += panels % 2;
    let h = span / panels as f64;
    let samples: Vec<ComplexMatrix> = (0..=panels)
        .into_par_iter()
        .map(|j| u.sample(x_cut + j as f64 * h, t))
        .collect::<Result<_, _>>()?;
    Ok(simpson_matrix(&samples, h).expect("at least three samples"))
}

/// Walks left from `x` in unit steps (scaled by `1/κ`) until `‖U‖` is below
/// [`DECAY_THRESHOLD`] at every `t` in `ts`.
pub fn find_decay_cut(
    u: &(impl Sampler + ?Sized),
    x: f64,
    ts: &[f64],
) -> Result<f64, VerifyError> {
    let dx = 1.0 / u.scale();
    let t0 = ts.first().copied().unwrap_or(0.0);
    for n in 1..=400 {
        let xc = x - n as f64 * dx;
        let mut ok = true;
        for &t in ts {
            match u.sample(xc, t) {
                Ok(m) if m.norm_fro() < DECAY_THRESHOLD * 1e-2 => {}
                Ok(_) => ok = false,
                Err(e) if e.is_masked() => ok = false,
                Err(e) => return Err(e),
            }
        }
        if ok {
            return Ok(xc);
        }
    }
    Err(VerifyError::NoDecayRegion { x, t: t0 })
}

/// W as a field with a fixed lower limit.
pub struct PotentialSampler<'a, S: ?Sized> {
    pub u: &'a S,
    pub x_cut: f64,
    pub step: f64,
}

impl<S: Sampler + ?Sized> Sampler for PotentialSampler<'_, S> {
    fn dim(&self) -> usize {
        self.u.dim()
    }

    fn sample(&self, x: f64, t: f64) -> Result<ComplexMatrix, VerifyError> {
        potential_map(self.u, t, self.x_cut, x, self.step)
    }

    fn scale(&self) -> f64 {
        self.u.scale()
    }
}

/// `W_t − W_xxx − 3W_x²` with `W_x = U`, `W_xxx = U_xx` and `W_t` from a
/// t-stencil of the quadrature. The lower limit is chosen in the decay region
/// left of `p` for every t-node.
pub fn pkdv_residual(
    u: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
) -> Result<ComplexMatrix, VerifyError> {
    let (_, ht) = effective_steps(u, s);
    let reach = central_weights(1, s.order).len() / 2;
    let ts: Vec<f64> = (-(reach as i64)..=reach as i64)
        .map(|j| p.t + j as f64 * ht)
        .collect();
    let x_cut = find_decay_cut(u, p.x, &ts)?;
    let w = PotentialSampler {
        u,
        x_cut,
        step: PKDV_QUADRATURE_STEP / u.scale(),
    };
    pkdv_residual_with(u, &w, p, s)
}

/// pKdV residual with an explicit potential field `w` whose x-derivative is `u`.
pub fn pkdv_residual_with(
    u: &(impl Sampler + ?Sized),
    w: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
) -> Result<ComplexMatrix, VerifyError> {
    let du = derivatives_with(u, p, s, 2, false)?;
    let wt = time_derivative(w, p, s)?;
    let wx2 = mat_mul(&du.v, &du.v)?.scale(Complex::new(3.0, 0.0));
    Ok(wt.sub(&du.vxx)?.sub(&wx2)?)
}

fn time_derivative(
    w: &(impl Sampler + ?Sized),
    p: EvalPoint,
    s: &StencilSpec,
) -> Result<ComplexMatrix, VerifyError> {
    let (_, ht) = effective_steps(w, s);
    let coarse = time_stencil(w, p, s.order, ht, None)?;
    if s.richardson {
        let fine = time_stencil(w, p, s.order, ht / 2.0, None)?;
        Ok(richardson_mix(&coarse, &fine, s.order.value()))
    } else {
        Ok(coarse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Equation {
    Mkdv,
    Kdv,
    Pkdv,
}

impl Equation {
    pub fn tag(self) -> &'static str {
        match self {
            Equation::Mkdv => "mkdv",
            Equation::Kdv => "kdv",
            Equation::Pkdv => "pkdv",
        }
    }
}

impl std::fmt::Display for Equation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// A pointwise residual operator over a fixed field.
pub trait ResidualOp: Sync {
    fn equation(&self) -> Equation;

    fn residual(&self, p: EvalPoint, s: &StencilSpec) -> Result<ComplexMatrix, VerifyError>;

    /// Estimated rounding contribution to the residual at `p` for step `s`.
    fn roundoff_floor(&self, p: EvalPoint, s: &StencilSpec) -> f64;
}

/// Sum of |weights| of the highest-derivative stencil divided by its step power.
fn amplification(s: &StencilSpec, hx: f64, ht: f64) -> f64 {
    let w3: f64 = central_weights(3, s.order).iter().map(|w| w.abs()).sum();
    let w1: f64 = central_weights(1, s.order).iter().map(|w| w.abs()).sum();
    w3 / hx.powi(3) + w1 / ht
}

fn magnitude(f: &(impl Sampler + ?Sized), p: EvalPoint) -> f64 {
    f.sample(p.x, p.t).map(|m| m.norm_sup()).unwrap_or(0.0)
}

pub struct MkdvOp<'a, S: ?Sized>(pub &'a S);

impl<S: Sampler + ?Sized> ResidualOp for MkdvOp<'_, S> {
    fn equation(&self) -> Equation {
        Equation::Mkdv
    }

    fn residual(&self, p: EvalPoint, s: &StencilSpec) -> Result<ComplexMatrix, VerifyError> {
        mkdv_residual(self.0, p, s)
    }

    fn roundoff_floor(&self, p: EvalPoint, s: &StencilSpec) -> f64 {
        let (hx, ht) = effective_steps(self.0, s);
        EPS * magnitude(self.0, p).max(EPS) * amplification(s, hx, ht)
    }
}

/// KdV residual of the Miura image of `inner` under the given sign.
pub struct KdvOp<'a, S: ?Sized> {
    pub inner: &'a S,
    pub sign: i8,
}

impl<S: Sampler + ?Sized> ResidualOp for KdvOp<'_, S> {
    fn equation(&self) -> Equation {
        Equation::Kdv
    }

    fn residual(&self, p: EvalPoint, s: &StencilSpec) -> Result<ComplexMatrix, VerifyError> {
        let u = MiuraSampler::new(self.inner, *s, self.sign);
        kdv_residual(&u, p, s)
    }

    fn roundoff_floor(&self, p: EvalPoint, s: &StencilSpec) -> f64 {
        // The inner first difference adds one more factor of 1/h_x.
        let (hx, ht) = effective_steps(self.inner, s);
        let w1: f64 = central_weights(1, s.order).iter().map(|w| w.abs()).sum();
        EPS * magnitude(self.inner, p).max(EPS) * amplification(s, hx, ht) * (1.0 + w1 / hx)
    }
}

/// pKdV residual of the quadrature potential of the Miura image.
pub struct PkdvOp<'a, S: ?Sized> {
    pub inner: &'a S,
    pub sign: i8,
}

impl<S: Sampler + ?Sized> ResidualOp for PkdvOp<'_, S> {
    fn equation(&self) -> Equation {
        Equation::Pkdv
    }

    fn residual(&self, p: EvalPoint, s: &StencilSpec) -> Result<ComplexMatrix, VerifyError> {
        let u = MiuraSampler::new(self.inner, *s, self.sign);
        pkdv_residual(&u, p, s)
    }

    fn roundoff_floor(&self, p: EvalPoint, s: &StencilSpec) -> f64 {
        let (hx, ht) = effective_steps(self.inner, s);
        let w1: f64 = central_weights(1, s.order).iter().map(|w| w.abs()).sum();
        EPS * magnitude(self.inner, p).max(EPS) * (w1 / ht + 1.0 / (hx * hx * hx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub equation: Equation,
    pub h: f64,
    pub samples: usize,
    /// Points skipped because a stencil node was masked.
    pub skipped: usize,
    pub sup: f64,
    pub rms: f64,
    pub worst: Option<EvalPoint>,
    /// Largest estimated rounding floor over the sampled points.
    pub floor: f64,
    /// Fitted log-log slope; present only after a multi-step study.
    pub order_estimate: Option<f64>,
    pub roundoff_limited: bool,
}

/// Residual sup-norm and rounding floor per point; `None` marks a masked stencil.
type PointResults = Vec<Result<Option<(f64, f64)>, VerifyError>>;

fn evaluate_points(op: &(impl ResidualOp + ?Sized), points: &[EvalPoint], s: &StencilSpec) -> PointResults {
    points
        .par_iter()
        .map(|&p| match op.residual(p, s) {
            Ok(r) => Ok(Some((r.norm_sup(), op.roundoff_floor(p, s)))),
            Err(e) if e.is_masked() => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn summarize(
    equation: Equation,
    h: f64,
    points: &[EvalPoint],
    results: PointResults,
) -> Result<ResidualReport, VerifyError> {
    let mut sup = 0.0f64;
    let mut sq = 0.0f64;
    let mut floor = 0.0f64;
    let mut worst = None;
    let mut samples = 0;
    let mut skipped = 0;
    for (p, r) in points.iter().zip(results) {
        match r? {
            Some((n, fl)) => {
                samples += 1;
                sq += n * n;
                floor = floor.max(fl);
                if worst.is_none() || n > sup {
                    sup = n;
                    worst = Some(*p);
                }
            }
            None => skipped += 1,
        }
    }
    if samples == 0 {
        return Err(VerifyError::AllMasked);
    }
    Ok(ResidualReport {
        equation,
        h,
        samples,
        skipped,
        sup,
        rms: (sq / samples as f64).sqrt(),
        worst,
        floor,
        order_estimate: None,
        roundoff_limited: false,
    })
}

/// Residual statistics at fixed step over `points`. Masked stencils are
/// skipped; other failures propagate.
pub fn residual_report(
    op: &(impl ResidualOp + ?Sized),
    points: &[EvalPoint],
    s: &StencilSpec,
) -> Result<ResidualReport, VerifyError> {
    summarize(op.equation(), s.h, points, evaluate_points(op, points, s))
}

/// Rounding noise of the residual at `p`, measured as its spread under
/// stencil shifts of `1e-6·h_x`: truncation error is smooth in the base
/// point and barely moves, while rounding noise decorrelates.
pub fn noise_floor(op: &(impl ResidualOp + ?Sized), p: EvalPoint, s: &StencilSpec, hx: f64) -> f64 {
    let Ok(r0) = op.residual(p, s) else {
        return 0.0;
    };
    (1..=3)
        .filter_map(|j| {
            let q = EvalPoint::new(p.x + j as f64 * 1e-6 * hx, p.t);
            op.residual(q, s).ok().map(|r| r.sub(&r0).expect("same shape").norm_sup())
        })
        .fold(0.0, f64::max)
}

/// A residual above this multiple of its rounding floor is truncation-dominated.
pub const FLOOR_MARGIN: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// One report per step, in the order given.
    pub runs: Vec<ResidualReport>,
    /// `sup(h_i) / sup(h_{i+1})` for consecutive steps.
    pub ratios: Vec<f64>,
    /// Least-squares slope of log sup vs log h over truncation-dominated runs.
    pub slope: Option<f64>,
    pub roundoff_limited: bool,
}

impl ConvergenceStudy {
    /// The finest truncation-dominated run, annotated with the fitted order.
    pub fn summary(&self) -> ResidualReport {
        let mut best = self
            .runs
            .iter()
            .rev()
            .find(|r| r.sup > FLOOR_MARGIN * r.floor)
            .unwrap_or(&self.runs[0])
            .clone();
        best.order_estimate = self.slope;
        best.roundoff_limited = self.roundoff_limited;
        best
    }

    /// Consecutive-step ratios where both runs are truncation-dominated.
    pub fn clean_ratios(&self) -> Vec<f64> {
        self.runs
            .windows(2)
            .zip(&self.ratios)
            .filter(|(w, _)| w.iter().all(|r| r.sup > FLOOR_MARGIN * r.floor))
            .map(|(_, &q)| q)
            .collect()
    }
}

pub fn convergence_study(
    op: &(impl ResidualOp + ?Sized),
    points: &[EvalPoint],
    steps: &[f64],
    s: &StencilSpec,
) -> Result<ConvergenceStudy, VerifyError> {
    if steps.len() < 2 {
        return Err(VerifyError::TooFewSteps);
    }
    let per_step: Vec<PointResults> = steps
        .iter()
        .map(|&h| evaluate_points(op, points, &s.with_step(h)))
        .collect();
    // A point must be usable at every step so the runs are comparable.
    let usable: Vec<bool> = (0..points.len())
        .map(|i| per_step.iter().all(|r| !matches!(r[i], Ok(None))))
        .collect();
    let kept: Vec<EvalPoint> = points
        .iter()
        .zip(&usable)
        .filter(|(_, &u)| u)
        .map(|(p, _)| *p)
        .collect();
    let runs: Vec<ResidualReport> = steps
        .iter()
        .zip(per_step)
        .map(|(&h, results)| {
            let results = results
                .into_iter()
                .zip(&usable)
                .filter(|(_, &u)| u)
                .map(|(r, _)| r)
                .collect();
            summarize(op.equation(), h, &kept, results)
        })
        .collect::<Result<_, _>>()?;
    let ratios = runs.windows(2).map(|w| w[0].sup / w[1].sup).collect();
    let clean: Vec<&ResidualReport> = runs
        .iter()
        .filter(|r| r.sup > FLOOR_MARGIN * r.floor)
        .collect();
    let roundoff_limited = clean.len() < runs.len();
    let slope = (clean.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> = clean.iter().map(|r| (r.h.ln(), r.sup.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    });
    Ok(ConvergenceStudy {
        runs,
        ratios,
        slope,
        roundoff_limited,
    })
}

/// Outcome of trying both Miura signs.
#[derive(Debug, Clone, PartialEq)]
pub struct MiuraProbe {
    pub residual_plus: f64,
    pub residual_minus: f64,
    /// The printed sign (+1) when both pass, else whichever passes.
    pub selected: Option<i8>,
}

pub const KDV_TOLERANCE: f64 = 1e-4;

pub fn probe_miura_sign(
    v: &(impl Sampler + ?Sized),
    points: &[EvalPoint],
    s: &StencilSpec,
) -> Result<MiuraProbe, VerifyError> {
    let plus = residual_report(&KdvOp { inner: v, sign: 1 }, points, s)?.sup;
    let minus = residual_report(&KdvOp { inner: v, sign: -1 }, points, s)?.sup;
    let selected = if plus <= KDV_TOLERANCE {
        Some(1)
    } else if minus <= KDV_TOLERANCE {
        Some(-1)
    } else {
        None
    };
    Ok(MiuraProbe {
        residual_plus: plus,
        residual_minus: minus,
        selected,
    })
}

/// Draws `count` points uniformly from the box at which `f` and every
/// mKdV stencil node evaluate. Deterministic in `seed`.
pub fn random_unmasked_points(
    f: &(impl Sampler + ?Sized),
    x: (f64, f64),
    t: (f64, f64),
    count: usize,
    seed: u64,
    s: &StencilSpec,
) -> Vec<EvalPoint> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 100 * count.max(1) {
        attempts += 1;
        let p = EvalPoint::new(rng.gen_range(x.0..=x.1), rng.gen_range(t.0..=t.1));
        if sample_derivatives(f, p, s).is_ok() {
            out.push(p);
        }
    }
    out
}
