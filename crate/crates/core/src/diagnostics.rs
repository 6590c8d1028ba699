//! Conserved-functional candidates, per-entry energy partition and peak
//! tracking on evaluated grids.

use crate::eval::MatrixField;
use crate::matrix::{mat_mul, Complex};
use crate::quadrature::{simpson, simpson_complex};

/// Boundary norm above which a slice's tails count as undecayed.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Denominator floor of the relative drift.
pub const DRIFT_FLOOR: f64 = 1e-30;

/// Fraction of the t range forming each of the pre/post collision windows.
pub const WINDOW_FRACTION: f64 = 0.2;

/// Largest peak displacement per t step, in grid cells.
pub const MAX_JUMP_CELLS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("window too small: ‖V‖_F = {norm:e} at the {side} boundary for t = {t}")]
    WindowTooSmall { t: f64, side: Side, norm: f64 },
    #[error("slice t = {t} contains masked points")]
    MaskedSlice { t: f64 },
    #[error("grid needs at least {needed} points along {axis}")]
    GridTooSmall { axis: &'static str, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Functional {
    /// `∫ tr(V²) dx`
    TraceSq,
    /// `∫ Σ|V_ij|² dx`
    Frobenius,
    /// `∫ tr(V) dx`
    Trace,
}

impl Functional {
    pub const ALL: [Functional; 3] = [Functional::TraceSq, Functional::Frobenius, Functional::Trace];

    pub fn tag(self) -> &'static str {
        match self {
            Functional::TraceSq => "trace_sq",
            Functional::Frobenius => "frobenius",
            Functional::Trace => "trace",
        }
    }
}

impl std::fmt::Display for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservedSeries {
    pub functional: Functional,
    pub t: Vec<f64>,
    pub values: Vec<Complex>,
    /// `max|f(t) − f(t₀)| / max(|f(t₀)|, DRIFT_FLOOR)`.
    pub drift: f64,
}

impl ConservedSeries {
    fn new(functional: Functional, t: Vec<f64>, values: Vec<Complex>) -> Self {
        let drift = match values.first() {
            Some(&f0) => {
                let dev = values.iter().map(|v| (v - f0).norm()).fold(0.0, f64::max);
                dev / f0.norm().max(DRIFT_FLOOR)
            }
            None => 0.0,
        };
        Self {
            functional,
            t,
            values,
            drift,
        }
    }
}

fn check_slice(field: &MatrixField, it: usize) -> Result<(), DiagnosticsError> {
    let g = &field.grid;
    let t = g.t(it);
    if (0..g.nx).any(|ix| field.is_masked(ix, it)) {
        return Err(DiagnosticsError::MaskedSlice { t });
    }
    for (side, ix) in [(Side::Left, 0), (Side::Right, g.nx - 1)] {
        let norm = field.value(ix, it).norm_fro();
        if !(norm < TAIL_TOLERANCE) {
            return Err(DiagnosticsError::WindowTooSmall { t, side, norm });
        }
    }
    Ok(())
}

fn require_x(field: &MatrixField, needed: usize) -> Result<(), DiagnosticsError> {
    if field.grid.nx < needed {
        return Err(DiagnosticsError::GridTooSmall { axis: "x", needed });
    }
    Ok(())
}

/// Largest contiguous run of t-slices that pass the tail and mask checks.
pub fn decayed_t_range(field: &MatrixField) -> Option<std::ops::Range<usize>> {
    let mut best: Option<std::ops::Range<usize>> = None;
    let mut start = None;
    for it in 0..=field.grid.nt {
        let ok = it < field.grid.nt && check_slice(field, it).is_ok();
        match (ok, start) {
            (true, None) => start = Some(it),
            (false, Some(s)) => {
                if best.as_ref().is_none_or(|b| it - s > b.len()) {
                    best = Some(s..it);
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// The functional over every t-slice of the field.
pub fn functional_series(field: &MatrixField, tag: Functional) -> Result<ConservedSeries, DiagnosticsError> {
    functional_series_over(field, tag, 0..field.grid.nt)
}

pub fn functional_series_over(
    field: &MatrixField,
    tag: Functional,
    slices: std::ops::Range<usize>,
) -> Result<ConservedSeries, DiagnosticsError> {
    require_x(field, 2)?;
    let g = &field.grid;
    let dx = g.dx();
    let mut ts = Vec::with_capacity(slices.len());
    let mut values = Vec::with_capacity(slices.len());
    for it in slices {
        check_slice(field, it)?;
        let integrand: Vec<Complex> = (0..g.nx)
            .map(|ix| {
                let v = field.value(ix, it);
                match tag {
                    Functional::TraceSq => mat_mul(v, v).expect("square").trace(),
                    Functional::Frobenius => Complex::new(v.norm_fro().powi(2), 0.0),
                    Functional::Trace => v.trace(),
                }
            })
            .collect();
        ts.push(g.t(it));
        values.push(simpson_complex(&integrand, dx));
    }
    Ok(ConservedSeries::new(tag, ts, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPartition {
    pub d: usize,
    pub t: Vec<f64>,
    /// `entries[i * d + j][n]` is `∫|V_ij|² dx` at `t[n]`.
    pub entries: Vec<Vec<f64>>,
}

impl EnergyPartition {
    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i * self.d + j]
    }

    pub fn total(&self, n: usize) -> f64 {
        self.entries.iter().map(|e| e[n]).sum()
    }

    /// Share of the total carried by each entry, maximized over t.
    pub fn peak_shares(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| {
                (0..self.t.len())
                    .map(|n| e[n] / self.total(n).max(DRIFT_FLOOR))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

pub fn energy_partition(field: &MatrixField) -> Result<EnergyPartition, DiagnosticsError> {
    energy_partition_over(field, 0..field.grid.nt)
}

pub fn energy_partition_over(
    field: &MatrixField,
    slices: std::ops::Range<usize>,
) -> Result<EnergyPartition, DiagnosticsError> {
    require_x(field, 2)?;
    let g = &field.grid;
    let d = field.d;
    let mut entries = vec![Vec::with_capacity(slices.len()); d * d];
    let mut ts = Vec::with_capacity(slices.len());
    for it in slices {
        check_slice(field, it)?;
        ts.push(g.t(it));
        for (e, series) in entries.iter_mut().enumerate() {
            let (i, j) = (e / d, e % d);
            let line: Vec<f64> = (0..g.nx)
                .map(|ix| field.value(ix, it)[(i, j)].norm_sqr())
                .collect();
            series.push(simpson(&line, g.dx()));
        }
    }
    Ok(EnergyPartition { d, t: ts, entries })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: f64,
    pub height: f64,
}

/// A peak followed across consecutive slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// `(t index, peak)` pairs in increasing t.
    pub points: Vec<(usize, Peak)>,
}

/// Fitted motion of one soliton in the pre- and post-collision windows.
/// Solitons are ordered by decreasing height.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonFit {
    pub pre_speed: f64,
    pub post_speed: f64,
    pub pre_height: f64,
    pub post_height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakTrack {
    pub t: Vec<f64>,
    pub peaks: Vec<Vec<Peak>>,
    pub tracks: Vec<Track>,
    pub solitons: Vec<SolitonFit>,
    pub warnings: Vec<String>,
}

/// Local maxima of `‖V(·, t)‖_F` above `min_height` in slice `it`, refined by
/// a parabola through the three neighbouring samples.
pub fn slice_peaks(field: &MatrixField, it: usize, min_height: f64) -> Vec<Peak> {
    let g = &field.grid;
    let norm = |ix: usize| {
        if field.is_masked(ix, it) {
            f64::NAN
        } else {
            field.value(ix, it).norm_fro()
        }
    };
    let n: Vec<f64> = (0..g.nx).map(norm).collect();
    let mut out = Vec::new();
    for ix in 1..g.nx.saturating_sub(1) {
        let (a, b, c) = (n[ix - 1], n[ix], n[ix + 1]);
        if !(b > a && b >= c && b >= min_height) {
            continue;
        }
        let denom = a - 2.0 * b + c;
        let delta = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        out.push(Peak {
            x: g.x(ix) + delta * g.dx(),
            height: b - 0.25 * (a - c) * delta,
        });
    }
    out
}

fn link_tracks(peaks: &[Vec<Peak>], max_jump: f64) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::new();
    // Tracks that received a point in the previous slice.
    let mut live: Vec<usize> = Vec::new();
    for (it, slice) in peaks.iter().enumerate() {
        let mut taken = vec![false; live.len()];
        let mut next_live = Vec::new();
        for p in slice {
            let best = live
                .iter()
                .enumerate()
                .filter(|(k, _)| !taken[*k])
                .map(|(k, &tr)| (k, tr, (tracks[tr].points.last().unwrap().1.x - p.x).abs()))
                .filter(|(_, _, dist)| *dist <= max_jump)
                .min_by(|a, b| a.2.total_cmp(&b.2));
            let tr = match best {
                Some((k, tr, _)) => {
                    taken[k] = true;
                    tr
                }
                None => {
                    tracks.push(Track { points: Vec::new() });
                    tracks.len() - 1
                }
            };
            tracks[tr].points.push((it, *p));
            next_live.push(tr);
        }
        live = next_live;
    }
    tracks
}

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let stt: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    (stt > 0.0).then(|| stx / stt)
}

/// `(speed, mean height)` of every track well represented in `window`,
/// ordered by decreasing height.
fn window_fits(
    t: &[f64],
    tracks: &[Track],
    window: std::ops::Range<usize>,
) -> Vec<(f64, f64)> {
    let span = window.len();
    let mut fits: Vec<(f64, f64)> = tracks
        .iter()
        .filter_map(|tr| {
            let pts: Vec<&(usize, Peak)> = tr.points.iter().filter(|(it, _)| window.contains(it)).collect();
            if 2 * pts.len() < span.max(2) {
                return None;
            }
            let xy: Vec<(f64, f64)> = pts.iter().map(|(it, p)| (t[*it], p.x)).collect();
            let speed = least_squares_slope(&xy)?;
            let height = pts.iter().map(|(_, p)| p.height).sum::<f64>() / pts.len() as f64;
            Some((speed, height))
        })
        .collect();
    fits.sort_by(|a, b| b.1.total_cmp(&a.1));
    fits
}

/// Tracks peaks of `‖V‖_F` and fits per-soliton speeds and heights in the
/// first and last [`WINDOW_FRACTION`] of the t range. `expected` is the
/// soliton count used for warnings.
pub fn track_peaks(
    field: &MatrixField,
    min_height: f64,
    expected: Option<usize>,
) -> Result<PeakTrack, DiagnosticsError> {
    require_x(field, 3)?;
    let g = &field.grid;
    let t: Vec<f64> = (0..g.nt).map(|it| g.t(it)).collect();
    let peaks: Vec<Vec<Peak>> = (0..g.nt).map(|it| slice_peaks(field, it, min_height)).collect();
    let tracks = link_tracks(&peaks, MAX_JUMP_CELLS * g.dx());

    let w = ((g.nt as f64 * WINDOW_FRACTION).round() as usize).clamp(1, g.nt);
    let pre = window_fits(&t, &tracks, 0..w);
    let post = window_fits(&t, &tracks, g.nt - w..g.nt);

    let mut warnings = Vec::new();
    if let Some(n) = expected {
        for (name, range) in [("pre", 0..w), ("post", g.nt - w..g.nt)] {
            let short = range.clone().filter(|&it| peaks[it].len() < n).count();
            if short > 0 {
                warnings.push(format!(
                    "{short} of {} {name}-collision slices show fewer than {n} peaks",
                    range.len()
                ));
            }
        }
        for (name, fits) in [("pre", &pre), ("post", &post)] {
            if fits.len() != n {
                warnings.push(format!("{name}-collision window resolves {} solitons, expected {n}", fits.len()));
            }
        }
    }
    let solitons = pre
        .iter()
        .zip(&post)
        .map(|(a, b)| SolitonFit {
            pre_speed: a.0,
            post_speed: b.0,
            pre_height: a.1,
            post_height: b.1,
        })
        .collect();
    Ok(PeakTrack {
        t,
        peaks,
        tracks,
        solitons,
        warnings,
    })
}
