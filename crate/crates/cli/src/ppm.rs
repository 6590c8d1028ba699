//! Binary P6 heatmaps of |V_ij| and a gnuplot command file.
//!
//! Image rows run from t_max (top) to t_min; columns from x_min to x_max.
//! Levels are normalized to [min, max] of the image (or of all entries with
//! a shared scale). The lowest colormap level is the zero level: an image
//! whose values are all equal, or numerically zero relative to the largest
//! entry, is drawn entirely at that level. Masked points are gray.

use matsol_core::MatrixField;
use serde::Serialize;

/// Entries whose maximum is at most this fraction of the field's largest
/// |V_ij| are treated as identically zero.
pub const ZERO_IMAGE_TOLERANCE: f64 = 1e-12;

pub const MASK_COLOR: [u8; 3] = [128, 128, 128];

/// Perceptually ordered stops from dark purple (zero) to yellow (maximum).
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub fn colormap(level: f64) -> [u8; 3] {
    let s = level.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (s.floor() as usize).min(STOPS.len() - 2);
    let f = s - k as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (STOPS[k][c] + f * (STOPS[k + 1][c] - STOPS[k][c])).round() as u8;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

/// Metadata of one rendered entry; `i` and `j` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageInfo {
    pub i: usize,
    pub j: usize,
    pub file: String,
    pub scale: Scale,
    pub numerically_zero: bool,
}

fn entry_range(field: &MatrixField, i: usize, j: usize) -> Option<Scale> {
    let mut range: Option<Scale> = None;
    for (v, m) in field.values.iter().zip(&field.mask) {
        if m.is_some() {
            continue;
        }
        let a = v[(i, j)].norm();
        range = Some(match range {
            None => Scale { min: a, max: a },
            Some(s) => Scale {
                min: s.min.min(a),
                max: s.max.max(a),
            },
        });
    }
    range
}

pub fn entry_file_name(i: usize, j: usize) -> String {
    format!("V_{}_{}.ppm", i + 1, j + 1)
}

/// Renders every entry; returns `(metadata, P6 bytes)` in row-major entry order.
pub fn render_entries(field: &MatrixField, shared_scale: bool) -> Vec<(ImageInfo, Vec<u8>)> {
    let d = field.d;
    let ranges: Vec<Option<Scale>> = (0..d * d).map(|e| entry_range(field, e / d, e % d)).collect();
    let global = ranges.iter().flatten().fold(None, |acc: Option<Scale>, s| {
        Some(match acc {
            None => *s,
            Some(a) => Scale {
                min: a.min.min(s.min),
                max: a.max.max(s.max),
            },
        })
    });
    let global_max = global.map_or(0.0, |g| g.max);
    (0..d * d)
        .map(|e| {
            let (i, j) = (e / d, e % d);
            let own = ranges[e].unwrap_or(Scale { min: 0.0, max: 0.0 });
            let zero = own.max <= ZERO_IMAGE_TOLERANCE * global_max;
            let scale = if shared_scale { global.unwrap_or(own) } else { own };
            let bytes = render(field, i, j, scale, zero && !shared_scale);
            let info = ImageInfo {
                i: i + 1,
                j: j + 1,
                file: entry_file_name(i, j),
                scale,
                numerically_zero: zero,
            };
            (info, bytes)
        })
        .collect()
}

fn render(field: &MatrixField, i: usize, j: usize, scale: Scale, flat: bool) -> Vec<u8> {
    let g = &field.grid;
    let mut out = format!("P6\n{} {}\n255\n", g.nx, g.nt).into_bytes();
    let span = scale.max - scale.min;
    for row in 0..g.nt {
        let it = g.nt - 1 - row;
        for ix in 0..g.nx {
            let px = if field.is_masked(ix, it) {
                MASK_COLOR
            } else if flat || !(span > 0.0) {
                colormap(0.0)
            } else {
                colormap((field.value(ix, it)[(i, j)].norm() - scale.min) / span)
            };
            out.extend_from_slice(&px);
        }
    }
    out
}

/// gnuplot commands drawing each |V_ij| from the exported CSV.
pub fn plot_script(csv_name: &str, d: usize, label: &str) -> String {
    let mut s = format!(
        "# |V_ij| heatmaps for scenario `{label}`, read from {csv_name}.\n\
         # Run with: gnuplot plot.gp\n\
         set datafile separator \",\"\n\
         set terminal pngcairo size 640,480\n\
         set xlabel \"x\"\n\
         set ylabel \"t\"\n\
         set palette viridis\n\
         set key off\n"
    );
    let per_point = d * d;
    for i in 1..=d {
        for j in 1..=d {
            let offset = (i - 1) * d + (j - 1);
            s.push_str(&format!(
                "set output \"V_{i}_{j}.png\"\n\
                 set title \"|V_{{{i},{j}}}|\"\n\
                 plot \"{csv_name}\" skip 1 every {per_point}::{offset} using 1:2:(sqrt($5**2 + $6**2)) with image\n"
            ));
        }
    }
    s.push_str("unset output\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use matsol_core::{ComplexMatrix, GridSpec};

    fn field(values: &[f64]) -> MatrixField {
        MatrixField {
            grid: GridSpec::new((0.0, 1.0, values.len()), (0.0, 0.0, 1)),
            d: 1,
            values: values
                .iter()
                .map(|&v| ComplexMatrix::from_real_rows(&[vec![v]]).unwrap())
                .collect(),
            mask: vec![None; values.len()],
        }
    }

    #[test]
    fn header_and_extremes() {
        let f = field(&[0.0, 0.5, 1.0]);
        let (info, bytes) = &render_entries(&f, false)[0];
        assert_eq!(info.scale, Scale { min: 0.0, max: 1.0 });
        let header = b"P6\n3 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 9);
        assert_eq!(&px[..3], &colormap(0.0));
        assert_eq!(&px[6..], &colormap(1.0));
    }

    #[test]
    fn uniform_image_is_at_zero_level() {
        let f = field(&[2.0, 2.0]);
        let (info, bytes) = &render_entries(&f, false)[0];
        assert!(!info.numerically_zero);
        assert!(bytes[bytes.len() - 6..].chunks(3).all(|c| c == colormap(0.0)));
    }

    #[test]
    fn masked_pixels_are_gray() {
        let mut f = field(&[0.0, 1.0]);
        f.mask[1] = Some(matsol_core::eval::MaskReason::Overflow { exponent: 301.0 });
        let (_, bytes) = &render_entries(&f, false)[0];
        assert_eq!(&bytes[bytes.len() - 3..], &MASK_COLOR);
    }

    #[test]
    fn colormap_is_monotone_in_brightness() {
        let lum = |c: [u8; 3]| 0.3 * c[0] as f64 + 0.59 * c[1] as f64 + 0.11 * c[2] as f64;
        let mut prev = -1.0;
        for k in 0..=20 {
            let l = lum(colormap(k as f64 / 20.0));
            assert!(l > prev);
            prev = l;
        }
    }
}
