//! Built-in scenarios.
//!
//! The 3×3 presets carry the spectral matrices of the published two-soliton
//! plots with B₁ = B₂. The plots do not state the eigenvalues; k₁ = 1 and
//! k₂ = 2 are this crate's choice.

use std::fmt;
use std::str::FromStr;

use crate::matrix::{Complex, ComplexMatrix};
use crate::spectral::{GridSpec, Scenario, ScenarioOptions, SolitonEntry};

pub const DEFAULT_EIGENVALUES: [f64; 2] = [1.0, 2.0];

pub const DEFAULT_GRID: GridSpec = GridSpec {
    x_min: -15.0,
    x_max: 15.0,
    nx: 601,
    t_min: -6.0,
    t_max: 6.0,
    nt: 241,
};

/// The fast soliton of `scalar2` travels 48 units over the default time
/// window, so that preset widens x at the same spacing.
pub const WIDE_GRID: GridSpec = GridSpec {
    x_min: -30.0,
    x_max: 30.0,
    nx: 1201,
    t_min: -6.0,
    t_max: 6.0,
    nt: 241,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// b₁,₁ = b₃,₃ = 1, all other entries zero.
    Fig2,
    /// All nine entries equal to one.
    Fig3,
    /// Ones on the diagonal and the first superdiagonal.
    Fig4,
    /// d = 1, one soliton with k = 1.
    Scalar1,
    /// d = 1, two solitons with k = 1, 2.
    Scalar2,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Fig2,
        Preset::Fig3,
        Preset::Fig4,
        Preset::Scalar1,
        Preset::Scalar2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Scalar1 => "scalar1",
            Preset::Scalar2 => "scalar2",
        }
    }

    /// Spectral matrix shared by every soliton of the preset.
    pub fn weight(self) -> ComplexMatrix {
        let rows: Vec<Vec<f64>> = match self {
            Preset::Fig2 => vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            Preset::Fig3 => vec![vec![1.0; 3]; 3],
            Preset::Fig4 => vec![
                vec![1.0, 1.0, 0.0],
                vec![0.0, 1.0, 1.0],
                vec![0.0, 0.0, 1.0],
            ],
            Preset::Scalar1 | Preset::Scalar2 => vec![vec![1.0]],
        };
        ComplexMatrix::from_real_rows(&rows).expect("preset matrices are well formed")
    }

    pub fn scenario(self) -> Scenario {
        let ks: &[f64] = match self {
            Preset::Scalar1 => &DEFAULT_EIGENVALUES[..1],
            _ => &DEFAULT_EIGENVALUES,
        };
        let weight = self.weight();
        Scenario {
            d: weight.rows(),
            entries: ks
                .iter()
                .map(|&k| SolitonEntry {
                    k: Complex::new(k, 0.0),
                    weight: weight.clone(),
                })
                .collect(),
            grid: match self {
                Preset::Scalar2 => WIDE_GRID,
                _ => DEFAULT_GRID,
            },
            label: self.name().to_string(),
            options: ScenarioOptions {
                imaginary_weights: true,
                ..ScenarioOptions::default()
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown preset `{0}` (expected one of fig2, fig3, fig4, scalar1, scalar2)")]
pub struct UnknownPreset(pub String);

impl FromStr for Preset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPreset(s.to_string()))
    }
}

/// Looks up a preset scenario by name.
pub fn preset(name: &str) -> Result<Scenario, UnknownPreset> {
    Ok(name.parse::<Preset>()?.scenario())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_is_all_ones() {
        let s = preset("fig3").unwrap();
        assert_eq!(s.d, 3);
        assert_eq!(s.n(), 2);
        for e in &s.entries {
            assert!(e.weight.as_slice().iter().all(|&z| z == Complex::new(1.0, 0.0)));
        }
    }

    #[test]
    fn fig4_band_structure() {
        let w = preset("fig4").unwrap().entries[1].weight.clone();
        assert_eq!(w[(0, 1)], Complex::new(1.0, 0.0));
        assert_eq!(w[(1, 2)], Complex::new(1.0, 0.0));
        assert_eq!(w[(0, 2)], Complex::new(0.0, 0.0));
        for h in 0..3 {
            assert_eq!(w[(h, h)], Complex::new(1.0, 0.0));
        }
    }

    #[test]
    fn scalar1_shape() {
        let s = preset("scalar1").unwrap();
        assert_eq!((s.d, s.n()), (1, 1));
        assert_eq!(s.entries[0].k, Complex::new(1.0, 0.0));
        assert!(preset("fig9").is_err());
    }
}
