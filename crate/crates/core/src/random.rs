//! Seeded generators for property checks and the self-test.

use crate::matrix::{Complex, ComplexMatrix};
use crate::spectral::{GridSpec, Scenario, ScenarioOptions, SolitonEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for `seed`.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex(rng: &mut ChaCha8Rng, scale: f64) -> Complex {
    Complex::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| complex(rng, scale))
}

/// Random valid scenario: d ≤ 3, N ≤ 3, Re(k) ∈ [0.5, 2], eigenvalues
/// separated by at least 0.2, complex spectral matrices with entries in the
/// unit box.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let d = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=3);
    let mut ks: Vec<Complex> = Vec::new();
    while ks.len() < n {
        let k = Complex::new(rng.gen_range(0.5..2.0), rng.gen_range(-0.3..0.3));
        if ks.iter().all(|q| (q - k).norm() > 0.2) {
            ks.push(k);
        }
    }
    Scenario {
        d,
        entries: ks
            .into_iter()
            .map(|k| SolitonEntry {
                k,
                weight: random_matrix(rng, d, 1.0),
            })
            .collect(),
        grid: GridSpec::new((-10.0, 10.0, 41), (-3.0, 3.0, 13)),
        label: "random".into(),
        options: ScenarioOptions::default(),
    }
}
