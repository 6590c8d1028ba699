use matsol_core::diagnostics::*;
use matsol_core::eval::{evaluate_grid, MatrixField};
use matsol_core::presets::Preset;
use matsol_core::spectral::{build_operator_data, EvalPath, GridSpec};

fn field(p: Preset, grid: GridSpec) -> MatrixField {
    let od = build_operator_data(&p.scenario()).unwrap();
    evaluate_grid(&od, &grid, EvalPath::Fast)
}

fn wide() -> GridSpec {
    GridSpec::new((-40.0, 40.0, 1601), (-5.0, 5.0, 41))
}

#[test]
fn scalar_energy_is_twice_eigenvalue() {
    let f = field(Preset::Scalar1, GridSpec::new((-30.0, 30.0, 1201), (-5.0, 5.0, 101)));
    let s = functional_series(&f, Functional::TraceSq).unwrap();
    for v in &s.values {
        assert!((v.re - 2.0).abs() <= 2e-6 && v.im.abs() <= 1e-12);
    }
    assert!(s.drift <= 1e-6);
}

#[test]
fn default_window_is_too_small_for_matrix_presets() {
    let f = field(Preset::Fig3, Preset::Fig3.scenario().grid);
    let err = functional_series(&f, Functional::Frobenius).unwrap_err();
    assert!(matches!(err, DiagnosticsError::WindowTooSmall { .. }));
}

#[test]
fn diagonal_preset_partition() {
    let f = field(Preset::Fig2, wide());
    let part = energy_partition(&f).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(part.entry(i, j).iter().all(|&e| e <= 1e-20));
            }
        }
    }
    assert!(part.entry(1, 1).iter().all(|&e| e <= 1e-20));
}

#[test]
fn band_preset_corner_carries_energy() {
    let f = field(Preset::Fig4, wide());
    let part = energy_partition(&f).unwrap();
    assert!(part.entry(0, 2).iter().any(|&e| e > 1e-3));
    assert!(part.entry(2, 0).iter().all(|&e| e <= 1e-20));
}

#[test]
fn partition_sums_to_frobenius_functional() {
    for p in [Preset::Fig3, Preset::Fig4] {
        let f = field(p, wide());
        let part = energy_partition(&f).unwrap();
        let fro = functional_series(&f, Functional::Frobenius).unwrap();
        for n in 0..part.t.len() {
            let total = fro.values[n].re;
            assert!((part.total(n) - total).abs() <= 1e-10 * total);
        }
    }
}

#[test]
fn diagonal_diagnostics_are_scalar_copies() {
    let g = wide();
    let m = field(Preset::Fig2, g);
    let s = field(Preset::Scalar2, g);
    let pm = energy_partition(&m).unwrap();
    let ps = energy_partition(&s).unwrap();
    for n in 0..g.nt {
        for h in [0, 2] {
            assert!((pm.entry(h, h)[n] - ps.entry(0, 0)[n]).abs() <= 1e-8);
        }
    }
    for tag in Functional::ALL {
        let a = functional_series(&m, tag).unwrap();
        let b = functional_series(&s, tag).unwrap();
        for n in 0..g.nt {
            assert!((a.values[n] - 2.0 * b.values[n]).norm() <= 1e-8, "{tag}");
        }
    }
    let tm = track_peaks(&m, 0.1, Some(2)).unwrap();
    let ts = track_peaks(&s, 0.1, Some(2)).unwrap();
    for (a, b) in tm.solitons.iter().zip(&ts.solitons) {
        assert!((a.pre_speed - b.pre_speed).abs() <= 1e-8);
        assert!((a.pre_height - 2f64.sqrt() * b.pre_height).abs() <= 1e-8);
    }
}

#[test]
fn single_soliton_speed() {
    let f = field(Preset::Scalar1, Preset::Scalar1.scenario().grid);
    let tr = track_peaks(&f, 0.1, Some(1)).unwrap();
    assert_eq!(tr.solitons.len(), 1);
    let s = &tr.solitons[0];
    assert!((s.pre_speed + 1.0).abs() <= 0.02 && (s.post_speed + 1.0).abs() <= 0.02);
}

#[test]
fn two_solitons_pass_through_each_other() {
    let f = field(Preset::Scalar2, Preset::Scalar2.scenario().grid);
    let tr = track_peaks(&f, 0.1, Some(2)).unwrap();
    assert!(tr.warnings.is_empty(), "{:?}", tr.warnings);
    assert_eq!(tr.solitons.len(), 2);
    for (s, speed) in tr.solitons.iter().zip([-4.0, -1.0]) {
        assert!((s.pre_speed / speed - 1.0).abs() <= 0.02);
        assert!((s.post_speed / speed - 1.0).abs() <= 0.02);
        assert!((s.post_height / s.pre_height - 1.0).abs() <= 0.01);
    }
}

#[test]
fn matrix_presets_resolve_two_solitons() {
    for p in [Preset::Fig2, Preset::Fig3, Preset::Fig4] {
        let f = field(p, GridSpec::new((-30.0, 30.0, 1201), (-6.0, 6.0, 241)));
        let tr = track_peaks(&f, 0.1, Some(2)).unwrap();
        assert_eq!(tr.solitons.len(), 2, "{p}: {:?}", tr.warnings);
    }
}
