mod common;

use std::collections::BTreeMap;

use mbl::bloch::band_minimum_hessian_fourier;
use mbl::effective::*;
use mbl::lattice::Lattice;
use mbl::linalg::SparseHermitian;
use mbl::phase::{FieldSpec, ProfileTerm};
use mbl::spectral::*;
use mbl::wannier::HoppingSet;
use mbl::C64;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn random_hoppings(lat: &Lattice, seed: u64) -> HoppingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = BTreeMap::new();
    m.insert([0, 0], C64::new(rng.random_range(-1.0..1.0), 0.0));
    for g in [[1, 0], [0, 1], [1, 1], [1, -1], [2, 0], [0, 2], [2, 1]] {
        let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        m.insert(g, v);
        m.insert([-g[0], -g[1]], v.conj());
    }
    HoppingSet::from_map(lat, m, 0.0)
}

fn profiled_field(b0: f64) -> FieldSpec {
    let k = 0.3;
    FieldSpec::with_profile(b0, vec![ProfileTerm { k: [k, 0.0], amp: 1.0, phase: 0.0 }, ProfileTerm { k: [0.0, k], amp: 1.0, phase: 0.0 }])
}

fn dense_spectrum(m: &SparseHermitian) -> Vec<f64> {
    eigens(m, None, EigenMethod::Dense).unwrap()
}

#[test]
fn effective_matrices_are_hermitian() {
    let lat = Lattice::square(1.0).unwrap();
    for seed in 0..4 {
        let h = random_hoppings(&lat, seed);
        let ball = build_effective_matrix(&h, &lat, &profiled_field(1.0), 0.1, 0.7, Geometry::Ball { radius: 6.0 }).unwrap();
        assert!(ball.matrix.hermiticity_defect() <= 1e-12);
        let b0 = std::f64::consts::PI / 8.0 / 0.1;
        let torus = build_effective_matrix(&h, &lat, &FieldSpec::constant(b0), 0.1, 0.0, Geometry::Torus { q: 16, repeat: 1 }).unwrap();
        assert!(torus.matrix.hermiticity_defect() <= 1e-12);
    }
}

#[test]
fn diagonal_gauge_changes_leave_the_spectrum() {
    let lat = Lattice::square(1.0).unwrap();
    let h = random_hoppings(&lat, 11);
    let pm = build_effective_matrix(&h, &lat, &profiled_field(0.8), 0.05, 0.6, Geometry::Ball { radius: 7.0 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let chi: Vec<f64> = (0..pm.matrix.dim).map(|_| rng.random_range(-10.0..10.0)).collect();
    let a = dense_spectrum(&pm.matrix);
    let b = dense_spectrum(&gauge_transform(&pm.matrix, &chi));
    let d = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-10, "{d:e}");
}

#[test]
fn small_eigen_examples() {
    let d = SparseHermitian::from_triplets(3, vec![(0, 0, C64::new(3.0, 0.0)), (1, 1, C64::new(1.0, 0.0)), (2, 2, C64::new(2.0, 0.0))]);
    assert_eq!(eigens(&d, None, EigenMethod::Auto).unwrap(), vec![1.0, 2.0, 3.0]);
    let x = SparseHermitian::from_triplets(2, vec![(0, 1, C64::new(1.0, 0.0)), (1, 0, C64::new(1.0, 0.0))]);
    let e = eigens(&x, None, EigenMethod::Auto).unwrap();
    assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
}

#[test]
fn lanczos_bottom_matches_dense() {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let a = Array2::from_shape_fn((n, n), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = &a + &a.t().mapv(|z| z.conj());
    let trip = h.indexed_iter().map(|((i, j), v)| (i, j, *v)).collect();
    let m = SparseHermitian::from_triplets(n, trip);
    let dense = eigens(&m, Some(20), EigenMethod::Dense).unwrap();
    let lanczos = eigens(&m, Some(20), EigenMethod::Lanczos).unwrap();
    let d = dense.iter().zip(&lanczos).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-9, "{d:e}");
}

#[test]
fn harper_torus_shows_landau_levels() {
    let (lat, h) = harper();
    let field = harper_field();
    let hd = band_minimum_hessian_fourier(&h, &lat, 64).unwrap();
    assert!((hd.m - 1.0).abs() < 1e-6 && (hd.min_value + 4.0).abs() < 1e-9, "{hd:?}");
    let eps = 0.01;
    let q = torus_q_for(&lat, &field, eps, 512).unwrap();
    assert_eq!(q, 64);
    let eigs = torus_spectrum(&h, &lat, &field, eps, q, 1).unwrap();
    let again = torus_spectrum(&h, &lat, &field, eps, q, 1).unwrap();
    assert!(eigs.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits()));
    let spacing = landau_spacing(&hd, field.b0, eps);
    let window = landau_window(&hd, field.b0, eps, 3);
    let report = detect_islands(&eigs, 0.25 * spacing, window).unwrap();
    let predicted = landau_prediction(&hd, field.b0, eps, 2);
    let dev = landau_cluster_check(&report, &predicted, spacing).unwrap();
    assert!(dev.iter().all(|&d| d <= 0.15), "{dev:?}");
}

#[test]
fn ball_and_torus_agree_on_the_bottom_levels() {
    let (lat, h) = harper();
    let field = harper_field();
    let hd = band_minimum_hessian_fourier(&h, &lat, 64).unwrap();
    let eps = 0.02;
    let params = AnalysisParams::default();
    let window = landau_window(&hd, field.b0, eps, 3);
    let spacing = landau_spacing(&hd, field.b0, eps);
    let gap = 0.25 * spacing;
    let torus = cell_spectrum(&h, &lat, &field, eps, 0.0, Geometry::Torus { q: 32, repeat: 1 }, window, gap, &params).unwrap();
    let ball = cell_spectrum(&h, &lat, &field, eps, 0.0, Geometry::Ball { radius: 20.0 }, window, gap, &params).unwrap();
    assert!(ball.report.filtered_out > 0);
    let d = hausdorff(&ball.report.eigenvalues, &torus.report.eigenvalues, window);
    assert!(!d.one_sided_empty);
    assert!(d.distance <= 0.05 * spacing, "{} vs spacing {spacing}", d.distance);
}

#[test]
fn sweep_marks_failed_cells_and_continues() {
    let (lat, h) = harper();
    let field = harper_field();
    let hd = band_minimum_hessian_fourier(&h, &lat, 64).unwrap();
    let models = vec![EpsilonModel { epsilon: 0.02, hoppings: h, harmonic: hd }];
    // A one-site ball has no eigenvalue near the band bottom.
    let geom = SweepGeometry { ball_radius: Some(0.5), ..SweepGeometry::default() };
    let r = scaling_sweep(&models, &lat, &field, &[0.1], &geom, &AnalysisParams::default());
    assert_eq!(r.cells.len(), 3);
    let torus = &r.cells[0];
    assert_eq!(torus.status, "ok");
    assert!(matches!(torus.geometry, Some(Geometry::Torus { q: 32, .. })));
    for c in &r.cells[1..] {
        assert_eq!(c.status, "failed");
        assert_eq!(c.error_kind.as_deref(), Some("EmptyWindow"));
    }
    assert_eq!(r.fits.len(), 4);
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn islands_and_gaps_tile_the_window(eigs in prop::collection::vec(-1.0f64..1.0, 1..40).prop_map(sorted), thr in 0.01f64..0.5) {
        let window = [-0.5, 0.5];
        match detect_islands(&eigs, thr, window) {
            Err(_) => prop_assert!(eigs.iter().all(|&e| e <= window[0] || e > window[1])),
            Ok(r) => {
                for e in eigs.iter().filter(|&&e| e > window[0] && e <= window[1]) {
                    prop_assert!(r.islands.iter().any(|i| i.a <= *e && *e <= i.b));
                }
                for (k, g) in r.gaps.iter().enumerate() {
                    prop_assert!(g[1] - g[0] > thr);
                    prop_assert_eq!(g[0], r.islands[k].b);
                    prop_assert_eq!(g[1], r.islands[k + 1].a);
                }
            }
        }
    }

    #[test]
    fn interior_states_are_never_filtered(seed in any::<u64>(), tol in 0.0f64..0.5) {
        let lat = Lattice::square(1.0).unwrap();
        let radius = 8.0;
        let sites = lat.enumerate_sites(radius);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Array2::from_shape_fn((sites.len(), 3), |(i, _)| {
            let r = sites[i].position[0].hypot(sites[i].position[1]);
            if r > 0.85 * radius { C64::new(0.0, 0.0) } else { C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) }
        });
        let (kept, removed) = bulk_filter(&[0.0, 1.0, 2.0], &v, &sites, radius, 0.15, tol);
        prop_assert_eq!(kept.len(), 3);
        prop_assert_eq!(removed, 0);
    }
}
