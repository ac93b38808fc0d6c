mod common;

use std::collections::BTreeMap;

use mbl::bloch::*;
use mbl::linalg::{eigh, max_hermiticity_defect, EigRange};
use mbl::C64;
use proptest::prelude::*;

use common::*;

#[test]
fn separable_bands_match_mathieu_sums() {
    let lat = two_pi_square();
    let amp = 1.0;
    let n = 8;
    let bs = solve_bands(&PotentialSpec::separable_cosine(amp), &lat, n, 2, 8).unwrap();
    let mut worst: f64 = 0.0;
    for k1 in 0..n {
        for k2 in 0..n {
            let t = grid_theta_fractional(n, k1, k2);
            let a = mathieu_levels(t[0], amp, 40, 2);
            let b = mathieu_levels(t[1], amp, 40, 2);
            let l0 = a[0] + b[0];
            let l1 = (a[1] + b[0]).min(a[0] + b[1]);
            worst = worst.max((bs.energy(k1, k2, 0) - l0).abs()).max((bs.energy(k1, k2, 1) - l1).abs());
        }
    }
    assert!(worst < 1e-8, "max deviation {worst:e}");
}

#[test]
fn free_bands_are_sorted_plane_wave_energies() {
    let lat = two_pi_square();
    let n = 8;
    let bs = solve_bands(&PotentialSpec::zero(), &lat, n, 4, 3).unwrap();
    for k1 in 0..n {
        for k2 in 0..n {
            let want = free_levels(&lat, bs.theta(k1, k2), 3, 4);
            for (b, w) in want.iter().enumerate() {
                assert!((bs.energy(k1, k2, b) - w).abs() < 1e-12);
            }
        }
    }
    assert_eq!(classify_hypothesis(&bs, None), Hypothesis::Crossing);
}

/// Gap / overlap decided from the one-dimensional levels.
fn separable_hypothesis(amp: f64, n: usize) -> Hypothesis {
    let ts: Vec<f64> = (0..n).map(|k| -0.5 + k as f64 / n as f64).collect();
    let lv: Vec<Vec<f64>> = ts.iter().map(|&t| mathieu_levels(t, amp, 40, 2)).collect();
    let mut sup0 = f64::NEG_INFINITY;
    let mut inf1 = f64::INFINITY;
    for a in &lv {
        for b in &lv {
            sup0 = sup0.max(a[0] + b[0]);
            inf1 = inf1.min((a[1] + b[0]).min(a[0] + b[1]));
        }
    }
    if sup0 < inf1 {
        Hypothesis::Gap
    } else {
        Hypothesis::Overlap
    }
}

#[test]
fn classification_of_reference_potentials() {
    let lat = two_pi_square();
    for (amp, want) in [(10.0, Hypothesis::Gap), (0.5, Hypothesis::Gap), (0.05, Hypothesis::Overlap)] {
        assert_eq!(separable_hypothesis(amp, 8), want);
        let bs = solve_bands(&PotentialSpec::separable_cosine(amp), &lat, 8, 2, 12).unwrap();
        assert_eq!(classify_hypothesis(&bs, None), want, "A = {amp}");
    }
}

#[test]
fn real_potential_gives_even_band() {
    let lat = mbl::lattice::Lattice::new([1.0, 0.2], [0.1, 1.3]).unwrap();
    let mut m = BTreeMap::new();
    for (g, v) in [([1, 0], -0.8), ([0, 1], 0.5), ([1, 2], 0.3), ([2, -1], -0.4)] {
        m.insert(g, C64::new(v, 0.0));
        m.insert([-g[0], -g[1]], C64::new(v, 0.0));
    }
    let pot = PotentialSpec::from_map(m).unwrap();
    let n = 10;
    let bs = solve_bands(&pot, &lat, n, 2, 6).unwrap();
    let mut worst: f64 = 0.0;
    for k1 in 1..n {
        for k2 in 1..n {
            worst = worst.max((bs.energy(k1, k2, 0) - bs.energy(n - k1, n - k2, 0)).abs());
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn doubling_the_cutoff_changes_little() {
    let lat = two_pi_square();
    // Deep wells need the larger cutoff: at 8 the A = 10 band is off by 3e-8.
    for (amp, c) in [(1.0, 8), (10.0, 12)] {
        let pot = PotentialSpec::separable_cosine(amp);
        for t in [[0.0, 0.0], [0.5, 0.25]] {
            let lo = eigh(&build_fiber_hamiltonian(t, &pot, &lat, c).unwrap().matrix, EigRange::Index(0, 0), false).unwrap();
            let hi = eigh(&build_fiber_hamiltonian(t, &pot, &lat, 2 * c).unwrap().matrix, EigRange::Index(0, 0), false).unwrap();
            assert!((lo.values[0] - hi.values[0]).abs() < 1e-8, "A = {amp} theta = {t:?}");
        }
    }
}

#[test]
fn ground_state_bound() {
    let lat = two_pi_square();
    let free = solve_bands(&PotentialSpec::zero(), &lat, 8, 2, 3).unwrap();
    let chk = ground_state_bound_check(&free).unwrap();
    assert!((chk.c - 1.0).abs() < 1e-12);
    assert!(chk.holds && chk.margin.abs() < 1e-10, "{chk:?}");
    for amp in [1.0, 10.0] {
        let bs = solve_bands(&PotentialSpec::separable_cosine(amp), &lat, 8, 2, 8).unwrap();
        let chk = ground_state_bound_check(&bs).unwrap();
        assert!(chk.holds && chk.c > 0.0 && chk.c < 1.0, "A = {amp}: {chk:?}");
    }
}

fn potential() -> impl Strategy<Value = PotentialSpec> {
    prop::collection::vec(((-2i64..=2, -2i64..=2), -1.0..1.0f64, -1.0..1.0f64), 1..6).prop_map(|terms| {
        let mut m = BTreeMap::new();
        for ((a, b), re, im) in terms {
            if a == 0 && b == 0 {
                m.insert([0, 0], C64::new(re, 0.0));
                continue;
            }
            m.insert([a, b], C64::new(re, im));
            m.insert([-a, -b], C64::new(re, -im));
        }
        PotentialSpec::from_map(m).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fibers_are_hermitian(pot in potential(), t1 in -0.5..0.5f64, t2 in -0.5..0.5f64) {
        let lat = two_pi_square();
        let f = build_fiber_hamiltonian([t1, t2], &pot, &lat, 4).unwrap();
        prop_assert!(max_hermiticity_defect(&f.matrix) <= 1e-12);
    }

    #[test]
    fn bands_are_ordered(pot in potential()) {
        let bs = solve_bands(&pot, &two_pi_square(), 8, 3, 4).unwrap();
        for k in 0..64 {
            let e = &bs.energies[k * 3..k * 3 + 3];
            prop_assert!(e[0] <= e[1] && e[1] <= e[2]);
        }
    }
}
