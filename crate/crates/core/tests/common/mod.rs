//! Independent reference computations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use mbl::bloch::PotentialSpec;
use mbl::lattice::Lattice;
use mbl::phase::FieldSpec;
use mbl::wannier::HoppingSet;
use mbl::C64;

pub fn two_pi_square() -> Lattice {
    Lattice::square(2.0 * PI).unwrap()
}

/// Number of eigenvalues below x of the symmetric tridiagonal matrix.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let o2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { o2 / q };
        if q == 0.0 {
            q = -1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Lowest k eigenvalues of a symmetric tridiagonal matrix by bisection.
pub fn tridiagonal_lowest(diag: &[f64], off: &[f64], k: usize) -> Vec<f64> {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (0..k)
        .map(|j| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if sturm_count(diag, off, mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// -d^2/dx^2 + 2A cos x on the 2 pi periodic line at quasimomentum t.
pub fn mathieu_levels(t: f64, amp: f64, cutoff: i64, k: usize) -> Vec<f64> {
    let diag: Vec<f64> = (-cutoff..=cutoff).map(|g| (t + g as f64).powi(2)).collect();
    let off = vec![amp; diag.len() - 1];
    tridiagonal_lowest(&diag, &off, k)
}

/// Sorted |theta + g|^2 over the plane-wave basis.
pub fn free_levels(lat: &Lattice, theta: [f64; 2], cutoff: i64, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (-cutoff..=cutoff)
        .flat_map(|a| (-cutoff..=cutoff).map(move |b| [a, b]))
        .map(|g| {
            let d = lat.dual_vector(g);
            (theta[0] + d[0]).powi(2) + (theta[1] + d[1]).powi(2)
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v.truncate(k);
    v
}

/// 2A (cos x1 + cos x2) + 2b sin(x1 + x2): real but not even.
pub fn skew_potential(a: f64, b: f64) -> PotentialSpec {
    let mut m: BTreeMap<[i64; 2], C64> = PotentialSpec::separable_cosine(a).iter().map(|(g, v)| (*g, *v)).collect();
    m.insert([1, 1], C64::new(0.0, -b));
    m.insert([-1, -1], C64::new(0.0, b));
    PotentialSpec::from_map(m).unwrap()
}

/// Unit square lattice with h(+-e_j) = -1: lambda = -2 cos t1 - 2 cos t2.
pub fn harper() -> (Lattice, HoppingSet) {
    let lat = Lattice::square(1.0).unwrap();
    let h = HoppingSet::nearest_neighbor(&lat, 0.0, -1.0);
    (lat, h)
}

/// B0 for which eps = 0.02 gives flux 2 pi / 32 per unit cell.
pub const HARPER_B0: f64 = 2.0 * PI / 0.64;

pub fn harper_field() -> FieldSpec {
    FieldSpec::constant(HARPER_B0)
}
