//! Plane-wave fiber Hamiltonians, band structure on a Brillouin-zone grid,
//! band classification, harmonic data at the band minimum and the ground
//! state lower-bound check.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{dot, norm, Lattice, Vec2};
use crate::linalg::{eigh, eigh_real_lowest, solve_small, EigRange};
use crate::wannier::HoppingSet;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialRecord {
    pub g: [i64; 2],
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Fourier coefficients V(g) of a real periodic potential,
/// V(x) = sum_g V(g) exp(i <g1 dual1 + g2 dual2, x>).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<PotentialRecord>", into = "Vec<PotentialRecord>")]
pub struct PotentialSpec {
    coeffs: BTreeMap<[i64; 2], C64>,
}

impl TryFrom<Vec<PotentialRecord>> for PotentialSpec {
    type Error = Error;
    fn try_from(recs: Vec<PotentialRecord>) -> Result<Self> {
        PotentialSpec::from_records(&recs)
    }
}

impl From<PotentialSpec> for Vec<PotentialRecord> {
    fn from(p: PotentialSpec) -> Self {
        p.records()
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec::default()
    }

    pub fn from_records(recs: &[PotentialRecord]) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for r in recs {
            if !(r.re.is_finite() && r.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite coefficient at {:?}", r.g)));
            }
            if coeffs.insert(r.g, C64::new(r.re, r.im)).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate coefficient at {:?}", r.g)));
            }
        }
        let p = PotentialSpec { coeffs };
        p.check_reality()?;
        Ok(p)
    }

    pub fn from_map(coeffs: BTreeMap<[i64; 2], C64>) -> Result<Self> {
        let p = PotentialSpec { coeffs };
        p.check_reality()?;
        Ok(p)
    }

    fn check_reality(&self) -> Result<()> {
        for (g, v) in &self.coeffs {
            let partner = self.coeff([-g[0], -g[1]]);
            if (partner - v.conj()).norm() > 1e-12 * (1.0 + v.norm()) {
                return Err(Error::InvalidArgument(format!("V(-g) != conj V(g) at g = {g:?}")));
            }
        }
        Ok(())
    }

    /// V = 2A (cos x1 + cos x2) on the 2 pi square lattice, i.e. V(+-e_j) = A.
    pub fn separable_cosine(amplitude: f64) -> Self {
        let mut m = BTreeMap::new();
        for g in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            m.insert(g, C64::new(amplitude, 0.0));
        }
        PotentialSpec { coeffs: m }
    }

    pub fn records(&self) -> Vec<PotentialRecord> {
        self.coeffs.iter().map(|(g, v)| PotentialRecord { g: *g, re: v.re, im: v.im }).collect()
    }

    pub fn coeff(&self, g: [i64; 2]) -> C64 {
        self.coeffs.get(&g).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64; 2], &C64)> {
        self.coeffs.iter()
    }

    /// Largest |g|_inf with a nonzero coefficient.
    pub fn support_radius(&self) -> usize {
        self.coeffs.iter().filter(|(_, v)| v.norm() > 0.0).map(|(g, _)| g[0].unsigned_abs().max(g[1].unsigned_abs()) as usize).max().unwrap_or(0)
    }

    /// True when every coefficient is real, so V is even and fibers are real symmetric.
    pub fn is_real_even(&self) -> bool {
        self.coeffs.values().all(|v| v.im == 0.0)
    }

    pub fn value_at(&self, lat: &Lattice, x: Vec2) -> f64 {
        self.coeffs.iter().map(|(g, v)| (v * C64::from_polar(1.0, dot(lat.dual_vector(*g), x))).re).sum()
    }

    /// Scale of the potential, used for tolerances.
    pub fn magnitude(&self) -> f64 {
        self.coeffs.values().map(|v| v.norm()).sum()
    }
}

/// Plane-wave basis {g : |g|_inf <= cutoff}, lexicographic.
pub fn plane_wave_basis(cutoff: usize) -> Vec<[i64; 2]> {
    let c = cutoff as i64;
    (-c..=c).flat_map(|a| (-c..=c).map(move |b| [a, b])).collect()
}

#[derive(Debug, Clone)]
pub struct FiberHamiltonian {
    pub theta: Vec2,
    pub cutoff: usize,
    pub basis: Vec<[i64; 2]>,
    pub matrix: Array2<C64>,
}

fn check_cutoff(pot: &PotentialSpec, cutoff: usize) -> Result<()> {
    let required = (2 * pot.support_radius()).max(1);
    if cutoff < required {
        return Err(Error::CutoffTooSmall { cutoff, required });
    }
    Ok(())
}

/// H[g, g'] = |theta + g*|^2 delta + V(g - g') on the truncated basis.
pub fn build_fiber_hamiltonian(theta: Vec2, pot: &PotentialSpec, lat: &Lattice, cutoff: usize) -> Result<FiberHamiltonian> {
    check_cutoff(pot, cutoff)?;
    let basis = plane_wave_basis(cutoff);
    let n = basis.len();
    let mut m = Array2::zeros((n, n));
    for (i, gi) in basis.iter().enumerate() {
        let k = lat.dual_vector(*gi);
        let kin = [theta[0] + k[0], theta[1] + k[1]];
        m[[i, i]] = C64::new(dot(kin, kin), 0.0);
    }
    let side = 2 * cutoff + 1;
    let c = cutoff as i64;
    for (dg, v) in pot.iter() {
        for (i, gi) in basis.iter().enumerate() {
            let gj = [gi[0] - dg[0], gi[1] - dg[1]];
            if gj[0].abs() > c || gj[1].abs() > c {
                continue;
            }
            let j = (gj[0] + c) as usize * side + (gj[1] + c) as usize;
            m[[i, j]] += v;
        }
    }
    Ok(FiberHamiltonian { theta, cutoff, basis, matrix: m })
}

fn fiber_real(theta: Vec2, pot: &PotentialSpec, lat: &Lattice, basis: &[[i64; 2]], cutoff: usize) -> Vec<f64> {
    let n = basis.len();
    let mut m = vec![0.0; n * n];
    let side = 2 * cutoff + 1;
    let c = cutoff as i64;
    for (i, gi) in basis.iter().enumerate() {
        let k = lat.dual_vector(*gi);
        let kin = [theta[0] + k[0], theta[1] + k[1]];
        m[i * n + i] = dot(kin, kin);
    }
    for (dg, v) in pot.iter() {
        for (i, gi) in basis.iter().enumerate() {
            let gj = [gi[0] - dg[0], gi[1] - dg[1]];
            if gj[0].abs() > c || gj[1].abs() > c {
                continue;
            }
            let j = (gj[0] + c) as usize * side + (gj[1] + c) as usize;
            m[i * n + j] += v.re;
        }
    }
    m
}

/// A real function sampled on the N x N Brillouin-zone grid,
/// index k = k1 * N + k2 for theta = (-1/2 + k1/N) dual1 + (-1/2 + k2/N) dual2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn get(&self, k1: usize, k2: usize) -> f64 {
        self.values[k1 * self.n + k2]
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Fractional (dual) coordinates of grid point (k1, k2).
pub fn grid_theta_fractional(n: usize, k1: usize, k2: usize) -> Vec2 {
    [-0.5 + k1 as f64 / n as f64, -0.5 + k2 as f64 / n as f64]
}

pub fn grid_theta(lat: &Lattice, n: usize, k1: usize, k2: usize) -> Vec2 {
    lat.dual_from_fractional(grid_theta_fractional(n, k1, k2))
}

/// Distance from theta to the nearest dual lattice vector.
pub fn reduced_norm(lat: &Lattice, theta: Vec2) -> f64 {
    let t = [dot(theta, lat.e1) / (2.0 * std::f64::consts::PI), dot(theta, lat.e2) / (2.0 * std::f64::consts::PI)];
    let mut best = f64::INFINITY;
    let (b1, b2) = (t[0].round() as i64, t[1].round() as i64);
    for a in (b1 - 2)..=(b1 + 2) {
        for b in (b2 - 2)..=(b2 + 2) {
            let g = lat.dual_vector([a, b]);
            best = best.min(norm([theta[0] - g[0], theta[1] - g[1]]));
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandStructure {
    pub lattice: Lattice,
    pub grid_n: usize,
    pub cutoff: usize,
    pub nbands: usize,
    /// energies[k * nbands + b], ascending in b.
    pub energies: Vec<f64>,
    /// Band-0 plane-wave coefficients per grid point, basis `plane_wave_basis(cutoff)`.
    pub vectors: Vec<Vec<C64>>,
}

impl BandStructure {
    pub fn energy(&self, k1: usize, k2: usize, band: usize) -> f64 {
        self.energies[(k1 * self.grid_n + k2) * self.nbands + band]
    }

    pub fn band(&self, b: usize) -> GridFunction {
        let n = self.grid_n;
        GridFunction { n, values: (0..n * n).map(|k| self.energies[k * self.nbands + b]).collect() }
    }

    pub fn basis(&self) -> Vec<[i64; 2]> {
        plane_wave_basis(self.cutoff)
    }

    pub fn theta(&self, k1: usize, k2: usize) -> Vec2 {
        grid_theta(&self.lattice, self.grid_n, k1, k2)
    }

    /// Grid indices of theta = 0.
    pub fn zero_index(&self) -> [usize; 2] {
        [self.grid_n / 2, self.grid_n / 2]
    }

    pub fn vector(&self, k1: usize, k2: usize) -> &[C64] {
        &self.vectors[k1 * self.grid_n + k2]
    }
}

/// Lowest `nbands` fiber eigenvalues (and band-0 vectors) on the grid.
pub fn solve_bands(pot: &PotentialSpec, lat: &Lattice, grid_n: usize, nbands: usize, cutoff: usize) -> Result<BandStructure> {
    if grid_n < 8 || grid_n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("gridN must be even and >= 8, got {grid_n}")));
    }
    if nbands < 2 {
        return Err(Error::InvalidArgument("nbands must be >= 2".into()));
    }
    check_cutoff(pot, cutoff)?;
    let basis = plane_wave_basis(cutoff);
    let dim = basis.len();
    if nbands > dim {
        return Err(Error::InvalidArgument(format!("nbands {nbands} exceeds basis size {dim}")));
    }
    let real = pot.is_real_even();
    let points: Vec<usize> = (0..grid_n * grid_n).collect();
    let solved: Vec<Result<(Vec<f64>, Vec<C64>)>> = points
        .par_iter()
        .map(|&k| {
            let theta = grid_theta(lat, grid_n, k / grid_n, k % grid_n);
            if real {
                let m = fiber_real(theta, pot, lat, &basis, cutoff);
                let (w, z) = eigh_real_lowest(&m, dim, nbands, true)?;
                let v0 = z[..dim].iter().map(|&x| C64::new(x, 0.0)).collect();
                Ok((w, v0))
            } else {
                let f = build_fiber_hamiltonian(theta, pot, lat, cutoff)?;
                let e = eigh(&f.matrix, EigRange::Index(0, nbands - 1), true)?;
                let v = e.vectors.expect("vectors requested");
                Ok((e.values, v.column(0).to_vec()))
            }
        })
        .collect();
    let mut energies = Vec::with_capacity(grid_n * grid_n * nbands);
    let mut vectors = Vec::with_capacity(grid_n * grid_n);
    for s in solved {
        let (w, v) = s?;
        energies.extend_from_slice(&w[..nbands]);
        vectors.push(v);
    }
    Ok(BandStructure { lattice: *lat, grid_n, cutoff, nbands, energies, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// sup band 0 < inf band 1.
    Gap,
    /// Band 0 simple everywhere but its range overlaps band 1.
    Overlap,
    /// Band 0 touches band 1 somewhere on the grid.
    Crossing,
}

/// Classifies band 0 against band 1. `tol` defaults to 1e-9 times the energy scale.
pub fn classify_hypothesis(bs: &BandStructure, tol: Option<f64>) -> Hypothesis {
    let b0 = bs.band(0);
    let b1 = bs.band(1);
    let scale = b0.values.iter().chain(&b1.values).fold(1.0f64, |a, &x| a.max(x.abs()));
    let tol = tol.unwrap_or(1e-9 * scale);
    let min_sep = b0.values.iter().zip(&b1.values).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    if min_sep <= tol {
        return Hypothesis::Crossing;
    }
    let sup0 = b0.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let inf1 = b1.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if sup0 < inf1 - tol {
        Hypothesis::Gap
    } else {
        Hypothesis::Overlap
    }
}

/// Quadratic model of band 0 at its minimum:
/// lambda(theta) ~ min_value + (theta - theta_min)^T quad_form (theta - theta_min).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HarmonicData {
    pub theta_min: Vec2,
    pub quad_form: [[f64; 2]; 2],
    pub m1: f64,
    pub m2: f64,
    pub m: f64,
    pub min_value: f64,
}

fn harmonic_from_quad(theta_min: Vec2, q: [[f64; 2]; 2], min_value: f64) -> Result<HarmonicData> {
    let tr = q[0][0] + q[1][1];
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let disc = ((q[0][0] - q[1][1]).powi(2) + 4.0 * q[0][1] * q[1][0]).max(0.0).sqrt();
    let m2 = 0.5 * (tr + disc);
    let m1 = if m2 != 0.0 { det / m2 } else { 0.5 * (tr - disc) };
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::NonPositiveHessian { m1, m2 });
    }
    Ok(HarmonicData { theta_min, quad_form: q, m1, m2, m: (m1 * m2).sqrt(), min_value })
}

/// Harmonic data from grid samples: argmin, then a least-squares quadratic
/// fit on the periodic 3x3 stencil around it.
pub fn band_minimum_hessian(band: &GridFunction, lat: &Lattice) -> Result<HarmonicData> {
    let n = band.n;
    let (mut kmin, mut vmin) = (0usize, f64::INFINITY);
    for (k, &v) in band.values.iter().enumerate() {
        if v < vmin {
            vmin = v;
            kmin = k;
        }
    }
    let (k1, k2) = (kmin / n, kmin % n);
    let step1 = lat.dual_from_fractional([1.0 / n as f64, 0.0]);
    let step2 = lat.dual_from_fractional([0.0, 1.0 / n as f64]);
    // Normal equations for [1, dx, dy, dx^2, dx dy, dy^2] in grid units.
    let mut ata = [[0.0; 6]; 6];
    let mut atb = [0.0; 6];
    for i in -1i64..=1 {
        for j in -1i64..=1 {
            let a1 = ((k1 as i64 + i).rem_euclid(n as i64)) as usize;
            let a2 = ((k2 as i64 + j).rem_euclid(n as i64)) as usize;
            let y = band.get(a1, a2) - vmin;
            let (u, v) = (i as f64, j as f64);
            let row = [1.0, u, v, u * u, u * v, v * v];
            for r in 0..6 {
                atb[r] += row[r] * y;
                for c in 0..6 {
                    ata[r][c] += row[r] * row[c];
                }
            }
        }
    }
    let p = solve_small(&ata.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), &atb)
        .ok_or(Error::MinimumOnGridBoundaryUnresolved { index: [k1, k2] })?;
    // Quadratic form in grid units.
    let qg = [[p[3], 0.5 * p[4]], [0.5 * p[4], p[5]]];
    let det = qg[0][0] * qg[1][1] - qg[0][1] * qg[1][0];
    if !(qg[0][0] > 0.0 && det > 0.0) {
        // Not positive definite in grid units either; report via Cartesian eigenvalues below.
        let q = grid_to_cartesian(qg, step1, step2);
        return harmonic_from_quad(grid_point(lat, n, k1, k2), q, vmin).and(Err(Error::MinimumOnGridBoundaryUnresolved { index: [k1, k2] }));
    }
    // delta* = -(2Q)^-1 b in grid units.
    let inv = [[qg[1][1] / det, -qg[0][1] / det], [-qg[1][0] / det, qg[0][0] / det]];
    let du = -0.5 * (inv[0][0] * p[1] + inv[0][1] * p[2]);
    let dv = -0.5 * (inv[1][0] * p[1] + inv[1][1] * p[2]);
    if du.abs() > 1.0 || dv.abs() > 1.0 {
        return Err(Error::MinimumOnGridBoundaryUnresolved { index: [k1, k2] });
    }
    let min_value = vmin + p[0] + 0.5 * (p[1] * du + p[2] * dv);
    let base = grid_point(lat, n, k1, k2);
    let theta_min = [base[0] + du * step1[0] + dv * step2[0], base[1] + du * step1[1] + dv * step2[1]];
    harmonic_from_quad(theta_min, grid_to_cartesian(qg, step1, step2), min_value)
}

fn grid_point(lat: &Lattice, n: usize, k1: usize, k2: usize) -> Vec2 {
    grid_theta(lat, n, k1, k2)
}

/// Converts a quadratic form in grid units (delta = u s1 + v s2) to Cartesian.
fn grid_to_cartesian(qg: [[f64; 2]; 2], s1: Vec2, s2: Vec2) -> [[f64; 2]; 2] {
    // delta = S w with S = [s1 s2]; w^T qg w = delta^T S^-T qg S^-1 delta.
    let det = s1[0] * s2[1] - s2[0] * s1[1];
    let si = [[s2[1] / det, -s2[0] / det], [-s1[1] / det, s1[0] / det]];
    let mut out = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    acc += si[i][a] * qg[i][j] * si[j][b];
                }
            }
            out[a][b] = acc;
        }
    }
    out
}

/// Harmonic data of lambda(theta) = sum_gamma h(gamma) exp(-i <theta, gamma>)
/// by Newton iteration on the exact trigonometric derivatives.
pub fn band_minimum_hessian_fourier(h: &HoppingSet, lat: &Lattice, grid_n: usize) -> Result<HarmonicData> {
    let eval = |theta: Vec2| -> (f64, Vec2, [[f64; 2]; 2]) {
        let (mut v, mut g, mut hs) = (0.0, [0.0; 2], [[0.0; 2]; 2]);
        for (idx, c) in h.iter() {
            let gam = lat.position(*idx);
            let e = C64::from_polar(1.0, -dot(theta, gam)) * c;
            v += e.re;
            // d/dtheta_a of e = -i gamma_a e
            let de = C64::new(0.0, -1.0) * e;
            g[0] += (de * gam[0]).re;
            g[1] += (de * gam[1]).re;
            for a in 0..2 {
                for b in 0..2 {
                    hs[a][b] -= (e * gam[a] * gam[b]).re;
                }
            }
        }
        (v, g, hs)
    };
    let (mut best, mut bv) = ([0.0; 2], f64::INFINITY);
    for k1 in 0..grid_n {
        for k2 in 0..grid_n {
            let t = grid_theta(lat, grid_n, k1, k2);
            let v = eval(t).0;
            if v < bv {
                bv = v;
                best = t;
            }
        }
    }
    let mut theta = best;
    for _ in 0..100 {
        let (_, g, hs) = eval(theta);
        let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
        if !(hs[0][0] > 0.0 && det > 0.0) {
            break;
        }
        let d0 = (hs[1][1] * g[0] - hs[0][1] * g[1]) / det;
        let d1 = (-hs[1][0] * g[0] + hs[0][0] * g[1]) / det;
        theta = [theta[0] - d0, theta[1] - d1];
        if d0.abs().max(d1.abs()) < 1e-15 * (1.0 + norm(theta)) {
            break;
        }
    }
    let (v, _, hs) = eval(theta);
    let q = [[0.5 * hs[0][0], 0.25 * (hs[0][1] + hs[1][0])], [0.25 * (hs[0][1] + hs[1][0]), 0.5 * hs[1][1]]];
    harmonic_from_quad(theta, q, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundCheck {
    /// (min u0 / max u0)^2.
    pub c: f64,
    pub holds: bool,
    /// min over grid of lambda0(theta) - lambda0(0) - C |theta|^2.
    pub margin: f64,
}

/// Samples the periodic function sum_g c_g exp(i <g*, x>) on an m x m grid
/// of fractional coordinates j/m.
pub fn periodic_on_cell(coeffs: &[C64], basis: &[[i64; 2]], m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * m];
    let tau = 2.0 * std::f64::consts::PI;
    for (c, g) in coeffs.iter().zip(basis) {
        if c.norm() < 1e-300 {
            continue;
        }
        for a in 0..m {
            let pa = tau * (g[0] as f64 * a as f64) / m as f64;
            for b in 0..m {
                let ph = pa + tau * (g[1] as f64 * b as f64) / m as f64;
                out[a * m + b] += c * C64::from_polar(1.0, ph);
            }
        }
    }
    out
}

/// Ground state u0 at theta = 0 made positive; returns (u0 values, index of max).
pub fn positive_ground_state(bs: &BandStructure, m: usize) -> Result<(Vec<f64>, usize)> {
    let [z1, z2] = bs.zero_index();
    let vals = periodic_on_cell(bs.vector(z1, z2), &bs.basis(), m);
    let mut imax = 0;
    for (i, v) in vals.iter().enumerate() {
        if v.norm() > vals[imax].norm() * (1.0 + 1e-12) {
            imax = i;
        }
    }
    let ph = vals[imax] / vals[imax].norm();
    let vmax = vals[imax].norm();
    let mut out = Vec::with_capacity(vals.len());
    for v in &vals {
        let r = v / ph;
        if r.re <= 0.0 || r.im.abs() > 1e-8 * vmax {
            return Err(Error::SignChangeInGroundState { ratio: r.re / vmax });
        }
        out.push(r.re);
    }
    Ok((out, imax))
}

/// Checks lambda0(theta) - lambda0(0) >= C |theta|^2 on the grid.
pub fn ground_state_bound_check(bs: &BandStructure) -> Result<BoundCheck> {
    let m = 4 * (2 * bs.cutoff + 1);
    let (u, _) = positive_ground_state(bs, m)?;
    let umin = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let umax = u.iter().cloned().fold(0.0, f64::max);
    let c = (umin / umax).powi(2);
    let [z1, z2] = bs.zero_index();
    let l0 = bs.energy(z1, z2, 0);
    let n = bs.grid_n;
    let mut margin = f64::INFINITY;
    let mut scale: f64 = 1.0;
    for k1 in 0..n {
        for k2 in 0..n {
            let t = reduced_norm(&bs.lattice, bs.theta(k1, k2));
            let e = bs.energy(k1, k2, 0);
            scale = scale.max(e.abs());
            margin = margin.min(e - l0 - c * t * t);
        }
    }
    Ok(BoundCheck { c, holds: margin >= -1e-10 * scale, margin })
}
