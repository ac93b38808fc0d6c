//! Gauge fixing of the lowest band, Wannier synthesis on a real-space grid,
//! hopping coefficients, the magnetic Gramian with its Löwdin inverse square
//! root and the magnetic hoppings of the orthonormalised almost-Wannier basis.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bloch::{periodic_on_cell, BandStructure, GridFunction, PotentialSpec};
use crate::lattice::{dot, norm, Lattice, LatticeSite, Vec2};
use crate::linalg::{eigh, EigRange};
use crate::phase::{peierls_exponent, FieldSpec};
use crate::{Error, Result, C64};

/// Below this modulus the gauge reference overlap is treated as degenerate.
pub const GAUGE_OVERLAP_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoppingRecord {
    pub gamma: [i64; 2],
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Hopping coefficients h(gamma) indexed by lattice vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoppingSet {
    entries: BTreeMap<[i64; 2], C64>,
    pub trunc_tol: f64,
    /// Largest |gamma| (Cartesian) among retained entries.
    pub trunc_radius: f64,
}

impl HoppingSet {
    pub fn from_map(lat: &Lattice, entries: BTreeMap<[i64; 2], C64>, trunc_tol: f64) -> Self {
        let trunc_radius = entries.keys().map(|g| norm(lat.position(*g))).fold(0.0, f64::max);
        HoppingSet { entries, trunc_tol, trunc_radius }
    }

    pub fn from_records(lat: &Lattice, recs: &[HoppingRecord]) -> Result<Self> {
        let mut m = BTreeMap::new();
        for r in recs {
            if m.insert(r.gamma, C64::new(r.re, r.im)).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate hopping {:?}", r.gamma)));
            }
        }
        for (g, v) in &m {
            let p = m.get(&[-g[0], -g[1]]).copied().unwrap_or_default();
            if (p - v.conj()).norm() > 1e-12 * (1.0 + v.norm()) {
                return Err(Error::InvalidArgument(format!("h(-gamma) != conj h(gamma) at {g:?}")));
            }
        }
        Ok(HoppingSet::from_map(lat, m, 0.0))
    }

    /// h(+-e1) = h(+-e2) = t, h(0) = onsite.
    pub fn nearest_neighbor(lat: &Lattice, onsite: f64, t: f64) -> Self {
        let mut m = BTreeMap::new();
        if onsite != 0.0 {
            m.insert([0, 0], C64::new(onsite, 0.0));
        }
        for g in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            m.insert(g, C64::new(t, 0.0));
        }
        HoppingSet::from_map(lat, m, 0.0)
    }

    pub fn records(&self) -> Vec<HoppingRecord> {
        self.entries.iter().map(|(g, v)| HoppingRecord { gamma: *g, re: v.re, im: v.im }).collect()
    }

    pub fn get(&self, g: [i64; 2]) -> C64 {
        self.entries.get(&g).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64; 2], &C64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// lambda(theta) = sum h(gamma) exp(-i <theta, gamma>).
    pub fn symbol(&self, lat: &Lattice, theta: Vec2) -> C64 {
        self.entries.iter().map(|(g, v)| v * C64::from_polar(1.0, -dot(theta, lat.position(*g)))).sum()
    }

    /// max |h(gamma) - other(gamma)| over the union of supports.
    pub fn max_abs_diff(&self, other: &HoppingSet) -> f64 {
        let mut keys: Vec<[i64; 2]> = self.entries.keys().chain(other.entries.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        keys.iter().map(|g| (self.get(*g) - other.get(*g)).norm()).fold(0.0, f64::max)
    }
}

/// Cartesian position of the maximum of the theta = 0 ground state in the
/// unit cell; the first grid point wins ties, so flat states pick the origin.
pub fn gauge_center(bs: &BandStructure) -> Vec2 {
    let m = 4 * (2 * bs.cutoff + 1);
    let [z1, z2] = bs.zero_index();
    let vals = periodic_on_cell(bs.vector(z1, z2), &bs.basis(), m);
    let mut imax = 0;
    for (i, v) in vals.iter().enumerate() {
        if v.norm() > vals[imax].norm() * (1.0 + 1e-9) {
            imax = i;
        }
    }
    let s = [(imax / m) as f64 / m as f64, (imax % m) as f64 / m as f64];
    // Fold to the cell centred on the origin.
    let s = [s[0] - s[0].round(), s[1] - s[1].round()];
    bs.lattice.from_fractional(s)
}

/// Overlap of the Bloch state with a Gaussian trial orbital at `center`,
/// sum_g exp(i <theta + g*, c>) exp(-sigma^2 |theta + g*|^2 / 2) v_g.
/// Invariant under theta -> theta + g0* with the index-shifted vector.
pub fn trial_overlap(lat: &Lattice, theta: Vec2, v: &[C64], basis: &[[i64; 2]], center: Vec2, sigma: f64) -> C64 {
    v.iter()
        .zip(basis)
        .map(|(c, g)| {
            let gs = lat.dual_vector(*g);
            let k = [theta[0] + gs[0], theta[1] + gs[1]];
            c * C64::from_polar((-0.5 * sigma * sigma * dot(k, k)).exp(), dot(k, center))
        })
        .sum()
}

fn gauge_sigma(lat: &Lattice) -> f64 {
    0.25 * lat.lattice_constant()
}

/// Rescales each band-0 vector by a unit scalar so that its overlap with
/// the reference orbital (the theta = 0 ground state localised at its
/// maximum) is real and positive.
pub fn fix_gauge(bs: &BandStructure) -> Result<BandStructure> {
    let lat = bs.lattice;
    let basis = bs.basis();
    let center = gauge_center(bs);
    let sigma = gauge_sigma(&lat);
    let n = bs.grid_n;
    let [z1, z2] = bs.zero_index();
    let ref_mag = trial_overlap(&lat, bs.theta(z1, z2), bs.vector(z1, z2), &basis, center, sigma).norm();
    let mut out = bs.clone();
    for k1 in 0..n {
        for k2 in 0..n {
            let v = bs.vector(k1, k2);
            let a = trial_overlap(&lat, bs.theta(k1, k2), v, &basis, center, sigma);
            if a.norm() < GAUGE_OVERLAP_MIN * ref_mag.max(1e-300) {
                return Err(Error::GaugeReferenceDegenerate { overlap: a.norm() / ref_mag, index: [k1, k2] });
            }
            let ph = a.conj() / a.norm();
            out.vectors[k1 * n + k2] = v.iter().map(|x| x * ph).collect();
        }
    }
    Ok(out)
}

/// Parallel-transport gauge along a boustrophedon path starting at theta = 0:
/// each vector is phased to have a positive overlap with its predecessor.
pub fn fix_gauge_parallel_transport(bs: &BandStructure) -> Result<BandStructure> {
    let n = bs.grid_n;
    let [z1, z2] = bs.zero_index();
    let mut out = bs.clone();
    let mut order = Vec::with_capacity(n * n);
    for i in 0..n {
        let k1 = (z1 + i) % n;
        for j in 0..n {
            let k2 = if i % 2 == 0 { (z2 + j) % n } else { (z2 + n - 1 - j) % n };
            order.push((k1, k2));
        }
    }
    for w in 1..order.len() {
        let (p1, p2) = order[w - 1];
        let (k1, k2) = order[w];
        let prev = out.vectors[p1 * n + p2].clone();
        let v = &out.vectors[k1 * n + k2];
        let ov: C64 = prev.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
        if ov.norm() < GAUGE_OVERLAP_MIN {
            return Err(Error::GaugeReferenceDegenerate { overlap: ov.norm(), index: [k1, k2] });
        }
        let ph = ov.conj() / ov.norm();
        out.vectors[k1 * n + k2] = v.iter().map(|x| x * ph).collect();
    }
    Ok(out)
}

/// Reference gauge, falling back to parallel transport when degenerate.
pub fn fix_gauge_with_fallback(bs: &BandStructure) -> Result<BandStructure> {
    match fix_gauge(bs) {
        Err(Error::GaugeReferenceDegenerate { .. }) => fix_gauge_parallel_transport(bs),
        r => r,
    }
}

/// Complex samples on the regular grid x(u) = (u1 e1 + u2 e2) / m,
/// u in [-half, half]^2, stored row-major in u1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealGrid {
    pub lattice: Lattice,
    pub m: usize,
    pub half: usize,
    pub values: Vec<C64>,
}

impl RealGrid {
    pub fn zeros(lattice: Lattice, m: usize, half: usize) -> Self {
        let side = 2 * half + 1;
        RealGrid { lattice, m, half, values: vec![C64::new(0.0, 0.0); side * side] }
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn position(&self, u: [i64; 2]) -> Vec2 {
        self.lattice.from_fractional([u[0] as f64 / self.m as f64, u[1] as f64 / self.m as f64])
    }

    fn idx(&self, u: [i64; 2]) -> Option<usize> {
        let h = self.half as i64;
        if u[0].abs() > h || u[1].abs() > h {
            return None;
        }
        Some((u[0] + h) as usize * self.side() + (u[1] + h) as usize)
    }

    /// Value at node u, zero outside the box.
    pub fn at(&self, u: [i64; 2]) -> C64 {
        self.idx(u).map(|i| self.values[i]).unwrap_or_default()
    }

    pub fn node(&self, i: usize) -> [i64; 2] {
        let s = self.side();
        [(i / s) as i64 - self.half as i64, (i % s) as i64 - self.half as i64]
    }

    /// Quadrature weight per node.
    pub fn weight(&self) -> f64 {
        self.lattice.cell_area() / (self.m * self.m) as f64
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.weight()
    }

    /// <self, tau_{-gamma} other> = int conj(self(x)) other(x - gamma) dx.
    pub fn overlap_translate(&self, other: &RealGrid, gamma: [i64; 2]) -> C64 {
        let m = self.m as i64;
        let mut acc = C64::new(0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            if v.norm_sqr() == 0.0 {
                continue;
            }
            let u = self.node(i);
            acc += v.conj() * other.at([u[0] - gamma[0] * m, u[1] - gamma[1] * m]);
        }
        acc * self.weight()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WannierFunction {
    pub grid: RealGrid,
    pub radius: f64,
    /// Point the decay is measured from.
    pub center: Vec2,
    /// Norm before renormalisation.
    pub raw_norm: f64,
    pub decay_rate: f64,
    pub decay_prefactor: f64,
    /// sqrt(SS_res / SS_tot) of the log-linear envelope fit.
    pub fit_residual: f64,
}

impl WannierFunction {
    pub fn lattice(&self) -> &Lattice {
        &self.grid.lattice
    }

    /// <phi0, tau_{-gamma} phi0>.
    pub fn translate_overlap(&self, gamma: [i64; 2]) -> C64 {
        self.grid.overlap_translate(&self.grid, gamma)
    }
}

/// Nodes per lattice constant for a requested spacing.
pub fn nodes_per_cell(lat: &Lattice, spacing: f64) -> usize {
    ((lat.lattice_constant() / spacing).round() as usize).max(2)
}

/// phi0(x) = |E*|^{-1/2} sum_theta e^{i<theta,x>} phihat0(theta, x) dtheta on
/// a disk of radius `radius`, computed exactly on the grid by one 2D FFT.
pub fn synthesize_wannier(bs: &BandStructure, radius: f64, spacing: f64) -> Result<WannierFunction> {
    let lat = bs.lattice;
    let n = bs.grid_n;
    let c = bs.cutoff;
    if !(radius > 0.0 && spacing > 0.0) {
        return Err(Error::InvalidArgument("radius and spacing must be positive".into()));
    }
    let m = nodes_per_cell(&lat, spacing);
    // FFT resolution must cover all (2c+1) N frequencies per axis.
    let mut mf = m;
    while mf < 2 * c + 1 {
        mf += m;
    }
    let stride = mf / m;
    let l = n * mf;
    let smax = radius * norm(lat.dual1).max(norm(lat.dual2)) / (2.0 * PI);
    let half = (smax * m as f64).ceil() as usize;
    if 2 * half / m + 1 >= n {
        return Err(Error::InvalidArgument(format!("radius {radius} exceeds the {n}-cell supercell")));
    }
    let mut buf = vec![C64::new(0.0, 0.0); l * l];
    let basis = bs.basis();
    let li = l as i64;
    let ni = n as i64;
    for k1 in 0..n {
        for k2 in 0..n {
            let v = bs.vector(k1, k2);
            for (coef, g) in v.iter().zip(&basis) {
                let a = (k1 as i64 - ni / 2 + ni * g[0]).rem_euclid(li) as usize;
                let b = (k2 as i64 - ni / 2 + ni * g[1]).rem_euclid(li) as usize;
                buf[a * l + b] += coef;
            }
        }
    }
    fft2_inverse(&mut buf, l);
    let dtheta = lat.dual_cell_area() / (n * n) as f64;
    let pref = dtheta / (2.0 * PI * lat.dual_cell_area().sqrt());
    let mut grid = RealGrid::zeros(lat, m, half);
    for i in 0..grid.values.len() {
        let u = grid.node(i);
        if norm(grid.position(u)) > radius {
            continue;
        }
        let a = (u[0] * stride as i64).rem_euclid(li) as usize;
        let b = (u[1] * stride as i64).rem_euclid(li) as usize;
        grid.values[i] = buf[a * l + b] * pref;
    }
    let raw_norm = grid.norm_sqr().sqrt();
    if (raw_norm - 1.0).abs() > 1e-3 {
        return Err(Error::NormLoss { norm: raw_norm });
    }
    for v in grid.values.iter_mut() {
        *v /= raw_norm;
    }
    let center = gauge_center(bs);
    let (decay_rate, decay_prefactor, fit_residual) = fit_decay(&grid, center, radius);
    Ok(WannierFunction { grid, radius, center, raw_norm, decay_rate, decay_prefactor, fit_residual })
}

fn fft2_inverse(buf: &mut [C64], l: usize) {
    fft2(buf, l, true)
}

fn fft2(buf: &mut [C64], l: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(l) } else { planner.plan_fft_forward(l) };
    for row in buf.chunks_mut(l) {
        fft.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); l];
    for j in 0..l {
        for i in 0..l {
            col[i] = buf[i * l + j];
        }
        fft.process(&mut col);
        for i in 0..l {
            buf[i * l + j] = col[i];
        }
    }
}

/// Least-squares fit of log(shell maximum of |phi|) = log C - rate r over
/// shells of width a/8 between a/2 and the disk edge, above a noise floor
/// taken as ten times the median envelope of the outer quarter of shells
/// (cutoff truncation leaves a slowly decaying plateau there).
fn fit_decay(grid: &RealGrid, center: Vec2, radius: f64) -> (f64, f64, f64) {
    let a = grid.lattice.lattice_constant();
    let width = a / 8.0;
    let nshell = (radius / width).floor() as usize;
    let mut env = vec![0.0f64; nshell + 1];
    let mut peak: f64 = 0.0;
    for (i, v) in grid.values.iter().enumerate() {
        let r = norm(crate::lattice::sub(grid.position(grid.node(i)), center));
        let s = (r / width).floor() as usize;
        if s <= nshell {
            env[s] = env[s].max(v.norm());
        }
        peak = peak.max(v.norm());
    }
    let usable = |s: usize| {
        let r = (s as f64 + 0.5) * width;
        r >= 0.5 * a && r + width <= radius - norm(center)
    };
    let mut outer: Vec<f64> = (0..=nshell).filter(|&s| usable(s)).map(|s| env[s]).collect();
    let outer_len = outer.len();
    let mut tail: Vec<f64> = outer.split_off(outer_len - outer_len / 4);
    tail.sort_by(f64::total_cmp);
    let floor = (1e-11 * peak).max(10.0 * tail.get(tail.len() / 2).copied().unwrap_or(0.0));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (s, &e) in env.iter().enumerate() {
        if !usable(s) || e <= floor {
            continue;
        }
        xs.push((s as f64 + 0.5) * width);
        ys.push(e.ln());
    }
    if xs.len() < 3 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (-slope, icpt.exp(), (ss_res / ss_tot.max(1e-300)).sqrt())
}

/// h(gamma) = (1/N^2) sum_theta lambda(theta) exp(i <theta, gamma>), keeping |h| >= trunc_tol.
pub fn hoppings_from_band(band: &GridFunction, lat: &Lattice, trunc_tol: f64) -> HoppingSet {
    let n = band.n;
    let ni = n as i64;
    // <theta, gamma> = 2 pi t.n with t_j = -1/2 + k_j / N.
    let range: Vec<i64> = (-(ni / 2) + 1..ni / 2).collect();
    let phase = |k: usize, r: i64| C64::from_polar(1.0, 2.0 * PI * (-0.5 + k as f64 / n as f64) * r as f64);
    // Partial transform over k2 for each n2.
    let mut partial = vec![C64::new(0.0, 0.0); n * range.len()];
    for k1 in 0..n {
        for (j, &r2) in range.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k2 in 0..n {
                acc += band.get(k1, k2) * phase(k2, r2);
            }
            partial[k1 * range.len() + j] = acc;
        }
    }
    let mut map = BTreeMap::new();
    let norm_n = 1.0 / (n * n) as f64;
    for &r1 in &range {
        for (j, &r2) in range.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k1 in 0..n {
                acc += partial[k1 * range.len() + j] * phase(k1, r1);
            }
            map.insert([r1, r2], acc * norm_n);
        }
    }
    // Enforce h(-gamma) = conj h(gamma) exactly.
    let keys: Vec<[i64; 2]> = map.keys().copied().collect();
    let sym: BTreeMap<[i64; 2], C64> = keys
        .iter()
        .map(|g| {
            let a = map[g];
            let b = map.get(&[-g[0], -g[1]]).copied().unwrap_or_default();
            (*g, 0.5 * (a + b.conj()))
        })
        .filter(|(_, v)| v.norm() >= trunc_tol)
        .collect();
    HoppingSet::from_map(lat, sym, trunc_tol)
}

#[derive(Debug, Clone)]
pub struct GramianData {
    pub sites: Vec<LatticeSite>,
    pub g: Array2<C64>,
    pub f: Array2<C64>,
    pub epsilon: f64,
    pub kappa: f64,
    pub field: FieldSpec,
}

impl GramianData {
    pub fn site_index(&self, idx: [i64; 2]) -> Option<usize> {
        self.sites.iter().position(|s| s.index == idx)
    }

    /// max |G - I|.
    pub fn deviation_from_identity(&self) -> f64 {
        let n = self.g.nrows();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                d = d.max((self.g[[i, j]] - id).norm());
            }
        }
        d
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.g.nrows();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d = d.max(self.g[[i, j]].norm());
                }
            }
        }
        d
    }
}

fn phases_on_grid(grid: &RealGrid, shift: [i64; 2], site: Vec2, field: &FieldSpec, eps: f64, kappa: f64) -> Vec<C64> {
    let m = grid.m as i64;
    grid.values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.norm_sqr() == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let u = grid.node(i);
            let x = grid.position([u[0] + shift[0] * m, u[1] + shift[1] * m]);
            C64::from_polar(1.0, -peierls_exponent(field, x, site, eps, kappa))
        })
        .collect()
}

/// G_ab = <Lambda(., a) tau_{-a} w, Lambda(., b) tau_{-b} w> by grid quadrature.
pub fn magnetic_gramian(w: &WannierFunction, sites: &[LatticeSite], eps: f64, kappa: f64, field: &FieldSpec) -> Result<GramianData> {
    let grid = &w.grid;
    let ns = sites.len();
    let m = grid.m as i64;
    for a in sites {
        for b in sites {
            let d = crate::lattice::sub(a.position, b.position);
            if norm(d) > 0.5 * w.radius {
                return Err(Error::QuadratureOverlapTruncated { separation: norm(d) });
            }
        }
    }
    let mut g = Array2::zeros((ns, ns));
    // Phases Lambda(x, beta) at x = node(u) + alpha, per (alpha, beta); alpha fixed per row.
    for (ia, a) in sites.iter().enumerate() {
        let lam_a = phases_on_grid(grid, a.index, a.position, field, eps, kappa);
        for (ib, b) in sites.iter().enumerate().skip(ia) {
            let lam_b = if ia == ib { lam_a.clone() } else { phases_on_grid(grid, a.index, b.position, field, eps, kappa) };
            let d = [a.index[0] - b.index[0], a.index[1] - b.index[1]];
            let mut acc = C64::new(0.0, 0.0);
            for (i, v) in grid.values.iter().enumerate() {
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                let u = grid.node(i);
                let wb = grid.at([u[0] + d[0] * m, u[1] + d[1] * m]);
                if wb.norm_sqr() == 0.0 {
                    continue;
                }
                acc += (lam_a[i] * v).conj() * lam_b[i] * wb;
            }
            g[[ia, ib]] = acc * grid.weight();
        }
    }
    for i in 0..ns {
        for j in 0..i {
            g[[i, j]] = g[[j, i]].conj();
        }
        g[[i, i]] = C64::new(g[[i, i]].re, 0.0);
    }
    let f = loewdin_inverse_sqrt(&g)?;
    Ok(GramianData { sites: sites.to_vec(), g, f, epsilon: eps, kappa, field: field.clone() })
}

/// F = G^{-1/2} via the spectral decomposition.
pub fn loewdin_inverse_sqrt(g: &Array2<C64>) -> Result<Array2<C64>> {
    let n = g.nrows();
    let e = eigh(g, EigRange::All, true)?;
    let min_eig = e.values.first().copied().unwrap_or(1.0);
    if min_eig < 1e-10 {
        return Err(Error::NearSingularGramian { min_eig });
    }
    let v = e.vectors.expect("vectors requested");
    let mut f = Array2::zeros((n, n));
    for k in 0..n {
        let s = e.values[k].powf(-0.5);
        for i in 0..n {
            let vik = v[[i, k]] * s;
            for j in 0..n {
                f[[i, j]] += vik * v[[j, k]].conj();
            }
        }
    }
    Ok(f)
}

/// Applies (-i grad - a)^2 + V with a(x) = s (-x2, x1), by fourth-order
/// finite differences on the grid; values outside the box are zero.
pub fn apply_magnetic_hamiltonian(psi: &RealGrid, pot: &PotentialSpec, s: f64) -> RealGrid {
    let lat = psi.lattice;
    let m = psi.m as f64;
    // x = P u with P = [e1 e2] / m.
    let p = [[lat.e1[0] / m, lat.e2[0] / m], [lat.e1[1] / m, lat.e2[1] / m]];
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    let pinv = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
    // Ginv = P^-1 P^-T.
    let mut ginv = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            ginv[i][j] = pinv[i][0] * pinv[j][0] + pinv[i][1] * pinv[j][1];
        }
    }
    let mixed = ginv[0][1].abs() > 1e-14 * (ginv[0][0].abs() + ginv[1][1].abs());
    // Potential on one cell, tiled.
    let mc = psi.m;
    let mut vcell = vec![0.0; mc * mc];
    for a in 0..mc {
        for b in 0..mc {
            vcell[a * mc + b] = pot.value_at(&lat, lat.from_fractional([a as f64 / m, b as f64 / m]));
        }
    }
    let d1 = [(-2i64, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
    let d2 = [(-2i64, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)];
    let mut out = RealGrid::zeros(lat, psi.m, psi.half);
    let mci = mc as i64;
    for i in 0..psi.values.len() {
        let u = psi.node(i);
        let f = |a: i64, b: i64| psi.at([u[0] + a, u[1] + b]);
        let (mut f11, mut f22, mut f1, mut f2) = (C64::default(), C64::default(), C64::default(), C64::default());
        for &(o, w) in &d2 {
            f11 += f(o, 0) * w;
            f22 += f(0, o) * w;
        }
        for &(o, w) in &d1 {
            f1 += f(o, 0) * w;
            f2 += f(0, o) * w;
        }
        let mut lap = f11 * ginv[0][0] + f22 * ginv[1][1];
        if mixed {
            let mut f12 = C64::default();
            for &(o1, w1) in &d1 {
                for &(o2, w2) in &d1 {
                    f12 += f(o1, o2) * (w1 * w2);
                }
            }
            lap += f12 * (2.0 * ginv[0][1]);
        }
        let x = psi.position(u);
        let a = [-s * x[1], s * x[0]];
        // P^-1 a contracted with d/du.
        let b0 = pinv[0][0] * a[0] + pinv[0][1] * a[1];
        let b1 = pinv[1][0] * a[0] + pinv[1][1] * a[1];
        let v = vcell[(u[0].rem_euclid(mci) * mci + u[1].rem_euclid(mci)) as usize];
        let here = psi.values[i];
        out.values[i] = -lap + C64::new(0.0, 2.0) * (f1 * b0 + f2 * b1) + here * ((a[0] * a[0] + a[1] * a[1]) + v);
    }
    out
}

fn hoppings_on_grid(psi: &RealGrid, hpsi: &RealGrid, lat: &Lattice, field: &FieldSpec, eps: f64, candidates: &[LatticeSite]) -> BTreeMap<[i64; 2], C64> {
    let m = psi.m as i64;
    let mut raw = BTreeMap::new();
    for g in candidates {
        let mut acc = C64::new(0.0, 0.0);
        for (i, v) in psi.values.iter().enumerate() {
            if v.norm_sqr() == 0.0 {
                continue;
            }
            let u = psi.node(i);
            let hv = hpsi.at([u[0] - g.index[0] * m, u[1] - g.index[1] * m]);
            if hv.norm_sqr() == 0.0 {
                continue;
            }
            let lam = if eps == 0.0 { C64::new(1.0, 0.0) } else { C64::from_polar(1.0, -peierls_exponent(field, psi.position(u), g.position, eps, 0.0)) };
            acc += v.conj() * lam * hv;
        }
        raw.insert(g.index, acc * psi.weight());
    }
    let _ = lat;
    raw.iter()
        .map(|(g, v)| {
            let p = raw.get(&[-g[0], -g[1]]).copied().unwrap_or(v.conj());
            (*g, 0.5 * (v + p.conj()))
        })
        .collect()
}

/// Applies -Laplacian + V with the Laplacian taken in Fourier space on the
/// (periodically continued) box. Exact for band-limited data that vanishes
/// at the box edge.
pub fn apply_free_hamiltonian_spectral(psi: &RealGrid, pot: &PotentialSpec) -> RealGrid {
    let lat = psi.lattice;
    let s = psi.side();
    let mut buf = psi.values.clone();
    fft2(&mut buf, s, false);
    let m = psi.m as f64;
    let freq = |j: usize| {
        let j = j as i64;
        let f = if j > (s as i64) / 2 { j - s as i64 } else { j };
        m * f as f64 / s as f64
    };
    for a in 0..s {
        for b in 0..s {
            let k = lat.dual_from_fractional([freq(a), freq(b)]);
            buf[a * s + b] *= (k[0] * k[0] + k[1] * k[1]) / (s * s) as f64;
        }
    }
    fft2(&mut buf, s, true);
    let mut out = RealGrid::zeros(lat, psi.m, psi.half);
    for (i, v) in buf.into_iter().enumerate() {
        let x = psi.position(psi.node(i));
        out.values[i] = v + psi.values[i] * pot.value_at(&lat, x);
    }
    out
}

/// Zero-field hoppings <phi0, H0 tau_{-gamma} phi0> by real-space quadrature,
/// H0 applied spectrally.
pub fn real_space_hoppings(w: &WannierFunction, pot: &PotentialSpec, hop_radius: f64) -> BTreeMap<[i64; 2], C64> {
    let hpsi = apply_free_hamiltonian_spectral(&w.grid, pot);
    let lat = *w.lattice();
    hoppings_on_grid(&w.grid, &hpsi, &lat, &FieldSpec::constant(0.0), 0.0, &lat.enumerate_sites(hop_radius))
}

/// Magnetic hoppings h^eps(gamma) = <psi0, Lambda(., gamma) tau_{-gamma} H^eps psi0>
/// with psi0 = sum_a F(a) Lambda(., a) phi0(. - a) (constant field only).
pub fn magnetic_hoppings(
    w: &WannierFunction,
    gram: &GramianData,
    pot: &PotentialSpec,
    hop_radius: f64,
    trunc_tol: f64,
    reference: Option<&HoppingSet>,
) -> Result<HoppingSet> {
    if gram.kappa != 0.0 {
        return Err(Error::InvalidArgument("magnetic hoppings need kappa = 0".into()));
    }
    let lat = *w.lattice();
    let candidates = lat.enumerate_sites(hop_radius);
    if let Some(h0) = reference {
        let hpsi = apply_magnetic_hamiltonian(&w.grid, pot, 0.0);
        let fd = hoppings_on_grid(&w.grid, &hpsi, &lat, &FieldSpec::constant(0.0), 0.0, &candidates);
        let dev = candidates.iter().map(|g| (fd.get(&g.index).copied().unwrap_or_default() - h0.get(g.index)).norm()).fold(0.0, f64::max);
        if dev > 1e-4 {
            return Err(Error::GridTooCoarse { deviation: dev });
        }
    }
    let origin = gram.site_index([0, 0]).ok_or_else(|| Error::InvalidArgument("Gramian sites must contain the origin".into()))?;
    let grid = &w.grid;
    let m = grid.m as i64;
    let reach = gram.sites.iter().map(|s| s.index[0].abs().max(s.index[1].abs())).max().unwrap_or(0);
    let half = grid.half + (reach * m) as usize;
    let mut psi = RealGrid::zeros(lat, grid.m, half);
    let eps = gram.epsilon;
    for (ia, a) in gram.sites.iter().enumerate() {
        let fa = gram.f[[ia, origin]];
        if fa.norm() < 1e-15 {
            continue;
        }
        for i in 0..psi.values.len() {
            let u = psi.node(i);
            let wv = grid.at([u[0] - a.index[0] * m, u[1] - a.index[1] * m]);
            if wv.norm_sqr() == 0.0 {
                continue;
            }
            let lam = C64::from_polar(1.0, -peierls_exponent(&gram.field, psi.position(u), a.position, eps, 0.0));
            psi.values[i] += fa * lam * wv;
        }
    }
    let hpsi = apply_magnetic_hamiltonian(&psi, pot, 0.5 * eps * gram.field.b0);
    let map = hoppings_on_grid(&psi, &hpsi, &lat, &gram.field, eps, &candidates);
    let kept = map.into_iter().filter(|(_, v)| v.norm() >= trunc_tol).collect();
    Ok(HoppingSet::from_map(&lat, kept, trunc_tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::solve_bands;

    #[test]
    fn hoppings_of_cosine_band() {
        let lat = Lattice::square(1.0).unwrap();
        let n = 32;
        let values = (0..n * n)
            .map(|k| {
                let t = crate::bloch::grid_theta(&lat, n, k / n, k % n);
                2.0 - t[0].cos() - t[1].cos()
            })
            .collect();
        let h = hoppings_from_band(&GridFunction { n, values }, &lat, 1e-12);
        assert_eq!(h.len(), 5);
        assert!((h.get([0, 0]) - C64::new(2.0, 0.0)).norm() < 1e-14);
        for g in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert!((h.get(g) - C64::new(-0.5, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn loewdin_of_diagonal() {
        let mut g = Array2::zeros((3, 3));
        for (i, d) in [4.0, 1.0, 0.25].iter().enumerate() {
            g[[i, i]] = C64::new(*d, 0.0);
        }
        let f = loewdin_inverse_sqrt(&g).unwrap();
        for (i, d) in [0.5, 1.0, 2.0].iter().enumerate() {
            assert!((f[[i, i]].re - d).abs() < 1e-14);
        }
        g[[2, 2]] = C64::new(1e-12, 0.0);
        assert!(matches!(loewdin_inverse_sqrt(&g), Err(Error::NearSingularGramian { .. })));
    }

    #[test]
    fn gauge_is_phase_covariant() {
        let lat = Lattice::square(2.0 * PI).unwrap();
        let bs = solve_bands(&PotentialSpec::separable_cosine(1.0), &lat, 8, 2, 3).unwrap();
        let fixed = fix_gauge(&bs).unwrap();
        let mut noisy = bs.clone();
        for (i, v) in noisy.vectors.iter_mut().enumerate() {
            let ph = C64::from_polar(1.0, 0.7 * i as f64 + 0.3);
            v.iter_mut().for_each(|x| *x *= ph);
        }
        let refixed = fix_gauge(&noisy).unwrap();
        for (a, b) in fixed.vectors.iter().zip(&refixed.vectors) {
            let d = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(d < 1e-10);
        }
    }

    #[test]
    fn laplacian_stencil_on_plane_wave() {
        let lat = Lattice::new([1.0, 0.0], [0.4, 0.9]).unwrap();
        let mut g = RealGrid::zeros(lat, 24, 60);
        let k = [0.7, -0.4];
        for i in 0..g.values.len() {
            let x = g.position(g.node(i));
            g.values[i] = C64::from_polar(1.0, dot(k, x));
        }
        let h = apply_magnetic_hamiltonian(&g, &PotentialSpec::zero(), 0.0);
        let i0 = g.values.len() / 2;
        let ratio = h.values[i0] / g.values[i0];
        assert!((ratio.re - dot(k, k)).abs() < 1e-6, "{ratio}");
    }
}
