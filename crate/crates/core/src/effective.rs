//! Peierls-substituted effective matrices on finite geometries, the
//! quasi-Bloch function of a hopping set and Landau-level predictions.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bloch::{band_minimum_hessian_fourier, grid_theta, GridFunction, HarmonicData};
use crate::lattice::{Lattice, LatticeSite};
use crate::linalg::{eigh, EigRange, SparseHermitian};
use crate::phase::{peierls_phase, FieldSpec};
use crate::wannier::HoppingSet;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum Geometry {
    /// All sites with |position| <= radius, open boundary.
    Ball { radius: f64 },
    /// (repeat q) x (repeat q) periodic cells at flux 2 pi p / q per cell.
    Torus {
        q: usize,
        #[serde(default = "one")]
        repeat: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct PeierlsMatrix {
    pub sites: Vec<LatticeSite>,
    pub matrix: SparseHermitian,
    pub epsilon: f64,
    pub kappa: f64,
    pub geometry: Geometry,
}

/// Magnetic length 1 / sqrt(eps B0).
pub fn magnetic_length(eps: f64, b0: f64) -> f64 {
    1.0 / (eps * b0).abs().sqrt()
}

/// Default ball radius: eight magnetic lengths, so sixteen fit across.
pub fn default_ball_radius(eps: f64, b0: f64) -> f64 {
    8.0 * magnetic_length(eps, b0)
}

/// Flux per unit cell eps B0 (e1 ^ e2).
pub fn flux_per_cell(lat: &Lattice, field: &FieldSpec, eps: f64) -> f64 {
    eps * field.b0 * lat.signed_cell_area()
}

/// Checks eps B0 |E| = 2 pi p / q and returns p.
pub fn rational_flux_numerator(lat: &Lattice, field: &FieldSpec, eps: f64, q: usize) -> Result<i64> {
    let phi = flux_per_cell(lat, field, eps);
    let p = phi * q as f64 / (2.0 * PI);
    if (p - p.round()).abs() > 1e-9 * p.abs().max(1.0) {
        return Err(Error::IrrationalFluxOnTorus { flux: phi, q });
    }
    Ok(p.round() as i64)
}

fn torus_size(h: &HoppingSet, q: usize, repeat: usize) -> Result<usize> {
    let l = q * repeat.max(1);
    let reach = h.iter().map(|(g, _)| g[0].unsigned_abs().max(g[1].unsigned_abs())).max().unwrap_or(0) as usize;
    if l <= 2 * reach {
        return Err(Error::InvalidArgument(format!("torus side {l} too small for hopping reach {reach}")));
    }
    Ok(l)
}

/// M[a, b] = Lambda(a, b) h(a - b). Tori use the Landau gauge, which is
/// diagonally gauge-equivalent to the transverse gauge and periodic.
pub fn build_effective_matrix(h: &HoppingSet, lat: &Lattice, field: &FieldSpec, eps: f64, kappa: f64, geom: Geometry) -> Result<PeierlsMatrix> {
    match geom {
        Geometry::Ball { radius } => {
            let sites = lat.enumerate_sites(radius);
            let index: HashMap<[i64; 2], usize> = sites.iter().enumerate().map(|(i, s)| (s.index, i)).collect();
            let mut trip = Vec::with_capacity(sites.len() * h.len());
            for (ia, a) in sites.iter().enumerate() {
                for (d, hv) in h.iter() {
                    let b = [a.index[0] - d[0], a.index[1] - d[1]];
                    if let Some(&ib) = index.get(&b) {
                        let lam = peierls_phase(field, a.position, sites[ib].position, eps, kappa);
                        trip.push((ia, ib, lam * hv));
                    }
                }
            }
            let matrix = SparseHermitian::from_triplets(sites.len(), trip);
            Ok(PeierlsMatrix { sites, matrix, epsilon: eps, kappa, geometry: geom })
        }
        Geometry::Torus { q, repeat } => {
            if kappa != 0.0 {
                return Err(Error::KappaOnTorus { kappa });
            }
            rational_flux_numerator(lat, field, eps, q)?;
            let l = torus_size(h, q, repeat)?;
            let phi = flux_per_cell(lat, field, eps);
            let li = l as i64;
            let sites: Vec<LatticeSite> = (0..li)
                .flat_map(|a| (0..li).map(move |b| [a, b]))
                .map(|n| LatticeSite { index: n, position: lat.position(n) })
                .collect();
            let mut trip = Vec::with_capacity(sites.len() * h.len());
            for (ia, a) in sites.iter().enumerate() {
                for (d, hv) in h.iter() {
                    let b = [(a.index[0] - d[0]).rem_euclid(li), (a.index[1] - d[1]).rem_euclid(li)];
                    let ib = (b[0] * li + b[1]) as usize;
                    let ph = 0.5 * phi * d[1] as f64 * (2 * a.index[0] - d[0]) as f64;
                    trip.push((ia, ib, hv * C64::from_polar(1.0, ph)));
                }
            }
            let matrix = SparseHermitian::from_triplets(sites.len(), trip);
            Ok(PeierlsMatrix { sites, matrix, epsilon: eps, kappa, geometry: geom })
        }
    }
}

/// Full torus spectrum through the exact reduction to L blocks of size L
/// labelled by the conserved momentum along e2 (Landau gauge).
pub fn torus_spectrum(h: &HoppingSet, lat: &Lattice, field: &FieldSpec, eps: f64, q: usize, repeat: usize) -> Result<Vec<f64>> {
    rational_flux_numerator(lat, field, eps, q)?;
    let l = torus_size(h, q, repeat)?;
    let phi = flux_per_cell(lat, field, eps);
    let li = l as i64;
    let mut all = Vec::with_capacity(l * l);
    for j in 0..l {
        let k2 = 2.0 * PI * j as f64 / l as f64;
        let mut block = ndarray::Array2::<C64>::zeros((l, l));
        for a1 in 0..li {
            for (d, hv) in h.iter() {
                let b1 = (a1 - d[0]).rem_euclid(li);
                let ph = 0.5 * phi * d[1] as f64 * (2 * a1 - d[0]) as f64 - k2 * d[1] as f64;
                block[[a1 as usize, b1 as usize]] += hv * C64::from_polar(1.0, ph);
            }
        }
        all.extend(eigh(&block, EigRange::All, false)?.values);
    }
    all.sort_by(f64::total_cmp);
    Ok(all)
}

/// Conjugates the matrix by the diagonal unitary exp(-i chi).
pub fn gauge_transform(m: &SparseHermitian, chi: &[f64]) -> SparseHermitian {
    let trip = m.triplets().map(|(r, c, v)| (r, c, v * C64::from_polar(1.0, -(chi[r] - chi[c])))).collect();
    SparseHermitian::from_triplets(m.dim, trip)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasiBlochData {
    pub epsilon: f64,
    pub values: GridFunction,
    /// (lambda^eps - lambda0) / eps when a zero-field reference was given.
    pub rho: Option<GridFunction>,
    pub harmonic: HarmonicData,
}

/// lambda(theta) = sum h(gamma) exp(-i <theta, gamma>) on the grid.
pub fn quasi_bloch(h: &HoppingSet, lat: &Lattice, grid_n: usize, eps: f64, reference: Option<&GridFunction>) -> Result<QuasiBlochData> {
    let mut vals = Vec::with_capacity(grid_n * grid_n);
    let mut imag: f64 = 0.0;
    for k1 in 0..grid_n {
        for k2 in 0..grid_n {
            let z = h.symbol(lat, grid_theta(lat, grid_n, k1, k2));
            imag = imag.max(z.im.abs());
            vals.push(z.re);
        }
    }
    if imag > 1e-6 {
        return Err(Error::ComplexQuasiBloch { imag });
    }
    let values = GridFunction { n: grid_n, values: vals };
    let rho = match reference {
        Some(r) if eps != 0.0 => {
            if r.n != grid_n {
                return Err(Error::InvalidArgument("reference grid size mismatch".into()));
            }
            Some(GridFunction { n: grid_n, values: values.values.iter().zip(&r.values).map(|(a, b)| (a - b) / eps).collect() })
        }
        _ => None,
    };
    let harmonic = band_minimum_hessian_fourier(h, lat, grid_n)?;
    Ok(QuasiBlochData { epsilon: eps, values, rho, harmonic })
}

pub fn harmonic_data(q: &QuasiBlochData) -> HarmonicData {
    q.harmonic
}

/// Landau levels min + (2n + 1) eps m B0 for n = 0..=n_max.
pub fn landau_prediction(hd: &HarmonicData, b0: f64, eps: f64, n_max: usize) -> Vec<f64> {
    (0..=n_max).map(|n| hd.min_value + (2 * n + 1) as f64 * eps * hd.m * b0.abs()).collect()
}

/// Level spacing 2 eps m B0.
pub fn landau_spacing(hd: &HarmonicData, b0: f64, eps: f64) -> f64 {
    2.0 * eps * hd.m * b0.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_hermiticity_defect;

    fn harper(lat: &Lattice) -> HoppingSet {
        HoppingSet::nearest_neighbor(lat, 0.0, -1.0)
    }

    #[test]
    fn landau_examples() {
        let hd = HarmonicData { theta_min: [0.0; 2], quad_form: [[1.0, 0.0], [0.0, 1.0]], m1: 1.0, m2: 1.0, m: 1.0, min_value: 0.0 };
        let p = landau_prediction(&hd, 1.0, 0.01, 2);
        for (a, b) in p.iter().zip([0.01, 0.03, 0.05]) {
            assert!((a - b).abs() < 1e-15);
        }
        let hd2 = HarmonicData { m: 0.5, min_value: -4.0, ..hd };
        let p2 = landau_prediction(&hd2, 1.0, 0.02, 1);
        assert!((p2[0] + 3.99).abs() < 1e-14 && (p2[1] + 3.97).abs() < 1e-14);
    }

    #[test]
    fn zero_field_torus_is_circulant() {
        let lat = Lattice::square(1.0).unwrap();
        let h = harper(&lat);
        let field = FieldSpec::constant(1.0);
        let m = build_effective_matrix(&h, &lat, &field, 0.0, 0.0, Geometry::Torus { q: 16, repeat: 1 }).unwrap();
        let ev = eigh(&m.matrix.to_dense(), EigRange::All, false).unwrap().values;
        let mut want: Vec<f64> = (0..16)
            .flat_map(|a| (0..16).map(move |b| (a, b)))
            .map(|(a, b)| -2.0 * (2.0 * PI * a as f64 / 16.0).cos() - 2.0 * (2.0 * PI * b as f64 / 16.0).cos())
            .collect();
        want.sort_by(f64::total_cmp);
        for (x, y) in ev.iter().zip(&want) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn block_reduction_matches_full_torus() {
        let lat = Lattice::square(1.0).unwrap();
        let mut map = std::collections::BTreeMap::new();
        for (g, v) in [([1, 0], -1.0), ([-1, 0], -1.0), ([0, 1], -0.8), ([0, -1], -0.8), ([1, 1], 0.1), ([-1, -1], 0.1)] {
            map.insert(g, C64::new(v, 0.0));
        }
        let h = HoppingSet::from_map(&lat, map, 0.0);
        let field = FieldSpec::constant(2.0 * PI / 6.0);
        let full = build_effective_matrix(&h, &lat, &field, 1.0, 0.0, Geometry::Torus { q: 6, repeat: 2 }).unwrap();
        assert!(max_hermiticity_defect(&full.matrix.to_dense()) < 1e-12);
        let dense = eigh(&full.matrix.to_dense(), EigRange::All, false).unwrap().values;
        let blocks = torus_spectrum(&h, &lat, &field, 1.0, 6, 2).unwrap();
        for (a, b) in dense.iter().zip(&blocks) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn torus_rejects_bad_flux_and_kappa() {
        let lat = Lattice::square(1.0).unwrap();
        let h = harper(&lat);
        let field = FieldSpec::constant(1.0);
        assert!(matches!(
            build_effective_matrix(&h, &lat, &field, 0.1, 0.0, Geometry::Torus { q: 16, repeat: 1 }),
            Err(Error::IrrationalFluxOnTorus { .. })
        ));
        assert!(matches!(
            build_effective_matrix(&h, &lat, &field, 0.0, 0.5, Geometry::Torus { q: 16, repeat: 1 }),
            Err(Error::KappaOnTorus { .. })
        ));
    }

    #[test]
    fn quasi_bloch_of_harper() {
        let lat = Lattice::square(1.0).unwrap();
        let q = quasi_bloch(&harper(&lat), &lat, 32, 0.0, None).unwrap();
        assert!((q.harmonic.min_value + 4.0).abs() < 1e-12);
        assert!((q.harmonic.m - 1.0).abs() < 1e-12);
        let mut map = std::collections::BTreeMap::new();
        map.insert([1, 0], C64::new(0.0, 1.0));
        map.insert([-1, 0], C64::new(0.0, 1.0));
        let bad = HoppingSet::from_map(&lat, map, 0.0);
        assert!(matches!(quasi_bloch(&bad, &lat, 16, 0.0, None), Err(Error::ComplexQuasiBloch { .. })));
    }
}
