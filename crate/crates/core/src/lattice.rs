//! Bravais lattice in the plane, its dual, and site enumeration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec2 = [f64; 2];

pub fn dot(u: Vec2, v: Vec2) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

/// Scalar cross product u1 v2 - u2 v1.
pub fn wedge(u: Vec2, v: Vec2) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

pub fn norm(u: Vec2) -> f64 {
    dot(u, u).sqrt()
}

pub fn sub(u: Vec2, v: Vec2) -> Vec2 {
    [u[0] - v[0], u[1] - v[1]]
}

pub fn add(u: Vec2, v: Vec2) -> Vec2 {
    [u[0] + v[0], u[1] + v[1]]
}

pub fn scale(a: f64, u: Vec2) -> Vec2 {
    [a * u[0], a * u[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub e1: Vec2,
    pub e2: Vec2,
    pub dual1: Vec2,
    pub dual2: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSite {
    pub index: [i64; 2],
    pub position: Vec2,
}

impl Lattice {
    /// Builds the lattice and its dual with <dual_j, e_k> = 2 pi delta_jk.
    pub fn new(e1: Vec2, e2: Vec2) -> Result<Self> {
        let w = wedge(e1, e2);
        if !(w.abs() >= 1e-12 * norm(e1) * norm(e2)) || norm(e1) == 0.0 || norm(e2) == 0.0 {
            return Err(Error::DegenerateLattice { wedge: w });
        }
        let c = 2.0 * PI / w;
        let dual1 = [c * e2[1], -c * e2[0]];
        let dual2 = [-c * e1[1], c * e1[0]];
        Ok(Lattice { e1, e2, dual1, dual2 })
    }

    pub fn square(a: f64) -> Result<Self> {
        Lattice::new([a, 0.0], [0.0, a])
    }

    /// Signed area e1 ^ e2 of the fundamental cell.
    pub fn signed_cell_area(&self) -> f64 {
        wedge(self.e1, self.e2)
    }

    pub fn cell_area(&self) -> f64 {
        self.signed_cell_area().abs()
    }

    pub fn dual_cell_area(&self) -> f64 {
        wedge(self.dual1, self.dual2).abs()
    }

    /// |e1|, used as the lattice constant for default spacings.
    pub fn lattice_constant(&self) -> f64 {
        norm(self.e1).min(norm(self.e2))
    }

    pub fn position(&self, n: [i64; 2]) -> Vec2 {
        [
            n[0] as f64 * self.e1[0] + n[1] as f64 * self.e2[0],
            n[0] as f64 * self.e1[1] + n[1] as f64 * self.e2[1],
        ]
    }

    /// Real-space point from fractional coordinates.
    pub fn from_fractional(&self, s: Vec2) -> Vec2 {
        [s[0] * self.e1[0] + s[1] * self.e2[0], s[0] * self.e1[1] + s[1] * self.e2[1]]
    }

    /// Fractional coordinates s with x = s1 e1 + s2 e2.
    pub fn to_fractional(&self, x: Vec2) -> Vec2 {
        [dot(self.dual1, x) / (2.0 * PI), dot(self.dual2, x) / (2.0 * PI)]
    }

    /// Dual vector g1 dual1 + g2 dual2.
    pub fn dual_vector(&self, g: [i64; 2]) -> Vec2 {
        self.dual_from_fractional([g[0] as f64, g[1] as f64])
    }

    pub fn dual_from_fractional(&self, t: Vec2) -> Vec2 {
        [t[0] * self.dual1[0] + t[1] * self.dual2[0], t[0] * self.dual1[1] + t[1] * self.dual2[1]]
    }

    /// Sites with |position| <= radius, sorted lexicographically by index.
    pub fn enumerate_sites(&self, radius: f64) -> Vec<LatticeSite> {
        if radius < 0.0 {
            return Vec::new();
        }
        // n_j = <dual_j, x> / 2 pi, so |n_j| <= radius |dual_j| / 2 pi.
        let r = radius * (1.0 + 1e-12);
        let b1 = (r * norm(self.dual1) / (2.0 * PI)).floor() as i64;
        let b2 = (r * norm(self.dual2) / (2.0 * PI)).floor() as i64;
        let mut out = Vec::new();
        for n1 in -b1..=b1 {
            for n2 in -b2..=b2 {
                let p = self.position([n1, n2]);
                if norm(p) <= r {
                    out.push(LatticeSite { index: [n1, n2], position: p });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_duals() {
        let l = Lattice::square(1.0).unwrap();
        assert!((l.dual1[0] - 2.0 * PI).abs() < 1e-15 && l.dual1[1].abs() < 1e-15);
        assert!((l.dual2[1] - 2.0 * PI).abs() < 1e-15 && l.dual2[0].abs() < 1e-15);
    }

    #[test]
    fn parallel_vectors_rejected() {
        assert!(matches!(Lattice::new([1.0, 0.0], [2.0, 0.0]), Err(Error::DegenerateLattice { .. })));
        assert!(matches!(Lattice::new([1.0, 0.0], [1.0, 1e-14]), Err(Error::DegenerateLattice { .. })));
    }

    #[test]
    fn small_site_counts() {
        let l = Lattice::square(1.0).unwrap();
        assert_eq!(l.enumerate_sites(1.0).len(), 5);
        assert_eq!(l.enumerate_sites(1.5).len(), 9);
        let s = l.enumerate_sites(1.5);
        assert!(s.windows(2).all(|w| w[0].index < w[1].index));
    }

    #[test]
    fn site_count_tracks_area() {
        let l = Lattice::new([1.0, 0.0], [0.3, 0.9]).unwrap();
        let r = 60.0;
        let count = l.enumerate_sites(r).len() as f64;
        let est = PI * r * r / l.cell_area();
        assert!((count - est).abs() / est < 0.01, "{count} vs {est}");
    }

    proptest! {
        #[test]
        fn duality_holds(a in 0.2f64..5.0, b in 0.2f64..5.0, ang in 0.2f64..2.9, rot in 0.0f64..6.3) {
            let e1 = [a * rot.cos(), a * rot.sin()];
            let e2 = [b * (rot + ang).cos(), b * (rot + ang).sin()];
            let l = Lattice::new(e1, e2).unwrap();
            let pairs = [(l.dual1, e1, 1.0), (l.dual1, e2, 0.0), (l.dual2, e1, 0.0), (l.dual2, e2, 1.0)];
            for (d, e, want) in pairs {
                prop_assert!((dot(d, e) - 2.0 * PI * want).abs() < 1e-12 * (1.0 + norm(d) * norm(e)));
            }
            prop_assert!((l.cell_area() * l.dual_cell_area() - 4.0 * PI * PI).abs() < 1e-9);
        }

        #[test]
        fn enumeration_complete(a in 0.5f64..2.0, ang in 0.5f64..2.6, r in 0.0f64..6.0) {
            let l = Lattice::new([a, 0.0], [ang.cos(), ang.sin()]).unwrap();
            let sites = l.enumerate_sites(r);
            let brute = (-20i64..=20).flat_map(|i| (-20i64..=20).map(move |j| [i, j]))
                .filter(|&n| norm(l.position(n)) <= r * (1.0 + 1e-12)).count();
            prop_assert_eq!(sites.len(), brute);
            for s in &sites { prop_assert!(norm(s.position) <= r * (1.0 + 1e-12)); }
        }
    }
}
