//! Magnetic field description, Poincaré (transverse) gauge potential,
//! Peierls line phases and triangle fluxes.
//!
//! The field seen by the electron is `eps * B0 + kappa * eps * b(eps x)` with
//! `b(y) = sum amp * cos(<k, y> + phase)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::lattice::{sub, wedge, Vec2};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTerm {
    pub k: Vec2,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(rename = "B0")]
    pub b0: f64,
    #[serde(default)]
    pub profile: Vec<ProfileTerm>,
    /// Upper bound on sup |b|; defaults to the sum of |amp|.
    #[serde(default, rename = "supNorm", skip_serializing_if = "Option::is_none")]
    pub sup_norm: Option<f64>,
}

impl FieldSpec {
    pub fn constant(b0: f64) -> Self {
        FieldSpec { b0, profile: Vec::new(), sup_norm: None }
    }

    pub fn with_profile(b0: f64, profile: Vec<ProfileTerm>) -> Self {
        FieldSpec { b0, profile, sup_norm: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.b0.is_finite() {
            return Err(Error::InvalidArgument("B0 must be finite".into()));
        }
        for t in &self.profile {
            if !(t.k[0].is_finite() && t.k[1].is_finite() && t.amp.is_finite() && t.phase.is_finite()) {
                return Err(Error::InvalidArgument("profile terms must be finite".into()));
            }
        }
        if let Some(s) = self.sup_norm {
            if s < self.profile_sum_abs() * (1.0 - 1e-12) {
                return Err(Error::InvalidArgument("supNorm below sum of profile amplitudes".into()));
            }
        }
        Ok(())
    }

    fn profile_sum_abs(&self) -> f64 {
        self.profile.iter().map(|t| t.amp.abs()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm.unwrap_or_else(|| self.profile_sum_abs())
    }

    /// b(y).
    pub fn profile_value(&self, y: Vec2) -> f64 {
        self.profile.iter().map(|t| t.amp * (t.k[0] * y[0] + t.k[1] * y[1] + t.phase).cos()).sum()
    }

    /// Bound on the sup norm of the total field eps*B0 + kappa*eps*b(eps .).
    pub fn total_field_bound(&self, eps: f64, kappa: f64) -> f64 {
        (eps * self.b0).abs() + (kappa * eps).abs() * self.sup_norm()
    }
}

/// int_0^1 s cos(a s + phi) ds.
fn radial_moment(a: f64, phi: f64) -> f64 {
    if a.abs() < 1.0 {
        let (mut c_sum, mut s_sum) = (0.0, 0.0);
        // term_n = (-1)^n a^n / n!, split by parity.
        let mut t = 1.0;
        for n in 0..40 {
            let denom = (n + 2) as f64;
            if n % 2 == 0 {
                c_sum += t / denom;
            } else {
                s_sum += t / denom;
            }
            t *= a / (n + 1) as f64;
            if n % 2 == 1 {
                t = -t;
            }
            if t.abs() < 1e-20 {
                break;
            }
        }
        // cos(as+phi) = cos(phi) cos(as) - sin(phi) sin(as)
        phi.cos() * c_sum - phi.sin() * s_sum
    } else {
        (a + phi).sin() / a + ((a + phi).cos() - phi.cos()) / (a * a)
    }
}

/// Poincaré-gauge potential of the profile: A(x) = (int_0^1 s b(s x) ds) (-x2, x1).
pub fn poincare_gauge_potential(field: &FieldSpec, x: Vec2) -> Vec2 {
    let f: f64 = field.profile.iter().map(|t| t.amp * radial_moment(t.k[0] * x[0] + t.k[1] * x[1], t.phase)).sum();
    [-f * x[1], f * x[0]]
}

struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss-Legendre rule on [0, 1] by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> GaussRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    GaussRule { nodes, weights }
}

const GL_ORDERS: [usize; 8] = [8, 16, 32, 64, 128, 256, 512, 1024];

fn gl_rule(level: usize) -> &'static GaussRule {
    static RULES: OnceLock<Vec<GaussRule>> = OnceLock::new();
    &RULES.get_or_init(|| GL_ORDERS.iter().map(|&n| gauss_legendre(n)).collect())[level]
}

/// Line integral of the profile potential A(eps .) along the segment [x, y].
pub fn profile_line_integral(field: &FieldSpec, x: Vec2, y: Vec2, eps: f64) -> f64 {
    if field.profile.is_empty() {
        return 0.0;
    }
    let d = sub(y, x);
    let integrate = |rule: &GaussRule| -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| {
                let p = [eps * (x[0] + t * d[0]), eps * (x[1] + t * d[1])];
                let a = poincare_gauge_potential(field, p);
                w * (a[0] * d[0] + a[1] * d[1])
            })
            .sum()
    };
    let mut prev = integrate(gl_rule(0));
    for level in 1..GL_ORDERS.len() {
        let cur = integrate(gl_rule(level));
        if (cur - prev).abs() <= 1e-10 * prev.abs().max(1e-3) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// Exponent of the Peierls phase: eps (B0/2) x^y + kappa Q(x, y).
pub fn peierls_exponent(field: &FieldSpec, x: Vec2, y: Vec2, eps: f64, kappa: f64) -> f64 {
    let mut e = eps * 0.5 * field.b0 * wedge(x, y);
    if kappa != 0.0 {
        e += kappa * profile_line_integral(field, x, y, eps);
    }
    e
}

/// Lambda(x, y) = exp(-i [eps (B0/2) x^y + kappa Q(x, y)]).
pub fn peierls_phase(field: &FieldSpec, x: Vec2, y: Vec2, eps: f64, kappa: f64) -> C64 {
    C64::from_polar(1.0, -peierls_exponent(field, x, y, eps, kappa))
}

/// Degree-5 symmetric 7-point rule in barycentric coordinates.
fn triangle_rule() -> &'static [([f64; 3], f64); 7] {
    static RULE: OnceLock<[([f64; 3], f64); 7]> = OnceLock::new();
    RULE.get_or_init(|| {
        let s15 = 15f64.sqrt();
        let a = (6.0 - s15) / 21.0;
        let b = (6.0 + s15) / 21.0;
        let wa = (155.0 - s15) / 1200.0;
        let wb = (155.0 + s15) / 1200.0;
        [
            ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
            ([a, a, 1.0 - 2.0 * a], wa),
            ([a, 1.0 - 2.0 * a, a], wa),
            ([1.0 - 2.0 * a, a, a], wa),
            ([b, b, 1.0 - 2.0 * b], wb),
            ([b, 1.0 - 2.0 * b, b], wb),
            ([1.0 - 2.0 * b, b, b], wb),
        ]
    })
}

/// Signed integral of f over the triangle (x, y, z) split into 4^level congruent pieces.
fn triangle_integral(f: &dyn Fn(Vec2) -> f64, x: Vec2, y: Vec2, z: Vec2, level: u32) -> f64 {
    let area = 0.5 * wedge(sub(y, x), sub(z, x));
    let m = 1usize << level;
    let h = 1.0 / m as f64;
    let rule = triangle_rule();
    let pt = |u: f64, v: f64| -> Vec2 {
        [x[0] + u * (y[0] - x[0]) + v * (z[0] - x[0]), x[1] + u * (y[1] - x[1]) + v * (z[1] - x[1])]
    };
    let mut sum = 0.0;
    let mut sub_tri = |p: [(f64, f64); 3]| {
        for (bc, w) in rule.iter() {
            let u = bc[0] * p[0].0 + bc[1] * p[1].0 + bc[2] * p[2].0;
            let v = bc[0] * p[0].1 + bc[1] * p[1].1 + bc[2] * p[2].1;
            sum += w * f(pt(u, v));
        }
    };
    for i in 0..m {
        for j in 0..(m - i) {
            let (u, v) = (i as f64 * h, j as f64 * h);
            sub_tri([(u, v), (u + h, v), (u, v + h)]);
            if i + j + 1 < m {
                sub_tri([(u + h, v), (u + h, v + h), (u, v + h)]);
            }
        }
    }
    sum * area / (m * m) as f64
}

/// Total flux Phi through the triangle (x, y, z), signed by orientation.
pub fn triangle_flux_angle(field: &FieldSpec, x: Vec2, y: Vec2, z: Vec2, eps: f64, kappa: f64) -> f64 {
    let signed_area = 0.5 * wedge(sub(y, x), sub(z, x));
    let mut phi = eps * field.b0 * signed_area;
    if kappa != 0.0 && !field.profile.is_empty() && signed_area != 0.0 {
        let f = |p: Vec2| field.profile_value([eps * p[0], eps * p[1]]);
        let mut prev = triangle_integral(&f, x, y, z, 1);
        for level in 2..=8 {
            let cur = triangle_integral(&f, x, y, z, level);
            let done = (cur - prev).abs() <= 1e-13 * (signed_area.abs() * field.sup_norm()).max(1e-300);
            prev = cur;
            if done {
                break;
            }
        }
        phi += kappa * eps * prev;
    }
    phi
}

/// Omega(x, y, z) = exp(-i Phi).
pub fn triangle_flux(field: &FieldSpec, x: Vec2, y: Vec2, z: Vec2, eps: f64, kappa: f64) -> C64 {
    C64::from_polar(1.0, -triangle_flux_angle(field, x, y, z, eps, kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn cos_x1() -> FieldSpec {
        FieldSpec::with_profile(0.0, vec![ProfileTerm { k: [1.0, 0.0], amp: 1.0, phase: 0.0 }])
    }

    fn mixed_field() -> FieldSpec {
        FieldSpec::with_profile(
            1.3,
            vec![
                ProfileTerm { k: [0.7, -0.4], amp: 0.8, phase: 0.3 },
                ProfileTerm { k: [0.0, 1.1], amp: -0.5, phase: 1.2 },
            ],
        )
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let r = gauss_legendre(8);
        for p in 0..16 {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(p)).sum();
            assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn radial_moment_branches_agree() {
        for &phi in &[0.0, 0.4, -1.3] {
            let below = radial_moment(1.0 - 1e-9, phi);
            let above = (1.0 + phi).sin() + (1.0 + phi).cos() - phi.cos();
            assert!((below - above).abs() < 1e-8);
        }
        assert!((radial_moment(0.0, 0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn constant_field_potential() {
        let f = FieldSpec::with_profile(0.0, vec![ProfileTerm { k: [0.0, 0.0], amp: 1.0, phase: 0.0 }]);
        let a = poincare_gauge_potential(&f, [2.0, 0.0]);
        assert!((a[0]).abs() < 1e-15 && (a[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_field_potential() {
        let a = poincare_gauge_potential(&cos_x1(), [PI, 1.0]);
        assert!((a[0] - 2.0 / (PI * PI)).abs() < 1e-14);
        assert!((a[1] + 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn curl_reproduces_field() {
        let f = mixed_field();
        let h = 1e-4;
        for &x in &[[0.3, -1.2], [2.0, 0.5], [-3.1, 4.2], [1e-3, 2e-3]] {
            let dy_a1 = (poincare_gauge_potential(&f, [x[0], x[1] + h])[0] - poincare_gauge_potential(&f, [x[0], x[1] - h])[0]) / (2.0 * h);
            let dx_a2 = (poincare_gauge_potential(&f, [x[0] + h, x[1]])[1] - poincare_gauge_potential(&f, [x[0] - h, x[1]])[1]) / (2.0 * h);
            let curl = dx_a2 - dy_a1;
            assert!((curl - f.profile_value(x)).abs() < 1e-6, "{curl} vs {}", f.profile_value(x));
        }
    }

    #[test]
    fn transverse_gauge_phase() {
        let f = FieldSpec::constant(1.0);
        let p = peierls_phase(&f, [1.0, 0.0], [0.0, 1.0], 0.1, 0.0);
        assert!((p - C64::from_polar(1.0, -0.05)).norm() < 1e-15);
    }

    #[test]
    fn line_integral_matches_fine_trapezoid() {
        let f = mixed_field();
        let (x, y, eps) = ([0.4, -2.0], [3.0, 1.5], 0.7);
        let q = profile_line_integral(&f, x, y, eps);
        let n = 200_000;
        let d = sub(y, x);
        let mut trap = 0.0;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let a = poincare_gauge_potential(&f, [eps * (x[0] + t * d[0]), eps * (x[1] + t * d[1])]);
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            trap += w * (a[0] * d[0] + a[1] * d[1]);
        }
        trap /= n as f64;
        assert!((q - trap).abs() < 1e-9, "{q} vs {trap}");
    }

    #[test]
    fn colinear_flux_trivial() {
        let f = mixed_field();
        let o = triangle_flux(&f, [0.0, 0.0], [1.0, 1.0], [2.5, 2.5], 0.3, 0.7);
        assert!((o - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    fn pt() -> impl Strategy<Value = Vec2> {
        (-6.0f64..6.0, -6.0f64..6.0).prop_map(|(a, b)| [a, b])
    }

    proptest! {
        #[test]
        fn phase_unit_and_hermitian(x in pt(), y in pt(), eps in 0.0f64..0.5, kappa in 0.0f64..1.0) {
            let f = mixed_field();
            let a = peierls_phase(&f, x, y, eps, kappa);
            let b = peierls_phase(&f, y, x, eps, kappa);
            prop_assert!((a.norm() - 1.0).abs() < 1e-14);
            prop_assert!((a - b.conj()).norm() < 1e-12);
        }

        #[test]
        fn cocycle_identity(x in pt(), y in pt(), z in pt(), eps in 0.0f64..0.5, kappa in 0.0f64..1.0) {
            let f = mixed_field();
            let loop_phase = peierls_phase(&f, x, y, eps, kappa) * peierls_phase(&f, y, z, eps, kappa) * peierls_phase(&f, z, x, eps, kappa);
            let omega = triangle_flux(&f, x, y, z, eps, kappa);
            prop_assert!((loop_phase - omega).norm() < 1e-9, "{} vs {}", loop_phase, omega);
        }

        #[test]
        fn flux_bound(x in pt(), y in pt(), z in pt(), eps in 0.0f64..0.5, kappa in 0.0f64..1.0) {
            let f = mixed_field();
            let omega = triangle_flux(&f, x, y, z, eps, kappa);
            let bound = f.total_field_bound(eps, kappa) * wedge(sub(y, x), sub(z, x)).abs();
            prop_assert!((omega - C64::new(1.0, 0.0)).norm() <= bound * (1.0 + 1e-6) + 1e-15);
        }
    }
}
