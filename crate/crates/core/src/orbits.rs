//! Coadjoint orbit quadrature on the one-sheeted hyperboloids
//! {Lambda(xi) = lambda < 0} and the measure identities that tie the
//! orbit family to the flat measure on the dual.
//!
//! The orbit through xi(t) = (t, 0, 0), lambda = -t^2, is covered by a
//! single global chart
//!
//!   xi1 = R cos(psi),  (xi2 + xi3)/2 = R sin(psi),  (xi2 - xi3)/2 = d,
//!
//! with R = sqrt(t^2 + d^2), psi in [0, 2pi), d in R.  In these
//! coordinates the normalized symplectic measure is dpsi dd / 2pi: on
//! the sheet xi1 != 0 the chart change (psi, d) -> (xi2, xi3) has
//! Jacobian 2|xi1|, so the density becomes dxi2 dxi3 / (4 pi |xi1|),
//! which at xi(t) is the required (1/4pi t) dxi2 dxi3.  The same
//! constant makes the disintegration
//!
//!   integral of phi over the dual  =
//!     integral over t>0 of (orbit integral) t dt / 2pi
//!
//! exact: dxi1 dxi2 dxi3 = 2 t dt dpsi dd.

use crate::error::{CoreError, Result};
use crate::lie::{invariant_lambda, DualVec, HaarNormalization};
use crate::num::{gauss_legendre_on, NeumaierSum, NeumaierSumC};
use crate::report::Diagnostics;
use num_complex::Complex64;

/// Default relative tolerance for smooth compact integrands at the
/// standard resolution.
pub const DEFAULT_REL_TOL: f64 = 1e-3;

/// Axis-aligned box in the dual, used to truncate orbit charts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl SupportBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        for i in 0..3 {
            if !lo[i].is_finite() || !hi[i].is_finite() || lo[i] >= hi[i] {
                return Err(CoreError::InvalidParameter(format!(
                    "degenerate support box on axis {i}: [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Box symmetric around the origin with the given half-widths.
    pub fn centered(half: [f64; 3]) -> Result<Self> {
        Self::new([-half[0], -half[1], -half[2]], half)
    }

    /// Box around a point with the given half-widths.
    pub fn around(center: &DualVec, half: [f64; 3]) -> Result<Self> {
        let c = [center.xi1, center.xi2, center.xi3];
        Self::new(
            [c[0] - half[0], c[1] - half[1], c[2] - half[2]],
            [c[0] + half[0], c[1] + half[1], c[2] + half[2]],
        )
    }

    /// Scale every corner coordinate by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "box scale must be positive, got {c}"
            )));
        }
        Self::new(
            [self.lo[0] * c, self.lo[1] * c, self.lo[2] * c],
            [self.hi[0] * c, self.hi[1] * c, self.hi[2] * c],
        )
    }

    pub fn contains(&self, xi: &DualVec) -> bool {
        let p = [xi.xi1, xi.xi2, xi.xi3];
        (0..3).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }

    /// Largest relative offset from the box center, 0 at the center and
    /// 1 on the boundary.
    pub fn edge_fraction(&self, xi: &DualVec) -> f64 {
        let p = [xi.xi1, xi.xi2, xi.xi3];
        (0..3)
            .map(|i| {
                let c = 0.5 * (self.lo[i] + self.hi[i]);
                let h = 0.5 * (self.hi[i] - self.lo[i]);
                ((p[i] - c) / h).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Range of d = (xi2 - xi3)/2 over the box.
    pub fn d_range(&self) -> (f64, f64) {
        (
            0.5 * (self.lo[1] - self.hi[2]),
            0.5 * (self.hi[1] - self.lo[2]),
        )
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        let mut out = [[0.0; 3]; 8];
        for (k, corner) in out.iter_mut().enumerate() {
            for i in 0..3 {
                corner[i] = if (k >> i) & 1 == 0 {
                    self.lo[i]
                } else {
                    self.hi[i]
                };
            }
        }
        out
    }
}

/// Which coordinate chart generates the quadrature nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitChart {
    /// Global (psi, d) chart; density dpsi dd / 2pi.
    PolarD,
    /// Two-sheet (xi2, xi3) chart; density dxi2 dxi3 / (4 pi |xi1|).
    Sheet23,
}

/// Node counts for the two chart directions.
#[derive(Debug, Clone, Copy)]
pub struct OrbitResolution {
    pub n_angle: usize,
    pub n_transverse: usize,
}

impl OrbitResolution {
    pub fn coarse() -> Self {
        Self {
            n_angle: 48,
            n_transverse: 40,
        }
    }

    pub fn standard() -> Self {
        Self {
            n_angle: 96,
            n_transverse: 80,
        }
    }

    pub fn fine() -> Self {
        Self {
            n_angle: 192,
            n_transverse: 160,
        }
    }
}

/// Quadrature rule realizing the normalized symplectic measure of one
/// orbit, truncated to a support box.
#[derive(Debug, Clone)]
pub struct OrbitQuadrature {
    pub lambda: f64,
    pub nodes: Vec<(DualVec, f64)>,
    pub parametrization_id: &'static str,
    support: SupportBox,
}

impl OrbitQuadrature {
    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn t(&self) -> f64 {
        (-self.lambda).sqrt()
    }
}

fn check_lambda(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda >= 0.0 {
        return Err(CoreError::UnsupportedOrbit(lambda));
    }
    Ok((-lambda).sqrt())
}

/// Quadrature for the orbit {Lambda = lambda} in the default global
/// chart. Nodes are a periodic trapezoid rule in the angle tensored
/// with a Gauss-Legendre rule in d over the exact d-range of the box,
/// so scaling the box and lambda together maps rules onto each other
/// affinely and the rescaling identity holds to rounding.
pub fn orbit_quadrature(
    lambda: f64,
    resolution: OrbitResolution,
    support: &SupportBox,
) -> Result<OrbitQuadrature> {
    orbit_quadrature_chart(OrbitChart::PolarD, lambda, resolution, support)
}

/// Same orbit and measure through an explicitly chosen chart.
pub fn orbit_quadrature_chart(
    chart: OrbitChart,
    lambda: f64,
    resolution: OrbitResolution,
    support: &SupportBox,
) -> Result<OrbitQuadrature> {
    let t = check_lambda(lambda)?;
    if resolution.n_angle < 4 || resolution.n_transverse < 4 {
        return Err(CoreError::InvalidParameter(
            "orbit quadrature needs at least 4 nodes per direction".into(),
        ));
    }
    let nodes = match chart {
        OrbitChart::PolarD => polar_nodes(t, resolution, support)?,
        OrbitChart::Sheet23 => sheet_nodes(t, resolution, support),
    };
    Ok(OrbitQuadrature {
        lambda,
        nodes,
        parametrization_id: match chart {
            OrbitChart::PolarD => "polar-d",
            OrbitChart::Sheet23 => "sheet23",
        },
        support: *support,
    })
}

fn polar_nodes(
    t: f64,
    resolution: OrbitResolution,
    support: &SupportBox,
) -> Result<Vec<(DualVec, f64)>> {
    let (d_lo, d_hi) = support.d_range();
    if d_lo >= d_hi {
        return Err(CoreError::InvalidParameter(format!(
            "support box admits no transverse range: [{d_lo}, {d_hi}]"
        )));
    }
    let (d_nodes, d_weights) = gauss_legendre_on(resolution.n_transverse, d_lo, d_hi);
    let n_psi = resolution.n_angle;
    let w_psi = 1.0 / n_psi as f64;
    let mut nodes = Vec::with_capacity(n_psi * d_nodes.len());
    for i in 0..n_psi {
        let psi = 2.0 * std::f64::consts::PI * i as f64 / n_psi as f64;
        let (sin_psi, cos_psi) = psi.sin_cos();
        for (d, wd) in d_nodes.iter().zip(&d_weights) {
            let r = (t * t + d * d).sqrt();
            let m = r * sin_psi;
            let xi = DualVec::new(r * cos_psi, m + d, m - d);
            nodes.push((xi, w_psi * wd));
        }
    }
    Ok(nodes)
}

fn sheet_nodes(t: f64, resolution: OrbitResolution, support: &SupportBox) -> Vec<(DualVec, f64)> {
    let (x2, w2) = gauss_legendre_on(resolution.n_angle, support.lo[1], support.hi[1]);
    let (x3, w3) = gauss_legendre_on(resolution.n_transverse, support.lo[2], support.hi[2]);
    let floor = 1e-12 * (1.0 + t * t);
    let mut nodes = Vec::new();
    for (a, wa) in x2.iter().zip(&w2) {
        for (b, wb) in x3.iter().zip(&w3) {
            let disc = t * t - a * b;
            if disc <= floor {
                continue;
            }
            let xi1 = disc.sqrt();
            let w = wa * wb / (4.0 * std::f64::consts::PI * xi1);
            for sign in [1.0, -1.0] {
                let xi = DualVec::new(sign * xi1, *a, *b);
                if xi.xi1 >= support.lo[0] && xi.xi1 <= support.hi[0] {
                    nodes.push((xi, w));
                }
            }
        }
    }
    nodes
}

/// Weighted sum of `phi` over the orbit nodes, with a report on how
/// much integrand mass sits near the truncation boundary.
pub fn orbit_integral<F: Fn(&DualVec) -> f64>(q: &OrbitQuadrature, phi: F) -> (f64, Diagnostics) {
    let mut total = NeumaierSum::new();
    let mut abs_total = NeumaierSum::new();
    let mut boundary = NeumaierSum::new();
    for (xi, w) in &q.nodes {
        let v = phi(xi);
        total.add(w * v);
        let mass = (w * v).abs();
        abs_total.add(mass);
        if q.support.edge_fraction(xi) > 0.9 {
            boundary.add(mass);
        }
    }
    let mut diag = Diagnostics::new();
    let (abs, tail) = (abs_total.total(), boundary.total());
    if abs > 0.0 && tail > DEFAULT_REL_TOL * abs {
        diag.truncation("orbit integrand mass near the support boundary", tail / abs);
    }
    (total.total(), diag)
}

/// Complex-valued variant of [`orbit_integral`].
pub fn orbit_integral_c<F: Fn(&DualVec) -> Complex64>(
    q: &OrbitQuadrature,
    phi: F,
) -> (Complex64, Diagnostics) {
    let mut total = NeumaierSumC::new();
    let mut abs_total = NeumaierSum::new();
    let mut boundary = NeumaierSum::new();
    for (xi, w) in &q.nodes {
        let v = phi(xi);
        total.add(v * *w);
        let mass = v.norm() * w.abs();
        abs_total.add(mass);
        if q.support.edge_fraction(xi) > 0.9 {
            boundary.add(mass);
        }
    }
    let mut diag = Diagnostics::new();
    let (abs, tail) = (abs_total.total(), boundary.total());
    if abs > 0.0 && tail > DEFAULT_REL_TOL * abs {
        diag.truncation("orbit integrand mass near the support boundary", tail / abs);
    }
    (total.total(), diag)
}

/// Two evaluations of the same integral of a function supported in the
/// open negative cone {Lambda < 0}: directly against the flat dual
/// measure, and through the orbit disintegration.
#[derive(Debug, Clone, Copy)]
pub struct ConeConsistency {
    pub direct: f64,
    pub nested: f64,
}

impl ConeConsistency {
    pub fn rel_discrepancy(&self) -> f64 {
        let scale = self.direct.abs().max(self.nested.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.direct - self.nested).abs() / scale
        }
    }
}

/// Integrate `phi` (compactly supported inside the negative cone) both
/// ways: as a 3-d quadrature against the normalized flat measure on
/// the dual, and as the nested orbit-then-t quadrature. Rejects
/// integrands with visible mass on {Lambda >= 0}.
pub fn negative_cone_integral<F: Fn(&DualVec) -> f64>(
    phi: F,
    support: &SupportBox,
    resolution: OrbitResolution,
    haar: &HaarNormalization,
) -> Result<ConeConsistency> {
    let n3 = resolution.n_transverse.clamp(32, 96);
    let (x1, w1) = gauss_legendre_on(n3, support.lo[0], support.hi[0]);
    let (x2, w2) = gauss_legendre_on(n3, support.lo[1], support.hi[1]);
    let (x3, w3) = gauss_legendre_on(n3, support.lo[2], support.hi[2]);

    // Support screening and the direct integral in one sweep.
    let mut direct = NeumaierSum::new();
    let mut max_abs = 0.0f64;
    let mut max_bad = 0.0f64;
    for (a, wa) in x1.iter().zip(&w1) {
        for (b, wb) in x2.iter().zip(&w2) {
            for (c, wc) in x3.iter().zip(&w3) {
                let xi = DualVec::new(*a, *b, *c);
                let v = phi(&xi);
                max_abs = max_abs.max(v.abs());
                if invariant_lambda(&xi) >= -1e-9 {
                    max_bad = max_bad.max(v.abs());
                }
                direct.add(wa * wb * wc * v);
            }
        }
    }
    if max_bad > 1e-9 * max_abs.max(1e-300) {
        return Err(CoreError::SupportViolation(format!(
            "integrand mass {max_bad:.3e} found on the closed nonnegative cone"
        )));
    }
    let direct = direct.total() * haar.dxi_constant;

    // Nested side: t ranges over sqrt of the maximum of xi1^2 + xi2 xi3
    // on the box; the maximum of the bilinear term sits at a corner.
    let mut neg_lambda_max = 0.0f64;
    for corner in support.corners() {
        neg_lambda_max = neg_lambda_max.max(corner[0] * corner[0] + corner[1] * corner[2]);
    }
    if neg_lambda_max <= 0.0 {
        return Ok(ConeConsistency {
            direct,
            nested: 0.0,
        });
    }
    let t_max = neg_lambda_max.sqrt() * (1.0 + 1e-12);
    let (t_nodes, t_weights) = gauss_legendre_on(resolution.n_transverse.clamp(32, 96), 0.0, t_max);
    let mut nested = NeumaierSum::new();
    for (t, wt) in t_nodes.iter().zip(&t_weights) {
        let q = orbit_quadrature(-t * t, resolution, support)?;
        let (orbit_val, _) = orbit_integral(&q, &phi);
        nested.add(wt * t * orbit_val);
    }
    // dxi = (8 pi^2 dxi_constant) * (t dt / 2pi) * dOmega, so a
    // rescaled flat normalization carries through as a plain factor.
    let nested = nested.total() / (2.0 * std::f64::consts::PI)
        * (8.0 * std::f64::consts::PI * std::f64::consts::PI * haar.dxi_constant);
    Ok(ConeConsistency { direct, nested })
}

/// Symplectic volume of {xi in orbit : |xi - omega| < r}, estimated on
/// the given quadrature. The center must be of unit-order size.
pub fn ball_volume(q: &OrbitQuadrature, omega: &DualVec, r: f64) -> Result<f64> {
    let n = omega.norm();
    if !(0.2..=5.0).contains(&n) {
        return Err(CoreError::InvalidParameter(format!(
            "ball center norm {n} outside [0.2, 5]"
        )));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "ball radius {r} outside (0, 1]"
        )));
    }
    let mut acc = NeumaierSum::new();
    for (xi, w) in &q.nodes {
        if xi.sub(omega).norm() < r {
            acc.add(*w);
        }
    }
    Ok(acc.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{coadjoint, exp_g, xi_of_t, GroupElt, LieVec};
    use crate::num::loglog_slope;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_at(center: DualVec, width: f64) -> impl Fn(&DualVec) -> f64 {
        move |xi: &DualVec| {
            let d = xi.sub(&center);
            (-0.5 * (d.norm() / width).powi(2)).exp()
        }
    }

    #[test]
    fn rejects_nonnegative_lambda_and_bad_boxes() {
        let b = SupportBox::centered([2.0, 2.0, 2.0]).unwrap();
        assert!(matches!(
            orbit_quadrature(0.0, OrbitResolution::coarse(), &b),
            Err(CoreError::UnsupportedOrbit(_))
        ));
        assert!(matches!(
            orbit_quadrature(0.3, OrbitResolution::coarse(), &b),
            Err(CoreError::UnsupportedOrbit(_))
        ));
        assert!(SupportBox::new([0.0, 0.0, 0.0], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn nodes_sit_on_the_orbit_with_positive_weights() {
        let b = SupportBox::centered([3.0, 3.0, 3.0]).unwrap();
        for chart in [OrbitChart::PolarD, OrbitChart::Sheet23] {
            let q =
                orbit_quadrature_chart(chart, -1.44, OrbitResolution::standard(), &b).unwrap();
            assert!(!q.nodes.is_empty());
            for (xi, w) in &q.nodes {
                assert!(*w > 0.0);
                assert_abs_diff_eq!(invariant_lambda(xi), -1.44, epsilon = 1e-10);
            }
        }
    }

    // Pushforward oracle: the orbit through xi(t) is swept by
    // k(theta) n(v) acting on xi(t), and in those coordinates the
    // symplectic measure is (t / 2pi) dtheta dv. A seeded Monte-Carlo
    // average over (theta, v) therefore estimates the same integral.
    fn pushforward_mc<F: Fn(&DualVec) -> f64>(t: f64, v_max: f64, n: usize, phi: F) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0a9b_1c2d);
        let xi0 = xi_of_t(t).unwrap();
        let mut acc = NeumaierSum::new();
        for _ in 0..n {
            let theta: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let v: f64 = rng.gen_range(-v_max..v_max);
            let n_v = GroupElt::new([[1.0, v], [0.0, 1.0]]).unwrap();
            let g = GroupElt::k_theta(theta).mul(&n_v);
            acc.add(phi(&coadjoint(&g, &xi0)));
        }
        t * 2.0 * v_max * acc.total() / n as f64
    }

    #[test]
    fn gaussian_matches_monte_carlo_pushforward() {
        let t = 1.0;
        let b = SupportBox::centered([3.0, 3.0, 3.0]).unwrap();
        let q = orbit_quadrature(-t * t, OrbitResolution::standard(), &b).unwrap();
        let phi = gaussian_at(xi_of_t(t).unwrap(), 0.35);
        let (quad_val, diag) = orbit_integral(&q, &phi);
        assert!(diag.is_clean());
        let mc = pushforward_mc(t, 2.0, 2_000_000, &phi);
        let rel = (quad_val - mc).abs() / quad_val.abs();
        assert!(rel < 0.02, "quad {quad_val} vs mc {mc}, rel {rel}");
    }

    #[test]
    fn cap_volume_matches_monte_carlo_and_r2_order() {
        let t = 1.0;
        let b = SupportBox::centered([2.0, 2.0, 2.0]).unwrap();
        let q = orbit_quadrature(
            -t * t,
            OrbitResolution {
                n_angle: 1024,
                n_transverse: 512,
            },
            &b,
        )
        .unwrap();
        let omega = xi_of_t(t).unwrap();
        let r = 0.3;
        let vol = ball_volume(&q, &omega, r).unwrap();
        let cap = |xi: &DualVec| if xi.sub(&omega).norm() < r { 1.0 } else { 0.0 };
        let mc = pushforward_mc(t, 2.5, 2_000_000, cap);
        let rel = (vol - mc).abs() / vol;
        assert!(rel < 0.03, "cap quad {vol} vs mc {mc}, rel {rel}");
        // r^2 order with the flat-cap prefactor: near xi(t) the chart
        // embedding has area element 2t dpsi dd, so a Euclidean cap of
        // radius r carries symplectic volume ~ pi r^2 / (2t * 2pi)
        let flat = r * r / (4.0 * t);
        assert!((vol / flat - 1.0).abs() < 0.2, "vol {vol} vs flat {flat}");
    }

    #[test]
    fn two_charts_agree_on_a_gaussian() {
        let b = SupportBox::centered([3.0, 3.0, 3.0]).unwrap();
        let phi = gaussian_at(xi_of_t(1.0).unwrap(), 0.35);
        let qa = orbit_quadrature_chart(OrbitChart::PolarD, -1.0, OrbitResolution::standard(), &b)
            .unwrap();
        let qb = orbit_quadrature_chart(
            OrbitChart::Sheet23,
            -1.0,
            OrbitResolution {
                n_angle: 220,
                n_transverse: 220,
            },
            &b,
        )
        .unwrap();
        let (va, _) = orbit_integral(&qa, &phi);
        let (vb, _) = orbit_integral(&qb, &phi);
        assert!(
            (va - vb).abs() / va.abs() < 1e-3,
            "polar {va} vs sheet {vb}"
        );
    }

    #[test]
    fn rescaling_identity_is_exact() {
        let hbar = 1.0 / 16.0;
        let b = SupportBox::centered([3.0, 3.0, 3.0]).unwrap();
        let phi = gaussian_at(xi_of_t(1.0).unwrap(), 0.35);
        let res = OrbitResolution::standard();

        let q = orbit_quadrature(-1.0, res, &b).unwrap();
        let (rhs, _) = orbit_integral(&q, |xi| phi(&xi.scale(hbar)));
        let rhs = hbar * rhs;

        let q_scaled = orbit_quadrature(-hbar * hbar, res, &b.scaled(hbar).unwrap()).unwrap();
        let (lhs, _) = orbit_integral(&q_scaled, &phi);

        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn coadjoint_invariance_of_the_measure() {
        let b = SupportBox::centered([4.0, 4.0, 4.0]).unwrap();
        let phi = gaussian_at(xi_of_t(1.0).unwrap(), 0.4);
        let q = orbit_quadrature(-1.0, OrbitResolution::standard(), &b).unwrap();
        let (base, _) = orbit_integral(&q, &phi);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..6 {
            let x = LieVec::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
            );
            let g = exp_g(&x);
            let (moved, _) = orbit_integral(&q, |xi| phi(&coadjoint(&g, xi)));
            assert!(
                (moved - base).abs() / base.abs() < 2e-3,
                "moved {moved} vs base {base}"
            );
        }
    }

    #[test]
    fn integral_is_continuous_in_lambda() {
        let b = SupportBox::centered([3.0, 3.0, 3.0]).unwrap();
        let phi = gaussian_at(xi_of_t(1.0).unwrap(), 0.5);
        let value = |lam: f64| {
            let q = orbit_quadrature(lam, OrbitResolution::standard(), &b).unwrap();
            orbit_integral(&q, &phi).0
        };
        let (v0, vh, v2h) = (value(-1.0), value(-1.0 + 0.01), value(-1.0 + 0.02));
        // second difference small relative to first difference: no jump
        let d1 = (vh - v0).abs();
        let d2 = (v2h - 2.0 * vh + v0).abs();
        assert!(d1 < 0.05 * v0.abs());
        assert!(d2 < 0.2 * d1, "kink detected: d1 {d1}, d2 {d2}");
    }

    #[test]
    fn truncation_warning_fires_when_support_leaks() {
        let b = SupportBox::centered([1.05, 1.05, 1.05]).unwrap();
        let q = orbit_quadrature(-1.0, OrbitResolution::standard(), &b).unwrap();
        // wide integrand: plenty of mass at the box edge
        let (_, diag) = orbit_integral(&q, |_| 1.0);
        assert!(!diag.is_clean());

        // a tight bump well inside a roomy box stays clean
        let roomy = SupportBox::centered([2.5, 2.5, 2.5]).unwrap();
        let q2 = orbit_quadrature(-1.0, OrbitResolution::standard(), &roomy).unwrap();
        let tight = gaussian_at(xi_of_t(1.0).unwrap(), 0.1);
        let (_, diag2) = orbit_integral(&q2, tight);
        assert!(diag2.is_clean());
    }

    #[test]
    fn zero_integrand_is_zero() {
        let b = SupportBox::centered([2.0, 2.0, 2.0]).unwrap();
        let q = orbit_quadrature(-1.0, OrbitResolution::coarse(), &b).unwrap();
        assert_eq!(orbit_integral(&q, |_| 0.0).0, 0.0);
        let report =
            negative_cone_integral(|_| 0.0, &b, OrbitResolution::coarse(), &Default::default())
                .unwrap();
        assert_eq!(report.direct, 0.0);
        assert_eq!(report.nested, 0.0);
    }

    fn cone_bump(center: DualVec, width: f64) -> impl Fn(&DualVec) -> f64 {
        move |xi: &DualVec| {
            let d = xi.sub(&center).norm() / width;
            crate::num::bump(d)
        }
    }

    #[test]
    fn disintegration_agrees_both_ways() {
        let b = SupportBox::centered([2.0, 2.0, 2.0]).unwrap();
        let phi = cone_bump(xi_of_t(1.0).unwrap(), 0.6);
        let report =
            negative_cone_integral(&phi, &b, OrbitResolution::standard(), &Default::default())
                .unwrap();
        assert!(
            report.rel_discrepancy() < 5e-3,
            "direct {} vs nested {}",
            report.direct,
            report.nested
        );

        // weighting by the invariant keeps the support inside the cone
        let weighted = |xi: &DualVec| phi(xi) * invariant_lambda(xi);
        let report2 =
            negative_cone_integral(&weighted, &b, OrbitResolution::standard(), &Default::default())
                .unwrap();
        assert!(
            report2.rel_discrepancy() < 5e-3,
            "direct {} vs nested {}",
            report2.direct,
            report2.nested
        );

        // the identity carries any flat-normalization rescaling as a
        // common factor, so the two sides keep agreeing
        let report3 = negative_cone_integral(
            &phi,
            &b,
            OrbitResolution::standard(),
            &HaarNormalization::scaled(3.0),
        )
        .unwrap();
        assert!(report3.rel_discrepancy() < 5e-3);
        assert_abs_diff_eq!(
            report3.direct * 3.0,
            report.direct,
            epsilon = 1e-12 * report.direct.abs()
        );
    }

    #[test]
    fn support_violation_is_detected() {
        let b = SupportBox::centered([2.0, 2.0, 2.0]).unwrap();
        // centered at the origin: straddles the cone boundary
        let phi = gaussian_at(DualVec::new(0.0, 0.0, 0.0), 0.5);
        assert!(matches!(
            negative_cone_integral(&phi, &b, OrbitResolution::coarse(), &Default::default()),
            Err(CoreError::SupportViolation(_))
        ));
    }

    #[test]
    fn ball_volume_r2_law_and_guards() {
        let b = SupportBox::centered([2.0, 2.0, 2.0]).unwrap();
        let q = orbit_quadrature(
            -1.0,
            OrbitResolution {
                n_angle: 1024,
                n_transverse: 512,
            },
            &b,
        )
        .unwrap();
        let omega = xi_of_t(1.0).unwrap();
        let radii = [0.4, 0.2, 0.1, 0.05];
        let vols: Vec<f64> = radii
            .iter()
            .map(|&r| ball_volume(&q, &omega, r).unwrap())
            .collect();
        let fit = loglog_slope(&radii, &vols, 0.0);
        assert!(
            fit.decays_at_least(1.8),
            "slope {:?} below the r^2 law",
            fit.slope_or_nan()
        );

        // far center: empty intersection
        let far = DualVec::new(0.0, 2.0, 2.0);
        assert_eq!(ball_volume(&q, &far, 0.3).unwrap(), 0.0);

        assert!(ball_volume(&q, &DualVec::new(0.05, 0.0, 0.0), 0.3).is_err());
        assert!(ball_volume(&q, &omega, 1.5).is_err());
    }
}
