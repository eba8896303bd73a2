//! The hbar-dependent operator calculus: symbol classes, the group
//! cutoff, densities Opp~(a) on the group, truncated operators
//! Opp(a : pi), the star product by group convolution, and the trace
//! identities tying them to orbit integrals.

mod assembly;
mod fourier;
mod star;
mod traces;

pub use assembly::{
    kak_coords, kak_haar_integral, kak_trace, opp, opp_density, opp_direct, opp_polynomial,
    opp_with, poly_window_symbol, rotate_density, Assembled, KakParams, PolyOp,
};
pub use fourier::{
    aliasing_headroom, chart_grid, grid_sizes_for, inv_fourier_at, inv_fourier_on_grid,
    CHI_BANDWIDTH,
};
pub use star::{
    b_from_square, build_f, star, star_product, weyl_conjugation_residual, StarDensity,
    StarOptions, StarProduct,
};
pub use traces::{
    kirillov_trace_check, trace_estimate, trace_norm, ChartTestFn, KirillovReport, TraceEstimate,
};

use crate::error::{CoreError, Result};
use crate::lie::LieVec;
use crate::num::cutoff_profile;
use crate::orbits::SupportBox;
use crate::{DualVec, GroupElt};
use num_complex::Complex64;
use std::sync::Arc;

/// Shape of a one-dimensional symbol factor with a known transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// The fixed smooth bump exp(1 - 1/(1 - v^2)) on (-1, 1).
    Bump,
    /// exp(-v^2 / 2).
    Gaussian,
    /// Flat-top cutoff: 1 on |v| <= 1, 0 for |v| >= 2, smooth between.
    Plateau,
}

impl Shape {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Shape::Bump => crate::num::bump(v),
            Shape::Gaussian => (-0.5 * v * v).exp(),
            Shape::Plateau => cutoff_profile(v.abs(), 1.0, 2.0),
        }
    }

    /// Radius beyond which the shape is treated as zero: exact for the
    /// compactly supported shapes, a generous cut for the Gaussian.
    pub fn support_radius(&self) -> f64 {
        match self {
            Shape::Bump => 1.0,
            Shape::Gaussian => 8.5,
            Shape::Plateau => 2.0,
        }
    }
}

/// One separable factor `xi^moment * shape((xi - center)/width)`.
///
/// The moment power (at most 2) lets low-degree polynomials times a
/// window be expressed as sums of separable factors, keeping the fast
/// transform path available for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor1D {
    pub center: f64,
    pub width: f64,
    pub shape: Shape,
    pub moment: u8,
}

impl Factor1D {
    pub fn new(center: f64, width: f64, shape: Shape) -> Self {
        Self {
            center,
            width,
            shape,
            moment: 0,
        }
    }

    pub fn with_moment(mut self, moment: u8) -> Self {
        assert!(moment <= 2, "factor moments above 2 are not supported");
        self.moment = moment;
        self
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let base = self.shape.eval((xi - self.center) / self.width);
        match self.moment {
            0 => base,
            1 => xi * base,
            _ => xi * xi * base,
        }
    }

    /// Transform against e^{+i y xi} d xi. Callers that need the
    /// opposite phase convention pass -y; the moment powers expand
    /// around the center into cached moment transforms of the shape.
    pub fn transform(&self, y: f64) -> Complex64 {
        let sigma = self.width * y;
        let m0 = fourier::moment_hat(self.shape, 0, sigma);
        let mut v = match self.moment {
            0 => m0,
            1 => m0 * self.center + fourier::moment_hat(self.shape, 1, sigma) * self.width,
            _ => {
                let m1 = fourier::moment_hat(self.shape, 1, sigma);
                let m2 = fourier::moment_hat(self.shape, 2, sigma);
                m0 * (self.center * self.center)
                    + m1 * (2.0 * self.center * self.width)
                    + m2 * (self.width * self.width)
            }
        };
        v *= self.width;
        v * Complex64::from_polar(1.0, y * self.center)
    }

    pub fn support(&self) -> (f64, f64) {
        let r = self.width * self.shape.support_radius();
        (self.center - r, self.center + r)
    }
}

/// One separable term `coeff * f1(xi1) f2(xi2) f3(xi3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableTerm {
    pub coeff: Complex64,
    pub factors: [Factor1D; 3],
}

impl SeparableTerm {
    pub fn eval(&self, xi: &DualVec) -> Complex64 {
        self.coeff
            * (self.factors[0].eval(xi.xi1)
                * self.factors[1].eval(xi.xi2)
                * self.factors[2].eval(xi.xi3))
    }
}

type EvalFn = Arc<dyn Fn(&DualVec) -> Complex64 + Send + Sync>;

/// An hbar-dependent symbol on the dual: an evaluator plus the class
/// data the calculus needs (support box, anisotropy exponent delta,
/// and the flags tests dispatch on).
#[derive(Clone)]
pub struct Symbol {
    eval: EvalFn,
    pub support_box: SupportBox,
    pub class_delta: f64,
    pub in_k_tilde: bool,
    pub real_valued: bool,
    terms: Option<Vec<SeparableTerm>>,
}

impl std::fmt::Debug for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Symbol")
            .field("support_box", &self.support_box)
            .field("class_delta", &self.class_delta)
            .field("in_k_tilde", &self.in_k_tilde)
            .field("real_valued", &self.real_valued)
            .field("terms", &self.terms)
            .finish()
    }
}

fn union_box(terms: &[SeparableTerm]) -> Result<SupportBox> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for t in terms {
        for (i, f) in t.factors.iter().enumerate() {
            if !(f.width > 0.0 && f.width.is_finite() && f.center.is_finite()) {
                return Err(CoreError::InvalidParameter(format!(
                    "bad factor on axis {i}: center {}, width {}",
                    f.center, f.width
                )));
            }
            let (a, b) = f.support();
            lo[i] = lo[i].min(a);
            hi[i] = hi[i].max(b);
        }
    }
    SupportBox::new(lo, hi)
}

impl Symbol {
    pub fn eval(&self, xi: &DualVec) -> Complex64 {
        (self.eval)(xi)
    }

    pub fn eval_re(&self, xi: &DualVec) -> f64 {
        (self.eval)(xi).re
    }

    pub fn terms(&self) -> Option<&[SeparableTerm]> {
        self.terms.as_deref()
    }

    /// Sum of separable terms. `real_valued` is inferred from the
    /// coefficients and moments being real-symmetric term by term,
    /// which covers every construction used here.
    pub fn from_terms(terms: Vec<SeparableTerm>, class_delta: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(CoreError::InvalidParameter("no separable terms".into()));
        }
        let support_box = union_box(&terms)?;
        let real = terms.iter().all(|t| t.coeff.im == 0.0);
        let terms_for_eval = terms.clone();
        let eval = move |xi: &DualVec| -> Complex64 {
            let mut s = Complex64::new(0.0, 0.0);
            for t in &terms_for_eval {
                s += t.eval(xi);
            }
            s
        };
        Ok(Self {
            eval: Arc::new(eval),
            support_box,
            class_delta,
            in_k_tilde: false,
            real_valued: real,
            terms: Some(terms),
        })
    }

    /// Product of three one-dimensional factors.
    pub fn separable(factors: [Factor1D; 3], class_delta: f64) -> Result<Self> {
        Self::from_terms(
            vec![SeparableTerm {
                coeff: Complex64::new(1.0, 0.0),
                factors,
            }],
            class_delta,
        )
    }

    /// The concrete calibration-class member used throughout the
    /// tests: a bump of width 0.25 around xi1 = 1 times bumps of width
    /// hbar^delta in xi2 and xi3 (symmetric under xi2 <-> xi3 because
    /// the transverse factors coincide).
    pub fn k_tilde_member(hbar: f64, delta: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar < 1.0) {
            return Err(CoreError::InvalidParameter(format!("bad hbar {hbar}")));
        }
        if !(0.0..0.5).contains(&delta) {
            return Err(CoreError::InvalidParameter(format!(
                "anisotropy exponent {delta} outside [0, 1/2)"
            )));
        }
        let w = hbar.powf(delta);
        let mut s = Self::separable(
            [
                Factor1D::new(1.0, 0.25, Shape::Bump),
                Factor1D::new(0.0, w, Shape::Bump),
                Factor1D::new(0.0, w, Shape::Bump),
            ],
            delta,
        )?;
        s.in_k_tilde = true;
        Ok(s)
    }

    /// Arbitrary closure-backed symbol (generic transform paths only).
    pub fn from_closure(
        eval: impl Fn(&DualVec) -> Complex64 + Send + Sync + 'static,
        support_box: SupportBox,
        class_delta: f64,
        real_valued: bool,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            support_box,
            class_delta,
            in_k_tilde: false,
            real_valued,
            terms: None,
        }
    }

    /// Pointwise square, for comparisons against leading terms.
    pub fn squared(&self) -> Self {
        let inner = self.eval.clone();
        Self {
            eval: Arc::new(move |xi| {
                let v = inner(xi);
                v * v
            }),
            support_box: self.support_box,
            class_delta: self.class_delta,
            in_k_tilde: false,
            real_valued: self.real_valued,
            terms: None,
        }
    }

    /// Verify the calibration-class support and swap-symmetry clauses
    /// on sampled points; cheap and deterministic.
    pub fn check_k_tilde(&self, hbar: f64) -> Result<()> {
        if !self.in_k_tilde {
            return Err(CoreError::InvalidParameter(
                "symbol does not claim the calibration class".into(),
            ));
        }
        let b = &self.support_box;
        if b.lo[0] <= 0.05 || b.hi[0] > 20.0 {
            return Err(CoreError::SupportViolation(format!(
                "xi1 support [{}, {}] not of unit order",
                b.lo[0], b.hi[0]
            )));
        }
        let transverse = b.hi[1].abs().max(b.lo[1].abs()).max(b.hi[2].abs());
        if transverse > 4.0 * hbar.powf(self.class_delta) {
            return Err(CoreError::SupportViolation(format!(
                "transverse support {transverse} exceeds the hbar^delta scale"
            )));
        }
        for i in 0..24 {
            for j in 0..7 {
                let xi1 = 0.7 + 0.025 * i as f64;
                let s = hbar.powf(self.class_delta) * (j as f64 - 3.0) / 3.5;
                let p = self.eval(&DualVec::new(xi1, s, -0.4 * s));
                let q = self.eval(&DualVec::new(xi1, -0.4 * s, s));
                if (p - q).norm() > 1e-12 {
                    return Err(CoreError::InvalidParameter(format!(
                        "swap asymmetry {} at xi1 = {xi1}",
                        (p - q).norm()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Exactly K-invariant radius: r_K(x)^2 = x1^2/2 + x2^2 + x3^2 is the
/// Frobenius norm of the matrix form, invariant under conjugation by
/// the full orthogonal group of the circle, including the reflection
/// component.
pub fn r_k(x: &LieVec) -> f64 {
    (0.5 * x.x1 * x.x1 + x.x2 * x.x2 + x.x3 * x.x3).sqrt()
}

/// Smooth compactly supported cutoff on the Lie algebra, identically 1
/// on r_K <= radius/2 and 0 on r_K >= radius, radial in r_K so it is
/// exactly invariant under the rotation subgroup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffChi {
    pub radius: f64,
}

impl Default for CutoffChi {
    fn default() -> Self {
        Self { radius: 0.4 }
    }
}

impl CutoffChi {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= 0.45) {
            return Err(CoreError::InvalidParameter(format!(
                "cutoff radius {radius} outside (0, 0.45]"
            )));
        }
        Ok(Self { radius })
    }

    pub fn eval(&self, x: &LieVec) -> f64 {
        cutoff_profile(r_k(x), 0.5 * self.radius, self.radius)
    }

    /// Euclidean half-widths of the axis box that contains the
    /// support: the x1 semi-axis of {r_K <= radius} is radius*sqrt(2).
    pub fn box_half_widths(&self) -> [f64; 3] {
        [
            self.radius * std::f64::consts::SQRT_2,
            self.radius,
            self.radius,
        ]
    }

    /// Euclidean radius of the smallest origin ball holding the
    /// support.
    pub fn euclid_radius(&self) -> f64 {
        self.radius * std::f64::consts::SQRT_2
    }
}

type DensityFn = Arc<dyn Fn(&GroupElt) -> Complex64 + Send + Sync>;

/// A compactly supported density on the group, evaluable near the
/// identity through the exponential chart.
#[derive(Clone)]
pub struct GroupDensity {
    eval: DensityFn,
    /// Euclidean chart radius outside which the density vanishes.
    pub support_radius: f64,
}

impl GroupDensity {
    pub fn new(
        eval: impl Fn(&GroupElt) -> Complex64 + Send + Sync + 'static,
        support_radius: f64,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            support_radius,
        }
    }

    pub fn eval(&self, g: &GroupElt) -> Complex64 {
        (self.eval)(g)
    }
}

/// Opp~(a): the density g = exp(x) |-> jac^{-1}(x) chi(x) a_hbar_v(x),
/// supported in the cutoff ball.
pub fn opp_tilde(a: &Symbol, hbar: f64, chi: &CutoffChi) -> Result<GroupDensity> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(CoreError::InvalidParameter(format!("bad hbar {hbar}")));
    }
    let a = a.clone();
    let chi = *chi;
    let radius = chi.euclid_radius();
    let dens = move |g: &GroupElt| -> Complex64 {
        let x = match crate::lie::log_g_within(g, radius + 0.05) {
            Ok(x) => x,
            Err(_) => return Complex64::new(0.0, 0.0),
        };
        let c = chi.eval(&x);
        if c == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        fourier::inv_fourier_at(&a, hbar, &x) * (c / crate::lie::jac(&x))
    };
    Ok(GroupDensity::new(dens, radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{adjoint, exp_g, GroupElt};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cutoff_is_exactly_invariant_under_the_circle_and_reflections() {
        let chi = CutoffChi::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = LieVec::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let base = chi.eval(&x);
            for theta in [0.3, 1.7, 4.4] {
                let moved = adjoint(&GroupElt::k_theta(theta), &x);
                assert_abs_diff_eq!(chi.eval(&moved), base, epsilon = 1e-15);
            }
            let refl = adjoint(&GroupElt::reflection(), &x);
            assert_abs_diff_eq!(chi.eval(&refl), base, epsilon = 1e-15);
            // even
            assert_abs_diff_eq!(chi.eval(&x.neg()), base, epsilon = 1e-15);
        }
        // plateau and support
        assert_abs_diff_eq!(chi.eval(&LieVec::new(0.1, 0.05, -0.05)), 1.0);
        assert_abs_diff_eq!(chi.eval(&LieVec::new(0.0, 0.41, 0.0)), 0.0);
        assert!((0.0..=1.0).contains(&chi.eval(&LieVec::new(0.2, 0.2, 0.1))));
    }

    #[test]
    fn k_tilde_member_passes_its_own_checks() {
        let hbar = 1.0 / 16.0;
        let a = Symbol::k_tilde_member(hbar, 0.2).unwrap();
        a.check_k_tilde(hbar).unwrap();
        assert!(a.real_valued);
        // peak value at the center is shape(0)^3 = 1
        assert_abs_diff_eq!(a.eval_re(&DualVec::new(1.0, 0.0, 0.0)), 1.0);
        // vanishes outside the box
        assert_eq!(a.eval_re(&DualVec::new(1.3, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn moment_factors_evaluate_polynomial_times_window() {
        let f = Factor1D::new(0.5, 2.0, Shape::Plateau).with_moment(2);
        // inside the flat part of the plateau the factor is xi^2
        assert_abs_diff_eq!(f.eval(1.3), 1.69, epsilon = 1e-14);
        let term = SeparableTerm {
            coeff: Complex64::new(0.0, -1.0),
            factors: [
                Factor1D::new(0.0, 2.0, Shape::Plateau),
                Factor1D::new(0.0, 2.0, Shape::Plateau).with_moment(1),
                Factor1D::new(0.0, 2.0, Shape::Plateau),
            ],
        };
        let s = Symbol::from_terms(vec![term], 0.0).unwrap();
        assert!(!s.real_valued);
        let v = s.eval(&DualVec::new(0.3, -1.2, 0.7));
        assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v.im, 1.2, epsilon = 1e-14);
    }

    #[test]
    fn opp_tilde_value_at_identity_matches_the_transform_at_zero() {
        let hbar = 1.0 / 8.0;
        let a = Symbol::k_tilde_member(hbar, 0.2).unwrap();
        let chi = CutoffChi::default();
        let dens = opp_tilde(&a, hbar, &chi).unwrap();
        let at_e = dens.eval(&GroupElt::identity());
        let want = fourier::inv_fourier_at(&a, hbar, &LieVec::zero());
        assert_abs_diff_eq!(at_e.re, want.re, epsilon = 1e-14 * want.re.abs());
        assert_abs_diff_eq!(at_e.im, want.im, epsilon = 1e-12 * want.re.abs());

        // far outside the cutoff ball the density vanishes
        let far = exp_g(&LieVec::new(0.7, 0.0, 0.0));
        assert_eq!(dens.eval(&far).norm(), 0.0);
    }
}
