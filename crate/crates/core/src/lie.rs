//! Lie-theoretic primitives for PGL2(R).
//!
//! The Lie algebra is realized as traceless real 2x2 matrices with the
//! basis e1 = diag(1/2, -1/2), e2 = upper nilpotent, e3 = lower
//! nilpotent. The dual space carries coordinates (xi1, xi2, xi3) with
//! matrix form i*[[xi1, xi3], [xi2, -xi1]], so the pairing of x and xi
//! is the purely imaginary number i*(x1 xi1 + x2 xi2 + x3 xi3); the
//! real dot product is what [`pairing`] returns.

use crate::error::{CoreError, Result};
use num_complex::Complex64;

/// Radius of the exponential chart used by the operator calculus; all
/// cutoffs live strictly inside it.
pub const CHART_RADIUS: f64 = 0.5;

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mat_det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Element of the Lie algebra in e-basis coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LieVec {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl LieVec {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn norm(&self) -> f64 {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(c * self.x1, c * self.x2, c * self.x3)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.x1 + o.x1, self.x2 + o.x2, self.x3 + o.x3)
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Traceless matrix form [[x1/2, x2], [x3, -x1/2]].
    pub fn matrix(&self) -> Mat2 {
        [[0.5 * self.x1, self.x2], [self.x3, -0.5 * self.x1]]
    }

    pub fn from_matrix(m: &Mat2) -> Self {
        Self::new(m[0][0] - m[1][1], m[0][1], m[1][0])
    }

    /// The square of the matrix eigenvalue: mu^2 = x1^2/4 + x2 x3,
    /// equal to -det of the matrix form. Negative for elliptic x.
    pub fn mu_squared(&self) -> f64 {
        0.25 * self.x1 * self.x1 + self.x2 * self.x3
    }

    /// Coefficients (cX, cY, cW) in the complexified basis with
    /// e1 = (i/2)(X+Y), e2 = (X-Y)/2 + iW, e3 = (X-Y)/2 - iW.
    pub fn xyw(&self) -> [Complex64; 3] {
        let half_sum = 0.5 * (self.x2 + self.x3);
        [
            Complex64::new(half_sum, 0.5 * self.x1),
            Complex64::new(-half_sum, 0.5 * self.x1),
            Complex64::new(0.0, self.x2 - self.x3),
        ]
    }

    /// Inverse of [`xyw`]; the imaginary residue of the reconstructed
    /// coordinates measures how far the coefficients are from the real
    /// form and is returned alongside.
    pub fn from_xyw(c: [Complex64; 3]) -> (Self, f64) {
        let i = Complex64::new(0.0, 1.0);
        // x = cX X + cY Y + cW W expanded back through the definitions:
        // x1 = -i (cX + cY), x2 = (cX - cY)/2 - i cW / 2, x3 = (cX - cY)/2 + i cW / 2.
        let x1 = -i * (c[0] + c[1]);
        let x2 = 0.5 * (c[0] - c[1]) - 0.5 * i * c[2];
        let x3 = 0.5 * (c[0] - c[1]) + 0.5 * i * c[2];
        let resid = x1.im.abs().max(x2.im.abs()).max(x3.im.abs());
        (Self::new(x1.re, x2.re, x3.re), resid)
    }
}

/// Element of the dual of the Lie algebra.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualVec {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
}

impl DualVec {
    pub fn new(xi1: f64, xi2: f64, xi3: f64) -> Self {
        Self { xi1, xi2, xi3 }
    }

    pub fn norm(&self) -> f64 {
        (self.xi1 * self.xi1 + self.xi2 * self.xi2 + self.xi3 * self.xi3).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(c * self.xi1, c * self.xi2, c * self.xi3)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.xi1 - o.xi1, self.xi2 - o.xi2, self.xi3 - o.xi3)
    }

    /// The real matrix xi/i = [[xi1, xi3], [xi2, -xi1]]; the coadjoint
    /// action conjugates this form.
    pub fn real_matrix(&self) -> Mat2 {
        [[self.xi1, self.xi3], [self.xi2, -self.xi1]]
    }

    pub fn from_real_matrix(m: &Mat2) -> Self {
        Self::new(0.5 * (m[0][0] - m[1][1]), m[1][0], m[0][1])
    }

    /// Value of the W linear functional: (xi2 - xi3)/2.
    pub fn w_value(&self) -> f64 {
        0.5 * (self.xi2 - self.xi3)
    }

    /// Value of the X linear functional: xi1 + i (xi2 + xi3)/2.
    pub fn x_value(&self) -> Complex64 {
        Complex64::new(self.xi1, 0.5 * (self.xi2 + self.xi3))
    }

    /// Value of the Y linear functional: xi1 - i (xi2 + xi3)/2.
    pub fn y_value(&self) -> Complex64 {
        Complex64::new(self.xi1, -0.5 * (self.xi2 + self.xi3))
    }
}

/// Real dot product x1 xi1 + x2 xi2 + x3 xi3. The invariant trace
/// pairing is i times this, so characters appear as e^{i pairing}.
pub fn pairing(x: &LieVec, xi: &DualVec) -> f64 {
    x.x1 * xi.xi1 + x.x2 * xi.xi2 + x.x3 * xi.xi3
}

/// The invariant polynomial Lambda(xi) = -xi1^2 - xi2 xi3 (the
/// determinant of the matrix form divided by i^2).
pub fn invariant_lambda(xi: &DualVec) -> f64 {
    -xi.xi1 * xi.xi1 - xi.xi2 * xi.xi3
}

/// The reference point xi(t) = (t, 0, 0) on the one-sheeted orbit of
/// invariant -t^2; rejects t = 0 (the nilpotent cone).
pub fn xi_of_t(t: f64) -> Result<DualVec> {
    if t == 0.0 || !t.is_finite() {
        return Err(CoreError::InvalidParameter(
            "reference orbit point needs t nonzero and finite".into(),
        ));
    }
    Ok(DualVec::new(t, 0.0, 0.0))
}

/// PGL2(R) element: real 2x2 matrix normalized to |det| = 1, stored
/// with its determinant sign, equal to any positive scalar multiple.
#[derive(Debug, Clone, Copy)]
pub struct GroupElt {
    mat: Mat2,
    det_sign: i8,
}

impl GroupElt {
    pub fn identity() -> Self {
        Self {
            mat: [[1.0, 0.0], [0.0, 1.0]],
            det_sign: 1,
        }
    }

    /// Normalize an invertible matrix projectively.
    pub fn new(m: Mat2) -> Result<Self> {
        let d = mat_det(&m);
        if d == 0.0 || !d.is_finite() {
            return Err(CoreError::InvalidParameter(
                "group element needs an invertible matrix".into(),
            ));
        }
        let s = d.abs().sqrt();
        Ok(Self {
            mat: [
                [m[0][0] / s, m[0][1] / s],
                [m[1][0] / s, m[1][1] / s],
            ],
            det_sign: if d > 0.0 { 1 } else { -1 },
        })
    }

    pub fn matrix(&self) -> Mat2 {
        self.mat
    }

    pub fn det_sign(&self) -> i8 {
        self.det_sign
    }

    pub fn trace(&self) -> f64 {
        self.mat[0][0] + self.mat[1][1]
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self {
            mat: mat_mul(&self.mat, &o.mat),
            det_sign: self.det_sign * o.det_sign,
        }
    }

    pub fn inverse(&self) -> Self {
        // adjugate over determinant; |det| = 1 keeps normalization
        let s = self.det_sign as f64;
        Self {
            mat: [
                [s * self.mat[1][1], -s * self.mat[0][1]],
                [-s * self.mat[1][0], s * self.mat[0][0]],
            ],
            det_sign: self.det_sign,
        }
    }

    /// Canonical sign representative: first nonzero entry positive.
    fn canonical(&self) -> Mat2 {
        let m = self.mat;
        let lead = [m[0][0], m[0][1], m[1][0], m[1][1]]
            .into_iter()
            .find(|v| v.abs() > 1e-14)
            .unwrap_or(1.0);
        if lead < 0.0 {
            [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]
        } else {
            m
        }
    }

    /// Projective equality to the given entrywise tolerance.
    pub fn proj_eq(&self, o: &Self, tol: f64) -> bool {
        if self.det_sign != o.det_sign {
            return false;
        }
        let a = self.canonical();
        let b = o.canonical();
        (0..2).all(|i| (0..2).all(|j| (a[i][j] - b[i][j]).abs() <= tol))
    }

    /// diag(y, 1), y != 0: the diagonal subgroup H.
    pub fn diag(y: f64) -> Result<Self> {
        Self::new([[y, 0.0], [0.0, 1.0]])
    }

    /// k(theta) = exp(theta (e2 - e3)/2), the maximal compact
    /// one-parameter group; projectively 2*pi-periodic in theta.
    pub fn k_theta(theta: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Self {
            mat: [[c, s], [-s, c]],
            det_sign: 1,
        }
    }

    /// a(u) = exp(u e1) = diag(e^{u/2}, e^{-u/2}).
    pub fn a_u(u: f64) -> Self {
        Self {
            mat: [[(0.5 * u).exp(), 0.0], [0.0, (-0.5 * u).exp()]],
            det_sign: 1,
        }
    }

    /// The Weyl element [[0,1],[-1,0]].
    pub fn weyl() -> Self {
        Self {
            mat: [[0.0, 1.0], [-1.0, 0.0]],
            det_sign: 1,
        }
    }

    /// diag(-1, 1): the reflection generating the non-identity
    /// component.
    pub fn reflection() -> Self {
        Self {
            mat: [[-1.0, 0.0], [0.0, 1.0]],
            det_sign: -1,
        }
    }
}

/// cosh-like and (sinh mu / mu)-like values for mu^2 = w, valid for
/// either sign of w via the sin/sinh branches, with series near 0.
fn cosh_sinhc(w: f64) -> (f64, f64) {
    if w.abs() < 1e-6 {
        (
            1.0 + w * (0.5 + w / 24.0),
            1.0 + w * (1.0 / 6.0 + w / 120.0),
        )
    } else if w > 0.0 {
        let mu = w.sqrt();
        (mu.cosh(), mu.sinh() / mu)
    } else {
        let phi = (-w).sqrt();
        (phi.cos(), phi.sin() / phi)
    }
}

/// Exponential map onto the identity component.
pub fn exp_g(x: &LieVec) -> GroupElt {
    let (ch, shc) = cosh_sinhc(x.mu_squared());
    let m = x.matrix();
    GroupElt::new([
        [ch + shc * m[0][0], shc * m[0][1]],
        [shc * m[1][0], ch + shc * m[1][1]],
    ])
    .expect("exponential is always invertible")
}

/// Principal logarithm of the positive-trace representative, with no
/// chart-size restriction beyond well-definedness. Fails on the
/// non-identity component and on trace-zero (half-turn) elements where
/// the logarithm is not unique.
pub fn principal_log(g: &GroupElt) -> Result<LieVec> {
    if g.det_sign < 0 {
        return Err(CoreError::OutOfChart(
            "reflection component has no logarithm in the identity component".into(),
        ));
    }
    let mut m = g.mat;
    let mut tr = m[0][0] + m[1][1];
    if tr < 0.0 {
        for row in &mut m {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        tr = -tr;
    }
    let c = 0.5 * tr;
    if c < 1e-9 {
        return Err(CoreError::OutOfChart(
            "trace-zero rotation: logarithm branch point".into(),
        ));
    }
    // Recover w = mu^2 with cosh(sqrt(w)) = c on either branch.
    let w = if (c - 1.0).abs() < 1e-6 {
        let e = c - 1.0;
        2.0 * e * (1.0 - e / 6.0 + e * e * 4.0 / 90.0)
    } else if c > 1.0 {
        let mu = (c + (c * c - 1.0).sqrt()).ln();
        mu * mu
    } else {
        let phi = c.acos();
        -phi * phi
    };
    let (_, shc) = cosh_sinhc(w);
    let inv = 1.0 / shc;
    Ok(LieVec::new(
        inv * (m[0][0] - m[1][1]),
        inv * m[0][1],
        inv * m[1][0],
    ))
}

/// Chart logarithm: principal log constrained to |x| < max_norm.
pub fn log_g_within(g: &GroupElt, max_norm: f64) -> Result<LieVec> {
    let x = principal_log(g)?;
    if x.norm() >= max_norm {
        return Err(CoreError::OutOfChart(format!(
            "|log g| = {:.4} exceeds chart radius {max_norm}",
            x.norm()
        )));
    }
    Ok(x)
}

/// Chart logarithm at the default radius [`CHART_RADIUS`].
pub fn log_g(g: &GroupElt) -> Result<LieVec> {
    log_g_within(g, CHART_RADIUS)
}

/// Volume density of the exponential chart: dg = jac(x) dx with
/// jac(x) = (sinh(mu)/mu)^2, mu^2 = x1^2/4 + x2 x3 (the eigenvalues of
/// ad x are 0 and +-2mu). Real and positive on the chart; the elliptic
/// branch uses sin.
pub fn jac(x: &LieVec) -> f64 {
    let w = x.mu_squared();
    if w.abs() < 1e-4 {
        1.0 + w * (1.0 / 3.0 + w * (2.0 / 45.0 + w / 315.0))
    } else {
        let (_, shc) = cosh_sinhc(w);
        shc * shc
    }
}

/// Adjoint action Ad(g)x = g x g^{-1} in coordinates.
pub fn adjoint(g: &GroupElt, x: &LieVec) -> LieVec {
    let m = mat_mul(&mat_mul(&g.mat, &x.matrix()), &g.inverse().mat);
    LieVec::from_matrix(&m)
}

/// Coadjoint action transported through the trace pairing: conjugation
/// of the matrix form, xi -> g xi g^{-1}.
pub fn coadjoint(g: &GroupElt, xi: &DualVec) -> DualVec {
    let m = mat_mul(&mat_mul(&g.mat, &xi.real_matrix()), &g.inverse().mat);
    DualVec::from_real_matrix(&m)
}

/// The fixed Haar-measure densities: dx = dx_constant * dx1 dx2 dx3 on
/// the Lie algebra and dxi = dxi_constant * dxi1 dxi2 dxi3 on the dual.
/// The defaults form an exactly Fourier-dual pair for the e^{i x.xi}
/// pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarNormalization {
    pub dx_constant: f64,
    pub dxi_constant: f64,
}

impl Default for HaarNormalization {
    fn default() -> Self {
        Self {
            dx_constant: 1.0 / std::f64::consts::PI,
            dxi_constant: 1.0 / (8.0 * std::f64::consts::PI * std::f64::consts::PI),
        }
    }
}

impl HaarNormalization {
    /// Rescale dx by kappa and dxi by 1/kappa; Fourier duality is
    /// preserved, and jointly-normalized quantities must not change.
    pub fn scaled(kappa: f64) -> Self {
        let base = Self::default();
        Self {
            dx_constant: base.dx_constant * kappa,
            dxi_constant: base.dxi_constant / kappa,
        }
    }
}

/// Integral over the diagonal subgroup H = {diag(y,1)}: both
/// components of R^x against dy/|y|, i.e. integral over u = log|y| of
/// f(diag(e^u, 1)) + f(diag(-e^u, 1)).
///
/// `half_width` and `n` control the Gauss-Legendre rule in u; the tail
/// is sampled beyond the window and the integral is rejected as
/// NonConvergent if it has not decayed there.
pub fn haar_h_integral_with<F: Fn(f64) -> f64>(f: F, half_width: f64, n: usize) -> Result<f64> {
    let (us, ws) = crate::num::gauss_legendre_on(n, -half_width, half_width);
    let mut acc = crate::num::NeumaierSum::new();
    let mut interior_max: f64 = 0.0;
    for (u, w) in us.iter().zip(&ws) {
        let y = u.exp();
        let v = f(y) + f(-y);
        interior_max = interior_max.max(v.abs());
        acc.add(w * v);
    }
    let mut tail: f64 = 0.0;
    for k in 0..8 {
        let u = half_width * (1.0 + 0.1 * (k + 1) as f64);
        let y = u.exp();
        tail = tail
            .max((f(y) + f(-y)).abs())
            .max((f(1.0 / y) + f(-1.0 / y)).abs());
    }
    if tail > 1e-10 * (1.0 + interior_max) {
        return Err(CoreError::NonConvergent(format!(
            "H-integrand has not decayed at |log y| = {half_width}: tail sample {tail:.3e}"
        )));
    }
    Ok(acc.total())
}

/// [`haar_h_integral_with`] at the default window (|log y| <= 26, 512
/// nodes), ample for the Gaussian-to-exponential decays used here.
pub fn haar_h_integral<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    haar_h_integral_with(f, 26.0, 512)
}

/// Complexified basis matrices X, Y, W (for symbolic checks).
pub fn xyw_matrices() -> [[[Complex64; 2]; 2]; 3] {
    let h = Complex64::new(0.0, -0.5); // 1/(2i)
    let i = Complex64::new(0.0, 1.0);
    let x = [[h, h * i], [h * i, -h]];
    let y = [[h, -h * i], [-h * i, -h]];
    let w = [[Complex64::new(0.0, 0.0), h], [-h, Complex64::new(0.0, 0.0)]];
    [x, y, w]
}
