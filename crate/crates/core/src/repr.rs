//! Truncated models of the irreducible unitary representations on
//! l^2 of a weight set Q: principal series pi(t, eps) on all of Z and
//! discrete-type modules on {|q| >= k}.
//!
//! The complexified ladder basis acts by
//!
//!   X e_q = c_q e_{q+1},   Y e_{q+1} = c_q e_q,   W e_q = q e_q,
//!
//! with c_q = sqrt(q(q+1) - Omega_pi), and a real Lie algebra element
//! x acts through the (X, Y, W) coefficients of its complexification.
//! All matrices here are dense complex on the window Q cap
//! [-Q_max, Q_max]; truncation artifacts live in the edge rows, so
//! operator identities are asserted on the interior |q| <= Q_max / 2.

use crate::error::{CoreError, Result};
use crate::lie::LieVec;
use crate::linalg::eigh_hermitian;
use crate::report::Diagnostics;
use ndarray::Array2;
use num_complex::Complex64;

/// Which irreducible family the model realizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReprKind {
    /// Spherical/nonspherical principal series; eps is the sign
    /// character of the nonidentity component, +1 or -1.
    Principal { t: f64, eps: i8 },
    /// Discrete-type module with weights {|q| >= k}, k >= 1.
    Discrete { k: i64 },
}

/// A representation together with its truncation window.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprModel {
    pub kind: ReprKind,
    pub omega_pi: f64,
    pub lambda_pi: f64,
    pub q_max: i64,
}

impl ReprModel {
    /// Ascending list of weights inside the truncation window.
    pub fn qs(&self) -> Vec<i64> {
        match self.kind {
            ReprKind::Principal { .. } => (-self.q_max..=self.q_max).collect(),
            ReprKind::Discrete { k } => (-self.q_max..=self.q_max)
                .filter(|q| q.abs() >= k)
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.qs().len()
    }

    pub fn index_of(&self, q: i64) -> Option<usize> {
        match self.kind {
            ReprKind::Principal { .. } => {
                if q.abs() <= self.q_max {
                    Some((q + self.q_max) as usize)
                } else {
                    None
                }
            }
            ReprKind::Discrete { k } => {
                if q.abs() > self.q_max || q.abs() < k {
                    None
                } else if q < 0 {
                    Some((q + self.q_max) as usize)
                } else {
                    Some((self.q_max - k + 1 + q - k) as usize)
                }
            }
        }
    }

    /// Raising coefficient c_q = sqrt(q(q+1) - Omega_pi); the radicand
    /// is nonnegative on the weight set of every supported family.
    pub fn c_q(&self, q: i64) -> f64 {
        let r = (q * (q + 1)) as f64 - self.omega_pi;
        debug_assert!(r > -1e-12, "negative radicand {r} at q={q}");
        r.max(0.0).sqrt()
    }

    /// Interior indices: weights at most half the truncation bound,
    /// where edge effects of the window are negligible.
    pub fn interior(&self) -> Vec<usize> {
        self.qs()
            .iter()
            .enumerate()
            .filter(|(_, q)| 2 * q.abs() <= self.q_max)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Dense complex matrix acting on the truncated weight window.
#[derive(Debug, Clone)]
pub struct TruncOp {
    pub matrix: Array2<Complex64>,
    pub model: ReprModel,
}

impl TruncOp {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(v.len(), n);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..n {
                acc += self.matrix[(r, c)] * v[c];
            }
            *o = acc;
        }
        out
    }

    /// Largest |A + A^dagger| entry over interior rows and columns.
    pub fn skew_hermitian_residual(&self) -> f64 {
        let interior = self.model.interior();
        let mut worst = 0.0f64;
        for &r in &interior {
            for &c in &interior {
                let s = self.matrix[(r, c)] + self.matrix[(c, r)].conj();
                worst = worst.max(s.norm());
            }
        }
        worst
    }
}

/// Build a representation model with its Casimir eigenvalue Omega_pi
/// and infinitesimal character lambda_pi = 1/4 + Omega_pi.
pub fn make_model(kind: ReprKind, q_max: i64) -> Result<ReprModel> {
    if q_max < 8 {
        return Err(CoreError::InvalidParameter(format!(
            "truncation bound {q_max} below the minimum 8"
        )));
    }
    let (omega_pi, lambda_pi) = match kind {
        ReprKind::Principal { t, eps } => {
            if !t.is_finite() {
                return Err(CoreError::InvalidParameter("nonfinite parameter t".into()));
            }
            if eps != 1 && eps != -1 {
                return Err(CoreError::InvalidParameter(format!(
                    "component sign must be +1 or -1, got {eps}"
                )));
            }
            (-0.25 - t * t, -t * t)
        }
        ReprKind::Discrete { k } => {
            if k < 1 {
                return Err(CoreError::InvalidParameter(format!(
                    "discrete parameter k = {k} below 1"
                )));
            }
            let kf = k as f64;
            (kf * (kf - 1.0), (kf - 0.5) * (kf - 0.5))
        }
    };
    Ok(ReprModel {
        kind,
        omega_pi,
        lambda_pi,
        q_max,
    })
}

/// Matrices of the complexified ladder elements X, Y, W on the window.
pub fn xyw_ops(model: &ReprModel) -> [TruncOp; 3] {
    let qs = model.qs();
    let n = qs.len();
    let mut mx = Array2::zeros((n, n));
    let mut my = Array2::zeros((n, n));
    let mut mw = Array2::zeros((n, n));
    for (i, &q) in qs.iter().enumerate() {
        mw[(i, i)] = Complex64::new(q as f64, 0.0);
        if let Some(up) = model.index_of(q + 1) {
            // skip the gap between the two discrete tails
            if qs[up] == q + 1 {
                let c = Complex64::new(model.c_q(q), 0.0);
                mx[(up, i)] = c;
                my[(i, up)] = c;
            }
        }
    }
    [mx, my, mw].map(|matrix| TruncOp {
        matrix,
        model: model.clone(),
    })
}

/// Matrix of pi(x) for a real Lie algebra element, through the ladder
/// coefficients of its complexification. Skew-hermitian away from the
/// truncation edges.
pub fn pi_lie(model: &ReprModel, x: &LieVec) -> TruncOp {
    let [cx, cy, cw] = x.xyw();
    let [mx, my, mw] = xyw_ops(model);
    let mut matrix = mx.matrix;
    matrix.zip_mut_with(&my.matrix, |a, b| *a = *a * cx + *b * cy);
    matrix.zip_mut_with(&mw.matrix, |a, b| *a += *b * cw);
    TruncOp {
        matrix,
        model: model.clone(),
    }
}

/// Matrix exponential of pi_lie(x), computed through a hermitian
/// eigendecomposition of -i pi(x) so the result is exactly unitary up
/// to arithmetic. Reports how much interior mass the exponential
/// transports into the outer 10% of the window.
pub fn pi_exp(model: &ReprModel, x: &LieVec) -> Result<(TruncOp, Diagnostics)> {
    if !x.norm().is_finite() || x.norm() > 10.0 {
        return Err(CoreError::InvalidParameter(format!(
            "group chart argument of size {} rejected",
            x.norm()
        )));
    }
    let skew = pi_lie(model, x);
    let n = skew.dim();
    let mut herm = skew.matrix;
    herm.mapv_inplace(|z| z * Complex64::new(0.0, -1.0));
    let (w, v) = eigh_hermitian(&herm)?;
    // U = V diag(e^{i w}) V^dagger
    let mut phased = v.clone();
    for (j, wj) in w.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, *wj);
        for i in 0..n {
            phased[(i, j)] *= phase;
        }
    }
    let mut matrix = Array2::zeros((n, n));
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += phased[(r, k)] * v[(c, k)].conj();
            }
            matrix[(r, c)] = acc;
        }
    }
    let op = TruncOp {
        matrix,
        model: model.clone(),
    };

    let mut diag = Diagnostics::new();
    let qs = model.qs();
    let edge = |i: usize| 10 * qs[i].unsigned_abs() >= 9 * model.q_max.unsigned_abs();
    let mut leak = 0.0f64;
    for &j in &model.interior() {
        let mut col = 0.0;
        for r in 0..n {
            if edge(r) {
                col += op.matrix[(r, j)].norm_sqr();
            }
        }
        leak = leak.max(col);
    }
    if leak > 1e-10 {
        diag.truncation("interior-to-edge transport in the group action", leak);
    }
    Ok((op, diag))
}

/// The involution representing the nonidentity component reflection:
/// e_q maps to s e_{-q}, with s = -eps on the principal series (so the
/// eps = +1 model sends e_0 to -e_0) and s = +1 on discrete modules,
/// whose weight set the reflection preserves.
pub fn pi_weyl_and_flip(model: &ReprModel) -> TruncOp {
    let s = match model.kind {
        ReprKind::Principal { eps, .. } => -f64::from(eps),
        ReprKind::Discrete { .. } => 1.0,
    };
    let qs = model.qs();
    let n = qs.len();
    let mut matrix = Array2::zeros((n, n));
    for (i, &q) in qs.iter().enumerate() {
        let j = model.index_of(-q).expect("weight set is symmetric");
        matrix[(j, i)] = Complex64::new(s, 0.0);
    }
    TruncOp {
        matrix,
        model: model.clone(),
    }
}

/// A model is good for this hbar when its infinitesimal character is
/// negative and the rescaled spectral parameter sqrt(-hbar^2 lambda)
/// lies in [1/C, C].
pub fn classify_good(model: &ReprModel, hbar: f64, c: f64) -> Result<bool> {
    if !(c >= 10.0) {
        return Err(CoreError::InvalidParameter(format!(
            "classification constant {c} below 10"
        )));
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(CoreError::InvalidParameter(format!("bad hbar {hbar}")));
    }
    if model.lambda_pi >= 0.0 {
        return Ok(false);
    }
    let s = (-hbar * hbar * model.lambda_pi).sqrt();
    Ok((1.0 / c..=c).contains(&s))
}
