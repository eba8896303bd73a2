//! Trace identities tying assembled operators to orbit integrals.
//!
//! Two independent pipelines compute the trace of an integrated
//! operator A = integral of phi(x) pi(exp x) dx. The spectral side
//! assembles the diagonal through the island engine and sums it. The
//! orbit side never touches the model: the character of exp(x) equals
//! jac(x)^{-1/2} times the Fourier transform of the orbit measure, so
//! the trace is the orbit integral of the half-density transform
//!
//!   phi_half(xi) = integral of phi(x) jac(x)^{-1/2} e^{i<x,xi>} dx.
//!
//! Agreement of the two pipelines pins the orbit normalization
//! (d psi d d / 2 pi), the chart Haar constant, and the model's ladder
//! coefficients against each other.

use super::assembly::{kak_trace, KakParams};
use super::{opp, CutoffChi, GroupDensity, Symbol};
use crate::error::Result;
use crate::lie::{jac, principal_log, HaarNormalization, LieVec};
use crate::linalg::eigh_hermitian;
use crate::num::{NeumaierSumC, UniformGrid1};
use crate::orbits::{orbit_quadrature, OrbitResolution};
use crate::report::Diagnostics;
use crate::repr::ReprModel;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::Arc;

/// Test function on the chart, carrying the two scalars both trace
/// pipelines need for sizing: how far it reaches in x and how far its
/// transform reaches in xi.
#[derive(Clone)]
pub struct ChartTestFn {
    eval: Arc<dyn Fn(&LieVec) -> Complex64 + Send + Sync>,
    pub support_radius: f64,
    pub freq_extent: f64,
}

impl ChartTestFn {
    pub fn new(
        eval: impl Fn(&LieVec) -> Complex64 + Send + Sync + 'static,
        support_radius: f64,
        freq_extent: f64,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            support_radius,
            freq_extent,
        }
    }

    pub fn eval(&self, x: &LieVec) -> Complex64 {
        (self.eval)(x)
    }

    /// Centered gaussian exp(-|x|^2 / 2 width^2); effective support
    /// and bandwidth are six standard deviations on each side.
    pub fn gaussian(width: f64) -> Self {
        let c = 1.0 / (2.0 * width * width);
        Self::new(
            move |x: &LieVec| Complex64::new((-c * x.norm().powi(2)).exp(), 0.0),
            (6.0 * width).min(0.7),
            6.0 / width,
        )
    }

    /// x1 times the gaussian; odd under x -> -x, so both trace
    /// pipelines must vanish on it up to quadrature residue.
    pub fn odd_gaussian(width: f64) -> Self {
        let c = 1.0 / (2.0 * width * width);
        Self::new(
            move |x: &LieVec| Complex64::new(x.x1 * (-c * x.norm().powi(2)).exp(), 0.0),
            (6.0 * width).min(0.7),
            7.0 / width,
        )
    }
}

/// Both sides of the character identity for one model and test
/// function, with the quadrature warnings they accumulated.
#[derive(Debug, Clone)]
pub struct KirillovReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub diag: Diagnostics,
}

impl KirillovReport {
    /// |lhs - rhs| relative to the larger magnitude. For test
    /// functions on which both sides vanish this degrades to an
    /// absolute discrepancy.
    pub fn rel_discrepancy(&self) -> f64 {
        let scale = self.lhs.norm().max(self.rhs.norm()).max(1e-30);
        (self.lhs - self.rhs).norm() / scale
    }
}

/// Trace of integral phi(x) pi(exp x) dx computed spectrally (lhs)
/// and through the orbit character formula (rhs). `n_chart` sizes the
/// tensor grid of the half-density transform; it must resolve
/// oscillations up to the orbit's reach into the transform support.
pub fn kirillov_trace_check(
    phi: &ChartTestFn,
    model: &ReprModel,
    resolution: OrbitResolution,
    n_chart: usize,
) -> Result<KirillovReport> {
    let norms = HaarNormalization::default();
    let radius = phi.support_radius;

    let phi_lhs = phi.clone();
    let dens = GroupDensity::new(
        move |g| match principal_log(g) {
            Ok(x) if x.norm() <= phi_lhs.support_radius => phi_lhs.eval(&x) / jac(&x),
            _ => Complex64::default(),
        },
        radius,
    );
    let fe = phi.freq_extent;
    let params = KakParams::auto(model, 1.0, radius, fe, [fe, fe, fe])?;
    let (lhs, mut diag) = kak_trace(&dens, model, &params)?;

    // Half-density transform tabulated once on the chart grid, then
    // beaten against phase tables per orbit node; the grid layout
    // keeps the innermost axis contiguous.
    let grid = UniformGrid1::symmetric(radius, n_chart);
    let n = n_chart;
    let cell = grid.step.powi(3) * norms.dx_constant;
    let mut table = vec![Complex64::default(); n * n * n];
    let axis: Vec<f64> = grid.nodes().collect();
    table
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(k, plane)| {
            for j in 0..n {
                for i in 0..n {
                    let x = LieVec::new(axis[k], axis[j], axis[i]);
                    plane[j * n + i] = phi.eval(&x) * (cell / jac(&x).sqrt());
                }
            }
        });

    let support = phi.transform_box();
    let quad = orbit_quadrature(model.lambda_pi, resolution, &support)?;
    let values: Vec<Complex64> = quad
        .nodes
        .par_iter()
        .map(|(xi, _)| {
            let ph1: Vec<Complex64> = axis
                .iter()
                .map(|&v| Complex64::from_polar(1.0, v * xi.xi1))
                .collect();
            let ph2: Vec<Complex64> = axis
                .iter()
                .map(|&v| Complex64::from_polar(1.0, v * xi.xi2))
                .collect();
            let ph3: Vec<Complex64> = axis
                .iter()
                .map(|&v| Complex64::from_polar(1.0, v * xi.xi3))
                .collect();
            let mut acc = Complex64::default();
            for k in 0..n {
                let mut acc_k = Complex64::default();
                for j in 0..n {
                    let row = &table[(k * n + j) * n..(k * n + j + 1) * n];
                    let mut acc_j = Complex64::default();
                    for (slot, p) in row.iter().zip(&ph3) {
                        acc_j += slot * p;
                    }
                    acc_k += acc_j * ph2[j];
                }
                acc += acc_k * ph1[k];
            }
            acc
        })
        .collect();
    let mut rhs = NeumaierSumC::new();
    let mut edge = 0.0f64;
    for ((xi, w), v) in quad.nodes.iter().zip(&values) {
        rhs.add(v * *w);
        if quad.support().edge_fraction(xi) > 0.9 {
            edge = edge.max((v * *w).norm());
        }
    }
    let rhs = rhs.total();
    let scale = lhs.norm().max(rhs.norm());
    if scale > 0.0 && edge > 1e-6 * scale {
        diag.truncation("orbit tail at the transform support edge", edge / scale);
    }
    Ok(KirillovReport { lhs, rhs, diag })
}

impl ChartTestFn {
    /// Box in the dual on which the half-density transform is
    /// non-negligible.
    fn transform_box(&self) -> crate::orbits::SupportBox {
        let fe = self.freq_extent;
        crate::orbits::SupportBox::centered([fe, fe, fe])
            .expect("positive frequency extent makes a valid box")
    }
}

/// Spectral trace of T = hbar opp(a)^2 next to the orbit integral of
/// a^2 over the rescaled orbit of the model.
#[derive(Debug, Clone)]
pub struct TraceEstimate {
    pub trace_t: f64,
    pub k_value: f64,
    pub residual: f64,
    pub diag: Diagnostics,
}

/// trace(hbar opp(a)^2) against k(hbar^2 lambda_pi), where
/// k(lambda) is the orbit integral of a^2 over {Lambda = lambda}.
/// Models whose rescaled parameter misses the support of a get
/// k = 0, including every model with hbar^2 lambda_pi >= 0.
pub fn trace_estimate(
    a: &Symbol,
    model: &ReprModel,
    hbar: f64,
    chi: &CutoffChi,
    resolution: OrbitResolution,
) -> Result<TraceEstimate> {
    let assembled = opp(a, model, hbar, chi)?;
    let m = &assembled.op.matrix;
    let dim = m.nrows();
    let mut tr2 = NeumaierSumC::new();
    for i in 0..dim {
        for j in 0..dim {
            tr2.add(m[(i, j)] * m[(j, i)]);
        }
    }
    let tr2 = tr2.total();
    let trace_t = hbar * tr2.re;
    let mut diag = assembled.diag.clone();
    if tr2.im.abs() > 1e-8 * tr2.re.abs().max(1e-12) {
        diag.error_bound("imaginary residue in trace(T)", tr2.im.abs());
    }

    let lambda_scaled = hbar * hbar * model.lambda_pi;
    let k_value = if lambda_scaled < -1e-12 {
        let quad = orbit_quadrature(lambda_scaled, resolution, &a.support_box)?;
        let (val, odiag) = crate::orbits::orbit_integral(&quad, |xi| a.eval(xi).norm_sqr());
        diag.extend(odiag);
        val
    } else {
        0.0
    };
    Ok(TraceEstimate {
        trace_t,
        k_value,
        residual: trace_t - k_value,
        diag,
    })
}

/// Trace norm (sum of absolute eigenvalues) of the hermitian part of
/// an assembled matrix.
pub fn trace_norm(m: &Array2<Complex64>) -> Result<f64> {
    let dim = m.nrows();
    let mut h = Array2::<Complex64>::default((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            h[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        }
    }
    let (eigs, _) = eigh_hermitian(&h)?;
    Ok(eigs.iter().map(|e| e.abs()).sum())
}
