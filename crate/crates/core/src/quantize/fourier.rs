//! Rescaled inverse Fourier transforms of symbols.
//!
//! With the normalizations d`xi` = (1/8 pi^2) d`xi`^3 and
//! dx = (1/pi) dx^3 the pairing e^{i x . xi} gives an exact inversion
//! pair. The chart-side transform of a symbol uses the minus phase,
//!
//! `a_hbar_v(x) = hbar^-3 * (1/8 pi^2) * integral a(xi) e^{-i x.xi/hbar} dxi^3`,
//!
//! so that linear symbols quantize to +hbar times the corresponding
//! ladder matrices; the symbol is recovered with the plus phase,
//! `a(xi) = (1/pi) * integral a_hbar_v(x) e^{+i x.xi/hbar} dx^3`.
//!
//! Separable symbols use per-axis closed-form factor transforms; other
//! symbols fall back to a factored discrete sum over a quadrature grid
//! on the support box.

use super::{CutoffChi, Shape, Symbol};
use crate::lie::{HaarNormalization, LieVec};
use crate::num::{bump, bump_hat, cutoff_profile, midpoint_nodes, Grid3, NeumaierSumC, UniformGrid1};
use num_complex::Complex64;
use std::sync::OnceLock;

/// Soft extra bandwidth (in x-frequency units) contributed by the
/// chart cutoff and the jacobian factor at roughly the 1e-3 level;
/// grids whose Nyquist rate clears the symbol band plus this margin
/// keep aliasing below the tolerances used in the tests.
pub const CHI_BANDWIDTH: f64 = 25.0;

/// Midpoint-node count per axis for the generic transform fallback.
const GENERIC_NODES: usize = 72;

const MOMENT_TABLE_STEP: f64 = 0.02;
const MOMENT_TABLE_MAX: f64 = 150.0;
const MOMENT_TABLE_QUAD: usize = 1024;

/// Cached moment transform table: values of
/// `integral v^j s(v) cos(sigma v) dv` (even j) or
/// `integral v^j s(v) sin(sigma v) dv` (odd j) over the full support.
fn build_moment_table(shape: Shape, j: u8) -> (UniformGrid1, Vec<f64>) {
    let r = shape.support_radius();
    let n = (MOMENT_TABLE_MAX / MOMENT_TABLE_STEP) as usize + 4;
    let grid = UniformGrid1::new(0.0, MOMENT_TABLE_STEP, n);
    let (vs, h) = midpoint_nodes(MOMENT_TABLE_QUAD, 0.0, r);
    let weighted: Vec<f64> = vs
        .iter()
        .map(|&v| {
            let s = match shape {
                Shape::Bump => bump(v),
                Shape::Plateau => cutoff_profile(v, 1.0, 2.0),
                Shape::Gaussian => unreachable!("gaussian moments are closed-form"),
            };
            s * v.powi(i32::from(j))
        })
        .collect();
    let even = j % 2 == 0;
    let values = grid
        .nodes()
        .map(|sigma| {
            2.0 * h
                * vs.iter()
                    .zip(&weighted)
                    .map(|(&v, &wv)| {
                        wv * if even {
                            (sigma * v).cos()
                        } else {
                            (sigma * v).sin()
                        }
                    })
                    .sum::<f64>()
        })
        .collect();
    (grid, values)
}

fn moment_table(shape: Shape, j: u8) -> &'static (UniformGrid1, Vec<f64>) {
    static BUMP: [OnceLock<(UniformGrid1, Vec<f64>)>; 3] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    static PLATEAU: [OnceLock<(UniformGrid1, Vec<f64>)>; 3] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let cell = match shape {
        Shape::Bump => &BUMP[j as usize],
        Shape::Plateau => &PLATEAU[j as usize],
        Shape::Gaussian => unreachable!("gaussian moments are closed-form"),
    };
    cell.get_or_init(|| build_moment_table(shape, j))
}

/// `integral v^j s(v) e^{i sigma v} dv` for the shape `s`, `j <= 2`.
/// Real and even in sigma for even j, odd and purely imaginary for
/// odd j.
pub fn moment_hat(shape: Shape, j: u8, sigma: f64) -> Complex64 {
    debug_assert!(j <= 2);
    if let Shape::Gaussian = shape {
        let g = (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * sigma * sigma).exp();
        return match j {
            0 => Complex64::new(g, 0.0),
            1 => Complex64::new(0.0, sigma * g),
            _ => Complex64::new((1.0 - sigma * sigma) * g, 0.0),
        };
    }
    if j == 0 && shape == Shape::Bump {
        // reuse the shared cached transform of the standard bump
        return Complex64::new(bump_hat(sigma), 0.0);
    }
    let s = sigma.abs();
    if s > MOMENT_TABLE_MAX {
        return Complex64::new(0.0, 0.0);
    }
    let (grid, values) = moment_table(shape, j);
    let v = crate::num::interp::cubic_table(grid, values, s);
    if j % 2 == 0 {
        Complex64::new(v, 0.0)
    } else {
        Complex64::new(0.0, v * sigma.signum())
    }
}

/// Symmetric chart grid covering the support box of the cutoff.
pub fn chart_grid(chi: &CutoffChi, n: [usize; 3]) -> Grid3 {
    let h = chi.box_half_widths();
    Grid3::new([
        UniformGrid1::symmetric(h[0], n[0]),
        UniformGrid1::symmetric(h[1], n[1]),
        UniformGrid1::symmetric(h[2], n[2]),
    ])
}

/// Per-axis node counts for a chart grid that keeps the Nyquist rate
/// above the symbol's sharp frequency band plus the cutoff margin.
pub fn grid_sizes_for(a: &Symbol, hbar: f64, chi: &CutoffChi, floor_n: usize) -> [usize; 3] {
    let halves = chi.box_half_widths();
    let mut out = [floor_n; 3];
    for (j, half) in halves.iter().enumerate() {
        let band = band_limit(a, j, hbar) + CHI_BANDWIDTH;
        let need = (2.0 * half * band / std::f64::consts::PI).ceil() as usize + 1;
        out[j] = out[j].max(need | 1);
    }
    out
}

/// Largest |xi_j| on the support box, divided by hbar: the sharp
/// x-frequency band of the transform along axis j.
fn band_limit(a: &Symbol, axis: usize, hbar: f64) -> f64 {
    let b = &a.support_box;
    b.lo[axis].abs().max(b.hi[axis].abs()) / hbar
}

/// Ratio of the grid Nyquist rate to the sharp band, minimized over
/// axes. Below 1 the oscillations of the transform alias outright.
pub fn aliasing_headroom(a: &Symbol, hbar: f64, grid: &Grid3) -> f64 {
    (0..3)
        .map(|j| {
            let nyquist = std::f64::consts::PI / grid.axes[j].step;
            nyquist / band_limit(a, j, hbar).max(1.0)
        })
        .fold(f64::INFINITY, f64::min)
}

fn overall_constant(hbar: f64) -> f64 {
    HaarNormalization::default().dxi_constant / (hbar * hbar * hbar)
}

/// Transform at a single chart point.
pub fn inv_fourier_at(a: &Symbol, hbar: f64, x: &LieVec) -> Complex64 {
    let xs = [x.x1, x.x2, x.x3];
    if let Some(terms) = a.terms() {
        let mut total = Complex64::new(0.0, 0.0);
        for t in terms {
            let mut v = t.coeff;
            for (f, &xj) in t.factors.iter().zip(&xs) {
                v *= f.transform(-xj / hbar);
            }
            total += v;
        }
        return total * overall_constant(hbar);
    }
    // generic fallback: midpoint product rule on the support box
    let b = &a.support_box;
    let mut nodes = Vec::with_capacity(3);
    for j in 0..3 {
        // minimum node budget, then a few nodes per radian of phase
        let phase = (b.hi[j] - b.lo[j]) * xs[j].abs() / hbar;
        let n = GENERIC_NODES.max((2.0 * phase) as usize + 8);
        nodes.push(midpoint_nodes(n, b.lo[j], b.hi[j]));
    }
    let mut acc = NeumaierSumC::new();
    for &q1 in &nodes[0].0 {
        for &q2 in &nodes[1].0 {
            for &q3 in &nodes[2].0 {
                let phase = -(xs[0] * q1 + xs[1] * q2 + xs[2] * q3) / hbar;
                acc.add(a.eval(&dvec(q1, q2, q3)) * Complex64::from_polar(1.0, phase));
            }
        }
    }
    acc.total() * (overall_constant(hbar) * nodes[0].1 * nodes[1].1 * nodes[2].1)
}

#[inline]
fn dvec(a: f64, b: f64, c: f64) -> crate::DualVec {
    crate::DualVec::new(a, b, c)
}

/// Transform sampled on a whole chart grid (flat, row-major). The
/// separable path costs one factor transform per axis node and term;
/// the generic path runs a factored discrete sum, one axis at a time.
pub fn inv_fourier_on_grid(a: &Symbol, hbar: f64, grid: &Grid3) -> Vec<Complex64> {
    let n = [grid.axes[0].n, grid.axes[1].n, grid.axes[2].n];
    if let Some(terms) = a.terms() {
        let c = overall_constant(hbar);
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        for t in terms {
            let mut per_axis: [Vec<Complex64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for (j, axis) in per_axis.iter_mut().enumerate() {
                *axis = grid.axes[j]
                    .nodes()
                    .map(|xj| t.factors[j].transform(-xj / hbar))
                    .collect();
            }
            for i in 0..n[0] {
                let vi = per_axis[0][i] * (t.coeff * c);
                for j in 0..n[1] {
                    let vij = vi * per_axis[1][j];
                    let row = &per_axis[2];
                    let base = grid.idx(i, j, 0);
                    for (k, pk) in row.iter().enumerate() {
                        out[base + k] += vij * pk;
                    }
                }
            }
        }
        return out;
    }

    let b = &a.support_box;
    let (q1, h1) = midpoint_nodes(GENERIC_NODES, b.lo[0], b.hi[0]);
    let (q2, h2) = midpoint_nodes(GENERIC_NODES, b.lo[1], b.hi[1]);
    let (q3, h3) = midpoint_nodes(GENERIC_NODES, b.lo[2], b.hi[2]);
    let nq = GENERIC_NODES;
    let mut samples = Vec::with_capacity(nq * nq * nq);
    for &a1 in &q1 {
        for &a2 in &q2 {
            for &a3 in &q3 {
                samples.push(a.eval(&dvec(a1, a2, a3)));
            }
        }
    }

    let phases = |axis: &UniformGrid1, qs: &[f64]| -> Vec<Complex64> {
        let mut t = Vec::with_capacity(axis.n * nq);
        for xk in axis.nodes() {
            for &q in qs {
                t.push(Complex64::from_polar(1.0, -xk * q / hbar));
            }
        }
        t
    };
    let e1 = phases(&grid.axes[0], &q1);
    let e2 = phases(&grid.axes[1], &q2);
    let e3 = phases(&grid.axes[2], &q3);

    // collapse axis 2 (xi3), then axis 1, then axis 0
    let mut stage1 = vec![Complex64::new(0.0, 0.0); n[2] * nq * nq];
    for k in 0..n[2] {
        let ph = &e3[k * nq..(k + 1) * nq];
        for i1 in 0..nq {
            for i2 in 0..nq {
                let row = &samples[(i1 * nq + i2) * nq..(i1 * nq + i2 + 1) * nq];
                let mut s = Complex64::new(0.0, 0.0);
                for (v, p) in row.iter().zip(ph) {
                    s += v * p;
                }
                stage1[(k * nq + i1) * nq + i2] = s;
            }
        }
    }
    let mut stage2 = vec![Complex64::new(0.0, 0.0); n[1] * n[2] * nq];
    for j in 0..n[1] {
        let ph = &e2[j * nq..(j + 1) * nq];
        for k in 0..n[2] {
            for i1 in 0..nq {
                let base = (k * nq + i1) * nq;
                let mut s = Complex64::new(0.0, 0.0);
                for (i2, p) in ph.iter().enumerate() {
                    s += stage1[base + i2] * p;
                }
                stage2[(j * n[2] + k) * nq + i1] = s;
            }
        }
    }
    let scale = overall_constant(hbar) * h1 * h2 * h3;
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for i in 0..n[0] {
        let ph = &e1[i * nq..(i + 1) * nq];
        for j in 0..n[1] {
            for k in 0..n[2] {
                let base = (j * n[2] + k) * nq;
                let mut s = Complex64::new(0.0, 0.0);
                for (i1, p) in ph.iter().enumerate() {
                    s += stage2[base + i1] * p;
                }
                out[grid.idx(i, j, k)] = s * scale;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{Factor1D, Shape, Symbol};
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gaussian_triple() -> Symbol {
        Symbol::separable(
            [
                Factor1D::new(1.0, 0.3, Shape::Gaussian),
                Factor1D::new(0.1, 0.25, Shape::Gaussian),
                Factor1D::new(-0.2, 0.2, Shape::Gaussian),
            ],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_transform_matches_closed_form() {
        let a = gaussian_triple();
        let hbar = 0.125;
        let widths = [0.3, 0.25, 0.2];
        let centers = [1.0, 0.1, -0.2];
        for x in [
            LieVec::zero(),
            LieVec::new(0.2, -0.1, 0.05),
            LieVec::new(-0.45, 0.3, 0.25),
        ] {
            let got = inv_fourier_at(&a, hbar, &x);
            let xs = [x.x1, x.x2, x.x3];
            let mut want = Complex64::new(
                (2.0 * std::f64::consts::PI).powf(1.5)
                    / (8.0 * std::f64::consts::PI.powi(2))
                    / hbar.powi(3),
                0.0,
            );
            for j in 0..3 {
                let s = widths[j] * xs[j] / hbar;
                want *= widths[j] * (-0.5 * s * s).exp();
                want *= Complex64::from_polar(1.0, -centers[j] * xs[j] / hbar);
            }
            assert_abs_diff_eq!(got.re, want.re, epsilon = 1e-12 * want.norm());
            assert_abs_diff_eq!(got.im, want.im, epsilon = 1e-12 * want.norm());
        }
    }

    #[test]
    fn shifting_the_symbol_multiplies_the_transform_by_a_phase() {
        let hbar = 1.0 / 12.0;
        let base = Symbol::k_tilde_member(hbar, 0.2).unwrap();
        let mut factors = base.terms().unwrap()[0].factors;
        let shift = 0.17;
        factors[0].center += shift;
        let shifted = Symbol::separable(factors, 0.2).unwrap();
        for x in [
            LieVec::new(0.3, 0.0, 0.0),
            LieVec::new(-0.2, 0.15, -0.1),
            LieVec::new(0.05, -0.3, 0.3),
        ] {
            let v0 = inv_fourier_at(&base, hbar, &x);
            let v1 = inv_fourier_at(&shifted, hbar, &x);
            let want = v0 * Complex64::from_polar(1.0, -shift * x.x1 / hbar);
            assert_abs_diff_eq!(v1.re, want.re, epsilon = 1e-12 * v0.norm().max(1.0));
            assert_abs_diff_eq!(v1.im, want.im, epsilon = 1e-12 * v0.norm().max(1.0));
        }
    }

    #[test]
    fn generic_fallback_agrees_with_the_separable_path() {
        let hbar = 0.125;
        let sep = Symbol::k_tilde_member(hbar, 0.2).unwrap();
        let clone = sep.clone();
        let generic = Symbol::from_closure(move |xi| clone.eval(xi), sep.support_box, 0.2, true);
        let chi = CutoffChi::default();
        let grid = chart_grid(&chi, [9, 9, 9]);
        let fast = inv_fourier_on_grid(&sep, hbar, &grid);
        let slow = inv_fourier_on_grid(&generic, hbar, &grid);
        let peak = fast.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(peak > 0.0);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).norm() <= 2e-7 * peak, "{f} vs {s}");
        }
        // pointwise entry agrees too
        let x = LieVec::new(0.21, -0.14, 0.09);
        let pf = inv_fourier_at(&sep, hbar, &x);
        let pg = inv_fourier_at(&generic, hbar, &x);
        assert!((pf - pg).norm() <= 2e-7 * peak);
    }

    #[test]
    fn moment_factors_match_the_generic_path() {
        // xi2 * plateau window on every axis, with an imaginary
        // coefficient thrown in
        let term = super::super::SeparableTerm {
            coeff: Complex64::new(0.3, -0.7),
            factors: [
                Factor1D::new(0.2, 0.8, Shape::Plateau),
                Factor1D::new(0.0, 0.6, Shape::Plateau).with_moment(1),
                Factor1D::new(-0.1, 0.5, Shape::Bump).with_moment(2),
            ],
        };
        let sep = Symbol::from_terms(vec![term], 0.0).unwrap();
        let clone = sep.clone();
        let generic = Symbol::from_closure(move |xi| clone.eval(xi), sep.support_box, 0.0, false);
        let hbar = 0.25;
        // the centered odd moment kills the transform at x = 0, so
        // normalize by the largest sampled value instead
        let xs = [
            LieVec::zero(),
            LieVec::new(0.31, -0.22, 0.11),
            LieVec::new(-0.12, 0.4, 0.35),
        ];
        let slow: Vec<Complex64> = xs.iter().map(|x| inv_fourier_at(&generic, hbar, x)).collect();
        let peak = slow.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(peak > 0.0);
        for (x, pg) in xs.iter().zip(&slow) {
            let pf = inv_fourier_at(&sep, hbar, x);
            assert!((pf - pg).norm() <= 1e-6 * peak, "{pf} vs {pg}");
        }
    }

    #[test]
    fn gaussian_moment_formulas_differentiate_the_base_transform() {
        // finite-difference check of the closed-form moment transforms
        let d = 1e-5;
        for sigma in [0.0, 0.7, 2.3] {
            let m0p = moment_hat(Shape::Gaussian, 0, sigma + d).re;
            let m0m = moment_hat(Shape::Gaussian, 0, sigma - d).re;
            let m1 = moment_hat(Shape::Gaussian, 1, sigma);
            // d/dsigma m0 = i * m1, and m0 is real, so m1.im = -m0'
            assert_abs_diff_eq!(m1.im, -(m0p - m0m) / (2.0 * d), epsilon = 1e-5);
            let m2 = moment_hat(Shape::Gaussian, 2, sigma);
            let second = (m0p + m0m - 2.0 * moment_hat(Shape::Gaussian, 0, sigma).re) / (d * d);
            assert_abs_diff_eq!(m2.re, -second, epsilon = 1e-4);
        }
    }

    #[test]
    fn grid_sizing_clears_the_band() {
        let hbar = 1.0 / 64.0;
        let a = Symbol::k_tilde_member(hbar, 0.2).unwrap();
        let chi = CutoffChi::default();
        let n = grid_sizes_for(&a, hbar, &chi, 33);
        let grid = chart_grid(&chi, n);
        assert!(aliasing_headroom(&a, hbar, &grid) > 1.0);
        // the transverse axes stay at the floor; the first axis grows
        assert!(n[0] > 33 && n[1] == 33 && n[2] == 33, "{n:?}");
    }
}
