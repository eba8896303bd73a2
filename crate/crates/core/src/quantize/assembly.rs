//! Operator assembly in Cartan coordinates.
//!
//! Every identity-component element factors as
//! g = k(theta1) a(u) k(theta2) with u >= 0, and the Haar measure our
//! chart normalization induces is (sinh u / 2 pi) dtheta1 du dtheta2:
//! wedging the Maurer-Cartan frame gives |Ad(a(-u))Z ^ e1 ^ Z| =
//! sinh(u)/2 in chart coordinates, and the chart carries the constant
//! 1/pi. In the sheared coordinates s = theta1 + theta2,
//! psi = (theta1 - theta2)/2, with u allowed both signs, a strip
//! |s| <= s_max < pi covers each element exactly twice through
//! (s, u, psi) ~ (s, -u, psi + pi), so on the strip
//!
//!   dg = |sinh u| / (4 pi) ds du dpsi.
//!
//! Densities supported near the identity fit inside such an island.
//!
//! The payoff is that pi(g) splits into cheap factors:
//! pi(k(theta)) = diag(e^{i theta q}) and pi(a(u)) = V e^{i u D/2} V^T
//! from one real tridiagonal eigendecomposition of the ladder sum, so
//! the operator integral reduces to an angular FFT, a half-angle phase
//! sum over s, and one banded contraction per u node:
//!
//!   [pi(g)]_{mn} = e^{i s (m+n)/2} e^{i psi (m-n)} R_{mn}(u).

use super::{opp_tilde, CutoffChi, GroupDensity, Symbol};
use crate::error::{CoreError, Result};
use crate::lie::{exp_g, principal_log, HaarNormalization, LieVec};
use crate::linalg::eigh_tridiagonal;
use crate::num::{NeumaierSumC, UniformGrid1};
use crate::repr::{pi_exp, xyw_ops, ReprModel, TruncOp};
use crate::report::Diagnostics;
use crate::GroupElt;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// Headroom applied to every frequency budget before turning it into a
/// node count; keeps the quadrature in the superalgebraic regime
/// instead of sitting exactly at the Nyquist edge.
const RATE_SAFETY: f64 = 1.35;
/// Absolute frequency slack added on top of the scaled budget.
const RATE_SLACK: f64 = 25.0;
/// u nodes handled per parallel work item; fixed so that summation
/// order, and therefore every bit of the result, is independent of the
/// number of worker threads.
const CHUNK_U: usize = 8;

/// Cartan coordinates (s, u, psi) with u >= 0 of an identity-component
/// element: g = k(s/2 + psi) a(u) k(s/2 - psi), s = 2 arg z1 with
/// z1 = (tr g)/2 + i (g12 - g21)/2 = cosh(u/2) e^{i s/2} and
/// z2 = (g11 - g22)/2 - i (g12 + g21)/2 = sinh(u/2) e^{i psi}.
pub fn kak_coords(g: &GroupElt) -> Result<(f64, f64, f64)> {
    if g.det_sign() < 0 {
        return Err(CoreError::OutOfRegion(
            "cartan coordinates need the identity component".into(),
        ));
    }
    let m = g.matrix();
    let z1 = Complex64::new(0.5 * (m[0][0] + m[1][1]), 0.5 * (m[0][1] - m[1][0]));
    let z2 = Complex64::new(0.5 * (m[0][0] - m[1][1]), -0.5 * (m[0][1] + m[1][0]));
    let u = 2.0 * z2.norm().asinh();
    let s = 2.0 * z1.arg();
    let psi = if z2.norm() == 0.0 { 0.0 } else { z2.arg() };
    Ok((s, u, psi))
}

/// Numerical parameters of the Cartan-coordinate island.
#[derive(Debug, Clone)]
pub struct KakParams {
    pub s_max: f64,
    pub u_max: f64,
    pub n_s: usize,
    pub n_u: usize,
    pub n_psi: usize,
    /// Weight rows with |q| <= band enter the assembled matrix.
    pub band: i64,
    /// Relative floor below which angular modes are dropped.
    pub kappa_floor: f64,
}

impl KakParams {
    /// Island sized from the density support (euclidean chart radius)
    /// and grids sized from per-direction frequency budgets. Each grid
    /// must resolve the representation phases, whose rates are the
    /// retained band in s, the ladder spectral radius over the whole
    /// model in u (the diagonal factor mixes every eigenmode into
    /// every matrix entry), and twice the band in psi, plus the
    /// oscillation of the density itself, measured on the island as
    /// the largest sum_c |d x_c| xi_c / hbar inside the support.
    /// `xi_max` bounds |xi_c| componentwise on the symbol support and
    /// `w_extent` bounds |(xi2 - xi3)/2| there.
    pub fn auto(
        model: &ReprModel,
        hbar: f64,
        support_radius: f64,
        w_extent: f64,
        xi_max: [f64; 3],
    ) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("bad hbar {hbar}")));
        }
        if !(support_radius > 0.0 && support_radius <= 1.4) {
            return Err(CoreError::InvalidParameter(format!(
                "density support radius {support_radius} outside the usable chart"
            )));
        }
        if !(w_extent >= 0.0 && xi_max.iter().all(|v| *v >= 0.0 && v.is_finite())) {
            return Err(CoreError::InvalidParameter(
                "negative frequency extents".into(),
            ));
        }
        let (mut s_hi, mut u_hi) = (0.0f64, 0.0f64);
        let (n_phi, n_th) = (24usize, 48usize);
        for i in 0..=n_phi {
            let phi = std::f64::consts::PI * i as f64 / n_phi as f64;
            for j in 0..n_th {
                let th = TWO_PI * j as f64 / n_th as f64;
                let x = LieVec::new(
                    support_radius * phi.cos(),
                    support_radius * phi.sin() * th.cos(),
                    support_radius * phi.sin() * th.sin(),
                );
                let (s, u, _) = kak_coords(&exp_g(&x))?;
                s_hi = s_hi.max(s.abs());
                u_hi = u_hi.max(u.abs());
            }
        }
        let s_max = (1.15 * s_hi + 0.08).min(3.0);
        let u_max = 1.15 * u_hi + 0.08;
        let transverse = xi_max[1].max(xi_max[2]);
        let band_need = ((1.3 * w_extent + 3.0 * transverse) / hbar).ceil() as i64 + 16;
        let band = band_need.min(model.q_max).max(1);
        let qs = model.qs();
        let off: Vec<f64> = qs
            .windows(2)
            .map(|w| if w[1] == w[0] + 1 { model.c_q(w[0]) } else { 0.0 })
            .collect();
        let mut rho_half = 0.0f64;
        for i in 0..qs.len() {
            let left = if i > 0 { off[i - 1] } else { 0.0 };
            let right = if i < off.len() { off[i] } else { 0.0 };
            rho_half = rho_half.max(0.5 * (left + right));
        }
        let (rate_s, rate_u, rate_psi) =
            island_phase_rates(support_radius, s_max, u_max, xi_max, hbar);
        let nodes = |span: f64, budget: f64| -> usize {
            ((2.0 * span / std::f64::consts::PI) * (RATE_SAFETY * budget + RATE_SLACK)).ceil()
                as usize
        };
        let n_s = nodes(s_max, band as f64 + rate_s).max(32);
        let n_u = nodes(u_max, rho_half + rate_u).max(32);
        let psi_budget = RATE_SAFETY * (2.0 * band as f64 + rate_psi) + RATE_SLACK;
        let n_psi = ((2.0 * psi_budget).ceil() as usize)
            .next_power_of_two()
            .clamp(256, 4096);
        Ok(Self {
            s_max,
            u_max,
            n_s,
            n_u,
            n_psi,
            band,
            kappa_floor: 1e-15,
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = self.s_max > 0.0
            && self.s_max < 3.05
            && self.u_max > 0.0
            && self.u_max < 6.0
            && self.n_s >= 8
            && self.n_u >= 4
            && self.n_psi >= 32
            && self.band >= 1
            && self.kappa_floor > 0.0
            && self.kappa_floor < 1e-6;
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParameter(format!(
                "unusable island parameters {self:?}"
            )))
        }
    }
}

/// Largest phase rates of a density with the given chart support along
/// the three island directions, estimated on a coarse lattice by
/// central differences of the chart coordinates of g(s, u, psi).
/// Lattice points outside the support ball are skipped since the
/// density vanishes there and contributes no oscillation.
fn island_phase_rates(
    support_radius: f64,
    s_max: f64,
    u_max: f64,
    xi_max: [f64; 3],
    hbar: f64,
) -> (f64, f64, f64) {
    let coords = |s: f64, u: f64, psi: f64| -> Option<[f64; 3]> {
        let g = GroupElt::k_theta(0.5 * s + psi)
            .mul(&GroupElt::a_u(u))
            .mul(&GroupElt::k_theta(0.5 * s - psi));
        principal_log(&g).ok().map(|x| [x.x1, x.x2, x.x3])
    };
    let h = 1e-3;
    let mut rates = [0.0f64; 3];
    let mut seen = false;
    let (n1, n2, n3) = (13usize, 13usize, 8usize);
    for i in 0..n1 {
        let s = s_max * (2.0 * (i as f64 + 0.5) / n1 as f64 - 1.0);
        for j in 0..n2 {
            let u = u_max * (2.0 * (j as f64 + 0.5) / n2 as f64 - 1.0);
            for k in 0..n3 {
                let psi = TWO_PI * k as f64 / n3 as f64;
                let Some(x0) = coords(s, u, psi) else { continue };
                let r2: f64 = x0.iter().map(|v| v * v).sum();
                if r2.sqrt() > support_radius + 0.08 {
                    continue;
                }
                seen = true;
                let dirs = [[h, 0.0, 0.0], [0.0, h, 0.0], [0.0, 0.0, h]];
                for (d, step) in dirs.iter().enumerate() {
                    let (Some(xp), Some(xm)) = (
                        coords(s + step[0], u + step[1], psi + step[2]),
                        coords(s - step[0], u - step[1], psi - step[2]),
                    ) else {
                        continue;
                    };
                    let mut rate = 0.0;
                    for c in 0..3 {
                        rate += ((xp[c] - xm[c]) / (2.0 * h)).abs() * xi_max[c];
                    }
                    rates[d] = rates[d].max(rate / hbar);
                }
            }
        }
    }
    if !seen {
        let fallback = 1.8 * (xi_max[0] + xi_max[1] + xi_max[2]) / hbar;
        return (fallback, fallback, fallback);
    }
    (rates[0], rates[1], rates[2])
}

/// Integral of a function over the group through the island
/// quadrature, without any operator assembly. Mainly a measure check.
pub fn kak_haar_integral<F: Fn(&GroupElt) -> Complex64>(
    f: F,
    s_max: f64,
    u_max: f64,
    n: [usize; 3],
) -> Complex64 {
    let s_grid = UniformGrid1::symmetric(s_max, n[0]);
    let u_grid = UniformGrid1::symmetric(u_max, n[1]);
    let n_psi = n[2];
    let mut acc = NeumaierSumC::new();
    for u in u_grid.nodes() {
        let au = GroupElt::a_u(u);
        let w = u_grid.step * u.sinh().abs() / FOUR_PI;
        for s in s_grid.nodes() {
            for j in 0..n_psi {
                let psi = TWO_PI * j as f64 / n_psi as f64;
                let g = GroupElt::k_theta(0.5 * s + psi)
                    .mul(&au)
                    .mul(&GroupElt::k_theta(0.5 * s - psi));
                acc.add(f(&g) * (w * s_grid.step * TWO_PI / n_psi as f64));
            }
        }
    }
    // the |sinh u| weight has a kink at u = 0, where the midpoint rule
    // overshoots by (du^2/12) times the u = 0 section integral; at
    // u = 0 the element collapses to k(s), so the section is cheap
    let mut section = NeumaierSumC::new();
    for s in s_grid.nodes() {
        section.add(f(&GroupElt::k_theta(s)));
    }
    acc.total() - section.total() * (u_grid.step * u_grid.step / 24.0 * s_grid.step)
}

/// Density conjugated by the circle: g |-> dens(k(-theta) g k(theta)).
/// Assembling it is the same as conjugating the assembled operator by
/// the diagonal phases e^{i q theta}.
pub fn rotate_density(dens: &GroupDensity, theta: f64) -> GroupDensity {
    let inner = dens.clone();
    let kl = GroupElt::k_theta(-theta);
    let kr = GroupElt::k_theta(theta);
    let r = dens.support_radius;
    GroupDensity::new(move |g| inner.eval(&kl.mul(g).mul(&kr)), r)
}

struct Spectral {
    dim: usize,
    eigenvalues: Vec<f64>,
    /// Row-major: vectors[m*dim + k] = component m of eigenvector k.
    vectors: Vec<f64>,
}

fn model_spectral(model: &ReprModel, qs: &[i64]) -> Result<Spectral> {
    let dim = qs.len();
    let diag = vec![0.0; dim];
    let mut off = Vec::with_capacity(dim - 1);
    for i in 0..dim - 1 {
        off.push(if qs[i + 1] == qs[i] + 1 {
            model.c_q(qs[i])
        } else {
            0.0
        });
    }
    let (w, z) = eigh_tridiagonal(&diag, &off)?;
    Ok(Spectral {
        dim,
        eigenvalues: w,
        vectors: z.into_raw_vec_and_offset().0,
    })
}

fn window(qs: &[i64], band: i64) -> (Vec<usize>, Vec<usize>) {
    let win: Vec<usize> = (0..qs.len()).filter(|&i| qs[i].abs() <= band).collect();
    let mut winpos = vec![usize::MAX; qs.len()];
    for (w_idx, &i) in win.iter().enumerate() {
        winpos[i] = w_idx;
    }
    (win, winpos)
}

#[inline]
fn mode_slot(kappa: i64, n_psi: usize) -> usize {
    if kappa >= 0 {
        kappa as usize
    } else {
        (n_psi as i64 + kappa) as usize
    }
}

struct PilotOut {
    kappa_max: usize,
    kappa_tail: f64,
    nyq_tail: f64,
    peak: f64,
}

/// Sample a fixed lattice of (s, u) rows, transform over psi, and pick
/// the angular band that carries everything above the retention floor.
fn pilot_scan(
    dens: &GroupDensity,
    s_grid: &UniformGrid1,
    u_grid: &UniformGrid1,
    n_psi: usize,
    fft: &Arc<dyn Fft<f64>>,
    floor: f64,
) -> PilotOut {
    let fracs = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut mode_max = vec![0.0f64; n_psi];
    let mut peak2 = 0.0f64;
    let mut fbuf = vec![Complex64::default(); n_psi];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for &fs in &fracs {
        let si = ((s_grid.n - 1) as f64 * fs).round() as usize;
        let s = s_grid.node(si);
        for &fu in &fracs {
            let ui = ((u_grid.n - 1) as f64 * fu).round() as usize;
            let au = GroupElt::a_u(u_grid.node(ui));
            for (j, slot) in fbuf.iter_mut().enumerate() {
                let psi = TWO_PI * j as f64 / n_psi as f64;
                let g = GroupElt::k_theta(0.5 * s + psi)
                    .mul(&au)
                    .mul(&GroupElt::k_theta(0.5 * s - psi));
                *slot = dens.eval(&g);
                peak2 = peak2.max(slot.norm_sqr());
            }
            fft.process_with_scratch(&mut fbuf, &mut scratch);
            for (slot, m) in fbuf.iter().zip(mode_max.iter_mut()) {
                *m = m.max(slot.norm_sqr());
            }
        }
    }
    let half = n_psi / 2;
    let abs_max: Vec<f64> = (0..=half)
        .map(|k| {
            let mut v = mode_max[k];
            if k > 0 && k < half {
                v = v.max(mode_max[n_psi - k]);
            }
            v
        })
        .collect();
    let m0 = abs_max.iter().cloned().fold(0.0, f64::max);
    if m0 == 0.0 || peak2 == 0.0 {
        return PilotOut {
            kappa_max: 0,
            kappa_tail: 0.0,
            nyq_tail: 0.0,
            peak: 0.0,
        };
    }
    let thresh = floor * floor * m0;
    let mut ksel = 0usize;
    for (k, &v) in abs_max.iter().enumerate().take(half) {
        if v >= thresh {
            ksel = k;
        }
    }
    let kappa_max = (ksel + 12).min(half - 1);
    let tail2 = (kappa_max + 1..=half).map(|k| abs_max[k]).fold(0.0, f64::max);
    let nyq2 = (half.saturating_sub(4)..=half)
        .map(|k| abs_max[k])
        .fold(0.0, f64::max);
    PilotOut {
        kappa_max,
        kappa_tail: (tail2 / m0).sqrt(),
        nyq_tail: (nyq2 / m0).sqrt(),
        peak: peak2.sqrt(),
    }
}

struct ChunkOut {
    acc: Vec<Complex64>,
    trace: Complex64,
    ring2: f64,
    peak2: f64,
}

struct EngineCtx<'a> {
    dens: &'a GroupDensity,
    model: &'a ReprModel,
    spec: &'a Spectral,
    qs: &'a [i64],
    win: &'a [usize],
    winpos: &'a [usize],
    vsq: &'a [f64],
    es: &'a [Complex64],
    wu: &'a [f64],
    s_grid: UniformGrid1,
    u_grid: UniformGrid1,
    n_psi: usize,
    fft: Arc<dyn Fft<f64>>,
    p_lo: i64,
    p_count: usize,
    kappa_max: usize,
    trace_only: bool,
}

impl EngineCtx<'_> {
    fn chunk(&self, range: std::ops::Range<usize>) -> ChunkOut {
        let dim = self.spec.dim;
        let n_s = self.s_grid.n;
        let n_u = self.u_grid.n;
        let n_k = 2 * self.kappa_max + 1;
        let n_w = self.win.len();
        let kc = self.kappa_max as i64;
        let mut acc = vec![Complex64::default(); if self.trace_only { 0 } else { n_w * n_k }];
        let mut trace = Complex64::default();
        let mut ring2 = 0.0f64;
        let mut peak2 = 0.0f64;
        let mut fbuf = vec![Complex64::default(); self.n_psi];
        let mut scratch = vec![Complex64::default(); self.fft.get_inplace_scratch_len()];
        let mut h_t = vec![Complex64::default(); n_k * n_s];
        let mut ecos = vec![0.0f64; dim];
        let mut esin = vec![0.0f64; dim];
        let mut q_buf = vec![Complex64::default(); if self.trace_only { 0 } else { self.p_count * n_k }];
        let mut q_diag = vec![Complex64::default(); if self.trace_only { n_w } else { 0 }];
        let (mut wre, mut wim) = if self.trace_only {
            (Vec::new(), Vec::new())
        } else {
            (vec![0.0f64; n_w * dim], vec![0.0f64; n_w * dim])
        };
        let psi_w = TWO_PI / self.n_psi as f64;

        for ui in range {
            let u = self.u_grid.node(ui);
            let au = GroupElt::a_u(u);
            let u_edge = ui < 2 || ui + 2 >= n_u;
            for si in 0..n_s {
                let s = self.s_grid.node(si);
                let edge = u_edge || si < 2 || si + 2 >= n_s;
                for (j, slot) in fbuf.iter_mut().enumerate() {
                    let psi = TWO_PI * j as f64 / self.n_psi as f64;
                    let g = GroupElt::k_theta(0.5 * s + psi)
                        .mul(&au)
                        .mul(&GroupElt::k_theta(0.5 * s - psi));
                    let v = self.dens.eval(&g);
                    *slot = v;
                    let a2 = v.norm_sqr();
                    peak2 = peak2.max(a2);
                    if edge {
                        ring2 = ring2.max(a2);
                    }
                }
                self.fft.process_with_scratch(&mut fbuf, &mut scratch);
                for kslot in 0..n_k {
                    let kappa = kslot as i64 - kc;
                    h_t[kslot * n_s + si] = fbuf[mode_slot(kappa, self.n_psi)] * psi_w;
                }
            }

            // eigenphases of pi(a(u))
            for k in 0..dim {
                let (sn, cs) = (0.5 * u * self.spec.eigenvalues[k]).sin_cos();
                ecos[k] = cs;
                esin[k] = sn;
            }
            let wfac = self.wu[ui];

            if self.trace_only {
                for (w_idx, &mi) in self.win.iter().enumerate() {
                    let p_idx = (2 * self.qs[mi] - self.p_lo) as usize;
                    let eb = &self.es[p_idx * n_s..(p_idx + 1) * n_s];
                    let hb = &h_t[self.kappa_max * n_s..(self.kappa_max + 1) * n_s];
                    let mut qsum = Complex64::default();
                    for (e, h) in eb.iter().zip(hb) {
                        qsum += e * h;
                    }
                    q_diag[w_idx] = qsum;
                }
                for w_idx in 0..n_w {
                    let row = &self.vsq[w_idx * dim..(w_idx + 1) * dim];
                    let mut rre = 0.0;
                    let mut rim = 0.0;
                    for k in 0..dim {
                        rre += row[k] * ecos[k];
                        rim += row[k] * esin[k];
                    }
                    trace += Complex64::new(rre, rim) * q_diag[w_idx] * wfac;
                }
                continue;
            }

            for p_idx in 0..self.p_count {
                let p = self.p_lo + p_idx as i64;
                let eb = &self.es[p_idx * n_s..(p_idx + 1) * n_s];
                for kslot in 0..n_k {
                    let kappa = kslot as i64 - kc;
                    if (p - kappa).rem_euclid(2) != 0 {
                        continue;
                    }
                    let hb = &h_t[kslot * n_s..(kslot + 1) * n_s];
                    let mut sum = Complex64::default();
                    for (e, h) in eb.iter().zip(hb) {
                        sum += e * h;
                    }
                    q_buf[p_idx * n_k + kslot] = sum;
                }
            }

            for (w_idx, &mi) in self.win.iter().enumerate() {
                let vrow = &self.spec.vectors[mi * dim..(mi + 1) * dim];
                let wr = &mut wre[w_idx * dim..(w_idx + 1) * dim];
                let wi = &mut wim[w_idx * dim..(w_idx + 1) * dim];
                for k in 0..dim {
                    wr[k] = vrow[k] * ecos[k];
                    wi[k] = vrow[k] * esin[k];
                }
            }

            for (w_idx, &mi) in self.win.iter().enumerate() {
                let qm = self.qs[mi];
                let wr = &wre[w_idx * dim..(w_idx + 1) * dim];
                let wi = &wim[w_idx * dim..(w_idx + 1) * dim];
                for kslot in 0..n_k {
                    let kappa = kslot as i64 - kc;
                    let qn = qm - kappa;
                    let Some(nidx) = self.model.index_of(qn) else {
                        continue;
                    };
                    if self.winpos[nidx] == usize::MAX {
                        continue;
                    }
                    let p_idx = (qm + qn - self.p_lo) as usize;
                    let qv = q_buf[p_idx * n_k + kslot];
                    if qv.re == 0.0 && qv.im == 0.0 {
                        continue;
                    }
                    let vrow = &self.spec.vectors[nidx * dim..(nidx + 1) * dim];
                    let mut rre = 0.0;
                    let mut rim = 0.0;
                    for k in 0..dim {
                        let vv = vrow[k];
                        rre += wr[k] * vv;
                        rim += wi[k] * vv;
                    }
                    acc[w_idx * n_k + kslot] += Complex64::new(rre, rim) * qv * wfac;
                }
            }
        }
        ChunkOut {
            acc,
            trace,
            ring2,
            peak2,
        }
    }
}

struct EngineOut {
    acc: Option<Vec<Complex64>>,
    trace: Complex64,
    kappa_max: usize,
    kappa_tail: f64,
    nyq_tail: f64,
    ring_rel: f64,
}

fn engine(
    dens: &GroupDensity,
    model: &ReprModel,
    params: &KakParams,
    trace_only: bool,
) -> Result<EngineOut> {
    params.validate()?;
    let qs = model.qs();
    let s_grid = UniformGrid1::symmetric(params.s_max, params.n_s);
    let u_grid = UniformGrid1::symmetric(params.u_max, params.n_u);

    // widen the angular grid until its top modes are empty
    let mut planner = FftPlanner::<f64>::new();
    let mut n_psi = params.n_psi;
    let (fft, pilot) = loop {
        let fft = planner.plan_fft_inverse(n_psi);
        let pilot = pilot_scan(dens, &s_grid, &u_grid, n_psi, &fft, params.kappa_floor);
        if pilot.peak == 0.0 || pilot.nyq_tail <= 1e-10 || n_psi >= 4096 {
            break (fft, pilot);
        }
        n_psi *= 2;
    };
    if pilot.peak == 0.0 {
        return Ok(EngineOut {
            acc: None,
            trace: Complex64::default(),
            kappa_max: 0,
            kappa_tail: 0.0,
            nyq_tail: 0.0,
            ring_rel: 0.0,
        });
    }

    let spec = model_spectral(model, &qs)?;
    let (win, winpos) = window(&qs, params.band);
    if win.is_empty() {
        return Err(CoreError::InvalidParameter(
            "weight band retains no rows".into(),
        ));
    }
    let n_w = win.len();
    let dim = spec.dim;

    let p_lo = 2 * qs[win[0]];
    let p_hi = 2 * qs[win[n_w - 1]];
    let p_count = (p_hi - p_lo + 1) as usize;
    let mut es = Vec::with_capacity(p_count * params.n_s);
    for p_idx in 0..p_count {
        let p = (p_lo + p_idx as i64) as f64;
        for s in s_grid.nodes() {
            es.push(Complex64::from_polar(s_grid.step, 0.5 * s * p));
        }
    }
    let wu: Vec<f64> = u_grid
        .nodes()
        .map(|u| u_grid.step * u.sinh().abs() / FOUR_PI)
        .collect();
    let mut vsq = vec![0.0f64; n_w * dim];
    for (w_idx, &mi) in win.iter().enumerate() {
        for k in 0..dim {
            vsq[w_idx * dim + k] = spec.vectors[mi * dim + k] * spec.vectors[mi * dim + k];
        }
    }

    let ctx = EngineCtx {
        dens,
        model,
        spec: &spec,
        qs: &qs,
        win: &win,
        winpos: &winpos,
        vsq: &vsq,
        es: &es,
        wu: &wu,
        s_grid,
        u_grid,
        n_psi,
        fft,
        p_lo,
        p_count,
        kappa_max: pilot.kappa_max,
        trace_only,
    };
    let ranges: Vec<std::ops::Range<usize>> = (0..params.n_u)
        .step_by(CHUNK_U)
        .map(|a| a..(a + CHUNK_U).min(params.n_u))
        .collect();
    let outs: Vec<ChunkOut> = ranges.par_iter().map(|r| ctx.chunk(r.clone())).collect();

    let n_k = 2 * pilot.kappa_max + 1;
    let mut acc = vec![Complex64::default(); if trace_only { 0 } else { n_w * n_k }];
    let mut trace = Complex64::default();
    let mut ring2 = 0.0f64;
    let mut peak2 = 0.0f64;
    for out in outs {
        for (a, b) in acc.iter_mut().zip(&out.acc) {
            *a += b;
        }
        trace += out.trace;
        ring2 = ring2.max(out.ring2);
        peak2 = peak2.max(out.peak2);
    }

    // the |sinh u| weight has a kink at u = 0 where the midpoint rule
    // overshoots by (du^2/12) times the u = 0 section; pi(a(0)) = 1
    // makes that section diagonal, with the k(s) circle as integrand
    let section: Vec<Complex64> = s_grid
        .nodes()
        .map(|s| dens.eval(&GroupElt::k_theta(s)))
        .collect();
    let bias = u_grid.step * u_grid.step / 24.0 * s_grid.step;
    for (w_idx, &mi) in win.iter().enumerate() {
        let q = qs[mi] as f64;
        let mut corr = Complex64::default();
        for (si, s) in s_grid.nodes().enumerate() {
            corr += section[si] * Complex64::from_polar(1.0, s * q);
        }
        corr *= bias;
        trace -= corr;
        if !trace_only {
            acc[w_idx * n_k + pilot.kappa_max] -= corr;
        }
    }

    Ok(EngineOut {
        acc: if trace_only { None } else { Some(acc) },
        trace,
        kappa_max: pilot.kappa_max,
        kappa_tail: pilot.kappa_tail,
        nyq_tail: pilot.nyq_tail,
        ring_rel: if peak2 > 0.0 {
            (ring2 / peak2).sqrt()
        } else {
            0.0
        },
    })
}

fn engine_diag(out: &EngineOut) -> Diagnostics {
    let mut d = Diagnostics::new();
    if out.ring_rel > 1e-9 {
        d.truncation("cartan island boundary", out.ring_rel);
    }
    if out.kappa_tail > 1e-9 {
        d.error_bound("angular mode tail", out.kappa_tail);
    }
    if out.nyq_tail > 1e-9 {
        d.error_bound("angular nyquist content", out.nyq_tail);
    }
    d
}

/// An assembled operator with the error indicators of its quadrature.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub op: TruncOp,
    pub trace: Complex64,
    /// Largest angular mode retained.
    pub kappa_max: usize,
    /// Relative size of the dropped angular modes.
    pub kappa_tail: f64,
    /// Largest relative density value on the island boundary ring.
    pub boundary_ring: f64,
    pub diag: Diagnostics,
}

/// Assemble the operator integral of a density against the
/// representation: integral dens(g) pi(g) dg over the island.
pub fn opp_density(
    dens: &GroupDensity,
    model: &ReprModel,
    params: &KakParams,
) -> Result<Assembled> {
    let out = engine(dens, model, params, false)?;
    let qs = model.qs();
    let (win, winpos) = window(&qs, params.band);
    let dim = model.dim();
    let mut matrix = Array2::<Complex64>::default((dim, dim));
    if let Some(acc) = &out.acc {
        let n_k = 2 * out.kappa_max + 1;
        let kc = out.kappa_max as i64;
        for (w_idx, &mi) in win.iter().enumerate() {
            for kslot in 0..n_k {
                let qn = qs[mi] - (kslot as i64 - kc);
                if let Some(nidx) = model.index_of(qn) {
                    if winpos[nidx] != usize::MAX {
                        matrix[(mi, nidx)] = acc[w_idx * n_k + kslot];
                    }
                }
            }
        }
    }
    let trace = (0..dim).map(|i| matrix[(i, i)]).sum();
    let diag = engine_diag(&out);
    Ok(Assembled {
        op: TruncOp {
            matrix,
            model: model.clone(),
        },
        trace,
        kappa_max: out.kappa_max,
        kappa_tail: out.kappa_tail,
        boundary_ring: out.ring_rel,
        diag,
    })
}

/// Trace of the assembled operator without building the matrix: only
/// the zero angular mode and the diagonal phase sums are needed.
pub fn kak_trace(
    dens: &GroupDensity,
    model: &ReprModel,
    params: &KakParams,
) -> Result<(Complex64, Diagnostics)> {
    let out = engine(dens, model, params, true)?;
    Ok((out.trace, engine_diag(&out)))
}

fn symbol_w_extent(a: &Symbol) -> f64 {
    let b = &a.support_box;
    let hi = 0.5 * (b.hi[1] - b.lo[2]);
    let lo = 0.5 * (b.lo[1] - b.hi[2]);
    hi.abs().max(lo.abs())
}

fn symbol_xi_max(a: &Symbol) -> [f64; 3] {
    let b = &a.support_box;
    [0, 1, 2].map(|c| b.lo[c].abs().max(b.hi[c].abs()))
}

/// Quantize a symbol: assemble integral Opp~(a)(g) pi(g) dg with
/// automatically sized island parameters.
pub fn opp(a: &Symbol, model: &ReprModel, hbar: f64, chi: &CutoffChi) -> Result<Assembled> {
    let dens = opp_tilde(a, hbar, chi)?;
    let params = KakParams::auto(
        model,
        hbar,
        dens.support_radius,
        symbol_w_extent(a),
        symbol_xi_max(a),
    )?;
    opp_density(&dens, model, &params)
}

/// Quantize with explicit island parameters.
pub fn opp_with(
    a: &Symbol,
    model: &ReprModel,
    hbar: f64,
    chi: &CutoffChi,
    params: &KakParams,
) -> Result<Assembled> {
    let dens = opp_tilde(a, hbar, chi)?;
    opp_density(&dens, model, params)
}

/// Slow reference quantization: midpoint rule on the chart box with a
/// dense matrix exponential at every node. Cubic cost per node; only
/// for cross-checking the island engine at coarse sizes.
pub fn opp_direct(
    a: &Symbol,
    model: &ReprModel,
    hbar: f64,
    chi: &CutoffChi,
    n: usize,
) -> Result<(TruncOp, Diagnostics)> {
    let grid = super::fourier::chart_grid(chi, [n, n, n]);
    let vals = super::fourier::inv_fourier_on_grid(a, hbar, &grid);
    let mut diag = Diagnostics::new();
    let headroom = super::fourier::aliasing_headroom(a, hbar, &grid);
    if headroom < 1.5 {
        diag.aliasing("chart grid", headroom);
    }
    let weight = grid.cell() * HaarNormalization::default().dx_constant;
    let dim = model.dim();
    let mut matrix = Array2::<Complex64>::default((dim, dim));
    for (flat, node) in grid.node_iter().enumerate() {
        let x = LieVec::new(node[0], node[1], node[2]);
        let c = chi.eval(&x);
        if c == 0.0 {
            continue;
        }
        let (op, _) = pi_exp(model, &x)?;
        let coef = vals[flat] * (c * weight);
        matrix.zip_mut_with(&op.matrix, |m, &p| *m += coef * p);
    }
    Ok((
        TruncOp {
            matrix,
            model: model.clone(),
        },
        diag,
    ))
}

/// Low-degree polynomial observables with exact quantizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyOp {
    /// The constant 1.
    One,
    /// w(xi) = (xi2 - xi3)/2.
    W,
    /// w(xi)^2.
    W2,
    /// x(xi) = xi1 + i (xi2 + xi3)/2.
    X,
    /// x(xi)^2.
    X2,
    /// x(xi) w(xi), quantizing to the symmetrized product.
    XWSym,
}

/// The exact operator each polynomial quantizes to: hbar-weighted
/// ladder matrices, with mixed products symmetrized.
pub fn opp_polynomial(op: PolyOp, model: &ReprModel, hbar: f64) -> TruncOp {
    let [mx, _my, mw] = xyw_ops(model);
    let dim = model.dim();
    let h = Complex64::new(hbar, 0.0);
    let h2 = h * h;
    let matrix = match op {
        PolyOp::One => Array2::from_shape_fn((dim, dim), |(i, j)| {
            Complex64::new(f64::from(u8::from(i == j)), 0.0)
        }),
        PolyOp::W => mw.matrix.mapv(|v| v * h),
        PolyOp::W2 => mw.matrix.dot(&mw.matrix).mapv(|v| v * h2),
        PolyOp::X => mx.matrix.mapv(|v| v * h),
        PolyOp::X2 => mx.matrix.dot(&mx.matrix).mapv(|v| v * h2),
        PolyOp::XWSym => {
            let a = mx.matrix.dot(&mw.matrix);
            let b = mw.matrix.dot(&mx.matrix);
            (a + b).mapv(|v| v * (0.5 * h2))
        }
    };
    TruncOp {
        matrix,
        model: model.clone(),
    }
}

/// The polynomial times a flat window: a sum of separable moment
/// factors, identically equal to the polynomial on the cube
/// |xi_j| <= window_half.
pub fn poly_window_symbol(op: PolyOp, window_half: f64) -> Result<Symbol> {
    use super::{Factor1D, SeparableTerm, Shape};
    let f0 = Factor1D::new(0.0, window_half, Shape::Plateau);
    let fac = |m: [u8; 3]| {
        [
            f0.with_moment(m[0]),
            f0.with_moment(m[1]),
            f0.with_moment(m[2]),
        ]
    };
    let t = |re: f64, im: f64, m: [u8; 3]| SeparableTerm {
        coeff: Complex64::new(re, im),
        factors: fac(m),
    };
    let terms = match op {
        PolyOp::One => vec![t(1.0, 0.0, [0, 0, 0])],
        PolyOp::W => vec![t(0.5, 0.0, [0, 1, 0]), t(-0.5, 0.0, [0, 0, 1])],
        PolyOp::W2 => vec![
            t(0.25, 0.0, [0, 2, 0]),
            t(-0.5, 0.0, [0, 1, 1]),
            t(0.25, 0.0, [0, 0, 2]),
        ],
        PolyOp::X => vec![
            t(1.0, 0.0, [1, 0, 0]),
            t(0.0, 0.5, [0, 1, 0]),
            t(0.0, 0.5, [0, 0, 1]),
        ],
        PolyOp::X2 => vec![
            t(1.0, 0.0, [2, 0, 0]),
            t(0.0, 1.0, [1, 1, 0]),
            t(0.0, 1.0, [1, 0, 1]),
            t(-0.25, 0.0, [0, 2, 0]),
            t(-0.5, 0.0, [0, 1, 1]),
            t(-0.25, 0.0, [0, 0, 2]),
        ],
        PolyOp::XWSym => vec![
            t(0.5, 0.0, [1, 1, 0]),
            t(-0.5, 0.0, [1, 0, 1]),
            t(0.0, 0.25, [0, 2, 0]),
            t(0.0, -0.25, [0, 0, 2]),
        ],
    };
    Symbol::from_terms(terms, 0.0)
}
