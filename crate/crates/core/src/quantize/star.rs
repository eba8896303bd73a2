//! Star product of symbols by group convolution.
//!
//! Composing two quantized operators multiplies their chart densities
//! under group convolution. Pulling the convolution back through the
//! exponential chart makes every Jacobian factor except one cancel:
//! with phi_i = chi * (a_i)_hbar_v the partial convolution is
//!
//!   c(x) = jac(x) * Integral phi_1(y) phi_2(m(y, x)) jac^{-1}(m) dy,
//!   m(y, x) = log(exp(-y) exp(x)),
//!
//! and the product symbol is the forward chart transform of c. Both
//! factors oscillate at the carrier frequency of their symbol's
//! support (about carrier/hbar radians per unit chart length), so the
//! engine demodulates explicitly: source weights absorb their own
//! carrier, the inner factor is read from dense one-dimensional
//! complex tables demodulated at its box center, and the remaining
//! phase of each (y, x) pair is a single unit complex exponential.
//! Grid sizes come from measured phase rates of the demodulated
//! integrand, mirroring the sizing rule of the operator assembly; the
//! dominant effect is that the two carriers nearly cancel along y for
//! coinciding support boxes, which keeps the node counts far below
//! what the raw carriers would demand.
//!
//! The chart values are then transformed on a zero-padded grid with
//! the fast transform, giving the product symbol on a measured
//! frequency window. Callers that need the convolution back on the
//! group (the squared-operator density, or the quantized composition)
//! ask for the density grade, which refines the chart samples by
//! spectral embedding so that cubic interpolation between nodes stays
//! accurate despite the carrier oscillation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::fourier::inv_fourier_at;
use super::{r_k, CutoffChi, GroupDensity, Symbol};
use crate::error::{CoreError, Result};
use crate::lie::{
    exp_g, jac, log_g_within, pairing, principal_log, DualVec, GroupElt, HaarNormalization, LieVec,
};
use crate::num::interp::{cubic_table_complex, tricubic_complex};
use crate::num::{Grid3, UniformGrid1};
use crate::orbits::SupportBox;
use crate::report::Diagnostics;

/// Safety factor on measured phase rates when choosing node counts.
const RATE_SAFETY: f64 = 1.35;
/// Additive slack, in radians across the domain, covering envelope
/// variation that the phase probes do not see.
const RATE_SLACK: f64 = 25.0;
/// Minimum nodes per axis for either grid of the convolution.
const MIN_NODES: usize = 24;
/// Relative integrand size below which the output ball is truncated.
const TAIL_REL: f64 = 2e-6;
/// Residual phase per step in the demodulated factor tables.
const TABLE_PHASE_STEP: f64 = 0.05;
/// Residual phase per step in the refined chart table.
const CHART_PHASE_STEP: f64 = 0.12;
/// Relative floor defining the measured frequency support.
const SPECTRUM_FLOOR: f64 = 3e-7;
/// Hard cap on padded spectrum entries per array.
const SPECTRUM_CAP: usize = 1 << 25;

/// Tuning knobs for [`star_product`].
#[derive(Debug, Clone, Copy)]
pub struct StarOptions {
    /// Multiplier on the rate-informed node counts of both grids.
    pub refine: f64,
    /// Also build the refined chart table that [`StarProduct::chart_density`]
    /// interpolates.
    pub density_grade: bool,
    /// Weight the chart values by jac^{-1/2} before the forward
    /// transform (the half-density normalization of the squared
    /// operator's recovered symbol).
    pub half_density_weight: bool,
}

impl Default for StarOptions {
    fn default() -> Self {
        Self {
            refine: 1.0,
            density_grade: false,
            half_density_weight: false,
        }
    }
}

/// Chart samples of the convolution after spectral refinement, dense
/// enough for cubic interpolation of the demodulated values.
struct ChartTable {
    grid: Grid3,
    vals: Vec<Complex64>,
}

/// A computed star product: the symbol on its measured frequency
/// window plus enough grid data to answer sup-norm and chart queries.
pub struct StarProduct {
    /// Interpolating symbol over the measured frequency window.
    pub symbol: Symbol,
    /// Quadrature and truncation report for the build.
    pub diag: Diagnostics,
    hbar: f64,
    axes: [UniformGrid1; 3],
    values: Arc<Vec<Complex64>>,
    spectral: SupportBox,
    carrier_out: DualVec,
    chart: Option<Arc<ChartTable>>,
    chart_radius: f64,
}

impl StarProduct {
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Measured frequency support of the product symbol.
    pub fn spectral_box(&self) -> SupportBox {
        self.spectral
    }

    /// Euclidean chart radius outside which the convolution vanishes.
    pub fn chart_support_radius(&self) -> f64 {
        self.chart_radius
    }

    /// Frequency-grid steps of the stored symbol values.
    pub fn xi_step(&self) -> [f64; 3] {
        [self.axes[0].step, self.axes[1].step, self.axes[2].step]
    }

    fn windowed_nodes(&self, window: &SupportBox) -> impl Iterator<Item = (DualVec, Complex64)> + '_ {
        let window = *window;
        let grid = Grid3::new(self.axes);
        let values = self.values.clone();
        (0..grid.len()).filter_map(move |flat| {
            let (i, j, k) = grid.unflatten(flat);
            let p = grid.node(i, j, k);
            let xi = DualVec::new(p[0], p[1], p[2]);
            window.contains(&xi).then(|| (xi, values[flat]))
        })
    }

    /// Largest node value of |product - reference| over the window.
    pub fn grid_sup_residual(
        &self,
        window: &SupportBox,
        reference: impl Fn(&DualVec) -> Complex64,
    ) -> f64 {
        self.windowed_nodes(window)
            .map(|(xi, v)| (v - reference(&xi)).norm())
            .fold(0.0, f64::max)
    }

    /// Largest node value of |product| over the window.
    pub fn grid_sup(&self, window: &SupportBox) -> f64 {
        self.windowed_nodes(window)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// The convolution as a density on the group: `scale * recut(x) *
    /// jac^{-1}(x) * c(x)` at `g = exp x`. Requires the density grade.
    ///
    /// With `recut = None` and `scale = hbar^{3/2}` this is the
    /// squared-operator test density; with a fresh cutoff and unit
    /// scale it is the density whose quantization realizes the
    /// composed operator up to the cutoff tail.
    pub fn chart_density(&self, recut: Option<CutoffChi>, scale: f64) -> Result<GroupDensity> {
        let table = self
            .chart
            .clone()
            .ok_or_else(|| {
                CoreError::InvalidParameter(
                    "chart density requires the density grade; set StarOptions::density_grade"
                        .into(),
                )
            })?;
        let radius = match &recut {
            Some(c) => c.euclid_radius().min(self.chart_radius),
            None => self.chart_radius,
        };
        let hbar = self.hbar;
        let carrier = self.carrier_out;
        let eval = move |g: &GroupElt| -> Complex64 {
            let x = match log_g_within(g, radius + 0.05) {
                Ok(x) => x,
                Err(_) => return Complex64::new(0.0, 0.0),
            };
            let cut = match &recut {
                Some(c) => c.eval(&x),
                None => 1.0,
            };
            if cut == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let psi = tricubic_complex(&table.grid, &table.vals, [x.x1, x.x2, x.x3]);
            if psi == Complex64::new(0.0, 0.0) {
                return Complex64::new(0.0, 0.0);
            }
            let c = psi * Complex64::from_polar(1.0, -pairing(&x, &carrier) / hbar);
            c * (cut * scale / jac(&x))
        };
        Ok(GroupDensity::new(eval, radius))
    }
}

/// The squared-operator density together with the spectral data its
/// quantization needs.
pub struct StarDensity {
    /// hbar^{3/2} times the self-convolution of the cut chart density.
    pub dens: GroupDensity,
    /// Euclidean chart radius of the support.
    pub support_radius: f64,
    /// Per-axis bound on the frequency support of the product symbol.
    pub xi_max: [f64; 3],
    /// Largest |(xi2 - xi3)/2| over the frequency support.
    pub w_extent: f64,
    /// Build report.
    pub diag: Diagnostics,
}

/// Star product symbol `a (star) b` at the default grid resolution.
pub fn star(a: &Symbol, b: &Symbol, hbar: f64, chi: &CutoffChi) -> Result<Symbol> {
    Ok(star_product(a, b, hbar, chi, &StarOptions::default())?.symbol)
}

/// Star product with explicit grid and output options.
pub fn star_product(
    a: &Symbol,
    b: &Symbol,
    hbar: f64,
    chi: &CutoffChi,
    opts: &StarOptions,
) -> Result<StarProduct> {
    if !(hbar > 0.0 && hbar < 1.0) {
        return Err(CoreError::InvalidParameter(format!("bad hbar {hbar}")));
    }
    if !(opts.refine > 0.05 && opts.refine.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "grid refinement factor {} out of range",
            opts.refine
        )));
    }
    let ta = separable_terms(a)?;
    let tb = separable_terms(b)?;
    let vanishes = |ts: &[super::SeparableTerm]| ts.iter().all(|t| t.coeff.norm() == 0.0);
    if vanishes(ta) || vanishes(tb) {
        return Ok(zero_product(a, b, hbar));
    }
    let engine = Convolver::build(a, b, hbar, chi, opts)?;
    engine.run(opts)
}

/// The recovered symbol of the squared operator: the forward transform
/// of jac^{-1/2} times the self-convolution. Its values converge to
/// the pointwise square of the input symbol as hbar shrinks.
pub fn b_from_square(a: &Symbol, hbar: f64, chi: &CutoffChi, refine: f64) -> Result<StarProduct> {
    star_product(
        a,
        a,
        hbar,
        chi,
        &StarOptions {
            refine,
            density_grade: false,
            half_density_weight: true,
        },
    )
}

/// The positive test density hbar^{3/2} * D * D where D is the cut
/// chart density of `a`; its quantization equals hbar^{1/2} times the
/// square of hbar * opp(a) in every model.
pub fn build_f(a: &Symbol, hbar: f64, chi: &CutoffChi) -> Result<StarDensity> {
    if !a.in_k_tilde {
        return Err(CoreError::InvalidParameter(
            "the squared-operator density takes a calibration-class symbol".into(),
        ));
    }
    a.check_k_tilde(hbar)?;
    let p = star_product(
        a,
        a,
        hbar,
        chi,
        &StarOptions {
            refine: 1.0,
            density_grade: true,
            half_density_weight: false,
        },
    )?;
    let dens = p.chart_density(None, hbar.powf(1.5))?;
    let sb = p.spectral_box();
    let xi_max = [
        sb.lo[0].abs().max(sb.hi[0].abs()),
        sb.lo[1].abs().max(sb.hi[1].abs()),
        sb.lo[2].abs().max(sb.hi[2].abs()),
    ];
    let w_extent = (0.5 * (sb.hi[1] - sb.lo[2]))
        .abs()
        .max((0.5 * (sb.lo[1] - sb.hi[2])).abs());
    Ok(StarDensity {
        dens,
        support_radius: p.chart_support_radius(),
        xi_max,
        w_extent,
        diag: p.diag,
    })
}

/// Largest relative violation of F(Ad(w) x) = F(-x) over quasi-random
/// chart samples, where F is the self-convolution of the cut density
/// of `a` divided by jac. For a calibration-class symbol the identity
/// is exact and the returned residual is pure quadrature noise.
pub fn weyl_conjugation_residual(
    a: &Symbol,
    hbar: f64,
    chi: &CutoffChi,
    n_samples: usize,
) -> Result<f64> {
    let opts = StarOptions::default();
    let engine = Convolver::build(a, a, hbar, chi, &opts)?;
    let w = GroupElt::weyl();
    let radius = 0.8 * engine.ball_radius;
    let mut worst = 0.0_f64;
    let mut peak = 0.0_f64;
    for i in 0..n_samples {
        let x = halton_ball_point(i, radius);
        let xw = crate::lie::adjoint(&w, &x);
        let fw = engine.conv_at(&xw) / jac(&xw);
        let fneg = engine.conv_at(&x.neg()) / jac(&x.neg());
        worst = worst.max((fw - fneg).norm());
        peak = peak.max(fw.norm()).max(fneg.norm());
    }
    if peak == 0.0 {
        return Ok(0.0);
    }
    Ok(worst / peak)
}

fn separable_terms<'s>(s: &'s Symbol) -> Result<&'s [super::SeparableTerm]> {
    s.terms().ok_or_else(|| {
        CoreError::InvalidParameter(
            "star products need symbols built from separable factor terms".into(),
        )
    })
}

fn box_center(b: &SupportBox) -> [f64; 3] {
    [
        0.5 * (b.lo[0] + b.hi[0]),
        0.5 * (b.lo[1] + b.hi[1]),
        0.5 * (b.lo[2] + b.hi[2]),
    ]
}

fn box_half(b: &SupportBox) -> [f64; 3] {
    [
        0.5 * (b.hi[0] - b.lo[0]),
        0.5 * (b.hi[1] - b.lo[1]),
        0.5 * (b.hi[2] - b.lo[2]),
    ]
}

fn zero_product(a: &Symbol, b: &Symbol, hbar: f64) -> StarProduct {
    let center = box_center(&b.support_box);
    let carrier_out = DualVec::new(
        0.5 * (box_center(&a.support_box)[0] + center[0]),
        0.5 * (box_center(&a.support_box)[1] + center[1]),
        0.5 * (box_center(&a.support_box)[2] + center[2]),
    );
    let axes = [
        UniformGrid1::new(carrier_out.xi1 - 0.01, 0.005, 5),
        UniformGrid1::new(carrier_out.xi2 - 0.01, 0.005, 5),
        UniformGrid1::new(carrier_out.xi3 - 0.01, 0.005, 5),
    ];
    let values = Arc::new(vec![Complex64::new(0.0, 0.0); 125]);
    let spectral = SupportBox::around(&carrier_out, [0.01; 3]).expect("fixed box");
    let symbol = Symbol::from_closure(
        |_| Complex64::new(0.0, 0.0),
        spectral,
        a.class_delta.max(b.class_delta),
        true,
    );
    StarProduct {
        symbol,
        diag: Diagnostics::default(),
        hbar,
        axes,
        values,
        spectral,
        carrier_out,
        chart: None,
        chart_radius: 0.0,
    }
}

/// Low-discrepancy point in the Euclidean chart ball of the given
/// radius (Halton bases 2, 3, 5 mapped to the cube, rejected to the
/// ball by radial rescale).
fn halton_ball_point(i: usize, radius: f64) -> LieVec {
    fn halton(mut i: usize, base: usize) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    let u = [
        2.0 * halton(i + 1, 2) - 1.0,
        2.0 * halton(i + 1, 3) - 1.0,
        2.0 * halton(i + 1, 5) - 1.0,
    ];
    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let s = if n > 1.0 { 1.0 / n } else { 1.0 };
    LieVec::new(radius * s * u[0], radius * s * u[1], radius * s * u[2])
}

/// One demodulated factor table: `factor.transform(-v/hbar) * e^{+i v
/// carrier/hbar}` sampled densely enough for cubic interpolation.
struct AxisTable {
    grid: UniformGrid1,
    vals: Vec<Complex64>,
}

struct FactorTables {
    /// Per input term: coefficient (with the transform constant folded
    /// in) and the three demodulated axis tables.
    terms: Vec<(Complex64, [AxisTable; 3])>,
}

impl FactorTables {
    fn build(
        terms: &[super::SeparableTerm],
        carrier: [f64; 3],
        hbar: f64,
        range: [f64; 3],
        overall: f64,
    ) -> Self {
        let built = terms
            .iter()
            .map(|t| {
                let tabs: [AxisTable; 3] = std::array::from_fn(|c| {
                    let f = t.factors[c];
                    let rate = ((f.center - carrier[c]).abs()
                        + f.width * f.shape.support_radius())
                        / hbar;
                    let step = if rate > 1e-12 {
                        TABLE_PHASE_STEP / rate
                    } else {
                        range[c] / 8.0
                    };
                    let n = ((2.0 * range[c] / step).ceil() as usize + 6).max(16);
                    let grid = UniformGrid1::symmetric(range[c], n);
                    let vals = grid
                        .nodes()
                        .map(|v| {
                            f.transform(-v / hbar)
                                * Complex64::from_polar(1.0, v * carrier[c] / hbar)
                        })
                        .collect();
                    AxisTable { grid, vals }
                });
                (t.coeff * overall, tabs)
            })
            .collect();
        Self { terms: built }
    }

    /// Demodulated inverse-transform value at the chart point; the
    /// caller multiplies the carrier phase back on.
    #[inline]
    fn eval_slow(&self, m: &LieVec) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (coeff, tabs) in &self.terms {
            let p = cubic_table_complex(&tabs[0].grid, &tabs[0].vals, m.x1)
                * cubic_table_complex(&tabs[1].grid, &tabs[1].vals, m.x2)
                * cubic_table_complex(&tabs[2].grid, &tabs[2].vals, m.x3);
            s += coeff * p;
        }
        s
    }
}

/// One retained source node of the convolution.
struct SourceNode {
    exp_neg: GroupElt,
    /// phi_1(y) times the chart measure weight of the node.
    weight: Complex64,
}

struct Convolver {
    hbar: f64,
    chi: CutoffChi,
    inner: FactorTables,
    carrier_in: DualVec,
    carrier_out: DualVec,
    sources: Vec<SourceNode>,
    x_grid: Grid3,
    ball_radius: f64,
    half_density_weight: bool,
    width_min: [f64; 3],
    class_delta: f64,
    diag: Diagnostics,
}

impl Convolver {
    fn build(
        a: &Symbol,
        b: &Symbol,
        hbar: f64,
        chi: &CutoffChi,
        opts: &StarOptions,
    ) -> Result<Self> {
        // Two chart-ball elements must multiply inside the injectivity
        // range of the principal logarithm; the elliptic angle of a
        // cutoff-ball element is at most the cutoff radius.
        if 2.0 * chi.radius >= 0.5 * PI {
            return Err(CoreError::ChartOverflow(format!(
                "cutoff radius {} lets products of supported points reach the chart boundary",
                chi.radius
            )));
        }
        let mut diag = Diagnostics::default();
        let ta = separable_terms(a)?;
        let tb = separable_terms(b)?;
        let ca = box_center(&a.support_box);
        let cb = box_center(&b.support_box);
        let resid_a = box_half(&a.support_box);
        let resid_b = box_half(&b.support_box);
        let carrier_in = DualVec::new(cb[0], cb[1], cb[2]);
        let carrier_out = DualVec::new(
            0.5 * (ca[0] + cb[0]),
            0.5 * (ca[1] + cb[1]),
            0.5 * (ca[2] + cb[2]),
        );
        let overall = HaarNormalization::default().dxi_constant / (hbar * hbar * hbar);

        let bw = chi.box_half_widths();
        let table_range = [
            bw[0] * 1.02 + 0.01,
            bw[1] * 1.02 + 0.01,
            bw[2] * 1.02 + 0.01,
        ];
        let inner = FactorTables::build(tb, cb, hbar, table_range, overall);

        // Reach of products of two supported chart points, per axis
        // and in the Euclidean norm, from a scan over sphere pairs.
        let (scan_half, scan_euclid, scan_slack) = product_log_extent(chi.radius)?;

        // Shrink the output ball to where the integrand tail falls
        // below the cut, from radial envelopes of the two factors.
        let env_a = radial_envelope(a, hbar, chi);
        let env_b = radial_envelope(b, hbar, chi);
        let (ball_radius, tail_bound) =
            effective_radius(&env_a, &env_b, scan_euclid, scan_slack);
        if tail_bound > 0.0 {
            diag.truncation("convolution output ball", tail_bound);
        }
        let out_half = [
            (scan_half[0] * 1.1 + 0.04).min(ball_radius),
            (scan_half[1] * 1.1 + 0.04).min(ball_radius),
            (scan_half[2] * 1.1 + 0.04).min(ball_radius),
        ];

        // Demodulated phase rates of the integrand over probe pairs.
        let (rate_y, rate_x) = phase_rates(
            chi,
            out_half,
            ball_radius,
            [&resid_a, &resid_b],
            [&ca, &cb],
            &[carrier_out.xi1, carrier_out.xi2, carrier_out.xi3],
            hbar,
        );
        let nodes = |extent: f64, rate: f64| -> usize {
            let need = (extent / PI) * (RATE_SAFETY * rate + RATE_SLACK) * opts.refine;
            (need.ceil() as usize).max(MIN_NODES)
        };
        let mut n_y = [
            nodes(2.0 * bw[0], rate_y[0]),
            nodes(2.0 * bw[1], rate_y[1]),
            nodes(2.0 * bw[2], rate_y[2]),
        ];
        let mut n_x = [
            nodes(2.0 * out_half[0], rate_x[0]),
            nodes(2.0 * out_half[1], rate_x[1]),
            nodes(2.0 * out_half[2], rate_x[2]),
        ];
        // Transverse axes share a count so the grids are closed under
        // the axis swap of the Weyl flip.
        n_y[1] = n_y[1].max(n_y[2]);
        n_y[2] = n_y[1];
        n_x[1] = n_x[1].max(n_x[2]);
        n_x[2] = n_x[1];

        let y_grid = Grid3::new([
            UniformGrid1::symmetric(bw[0], n_y[0]),
            UniformGrid1::symmetric(bw[1], n_y[1]),
            UniformGrid1::symmetric(bw[2], n_y[2]),
        ]);
        let x_grid = Grid3::new([
            UniformGrid1::symmetric(out_half[0], n_x[0]),
            UniformGrid1::symmetric(out_half[1], n_x[1]),
            UniformGrid1::symmetric(out_half[2], n_x[2]),
        ]);

        // Source nodes: the cut first factor with the chart measure
        // folded in, negligible nodes dropped.
        let dy = HaarNormalization::default().dx_constant
            * y_grid.axes[0].step
            * y_grid.axes[1].step
            * y_grid.axes[2].step;
        let mut raw = Vec::with_capacity(y_grid.len());
        let mut peak = 0.0_f64;
        for (i, j, k) in iter_indices(&y_grid) {
            let p = y_grid.node(i, j, k);
            let y = LieVec::new(p[0], p[1], p[2]);
            let cut = chi.eval(&y);
            if cut == 0.0 {
                continue;
            }
            let phi = inv_fourier_at(a, hbar, &y) * cut;
            let mag = phi.norm();
            if mag == 0.0 {
                continue;
            }
            peak = peak.max(mag);
            raw.push((y, phi));
        }
        let keep = peak * 1e-16;
        let sources: Vec<SourceNode> = raw
            .into_iter()
            .filter(|(_, phi)| phi.norm() > keep)
            .map(|(y, phi)| SourceNode {
                exp_neg: exp_g(&y.neg()),
                weight: phi * dy,
            })
            .collect();

        let width_min = std::array::from_fn(|c| {
            ta.iter()
                .chain(tb.iter())
                .map(|t| t.factors[c].width)
                .fold(f64::INFINITY, f64::min)
        });

        Ok(Self {
            hbar,
            chi: *chi,
            inner,
            carrier_in,
            carrier_out,
            sources,
            x_grid,
            ball_radius,
            half_density_weight: opts.half_density_weight,
            width_min,
            class_delta: a.class_delta.max(b.class_delta),
            diag,
        })
    }

    /// Raw convolution value c(x), carrier included.
    fn conv_at(&self, x: &LieVec) -> Complex64 {
        if x.norm() > self.ball_radius {
            return Complex64::new(0.0, 0.0);
        }
        let gx = exp_g(x);
        let mut acc = Complex64::new(0.0, 0.0);
        for node in &self.sources {
            let g = node.exp_neg.mul(&gx);
            let m = match principal_log(&g) {
                Ok(m) => m,
                Err(_) => continue,
            };
            if r_k(&m) >= self.chi.radius {
                continue;
            }
            let cut = self.chi.eval(&m);
            if cut == 0.0 {
                continue;
            }
            let slow = self.inner.eval_slow(&m);
            if slow == Complex64::new(0.0, 0.0) {
                continue;
            }
            let phase = Complex64::from_polar(1.0, -pairing(&m, &self.carrier_in) / self.hbar);
            acc += node.weight * slow * phase * (cut / jac(&m));
        }
        acc * jac(x)
    }

    /// Demodulated chart values on the output grid, in grid order,
    /// with the optional half-density weight applied.
    fn chart_values(&self) -> (Vec<Complex64>, f64) {
        let g = &self.x_grid;
        let n12 = g.axes[1].n * g.axes[2].n;
        let shell_lo = self.ball_radius - 2.0 * g.axes.iter().map(|a| a.step).fold(0.0, f64::max);
        let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
        let stats: Vec<(f64, f64)> = values
            .par_chunks_mut(n12)
            .enumerate()
            .map(|(i, plane)| {
                let mut peak = 0.0_f64;
                let mut shell = 0.0_f64;
                for j in 0..g.axes[1].n {
                    for k in 0..g.axes[2].n {
                        let p = g.node(i, j, k);
                        let x = LieVec::new(p[0], p[1], p[2]);
                        let r = x.norm();
                        if r > self.ball_radius {
                            continue;
                        }
                        let mut c = self.conv_at(&x);
                        if self.half_density_weight {
                            c *= jac(&x).sqrt().recip();
                        }
                        let psi = c
                            * Complex64::from_polar(
                                1.0,
                                pairing(&x, &self.carrier_out) / self.hbar,
                            );
                        plane[j * g.axes[2].n + k] = psi;
                        let mag = psi.norm();
                        peak = peak.max(mag);
                        if r >= shell_lo {
                            shell = shell.max(mag);
                        }
                    }
                }
                (peak, shell)
            })
            .collect();
        let peak = stats.iter().map(|s| s.0).fold(0.0, f64::max);
        let shell = stats.iter().map(|s| s.1).fold(0.0, f64::max);
        let shell_rel = if peak > 0.0 { shell / peak } else { 0.0 };
        (values, shell_rel)
    }

    fn run(self, opts: &StarOptions) -> Result<StarProduct> {
        let mut diag = self.diag.clone();
        let (psi, shell_rel) = self.chart_values();
        if shell_rel > 40.0 * TAIL_REL {
            diag.truncation("convolution support shell", shell_rel);
        }

        let g = &self.x_grid;
        let n = [g.axes[0].n, g.axes[1].n, g.axes[2].n];
        let h = [g.axes[0].step, g.axes[1].step, g.axes[2].step];
        let x0 = [g.axes[0].lo, g.axes[1].lo, g.axes[2].lo];
        let mut p = [0usize; 3];
        for c in 0..3 {
            let target = self.width_min[c] / 8.0;
            let by_resolution = (2.0 * PI * self.hbar / (h[c] * target)).ceil() as usize;
            p[c] = (2 * n[c]).max(by_resolution).next_power_of_two();
        }
        while p[0] * p[1] * p[2] > SPECTRUM_CAP {
            let c = (0..3).max_by_key(|&c| p[c]).unwrap();
            p[c] /= 2;
            diag.error_bound(
                "spectrum cap coarsened the frequency step",
                2.0 * PI * self.hbar / (p[c] as f64 * h[c]),
            );
        }

        let spectrum = padded_spectrum(psi, n, p);
        let dxi = [
            2.0 * PI * self.hbar / (p[0] as f64 * h[0]),
            2.0 * PI * self.hbar / (p[1] as f64 * h[1]),
            2.0 * PI * self.hbar / (p[2] as f64 * h[2]),
        ];

        // Per-axis magnitude profiles in ascending-frequency order.
        let mut prof: [Vec<f64>; 3] = [vec![0.0; p[0]], vec![0.0; p[1]], vec![0.0; p[2]]];
        for i0 in 0..p[0] {
            for i1 in 0..p[1] {
                let row = (i0 * p[1] + i1) * p[2];
                for i2 in 0..p[2] {
                    let m = spectrum[row + i2].norm();
                    let j0 = (i0 + p[0] / 2) % p[0];
                    let j1 = (i1 + p[1] / 2) % p[1];
                    let j2 = (i2 + p[2] / 2) % p[2];
                    prof[0][j0] = prof[0][j0].max(m);
                    prof[1][j1] = prof[1][j1].max(m);
                    prof[2][j2] = prof[2][j2].max(m);
                }
            }
        }
        let spec_peak = prof[0].iter().fold(0.0_f64, |a, &b| a.max(b));
        if spec_peak == 0.0 {
            return Ok(zero_from_parts(self, diag));
        }
        let floor = spec_peak * SPECTRUM_FLOOR;
        let mut win_lo = [0usize; 3];
        let mut win_hi = [0usize; 3];
        for c in 0..3 {
            let first = prof[c].iter().position(|&v| v >= floor).unwrap();
            let last = prof[c].iter().rposition(|&v| v >= floor).unwrap();
            let edge = prof[c][0].max(prof[c][p[c] - 1]) / spec_peak;
            if edge > 1e-6 {
                diag.aliasing("product spectrum window", edge);
            }
            win_lo[c] = first.saturating_sub(4);
            win_hi[c] = (last + 4).min(p[c] - 1);
        }

        // Trimmed symbol grid with the carrier offset restored.
        let axes: [UniformGrid1; 3] = std::array::from_fn(|c| {
            let lo = carrier_component(&self.carrier_out, c)
                + (win_lo[c] as f64 - (p[c] / 2) as f64) * dxi[c];
            UniformGrid1::new(lo, dxi[c], win_hi[c] - win_lo[c] + 1)
        });
        let measure = HaarNormalization::default().dx_constant * h[0] * h[1] * h[2];
        let mut values = vec![Complex64::new(0.0, 0.0); axes[0].n * axes[1].n * axes[2].n];
        let phase_vec = |c: usize| -> Vec<Complex64> {
            (win_lo[c]..=win_hi[c])
                .map(|j| {
                    let kk = j as f64 - (p[c] / 2) as f64;
                    Complex64::from_polar(1.0, x0[c] * kk * dxi[c] / self.hbar)
                })
                .collect()
        };
        let (ph0, ph1, ph2) = (phase_vec(0), phase_vec(1), phase_vec(2));
        for (a0, j0) in (win_lo[0]..=win_hi[0]).enumerate() {
            let s0 = (j0 + p[0] / 2) % p[0];
            for (a1, j1) in (win_lo[1]..=win_hi[1]).enumerate() {
                let s1 = (j1 + p[1] / 2) % p[1];
                let src_row = (s0 * p[1] + s1) * p[2];
                let dst_row = (a0 * axes[1].n + a1) * axes[2].n;
                let pp = ph0[a0] * ph1[a1] * measure;
                for (a2, j2) in (win_lo[2]..=win_hi[2]).enumerate() {
                    let s2 = (j2 + p[2] / 2) % p[2];
                    values[dst_row + a2] = spectrum[src_row + s2] * pp * ph2[a2];
                }
            }
        }

        // Measured support from the profile crossings, one step of
        // margin on each side.
        let spectral = SupportBox::new(
            std::array::from_fn(|c| {
                let first = prof[c].iter().position(|&v| v >= floor).unwrap();
                carrier_component(&self.carrier_out, c)
                    + (first as f64 - (p[c] / 2) as f64 - 1.0) * dxi[c]
            }),
            std::array::from_fn(|c| {
                let last = prof[c].iter().rposition(|&v| v >= floor).unwrap();
                carrier_component(&self.carrier_out, c)
                    + (last as f64 - (p[c] / 2) as f64 + 1.0) * dxi[c]
            }),
        )?;

        let chart = if opts.density_grade {
            Some(Arc::new(refine_chart_table(
                &spectrum,
                p,
                n,
                h,
                x0,
                &spectral,
                &self.carrier_out,
                self.hbar,
                &mut diag,
            )))
        } else {
            None
        };

        let values = Arc::new(values);
        let symbol_values = values.clone();
        let symbol_grid = Grid3::new(axes);
        let symbol = Symbol::from_closure(
            move |xi: &DualVec| {
                tricubic_complex(&symbol_grid, &symbol_values, [xi.xi1, xi.xi2, xi.xi3])
            },
            spectral,
            self.class_delta,
            false,
        );
        Ok(StarProduct {
            symbol,
            diag,
            hbar: self.hbar,
            axes,
            values,
            spectral,
            carrier_out: self.carrier_out,
            chart,
            chart_radius: self.ball_radius
                + 2.0 * h.iter().fold(0.0_f64, |a, &b| a.max(b)),
        })
    }
}

fn carrier_component(v: &DualVec, c: usize) -> f64 {
    match c {
        0 => v.xi1,
        1 => v.xi2,
        _ => v.xi3,
    }
}

fn zero_from_parts(engine: Convolver, diag: Diagnostics) -> StarProduct {
    let carrier = engine.carrier_out;
    let axes = [
        UniformGrid1::new(carrier.xi1 - 0.01, 0.005, 5),
        UniformGrid1::new(carrier.xi2 - 0.01, 0.005, 5),
        UniformGrid1::new(carrier.xi3 - 0.01, 0.005, 5),
    ];
    let spectral = SupportBox::around(&carrier, [0.01; 3]).expect("fixed box");
    StarProduct {
        symbol: Symbol::from_closure(
            |_| Complex64::new(0.0, 0.0),
            spectral,
            engine.class_delta,
            true,
        ),
        diag,
        hbar: engine.hbar,
        axes,
        values: Arc::new(vec![Complex64::new(0.0, 0.0); 125]),
        spectral,
        carrier_out: carrier,
        chart: None,
        chart_radius: 0.0,
    }
}

fn iter_indices(g: &Grid3) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    let (n0, n1, n2) = (g.axes[0].n, g.axes[1].n, g.axes[2].n);
    (0..n0).flat_map(move |i| (0..n1).flat_map(move |j| (0..n2).map(move |k| (i, j, k))))
}

/// Sphere directions of the invariant-radius ball, as chart vectors of
/// the given invariant radius.
fn rk_sphere(radius: f64, n_phi: usize, n_theta: usize) -> Vec<LieVec> {
    let mut dirs = Vec::new();
    for ip in 0..=n_phi {
        let phi = PI * ip as f64 / n_phi as f64;
        let (sp, cp) = phi.sin_cos();
        let m_theta = if ip == 0 || ip == n_phi { 1 } else { n_theta };
        for it in 0..m_theta {
            let th = 2.0 * PI * it as f64 / n_theta as f64;
            dirs.push(LieVec::new(
                radius * std::f64::consts::SQRT_2 * cp,
                radius * sp * th.cos(),
                radius * sp * th.sin(),
            ));
        }
    }
    dirs
}

/// Reach of log(exp(y) exp(z)) over sphere pairs of the support ball:
/// per-axis bound, Euclidean bound, and the largest excess of |log
/// product| over |y| + |z| (the slack the ball truncation must keep).
fn product_log_extent(radius: f64) -> Result<([f64; 3], f64, f64)> {
    let dirs = rk_sphere(radius, 12, 20);
    let elts: Vec<(LieVec, GroupElt)> = dirs.iter().map(|y| (*y, exp_g(y))).collect();
    let mut half = [0.0_f64; 3];
    let mut euclid = 0.0_f64;
    let mut slack = 0.0_f64;
    for (y, gy) in &elts {
        for (z, gz) in &elts {
            let g = gy.mul(gz);
            let b = principal_log(&g).map_err(|_| {
                CoreError::ChartOverflow(
                    "product of two supported chart points left the chart".into(),
                )
            })?;
            half[0] = half[0].max(b.x1.abs());
            half[1] = half[1].max(b.x2.abs());
            half[2] = half[2].max(b.x3.abs());
            euclid = euclid.max(b.norm());
            slack = slack.max(b.norm() - y.norm() - z.norm());
        }
    }
    Ok((half, euclid.mul_add(1.1, 0.04), slack.max(0.0) + 0.02))
}

/// Radial suffix envelope of |chi * a_hbar_v| over the cutoff box:
/// `env[k]` bounds the relative factor size anywhere at Euclidean
/// radius >= k * bin width.
struct RadialEnvelope {
    bins: Vec<f64>,
    bin_w: f64,
}

fn radial_envelope(a: &Symbol, hbar: f64, chi: &CutoffChi) -> RadialEnvelope {
    let bw = chi.box_half_widths();
    let corner = (bw[0] * bw[0] + bw[1] * bw[1] + bw[2] * bw[2]).sqrt();
    let nbins = 48;
    let bin_w = corner / nbins as f64;
    let mut bins = vec![0.0_f64; nbins + 1];
    let lattice = Grid3::new([
        UniformGrid1::symmetric(bw[0], 17),
        UniformGrid1::symmetric(bw[1], 17),
        UniformGrid1::symmetric(bw[2], 17),
    ]);
    let mut peak = 0.0_f64;
    let mut samples = Vec::new();
    for (i, j, k) in iter_indices(&lattice) {
        let p = lattice.node(i, j, k);
        let y = LieVec::new(p[0], p[1], p[2]);
        let cut = chi.eval(&y);
        if cut == 0.0 {
            continue;
        }
        let mag = inv_fourier_at(a, hbar, &y).norm() * cut;
        peak = peak.max(mag);
        samples.push((y.norm(), mag));
    }
    if peak > 0.0 {
        for (r, mag) in samples {
            let b = ((r / bin_w) as usize).min(nbins);
            bins[b] = bins[b].max(mag / peak);
        }
    }
    for b in (0..nbins).rev() {
        bins[b] = bins[b].max(bins[b + 1]);
    }
    RadialEnvelope { bins, bin_w }
}

impl RadialEnvelope {
    fn at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return self.bins[0];
        }
        let b = (r / self.bin_w) as usize;
        if b >= self.bins.len() {
            0.0
        } else {
            self.bins[b]
        }
    }
}

/// Smallest output radius at which the integrand bound drops below the
/// tail cut, plus the achieved bound. Any chart point of norm R in the
/// convolution support forces |y| + |m| >= R - slack, so the product
/// of the radial envelopes past that split bounds the integrand.
fn effective_radius(
    env1: &RadialEnvelope,
    env2: &RadialEnvelope,
    full_radius: f64,
    slack: f64,
) -> (f64, f64) {
    let steps = 96;
    for s in 0..steps {
        let r = full_radius * (0.3 + 0.7 * s as f64 / steps as f64);
        let mut bound = 0.0_f64;
        let splits = 64;
        for q in 0..=splits {
            let r1 = (r - slack).max(0.0) * q as f64 / splits as f64;
            let r2 = (r - slack).max(0.0) - r1;
            bound = bound.max(env1.at(r1) * env2.at(r2));
        }
        if bound <= TAIL_REL {
            return (r, bound);
        }
    }
    (full_radius, 0.0)
}

/// Measured phase rates of the demodulated integrand: radians per unit
/// y per axis and per unit x per axis, maximized over probe pairs.
fn phase_rates(
    chi: &CutoffChi,
    out_half: [f64; 3],
    ball_radius: f64,
    resid: [&[f64; 3]; 2],
    carriers: [&[f64; 3]; 2],
    carrier_out: &[f64; 3],
    hbar: f64,
) -> ([f64; 3], [f64; 3]) {
    let mut y_probes = vec![LieVec::zero()];
    for scale in [0.55, 1.0] {
        for d in rk_sphere(scale * chi.radius * 0.98, 3, 8) {
            y_probes.push(d);
        }
    }
    let mut x_probes = vec![LieVec::zero()];
    for i in -2i32..=2 {
        for j in -2i32..=2 {
            for k in -2i32..=2 {
                if i == 0 && j == 0 && k == 0 {
                    continue;
                }
                let x = LieVec::new(
                    out_half[0] * i as f64 / 2.0,
                    out_half[1] * j as f64 / 2.0,
                    out_half[2] * k as f64 / 2.0,
                );
                if x.norm() <= ball_radius {
                    x_probes.push(x);
                }
            }
        }
    }
    let m_of = |y: &LieVec, x: &LieVec| -> Option<LieVec> {
        let g = exp_g(&y.neg()).mul(&exp_g(x));
        principal_log(&g).ok()
    };
    let eps = 1e-3;
    let mut rate_y = [0.0_f64; 3];
    let mut rate_x = [0.0_f64; 3];
    for y in &y_probes {
        for x in &x_probes {
            if m_of(y, x).is_none() {
                continue;
            }
            let mut ok = true;
            let mut jy = [[0.0_f64; 3]; 3];
            let mut jx = [[0.0_f64; 3]; 3];
            for d in 0..3 {
                let mut ey = [0.0; 3];
                ey[d] = eps;
                let dy = LieVec::new(ey[0], ey[1], ey[2]);
                match (m_of(&y.add(&dy), x), m_of(&y.add(&dy.neg()), x)) {
                    (Some(mp), Some(mm)) => {
                        jy[0][d] = (mp.x1 - mm.x1) / (2.0 * eps);
                        jy[1][d] = (mp.x2 - mm.x2) / (2.0 * eps);
                        jy[2][d] = (mp.x3 - mm.x3) / (2.0 * eps);
                    }
                    _ => ok = false,
                }
                match (m_of(y, &x.add(&dy)), m_of(y, &x.add(&dy.neg()))) {
                    (Some(mp), Some(mm)) => {
                        jx[0][d] = (mp.x1 - mm.x1) / (2.0 * eps);
                        jx[1][d] = (mp.x2 - mm.x2) / (2.0 * eps);
                        jx[2][d] = (mp.x3 - mm.x3) / (2.0 * eps);
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                continue;
            }
            for d in 0..3 {
                let mut carry = carriers[0][d];
                let mut band = resid[0][d];
                for c in 0..3 {
                    carry += jy[c][d] * carriers[1][c];
                    band += jy[c][d].abs() * resid[1][c];
                }
                rate_y[d] = rate_y[d].max((carry.abs() + band) / hbar);
                let mut carry_x = carrier_out[d];
                let mut band_x = 0.0;
                for c in 0..3 {
                    carry_x -= jx[c][d] * carriers[1][c];
                    band_x += jx[c][d].abs() * resid[1][c];
                }
                rate_x[d] = rate_x[d].max((carry_x.abs() + band_x) / hbar);
            }
        }
    }
    (rate_y, rate_x)
}

/// Rotate axes so the last becomes first: out[k][i][j] = in[i][j][k].
fn rotate_axes(data: &[Complex64], dims: [usize; 3]) -> (Vec<Complex64>, [usize; 3]) {
    let (d0, d1, d2) = (dims[0], dims[1], dims[2]);
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for i in 0..d0 {
        for j in 0..d1 {
            let row = (i * d1 + j) * d2;
            for (k, &v) in data[row..row + d2].iter().enumerate() {
                out[(k * d0 + i) * d1 + j] = v;
            }
        }
    }
    (out, [d2, d0, d1])
}

/// Forward chart transform with zero padding: the unnormalized
/// positive-phase transform along each axis in turn.
fn padded_spectrum(vals: Vec<Complex64>, n: [usize; 3], p: [usize; 3]) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let mut data = vals;
    let mut dims = n;
    for axis in [2, 1, 0] {
        let fft = planner.plan_fft_inverse(p[axis]);
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let rows = dims[0] * dims[1];
        let mut out = vec![Complex64::new(0.0, 0.0); rows * p[axis]];
        for r in 0..rows {
            out[r * p[axis]..r * p[axis] + dims[2]]
                .copy_from_slice(&data[r * dims[2]..(r + 1) * dims[2]]);
            fft.process_with_scratch(&mut out[r * p[axis]..(r + 1) * p[axis]], &mut scratch);
        }
        let (rot, rdims) = rotate_axes(&out, [dims[0], dims[1], p[axis]]);
        data = rot;
        dims = rdims;
    }
    data
}

/// Spectral refinement of the chart samples: embed each axis spectrum
/// in a longer window and transform back, trimming to the data extent.
/// The result interpolates the demodulated chart values with small
/// enough per-step phase for cubic accuracy.
#[allow(clippy::too_many_arguments)]
fn refine_chart_table(
    spectrum: &[Complex64],
    p: [usize; 3],
    n: [usize; 3],
    h: [f64; 3],
    x0: [f64; 3],
    spectral: &SupportBox,
    carrier_out: &DualVec,
    hbar: f64,
    diag: &mut Diagnostics,
) -> ChartTable {
    let mut rho = [1usize; 3];
    for c in 0..3 {
        let lo = spectral.lo[c] - carrier_component(carrier_out, c);
        let hi = spectral.hi[c] - carrier_component(carrier_out, c);
        let f_resid = lo.abs().max(hi.abs()) / hbar;
        let need = f_resid * h[c] / CHART_PHASE_STEP;
        rho[c] = (need.ceil().max(1.0) as usize).next_power_of_two();
    }
    loop {
        let keep: [usize; 3] = std::array::from_fn(|c| (n[c] - 1) * rho[c] + 1);
        let worst = keep
            .iter()
            .zip(&rho)
            .zip(&p)
            .map(|((&k, &r), &pc)| k.max(r * pc))
            .product::<usize>();
        if worst <= SPECTRUM_CAP {
            break;
        }
        let c = (0..3).max_by_key(|&c| rho[c]).unwrap();
        if rho[c] == 1 {
            break;
        }
        rho[c] /= 2;
        diag.error_bound(
            "chart refinement capped; interpolation phase step grew",
            2.0 * CHART_PHASE_STEP,
        );
    }

    let mut planner = FftPlanner::new();
    let mut data = spectrum.to_vec();
    let mut dims = p;
    for axis in [2usize, 1, 0] {
        let p_old = p[axis];
        let p_new = p_old * rho[axis];
        let keep = ((n[axis] - 1) * rho[axis] + 1).min(p_new);
        let fft = planner.plan_fft_forward(p_new);
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let rows = dims[0] * dims[1];
        let mut out = vec![Complex64::new(0.0, 0.0); rows * keep];
        let mut buf = vec![Complex64::new(0.0, 0.0); p_new];
        let scale = 1.0 / p_old as f64;
        for r in 0..rows {
            buf.fill(Complex64::new(0.0, 0.0));
            let row = &data[r * dims[2]..(r + 1) * dims[2]];
            let half = p_old as i64 / 2;
            for kk in -half..half {
                let src = ((kk + p_old as i64) % p_old as i64) as usize;
                let dst = ((kk + p_new as i64) % p_new as i64) as usize;
                buf[dst] = row[src];
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (t, v) in out[r * keep..(r + 1) * keep].iter_mut().zip(buf.iter()) {
                *t = v * scale;
            }
        }
        let (rot, rdims) = rotate_axes(&out, [dims[0], dims[1], keep]);
        data = rot;
        dims = rdims;
    }
    let grid = Grid3::new(std::array::from_fn(|c| {
        UniformGrid1::new(x0[c], h[c] / rho[c] as f64, dims[c])
    }));
    debug_assert_eq!(grid.len(), data.len());
    ChartTable { grid, vals: data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh_hermitian;
    use crate::num::{loglog_slope, NeumaierSumC, PowerLaw};
    use crate::quantize::assembly::{opp, opp_density, KakParams};
    use crate::quantize::{Factor1D, Shape};
    use crate::repr::{make_model, ReprKind, ReprModel};
    use ndarray::Array2;

    fn principal(t: f64, q_max: i64) -> ReprModel {
        make_model(ReprKind::Principal { t, eps: 1 }, q_max).unwrap()
    }

    fn calib(hbar: f64) -> Symbol {
        Symbol::k_tilde_member(hbar, 0.2).unwrap()
    }

    /// A second swap-symmetric symbol with a different longitudinal
    /// profile, so products with the calibration member have a nonzero
    /// bracket term.
    fn partner(hbar: f64) -> Symbol {
        let w = 1.4 * hbar.powf(0.2);
        Symbol::separable(
            [
                Factor1D::new(1.1, 0.3, Shape::Bump),
                Factor1D::new(0.0, w, Shape::Bump),
                Factor1D::new(0.0, w, Shape::Bump),
            ],
            0.2,
        )
        .unwrap()
    }

    fn op_norm(m: &Array2<Complex64>) -> f64 {
        let mh = m.t().mapv(|v| v.conj());
        let gram = mh.dot(m);
        let (evals, _) = eigh_hermitian(&gram).unwrap();
        evals.iter().fold(0.0_f64, |a, &b| a.max(b)).sqrt()
    }

    #[test]
    fn zero_factor_gives_zero_product() {
        let hbar = 1.0 / 8.0;
        let a = calib(hbar);
        let zero = Symbol::from_terms(
            vec![super::super::SeparableTerm {
                coeff: Complex64::new(0.0, 0.0),
                factors: [
                    Factor1D::new(1.0, 0.25, Shape::Bump),
                    Factor1D::new(0.0, 0.5, Shape::Bump),
                    Factor1D::new(0.0, 0.5, Shape::Bump),
                ],
            }],
            0.2,
        )
        .unwrap();
        let chi = CutoffChi::default();
        for p in [
            star_product(&a, &zero, hbar, &chi, &StarOptions::default()).unwrap(),
            star_product(&zero, &a, hbar, &chi, &StarOptions::default()).unwrap(),
        ] {
            assert_eq!(p.grid_sup(&p.spectral_box()), 0.0);
            let probe = DualVec::new(1.0, 0.0, 0.0);
            assert_eq!(p.symbol.eval(&probe).norm(), 0.0);
        }
    }

    /// Independent oracle: the product symbol is the double chart sum
    /// of phi_a(y) phi_b(z) e^{+i <log(exp y exp z), xi>/hbar}. The
    /// engine never forms this pair sum; agreement checks the Jacobian
    /// bookkeeping, the demodulated tables, and the padded transform
    /// in one shot.
    #[test]
    fn pair_sum_oracle_matches_the_grid_pipeline() {
        let hbar = 1.0 / 8.0;
        let chi = CutoffChi::default();
        let a = calib(hbar);
        let b = partner(hbar);
        let p = star_product(&a, &b, hbar, &chi, &StarOptions::default()).unwrap();

        let grid_for = |s: &Symbol| -> Grid3 {
            let bw = chi.box_half_widths();
            let half = box_half(&s.support_box);
            let center = box_center(&s.support_box);
            let axes: [UniformGrid1; 3] = std::array::from_fn(|c| {
                let rate = (center[c].abs() + half[c]) / hbar;
                let n = ((2.0 * bw[c] / PI) * (1.35 * rate + 25.0)).ceil() as usize;
                UniformGrid1::symmetric(bw[c], n.max(16))
            });
            Grid3::new(axes)
        };
        let nodes_for = |s: &Symbol| -> Vec<(LieVec, Complex64)> {
            let g = grid_for(s);
            let cell = HaarNormalization::default().dx_constant
                * g.axes[0].step
                * g.axes[1].step
                * g.axes[2].step;
            iter_indices(&g)
                .filter_map(|(i, j, k)| {
                    let pnt = g.node(i, j, k);
                    let y = LieVec::new(pnt[0], pnt[1], pnt[2]);
                    let cut = chi.eval(&y);
                    (cut > 0.0).then(|| (y, inv_fourier_at(s, hbar, &y) * (cut * cell)))
                })
                .collect()
        };
        let ya = nodes_for(&a);
        let zb: Vec<(GroupElt, Complex64)> = nodes_for(&b)
            .into_iter()
            .map(|(z, wz)| (exp_g(&z), wz))
            .collect();

        let sb = p.spectral_box();
        let c = box_center(&sb);
        let probes = [
            DualVec::new(c[0], c[1], c[2]),
            DualVec::new(c[0] + 0.12, c[1], c[2]),
            DualVec::new(c[0] - 0.2, c[1] + 0.05, c[2] - 0.03),
            DualVec::new(c[0] + 0.05, c[1] - 0.08, c[2] + 0.08),
        ];
        let partials: Vec<[Complex64; 4]> = ya
            .par_iter()
            .map(|(y, wy)| {
                let gy = exp_g(y);
                let mut acc = [Complex64::new(0.0, 0.0); 4];
                for (gz, wz) in &zb {
                    let bch = principal_log(&gy.mul(gz)).unwrap();
                    let w = wy * wz;
                    for (t, xi) in probes.iter().enumerate() {
                        acc[t] += w * Complex64::from_polar(1.0, pairing(&bch, xi) / hbar);
                    }
                }
                acc
            })
            .collect();

        let peak = p.grid_sup(&sb);
        assert!(peak > 0.0);
        for (t, xi) in probes.iter().enumerate() {
            let mut acc = NeumaierSumC::new();
            for row in &partials {
                acc.add(row[t]);
            }
            let oracle = acc.total();
            let got = p.symbol.eval(xi);
            let rel = (got - oracle).norm() / peak;
            assert!(
                rel <= 2e-5,
                "pair-sum oracle disagrees at {xi:?}: engine {got}, oracle {oracle}, rel {rel:.2e}"
            );
        }
    }

    #[test]
    fn leading_term_is_the_pointwise_product() {
        let chi = CutoffChi::default();
        let ladder = [1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0];
        let mut resids = Vec::new();
        for &hbar in &ladder {
            let a = calib(hbar);
            let b = partner(hbar);
            let p = star_product(&a, &b, hbar, &chi, &StarOptions::default()).unwrap();
            let window = SupportBox::new(
                std::array::from_fn(|c| a.support_box.lo[c].max(b.support_box.lo[c]) - 0.02),
                std::array::from_fn(|c| a.support_box.hi[c].min(b.support_box.hi[c]) + 0.02),
            )
            .unwrap();
            let prod = |xi: &DualVec| a.eval(xi) * b.eval(xi);
            let scale = p.grid_sup(&p.spectral_box());
            let resid = p.grid_sup_residual(&window, prod) / scale;
            resids.push(resid);
        }
        for pair in resids.windows(2) {
            assert!(
                pair[1] < pair[0],
                "leading-term residual failed to shrink: {resids:?}"
            );
        }
        let fit = loglog_slope(&ladder, &resids, 1e-14);
        assert!(
            fit.decays_at_least(0.4),
            "leading-term rate too shallow: {fit:?} from {resids:?}"
        );
        assert!(
            resids[3] <= 0.12,
            "finest-rung leading-term residual too large: {resids:?}"
        );
    }

    /// Quantizing the star product should match the composed operators
    /// ever more closely as the convolution grids refine; the residual
    /// left at the finest grid is the cutoff tail at this hbar.
    #[test]
    fn composition_discrepancy_shrinks_under_grid_refinement() {
        let hbar = 1.0 / 16.0;
        let chi = CutoffChi::default();
        let a = calib(hbar);
        let b = partner(hbar);
        let model = principal(1.0 / hbar, 120);
        let oa = opp(&a, &model, hbar, &chi).unwrap();
        let ob = opp(&b, &model, hbar, &chi).unwrap();
        let composed = oa.op.matrix.dot(&ob.op.matrix);
        let norm = op_norm(&composed);
        let mut discrepancies = Vec::new();
        for refine in [0.55, 0.8, 1.2] {
            let p = star_product(
                &a,
                &b,
                hbar,
                &chi,
                &StarOptions {
                    refine,
                    density_grade: true,
                    half_density_weight: false,
                },
            )
            .unwrap();
            let dens = p.chart_density(Some(chi), 1.0).unwrap();
            let sb = p.spectral_box();
            let xi_max = std::array::from_fn(|c| sb.lo[c].abs().max(sb.hi[c].abs()));
            let w_extent = (0.5 * (sb.hi[1] - sb.lo[2]))
                .abs()
                .max((0.5 * (sb.lo[1] - sb.hi[2])).abs());
            let params =
                KakParams::auto(&model, hbar, dens.support_radius, w_extent, xi_max).unwrap();
            let assembled = opp_density(&dens, &model, &params).unwrap();
            let diff = &assembled.op.matrix - &composed;
            discrepancies.push(op_norm(&diff) / norm);
        }
        for pair in discrepancies.windows(2) {
            assert!(
                pair[1] < pair[0],
                "composition discrepancy not monotone: {discrepancies:?}"
            );
        }
        assert!(
            discrepancies[2] <= 2e-3,
            "composition residual too large at the finest grid: {discrepancies:?}"
        );
    }

    /// The squared-operator density quantizes to hbar^{1/2} (hbar
    /// opp(a))^2 exactly, and is positive semidefinite.
    #[test]
    fn f_density_quantizes_to_the_squared_operator() {
        let hbar = 1.0 / 16.0;
        let chi = CutoffChi::default();
        let a = calib(hbar);
        let model = principal(1.0 / hbar, 120);
        let f = build_f(&a, hbar, &chi).unwrap();
        let params =
            KakParams::auto(&model, hbar, f.support_radius, f.w_extent, f.xi_max).unwrap();
        let pi_f = opp_density(&f.dens, &model, &params).unwrap();
        let oa = opp(&a, &model, hbar, &chi).unwrap();
        let want = oa.op.matrix.dot(&oa.op.matrix)
            * Complex64::new(hbar.powf(0.5) * hbar * hbar, 0.0);
        let diff = &pi_f.op.matrix - &want;
        let rel = op_norm(&diff) / op_norm(&want);
        assert!(
            rel <= 2e-3,
            "pi(f) disagrees with the squared operator: rel {rel:.2e}"
        );

        let herm = (&pi_f.op.matrix + &pi_f.op.matrix.t().mapv(|v| v.conj()))
            .mapv(|v| v * Complex64::new(0.5, 0.0));
        let (evals, _) = eigh_hermitian(&herm).unwrap();
        let min = evals.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let scale = evals.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        assert!(
            min >= -1e-8 * scale,
            "pi(f) has a negative eigenvalue {min:.3e} at scale {scale:.3e}"
        );
    }

    /// Conjugating f by the Weyl element equals inversion. For a
    /// swap-symmetric calibration symbol this holds exactly at the
    /// quadrature level, so the sampled residual is pure roundoff.
    #[test]
    fn weyl_conjugation_matches_inversion() {
        let hbar = 1.0 / 12.0;
        let chi = CutoffChi::default();
        let a = calib(hbar);
        let resid = weyl_conjugation_residual(&a, hbar, &chi, 48).unwrap();
        assert!(resid <= 1e-8, "Weyl flip residual {resid:.3e}");
    }

    /// The half-density-normalized square recovers the squared symbol
    /// at leading order.
    #[test]
    fn b_recovers_the_squared_symbol() {
        let chi = CutoffChi::default();
        let ladder = [1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0];
        let mut resids = Vec::new();
        for &hbar in &ladder {
            let a = calib(hbar);
            let p = b_from_square(&a, hbar, &chi, 1.0).unwrap();
            let window = SupportBox::new(
                std::array::from_fn(|c| a.support_box.lo[c] - 0.02),
                std::array::from_fn(|c| a.support_box.hi[c] + 0.02),
            )
            .unwrap();
            let sq = a.squared();
            let scale = p.grid_sup(&p.spectral_box());
            resids.push(p.grid_sup_residual(&window, |xi| sq.eval(xi)) / scale);
        }
        for pair in resids.windows(2) {
            assert!(
                pair[1] < pair[0],
                "squared-symbol residual failed to shrink: {resids:?}"
            );
        }
        let fit = loglog_slope(&ladder, &resids, 1e-14);
        assert!(
            fit.decays_at_least(0.4),
            "squared-symbol recovery rate too shallow: {fit:?} from {resids:?}"
        );
    }

    /// The density-grade chart table must reproduce the direct
    /// convolution values between grid nodes.
    #[test]
    fn refined_chart_matches_direct_convolution() {
        let hbar = 1.0 / 8.0;
        let chi = CutoffChi::default();
        let a = calib(hbar);
        let engine =
            Convolver::build(&a, &a, hbar, &chi, &StarOptions::default()).unwrap();
        let radius = engine.ball_radius;
        let p = star_product(
            &a,
            &a,
            hbar,
            &chi,
            &StarOptions {
                refine: 1.0,
                density_grade: true,
                half_density_weight: false,
            },
        )
        .unwrap();
        let dens = p.chart_density(None, 1.0).unwrap();
        let mut peak = 0.0_f64;
        let mut worst = 0.0_f64;
        for i in 0..40 {
            let x = halton_ball_point(i, 0.7 * radius);
            let direct = engine.conv_at(&x) / jac(&x);
            let table = dens.eval(&exp_g(&x));
            peak = peak.max(direct.norm());
            worst = worst.max((table - direct).norm());
        }
        assert!(peak > 0.0);
        assert!(
            worst / peak <= 5e-4,
            "chart table deviates from direct convolution: rel {:.2e}",
            worst / peak
        );
    }
}
