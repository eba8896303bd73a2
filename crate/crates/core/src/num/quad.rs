use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; nodes are returned in
/// increasing order. Exact (to roundoff) for polynomials of degree
/// `2n - 1`, and spectrally accurate for smooth integrands.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(z) and P_n'(z) by upward recurrence.
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre rule scaled to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Midpoint nodes on `[a, b]` with uniform weight `(b-a)/n`.
///
/// For smooth integrands supported strictly inside the interval this is
/// spectrally accurate (all Euler-Maclaurin boundary terms vanish), and
/// the node set is symmetric about the midpoint.
pub fn midpoint_nodes(n: usize, a: f64, b: f64) -> (Vec<f64>, f64) {
    assert!(n >= 1 && b > a);
    let h = (b - a) / n as f64;
    ((0..n).map(|i| a + (i as f64 + 0.5) * h).collect(), h)
}

/// Neumaier compensated accumulator. Summation order is up to the
/// caller; reductions in this crate always run in a fixed index order so
/// results are independent of thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Complex compensated accumulator (componentwise Neumaier).
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSumC {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl NeumaierSumC {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: Complex64) {
        self.re.add(v.re);
        self.im.add(v.im);
    }

    #[inline]
    pub fn total(&self) -> Complex64 {
        Complex64::new(self.re.total(), self.im.total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_five_point_matches_reference() {
        let (x, w) = gauss_legendre(5);
        // Abramowitz & Stegun 25.4.30 values.
        assert_abs_diff_eq!(x[0], -0.906_179_845_938_664, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], -0.538_469_310_105_683, epsilon = 1e-12);
        assert_abs_diff_eq!(x[2], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 0.236_926_885_056_189, epsilon = 1e-12);
        assert_abs_diff_eq!(w[2], 0.568_888_888_888_889, epsilon = 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre_on(8, 0.0, 2.0);
        // degree 15 is exact for an 8-point rule
        let val: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t.powi(15)).sum();
        assert_abs_diff_eq!(val, 2.0_f64.powi(16) / 16.0, epsilon = 1e-9);
    }

    #[test]
    fn midpoint_is_spectral_for_interior_bumps() {
        // The trapezoid/midpoint rule converges super-algebraically for
        // smooth compactly supported integrands; the error tracks the
        // Fourier tail of the bump, so doubling the node count should
        // collapse the discrepancy by many orders of magnitude.
        let f = |t: f64| super::super::bump::bump(t / 0.8);
        let quad = |n: usize| -> f64 {
            let (xs, h) = midpoint_nodes(n, -1.0, 1.0);
            xs.iter().map(|t| f(*t)).sum::<f64>() * h
        };
        let (s64, s128, s512) = (quad(64), quad(128), quad(512));
        let coarse_err = (s64 - s512).abs();
        let mid_err = (s128 - s512).abs();
        assert!(coarse_err < 1e-5, "64-node error {coarse_err}");
        assert!(mid_err < 1e-8, "128-node error {mid_err}");
        assert!(mid_err < coarse_err * 1e-2, "no spectral collapse");
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let mut acc = NeumaierSum::new();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(0.1);
        }
        acc.add(-1e16);
        assert_abs_diff_eq!(acc.total(), 1.0, epsilon = 1e-12);
    }
}
