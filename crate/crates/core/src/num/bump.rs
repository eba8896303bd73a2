use super::grid::UniformGrid1;
use super::interp::cubic_table;
use super::quad::midpoint_nodes;
use std::sync::OnceLock;

/// Standard even bump: `exp(1 - 1/(1 - v^2))` on `(-1, 1)`, zero
/// outside, normalized to `1` at the origin. Smooth on all of `R`.
#[inline]
pub fn bump(v: f64) -> f64 {
    let w = 1.0 - v * v;
    if w <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / w).exp()
    }
}

#[inline]
fn ramp(w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        (-1.0 / w).exp()
    }
}

/// Smooth monotone step: identically 0 for `w <= 0`, identically 1 for
/// `w >= 1`, C-infinity in between.
#[inline]
pub fn smooth_step(w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else if w >= 1.0 {
        1.0
    } else {
        let a = ramp(w);
        a / (a + ramp(1.0 - w))
    }
}

/// Radial cutoff profile: 1 for `r <= r0`, 0 for `r >= r1`, smoothly
/// decreasing in between. Requires `r0 < r1`.
#[inline]
pub fn cutoff_profile(r: f64, r0: f64, r1: f64) -> f64 {
    debug_assert!(r0 < r1);
    smooth_step((r1 - r) / (r1 - r0))
}

const HAT_STEP: f64 = 0.02;
const HAT_MAX: f64 = 120.0;
const HAT_QUAD: usize = 768;

fn hat_table() -> &'static (UniformGrid1, Vec<f64>) {
    static TABLE: OnceLock<(UniformGrid1, Vec<f64>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = (HAT_MAX / HAT_STEP) as usize + 4;
        let grid = UniformGrid1::new(0.0, HAT_STEP, n);
        let (vs, h) = midpoint_nodes(HAT_QUAD, 0.0, 1.0);
        let samples: Vec<f64> = vs.iter().map(|&v| bump(v)).collect();
        let values = grid
            .nodes()
            .map(|s| {
                2.0 * h
                    * vs.iter()
                        .zip(&samples)
                        .map(|(&v, &b)| b * (s * v).cos())
                        .sum::<f64>()
            })
            .collect();
        (grid, values)
    })
}

/// Fourier transform of `bump`:
/// `bump_hat(s) = integral of bump(v) exp(-i s v) dv` over `[-1, 1]`.
///
/// Real and even because `bump` is. Served from a cached table with
/// cubic interpolation; the table covers `|s| <= 120`, beyond which the
/// transform is below `1e-8` and is returned as 0.
pub fn bump_hat(s: f64) -> f64 {
    let (grid, values) = hat_table();
    let s = s.abs();
    if s >= HAT_MAX {
        0.0
    } else {
        cubic_table(grid, values, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::quad::gauss_legendre_on;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bump_endpoints_and_peak() {
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-1.2), 0.0);
        assert_eq!(bump(0.0), 1.0);
        assert!(bump(0.999_999) < 1e-100);
    }

    #[test]
    fn smooth_step_partition() {
        for w in [-0.5, 0.0, 0.2, 0.5, 0.9, 1.0, 1.7] {
            let s = smooth_step(w);
            assert!((0.0..=1.0).contains(&s));
            assert_abs_diff_eq!(s + smooth_step(1.0 - w), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(smooth_step(0.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn cutoff_profile_plateaus() {
        assert_eq!(cutoff_profile(0.1, 0.2, 0.4), 1.0);
        assert_eq!(cutoff_profile(0.2, 0.2, 0.4), 1.0);
        assert_eq!(cutoff_profile(0.41, 0.2, 0.4), 0.0);
        let mid = cutoff_profile(0.3, 0.2, 0.4);
        assert!(mid > 0.0 && mid < 1.0);
    }

    /// Independent slow oracle: adaptive-order Gauss-Legendre on the
    /// half interval against the cached table.
    #[test]
    fn hat_matches_direct_quadrature() {
        for &s in &[0.0, 0.73, 1.7, 5.11, 13.3, 29.9] {
            let (x, w) = gauss_legendre_on(240, 0.0, 1.0);
            let direct: f64 = 2.0
                * x.iter()
                    .zip(&w)
                    .map(|(&v, &wv)| wv * bump(v) * (s * v).cos())
                    .sum::<f64>();
            assert_abs_diff_eq!(bump_hat(s), direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn hat_is_even_and_decays() {
        assert_eq!(bump_hat(3.7), bump_hat(-3.7));
        assert!(bump_hat(0.0) > 1.0); // integral of the bump is ~1.207
        assert!(bump_hat(60.0).abs() < 1e-4);
        assert_eq!(bump_hat(150.0), 0.0);
    }
}
