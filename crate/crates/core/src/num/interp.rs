use super::grid::{Grid3, UniformGrid1};
use num_complex::Complex64;
use std::ops::{Add, Mul};

/// Lagrange cubic through four consecutive uniform samples at
/// positions -1, 0, 1, 2, evaluated at fractional position `t` in
/// `[0, 1]` between `p0` and `p1`. Exact on cubics, fourth-order
/// accurate on smooth data.
#[inline]
pub fn cubic4<T>(pm1: T, p0: T, p1: T, p2: T, t: f64) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let lm1 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let l0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let l1 = -t * (t + 1.0) * (t - 2.0) / 2.0;
    let l2 = t * (t + 1.0) * (t - 1.0) / 6.0;
    pm1 * lm1 + p0 * l0 + p1 * l1 + p2 * l2
}

#[inline]
fn stencil(n: usize, u: f64) -> Option<(f64, [usize; 4])> {
    if !u.is_finite() || n < 4 || u < 0.0 || u > (n - 1) as f64 {
        return None;
    }
    let i = (u.floor() as usize).min(n - 2);
    // Shift the window at the edges so all four nodes stay distinct;
    // the local coordinate then ranges over [-1, 2] instead of [0, 1].
    let j = i.saturating_sub(1).min(n - 4);
    let t = u - (j + 1) as f64;
    Some((t, [j, j + 1, j + 2, j + 3]))
}

/// Cubic interpolation of a uniformly sampled table; zero outside the
/// sampled range.
pub fn cubic_table(grid: &UniformGrid1, values: &[f64], x: f64) -> f64 {
    debug_assert_eq!(values.len(), grid.n);
    match stencil(grid.n, (x - grid.lo) / grid.step) {
        Some((t, [a, b, c, d])) => cubic4(values[a], values[b], values[c], values[d], t),
        None => 0.0,
    }
}

/// Cubic interpolation of a uniformly sampled complex table; zero
/// outside the sampled range.
pub fn cubic_table_complex(grid: &UniformGrid1, values: &[Complex64], x: f64) -> Complex64 {
    debug_assert_eq!(values.len(), grid.n);
    match stencil(grid.n, (x - grid.lo) / grid.step) {
        Some((t, [a, b, c, d])) => cubic4(values[a], values[b], values[c], values[d], t),
        None => Complex64::new(0.0, 0.0),
    }
}

/// Separable tricubic interpolation of complex samples on a 3-d uniform
/// grid; zero outside the grid box. `values` is flat in `Grid3` order.
pub fn tricubic_complex(grid: &Grid3, values: &[Complex64], x: [f64; 3]) -> Complex64 {
    debug_assert_eq!(values.len(), grid.len());
    let s0 = stencil(grid.axes[0].n, (x[0] - grid.axes[0].lo) / grid.axes[0].step);
    let s1 = stencil(grid.axes[1].n, (x[1] - grid.axes[1].lo) / grid.axes[1].step);
    let s2 = stencil(grid.axes[2].n, (x[2] - grid.axes[2].lo) / grid.axes[2].step);
    let (Some((t0, i0)), Some((t1, i1)), Some((t2, i2))) = (s0, s1, s2) else {
        return Complex64::new(0.0, 0.0);
    };
    let mut plane = [Complex64::new(0.0, 0.0); 4];
    for (pi, &a) in i0.iter().enumerate() {
        let mut line = [Complex64::new(0.0, 0.0); 4];
        for (li, &b) in i1.iter().enumerate() {
            let vals: Vec<Complex64> = i2.iter().map(|&c| values[grid.idx(a, b, c)]).collect();
            line[li] = cubic4(vals[0], vals[1], vals[2], vals[3], t2);
        }
        plane[pi] = cubic4(line[0], line[1], line[2], line[3], t1);
    }
    cubic4(plane[0], plane[1], plane[2], plane[3], t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cubic_reproduces_cubics_exactly() {
        let g = UniformGrid1::new(-2.0, 0.5, 12);
        let f = |x: f64| 0.3 * x * x * x - x * x + 2.0 * x - 0.7;
        let vals: Vec<f64> = g.nodes().map(f).collect();
        for &x in &[-1.3, 0.12, 2.4, 3.1] {
            assert_abs_diff_eq!(cubic_table(&g, &vals, x), f(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn cubic_is_fourth_order_on_smooth_data() {
        let f = |x: f64| (1.3 * x).sin();
        let err = |n: usize| -> f64 {
            let g = UniformGrid1::new(0.0, 2.0 / (n - 1) as f64, n);
            let vals: Vec<f64> = g.nodes().map(f).collect();
            (0..400)
                .map(|k| 0.3 + 1.4 * k as f64 / 399.0)
                .map(|x| (cubic_table(&g, &vals, x) - f(x)).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 10.0, "expected ~16x error drop, got {ratio}");
    }

    #[test]
    fn tricubic_matches_separable_product() {
        let axes = [
            UniformGrid1::new(-1.0, 0.25, 9),
            UniformGrid1::new(0.0, 0.2, 11),
            UniformGrid1::new(-0.5, 0.125, 9),
        ];
        let grid = Grid3::new(axes);
        let f = |x: [f64; 3]| {
            Complex64::new((0.7 * x[0]).cos() * (x[1] - 0.3), (x[2] * 1.1).sin() * x[0])
        };
        let vals: Vec<Complex64> = grid.node_iter().map(f).collect();
        let p = [0.23, 1.07, 0.31];
        let got = tricubic_complex(&grid, &vals, p);
        let want = f(p);
        assert_abs_diff_eq!(got.re, want.re, epsilon = 2e-4);
        assert_abs_diff_eq!(got.im, want.im, epsilon = 2e-4);
    }

    #[test]
    fn complex_table_agrees_with_real_tables_per_part() {
        let g = UniformGrid1::new(-1.0, 0.1, 25);
        let f = |x: f64| Complex64::new((2.0 * x).cos(), x * x - 0.4);
        let vals: Vec<Complex64> = g.nodes().map(f).collect();
        let re: Vec<f64> = vals.iter().map(|v| v.re).collect();
        let im: Vec<f64> = vals.iter().map(|v| v.im).collect();
        for &x in &[-0.77, 0.03, 1.21] {
            let c = cubic_table_complex(&g, &vals, x);
            assert_abs_diff_eq!(c.re, cubic_table(&g, &re, x), epsilon = 1e-14);
            assert_abs_diff_eq!(c.im, cubic_table(&g, &im, x), epsilon = 1e-14);
        }
    }

    #[test]
    fn outside_the_box_is_zero() {
        let g = UniformGrid1::new(0.0, 1.0, 4);
        let vals = vec![1.0; 4];
        assert_eq!(cubic_table(&g, &vals, -0.5), 0.0);
        assert_eq!(cubic_table(&g, &vals, 3.5), 0.0);
    }
}
