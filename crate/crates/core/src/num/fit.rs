/// Least-squares line fit `y = slope * x + intercept`.
///
/// Returns `(slope, intercept)`. Panics if fewer than two points.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Outcome of a log-log power-law fit of `|values|` against a parameter.
#[derive(Debug, Clone, Copy)]
pub enum PowerLaw {
    /// Fitted exponent and intercept of `log|v| = slope * log h + c`.
    Slope { slope: f64, intercept: f64 },
    /// Every sample was below the floor; the quantity vanishes
    /// identically to machine precision and no exponent is defined.
    BelowFloor { max_abs: f64 },
}

/// Fit `log |values|` against `log params`. Samples with `|v|` below
/// `floor` are dropped; if all of them are, the quantity is reported as
/// identically zero rather than fitted.
pub fn loglog_slope(params: &[f64], values: &[f64], floor: f64) -> PowerLaw {
    assert_eq!(params.len(), values.len());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut max_abs: f64 = 0.0;
    for (p, v) in params.iter().zip(values) {
        max_abs = max_abs.max(v.abs());
        if v.abs() > floor {
            xs.push(p.ln());
            ys.push(v.abs().ln());
        }
    }
    if xs.len() < 2 {
        return PowerLaw::BelowFloor { max_abs };
    }
    let (slope, intercept) = fit_line(&xs, &ys);
    PowerLaw::Slope { slope, intercept }
}

impl PowerLaw {
    /// True when the decay is at least `min_slope` as the parameter
    /// shrinks (values exactly zero count as infinitely fast decay).
    pub fn decays_at_least(&self, min_slope: f64) -> bool {
        match self {
            PowerLaw::Slope { slope, .. } => *slope >= min_slope,
            PowerLaw::BelowFloor { .. } => true,
        }
    }

    pub fn slope_or_nan(&self) -> f64 {
        match self {
            PowerLaw::Slope { slope, .. } => *slope,
            PowerLaw::BelowFloor { .. } => f64::NAN,
        }
    }
}
