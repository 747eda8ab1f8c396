//! Summary statistics for replicated metrics.

/// Least-squares slope of `y` on `x`. `None` with fewer than two points or
/// constant `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "ols_slope: length mismatch");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope of `log err` against `log d`, skipping non-finite or non-positive errors.
pub fn log_log_slope(ds: &[usize], errs: &[f64]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = ds
        .iter()
        .zip(errs)
        .filter(|(_, e)| e.is_finite() && **e > 0.0)
        .map(|(&d, e)| ((d as f64).ln(), e.ln()))
        .unzip();
    ols_slope(&x, &y)
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `NaN` for empty input.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}
