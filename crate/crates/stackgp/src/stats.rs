//! Small numeric helpers: affine least squares, dispersion, medians.

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Least-squares `(a, b)` minimizing `sum((a*x + b - y)^2)`.
///
/// `None` when the fit is degenerate: fewer than two points, zero variance
/// in `x`, or non-finite inputs.
pub fn affine_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        sxx += dx * dx;
        sxy += dx * (yi - my);
    }
    if !(sxx.is_finite() && sxy.is_finite()) || sxx <= 0.0 {
        return None;
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    (a.is_finite() && b.is_finite()).then_some((a, b))
}

/// `1 - R^2` of the best affine fit of `outputs` onto `responses`, the
/// accuracy loss to minimize. Computed from residuals rather than the
/// correlation identity so losses near zero keep full precision. Degenerate
/// cases (zero variance on either side, non-finite values) return exactly 1.
pub fn affine_loss(outputs: &[f64], responses: &[f64]) -> f64 {
    let Some((a, b)) = affine_fit(outputs, responses) else {
        return 1.0;
    };
    let my = mean(responses);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&m, &y) in outputs.iter().zip(responses) {
        let r = a * m + b - y;
        ss_res += r * r;
        let d = y - my;
        ss_tot += d * d;
    }
    if !(ss_res.is_finite() && ss_tot.is_finite()) || ss_tot <= 0.0 {
        return 1.0;
    }
    (ss_res / ss_tot).clamp(0.0, 1.0)
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Mean of absolute values after dropping `floor(frac * n)` entries from
/// each end of the sorted absolute values.
pub fn trimmed_mean_abs(values: &[f64], frac: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let drop = ((frac * abs.len() as f64).floor() as usize).min((abs.len() - 1) / 2);
    let kept = &abs[drop..abs.len() - drop];
    mean(kept)
}

/// Median; mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
