//! Statistics helpers shared by the sampling tests: batch means for
//! autocorrelated series, ordinary least squares, and a one-sample
//! Kolmogorov-Smirnov statistic.

/// Mean and standard error estimated from `batches` contiguous batches.
/// Correct for autocorrelated sequences as long as batches are much longer
/// than the correlation time.
pub fn batch_mean_se(values: &[f64], batches: usize) -> (f64, f64) {
    assert!(batches >= 2 && values.len() >= batches);
    let chunk = values.len() / batches;
    let used = chunk * batches;
    let mut means = Vec::with_capacity(batches);
    for b in 0..batches {
        let slice = &values[b * chunk..(b + 1) * chunk];
        means.push(slice.iter().sum::<f64>() / chunk as f64);
    }
    let grand = values[..used].iter().sum::<f64>() / used as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches - 1) as f64;
    (grand, (var / batches as f64).sqrt())
}

/// Least-squares line fit `y = slope * x + intercept`, returning
/// `(slope, intercept, slope_std_error)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    assert!(n >= 3.0);
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    let se = (ss_res / (n - 2.0) / sxx).sqrt();
    (slope, intercept, se)
}

/// One-sample KS statistic of `samples` against a CDF given as a closure.
/// `samples` need not be sorted.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic 99% critical value for the one-sample KS statistic.
pub fn ks_critical_99(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
