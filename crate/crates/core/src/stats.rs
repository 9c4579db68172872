//! Percentile bootstrap over per-seed summary values.

use alloc::vec::Vec;

use crate::rng::Stream;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Empirical quantile of sorted data, nearest-rank on `(n - 1) * q`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = libm::round(q * (sorted.len() - 1) as f64) as usize;
    sorted[pos.min(sorted.len() - 1)]
}

fn resampled_mean(xs: &[f64], stream: &mut Stream) -> f64 {
    let mut total = 0.0;
    for _ in 0..xs.len() {
        total += xs[stream.index(xs.len())];
    }
    total / xs.len() as f64
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs
}

/// Two-sided `1 - alpha` percentile interval for the mean of `xs`.
pub fn mean_ci(xs: &[f64], alpha: f64, resamples: usize, stream: &mut Stream) -> (f64, f64) {
    let means = sorted((0..resamples).map(|_| resampled_mean(xs, stream)).collect());
    (quantile(&means, alpha / 2.0), quantile(&means, 1.0 - alpha / 2.0))
}

/// `(alpha, 1 - alpha)` quantiles of the bootstrap distribution of
/// `mean(a) - mean(b)`, resampling the two samples independently. The lower
/// end is a one-sided `1 - alpha` lower confidence bound.
pub fn diff_bounds(a: &[f64], b: &[f64], alpha: f64, resamples: usize, stream: &mut Stream) -> (f64, f64) {
    let diffs = sorted(
        (0..resamples)
            .map(|_| resampled_mean(a, stream) - resampled_mean(b, stream))
            .collect(),
    );
    (quantile(&diffs, alpha), quantile(&diffs, 1.0 - alpha))
}
