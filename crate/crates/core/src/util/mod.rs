//! Shared numeric utilities: deterministic RNG, quadrature, small complex
//! linear algebra, Bessel functions.

pub mod bessel;
pub mod linalg;
pub mod quad;
pub mod rng;

/// Batch-means standard error of a sequence of (possibly complex-projected)
/// real observations. Uses at least 2 and at most `max_batches` batches;
/// callers that need the acceptance convention pass 30.
pub fn batch_means_stderr(xs: &[f64], max_batches: usize) -> f64 {
    let n = xs.len();
    if n < 4 {
        return f64::INFINITY;
    }
    let b = max_batches.clamp(2, n / 2);
    let per = n / b;
    let used = per * b;
    let means: Vec<f64> = (0..b)
        .map(|i| xs[i * per..(i + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (b as f64 - 1.0);
    let _ = used;
    (var / b as f64).sqrt()
}

/// Mean and batch-means standard error in one pass.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    (mean, batch_means_stderr(xs, 30))
}
