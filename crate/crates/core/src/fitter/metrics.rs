//! Per-vertex reconstruction error summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two readings of a "90% error" statistic, plus the tail mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// Mean of the smallest `⌈0.9 n⌉` errors.
    pub mean_of_smallest_90pct: f64,
    /// Nearest-rank 90th percentile: the `⌈0.9 n⌉`-th smallest error.
    pub p90: f64,
    /// Mean of the errors above the nearest-rank cut (zero if none).
    pub mean_of_largest_10pct: f64,
    pub mean: f64,
    pub max: f64,
}

/// Euclidean per-vertex errors between two flat `[x, y, z, ...]` arrays.
pub fn vertex_errors(fitted: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if fitted.len() != truth.len() || fitted.len() % 3 != 0 {
        return Err(Error::invalid(format!(
            "vertex arrays differ: {} vs {} values",
            fitted.len(),
            truth.len()
        )));
    }
    Ok(fitted
        .chunks_exact(3)
        .zip(truth.chunks_exact(3))
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
        .collect())
}

pub fn vertex_error_stats(fitted: &[f64], truth: &[f64]) -> Result<ErrorStats> {
    let mut errors = vertex_errors(fitted, truth)?;
    if errors.is_empty() {
        return Err(Error::invalid("no vertices to compare"));
    }
    errors.sort_by(f64::total_cmp);
    let n = errors.len();
    let k = nearest_rank(0.9, n);
    let head = &errors[..k];
    let tail = &errors[k..];
    let mean = |s: &[f64]| if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
    Ok(ErrorStats {
        mean_of_smallest_90pct: mean(head),
        p90: errors[k - 1],
        // With fewer than ten vertices the tail is empty; report the worst.
        mean_of_largest_10pct: if tail.is_empty() { errors[n - 1] } else { mean(tail) },
        mean: mean(&errors),
        max: errors[n - 1],
    })
}

/// 1-based nearest rank `⌈p·n⌉`, at least 1.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    // Guard against 0.9 * 10 = 9.000000000000002 style round-up.
    let r = (p * n as f64 - 1e-9).ceil() as usize;
    r.clamp(1, n)
}
