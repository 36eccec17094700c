//! Primal gap, primal-dual gap and integral, diversity index and summary
//! statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEvent {
    /// Seconds since the start of the solve.
    pub time: f64,
    /// Incumbent objective, `+inf` while none is known.
    pub primal: f64,
    /// Dual bound, `-inf` while none is known.
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trace is not monotone at event {0}")]
    NonMonotoneTrace(usize),
    #[error("t_end {t_end} precedes the last event at {last}")]
    EndBeforeLastEvent { t_end: f64, last: f64 },
}

/// Relative distance of `z` from the reference objective; absolute distance
/// when the reference is zero.
pub fn primal_gap(z: f64, z_ref: f64) -> f64 {
    let diff = (z - z_ref).abs();
    if z_ref.abs() > 0.0 {
        diff / z_ref.abs()
    } else {
        diff
    }
}

/// Gap between a primal and a dual value, in `[0, 1]`. Opposite signs, zeros
/// and infinities give 1.
pub fn primal_dual_gap(z: f64, z_star: f64) -> f64 {
    let comparable = z.is_finite()
        && z_star.is_finite()
        && z != 0.0
        && z_star != 0.0
        && (z > 0.0) == (z_star > 0.0);
    if comparable {
        (z - z_star).abs() / z.abs().max(z_star.abs())
    } else {
        1.0
    }
}

/// Integrates the primal-dual gap over `[0, t_end]`, holding each event's gap
/// until the next event. The gap is 1 before the first event.
pub fn primal_dual_integral(trace: &[BoundEvent], t_end: f64) -> Result<f64, MetricsError> {
    for (i, w) in trace.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if b.time <= a.time || b.primal > a.primal || b.dual < a.dual {
            return Err(MetricsError::NonMonotoneTrace(i + 1));
        }
    }
    if let Some(last) = trace.last() {
        if t_end < last.time {
            return Err(MetricsError::EndBeforeLastEvent { t_end, last: last.time });
        }
    }
    let mut total = 0.0;
    let mut t = 0.0;
    let mut gap = 1.0;
    for ev in trace {
        let start = ev.time.max(0.0);
        total += gap * (start - t);
        t = start;
        gap = primal_dual_gap(ev.primal, ev.dual);
    }
    total += gap * (t_end - t);
    Ok(total)
}

/// Shannon entropy (bits) of the histogram of `scores` over `ceil(sqrt(N))`
/// equal-width bins, normalized by `log2 N`. Returns 0 for `N <= 1` or when
/// all scores are equal.
pub fn diversity_index(scores: &[f64]) -> f64 {
    let n = scores.len();
    if n <= 1 {
        return 0.0;
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo || !(hi - lo).is_finite() {
        return 0.0;
    }
    let bins = (n as f64).sqrt().ceil() as usize;
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &s in scores {
        let b = (((s - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum();
    (entropy / (n as f64).log2()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub variance: f64,
}

/// Mean, sample variance (`N-1` denominator) and standard error of the mean.
pub fn summarize(samples: &[f64]) -> Summary {
    let n = samples.len();
    if n == 0 {
        return Summary { mean: f64::NAN, std_error: f64::NAN, variance: f64::NAN };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Summary { mean, std_error: (variance / n as f64).sqrt(), variance }
}
