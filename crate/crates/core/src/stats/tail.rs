use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted survival `S(t) ≈ lambda^(t / r_scale)` over the upper tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub lambda: f64,
    pub r_scale: f64,
    pub r_squared: f64,
}

const MIN_SAMPLES: usize = 50;

/// Least-squares fit of `ln S(t)` against `t / r_scale` using every sample
/// strictly above the median, with `S(t) = P(T >= t)` from the empirical law.
pub fn fit_geometric_tail(times: &[u64], r_scale: f64) -> Result<TailFit> {
    if times.len() < MIN_SAMPLES {
        return Err(Error::InvalidParams(format!(
            "tail fit needs at least {MIN_SAMPLES} samples, got {}",
            times.len()
        )));
    }
    if !(r_scale.is_finite() && r_scale > 0.0) {
        return Err(Error::InvalidParams(format!("r_scale must be positive, got {r_scale}")));
    }
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = sorted[n / 2];
    let first_above = sorted.partition_point(|&t| t <= median);
    if first_above >= n {
        return Err(Error::NoTail("no samples above the median".into()));
    }

    let mut xs = Vec::with_capacity(n - first_above);
    let mut ys = Vec::with_capacity(n - first_above);
    let mut k = first_above;
    while k < n {
        let t = sorted[k];
        // S(t) = #(T >= t) / n, shared by every tied sample
        let survival = (n - k) as f64 / n as f64;
        let end = k + sorted[k..].partition_point(|&s| s == t);
        for _ in k..end {
            xs.push(t as f64 / r_scale);
            ys.push(survival.ln());
        }
        k = end;
    }
    if xs.first() == xs.last() {
        return Err(Error::NoTail("upper tail has a single distinct value".into()));
    }

    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::NoTail(format!("survival does not decay (slope {slope})")));
    }
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(TailFit {
        lambda: slope.exp(),
        r_scale,
        r_squared,
    })
}
