use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub mi_nats: f64,
    pub permutation_p: f64,
    pub sample_count: usize,
    pub bin_count: usize,
}

/// Equal-width bins on `[lo, hi]`; values outside are clamped to the edge
/// bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl StepBins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(hi > lo && count > 0) {
            return Err(Error::InvalidParams(format!("bad binning [{lo}, {hi}] x {count}")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn index(&self, v: f64) -> usize {
        let f = (v - self.lo) / (self.hi - self.lo);
        ((f * self.count as f64).floor().max(0.0) as usize).min(self.count - 1)
    }
}

const MIN_PERMUTATIONS: usize = 200;

/// Plug-in mutual information (nats) of a contingency table given as cell
/// indices `bins[k]`, `labels[k]`.
pub fn plugin_mi(bins: &[usize], labels: &[usize], bin_count: usize, label_count: usize) -> f64 {
    let n = bins.len() as f64;
    let mut joint = vec![0usize; bin_count * label_count];
    let mut by_bin = vec![0usize; bin_count];
    let mut by_label = vec![0usize; label_count];
    for (&b, &l) in bins.iter().zip(labels) {
        joint[b * label_count + l] += 1;
        by_bin[b] += 1;
        by_label[l] += 1;
    }
    let mut mi = 0.0;
    for b in 0..bin_count {
        for l in 0..label_count {
            let c = joint[b * label_count + l];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (by_bin[b] as f64 * by_label[l] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Binned mutual information between step size and map label, with a
/// label-permutation P-value `(1 + #{perm >= observed}) / (1 + permutations)`.
pub fn mi_estimate<R: Rng + ?Sized>(
    samples: &[(f64, usize)],
    bins: StepBins,
    permutations: usize,
    rng: &mut R,
) -> Result<MiReport> {
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidParams(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {permutations}"
        )));
    }
    let mut distinct: Vec<usize> = samples.iter().map(|s| s.1).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::SingleLabel);
    }
    let mut labels: Vec<usize> = samples
        .iter()
        .map(|s| distinct.binary_search(&s.1).unwrap_or(0))
        .collect();
    let mut sizes = vec![0usize; distinct.len()];
    for &l in &labels {
        sizes[l] += 1;
    }
    let (lo, hi) = (sizes.iter().min().copied().unwrap_or(0), sizes.iter().max().copied().unwrap_or(0));
    if (hi - lo) as f64 > 0.1 * hi as f64 {
        return Err(Error::Unbalanced(format!("label sizes range {lo}..{hi}")));
    }
    let cells: Vec<usize> = samples.iter().map(|s| bins.index(s.0)).collect();
    let observed = plugin_mi(&cells, &labels, bins.count, distinct.len());
    let tol = 1e-12 * observed.max(1e-300);
    let mut at_least = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if plugin_mi(&cells, &labels, bins.count, distinct.len()) >= observed - tol {
            at_least += 1;
        }
    }
    Ok(MiReport {
        mi_nats: observed,
        permutation_p: (1 + at_least) as f64 / (1 + permutations) as f64,
        sample_count: samples.len(),
        bin_count: bins.count,
    })
}
