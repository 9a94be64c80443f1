use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest chain the brute-force oracle accepts.
pub const ORACLE_MAX_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverDistribution {
    /// `pmf[t] = P(cover time = t)`.
    pub pmf: Vec<f64>,
    /// Probability mass beyond the last entry.
    pub tail: f64,
}

impl CoverDistribution {
    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(t, p)| t as f64 * p).sum()
    }
}

fn validate(p: &[Vec<f64>]) -> Result<()> {
    let n = p.len();
    if n == 0 || n > ORACLE_MAX_NODES {
        return Err(Error::NotStochastic(format!("need 1..={ORACLE_MAX_NODES} nodes, got {n}")));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NotStochastic(format!("row {i} has {} entries", row.len())));
        }
        if row.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(Error::NotStochastic(format!("row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
        }
    }
    // strong connectivity by transitive closure
    let mut reach: Vec<u32> = p
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().filter(|(_, &x)| x > 0.0).fold(1 << i, |m, (j, _)| m | 1 << j))
        .collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i] >> k & 1 == 1 {
                reach[i] |= reach[k];
            }
        }
    }
    let all = (1u32 << n) - 1;
    if reach.iter().any(|&r| r != all) {
        return Err(Error::Disconnected);
    }
    Ok(())
}

/// Exact cover-time distribution of the chain `p` (row `i` holds the
/// transition probabilities out of node `i`) started at `start`, by dynamic
/// programming over (node, visited set). Stops once the uncovered mass drops
/// below `1e-16` or after `horizon` steps.
pub fn exact_cover_oracle(p: &[Vec<f64>], start: usize, horizon: usize) -> Result<CoverDistribution> {
    validate(p)?;
    let n = p.len();
    if start >= n {
        return Err(Error::InvalidParams(format!("start node {start} out of range")));
    }
    let full = (1usize << n) - 1;
    let idx = |node: usize, mask: usize| (mask << 3) | node;
    let mut mass = vec![0.0f64; 8 << n];
    mass[idx(start, 1 << start)] = 1.0;
    let mut pmf = Vec::new();
    let mut remaining = 1.0;
    for _ in 0..=horizon {
        let covered: f64 = (0..n).map(|v| mass[idx(v, full)]).sum();
        pmf.push(covered);
        remaining -= covered;
        if remaining < 1e-16 {
            return Ok(CoverDistribution { pmf, tail: 0.0 });
        }
        let mut next = vec![0.0f64; mass.len()];
        for mask in 1..full {
            for u in 0..n {
                let m = mass[idx(u, mask)];
                if m == 0.0 {
                    continue;
                }
                for (v, &w) in p[u].iter().enumerate() {
                    if w > 0.0 {
                        next[idx(v, mask | 1 << v)] += m * w;
                    }
                }
            }
        }
        mass = next;
    }
    Ok(CoverDistribution {
        pmf,
        tail: remaining.max(0.0),
    })
}
