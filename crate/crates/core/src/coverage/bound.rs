use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{is_traversable, CompressedMap};
use crate::error::{Error, Result};

/// Pairwise traversal quantiles `q(u, v)` over the free bins of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub bins: Vec<usize>,
    /// Row-major `bins.len()²` matrix; row = from, column = to.
    pub values: Vec<f64>,
    pub level: f64,
    #[serde(skip)]
    slot: Vec<Option<usize>>,
}

impl QuantileTable {
    pub fn new(cm: &CompressedMap, values: Vec<f64>, level: f64) -> Result<Self> {
        let bins: Vec<usize> = cm.free_bins().collect();
        if values.len() != bins.len() * bins.len() {
            return Err(Error::InvalidParams(format!(
                "quantile table has {} entries for {} bins",
                values.len(),
                bins.len()
            )));
        }
        let mut slot = vec![None; cm.bin_count()];
        for (i, &b) in bins.iter().enumerate() {
            slot[b] = Some(i);
        }
        Ok(Self {
            bins,
            values,
            level,
            slot,
        })
    }

    /// Quantile of the time to reach bin `to` from bin `from`.
    pub fn get(&self, from: usize, to: usize) -> f64 {
        let n = self.bins.len();
        match (self.slot.get(from).copied().flatten(), self.slot.get(to).copied().flatten()) {
            (Some(i), Some(j)) => self.values[i * n + j],
            _ => f64::INFINITY,
        }
    }
}

/// Per-traversal confidence level used by the bound for `n` free bins.
pub fn traversal_level(n: usize, delta: f64) -> f64 {
    1.0 - delta / (2 * n.max(1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "seed", rename_all = "snake_case")]
pub enum Partition {
    /// Greedy matching of physically adjacent groups, leftovers paired by
    /// graph distance.
    Adjacent,
    /// Uniformly random pairs.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub t_bound: f64,
    pub confidence: f64,
    pub rounds: usize,
    pub union_bounds_used: usize,
    /// Per-traversal quantile level the inputs must have been taken at.
    pub traversal_level: f64,
    pub bins: usize,
}

#[derive(Debug, Clone)]
struct Group {
    bins: Vec<usize>,
    value: f64,
}

fn all_pairs_hops(cm: &CompressedMap, bins: &[usize]) -> Vec<Vec<usize>> {
    bins.iter()
        .map(|&b| {
            let d = cm.bfs_distances(b);
            bins.iter().map(|&o| d[o].unwrap_or(usize::MAX)).collect()
        })
        .collect()
}

fn group_distance(a: &Group, b: &Group, hops: &[Vec<usize>], slot: &[usize]) -> usize {
    a.bins
        .iter()
        .flat_map(|&u| b.bins.iter().map(move |&v| hops[slot[u]][slot[v]]))
        .min()
        .unwrap_or(usize::MAX)
}

/// Splits groups into pairs plus at most one singleton.
fn pair_up(groups: &[Group], partition: Partition, rng: &mut ChaCha8Rng, hops: &[Vec<usize>], slot: &[usize]) -> Vec<Vec<usize>> {
    let n = groups.len();
    match partition {
        Partition::Random(_) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order.chunks(2).map(|c| c.to_vec()).collect()
        }
        Partition::Adjacent => {
            let mut matched = vec![false; n];
            let mut out = Vec::with_capacity(n / 2 + 1);
            for a in 0..n {
                if matched[a] {
                    continue;
                }
                let partner = (a + 1..n).find(|&b| !matched[b] && group_distance(&groups[a], &groups[b], hops, slot) == 1);
                if let Some(b) = partner {
                    matched[a] = true;
                    matched[b] = true;
                    out.push(vec![a, b]);
                }
            }
            let mut left: Vec<usize> = (0..n).filter(|&g| !matched[g]).collect();
            while left.len() > 1 {
                let a = left.remove(0);
                let (pos, _) = left
                    .iter()
                    .enumerate()
                    .min_by_key(|&(_, &b)| group_distance(&groups[a], &groups[b], hops, slot))
                    .unwrap_or((0, &0));
                let b = left.remove(pos);
                out.push(vec![a, b]);
            }
            out.extend(left.into_iter().map(|g| vec![g]));
            out
        }
    }
}

/// Worst start in `from`, nearest target in `to`.
fn traversal<F: Fn(usize, usize) -> f64>(from: &Group, to: &Group, quantile: &F) -> f64 {
    from.bins
        .iter()
        .map(|&u| to.bins.iter().map(|&v| quantile(u, v)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// High-probability cover-time bound by repeated pairwise merging. Each
/// merge of groups 1 and 2 takes `max{t(1→2) + T2, t(2→1) + T1}` where `T` is
/// the accumulated exploration time of a group. `quantile(u, v)` must be the
/// `1 - δ/(2N)` quantile of the passage time from bin `u` to bin `v`.
pub fn hierarchical_bound<F>(cm: &CompressedMap, quantile: F, delta: f64, partition: Partition) -> Result<BoundResult>
where
    F: Fn(usize, usize) -> f64,
{
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!("delta must lie in (0, 1), got {delta}")));
    }
    let bins: Vec<usize> = cm.free_bins().collect();
    let n = bins.len();
    if n == 0 {
        return Err(Error::NoFreeSpace);
    }
    if !is_traversable(cm) {
        return Err(Error::Disconnected);
    }
    let mut slot = vec![usize::MAX; cm.bin_count()];
    for (i, &b) in bins.iter().enumerate() {
        slot[b] = i;
    }
    let hops = match partition {
        Partition::Adjacent => all_pairs_hops(cm, &bins),
        Partition::Random(_) => Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(match partition {
        Partition::Random(seed) => seed,
        Partition::Adjacent => 0,
    });
    let mut groups: Vec<Group> = bins.iter().map(|&b| Group { bins: vec![b], value: 0.0 }).collect();
    let mut rounds = 0;
    while groups.len() > 1 {
        let pairs = pair_up(&groups, partition, &mut rng, &hops, &slot);
        groups = pairs
            .into_iter()
            .map(|p| match p.as_slice() {
                [a, b] => {
                    let (ga, gb) = (&groups[*a], &groups[*b]);
                    let value = (traversal(ga, gb, &quantile) + gb.value).max(traversal(gb, ga, &quantile) + ga.value);
                    let mut merged = ga.bins.clone();
                    merged.extend_from_slice(&gb.bins);
                    Group { bins: merged, value }
                }
                _ => groups[p[0]].clone(),
            })
            .collect();
        rounds += 1;
    }
    let expected = usize::BITS as usize - (n - 1).leading_zeros() as usize;
    if rounds != expected {
        return Err(Error::Invariant(format!("{rounds} merge rounds for {n} bins, expected {expected}")));
    }
    Ok(BoundResult {
        t_bound: groups[0].value,
        confidence: 1.0 - delta,
        rounds,
        union_bounds_used: 2 * n,
        traversal_level: traversal_level(n, delta),
        bins: n,
    })
}
