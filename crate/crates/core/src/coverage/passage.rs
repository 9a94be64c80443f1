use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bound::QuantileTable;
use super::tracker::VisitTracker;
use crate::discretization::{is_traversable, CompressedMap};
use crate::error::{Error, Result};
use crate::geometry::{MapSpec, Pose, Vec2};
use crate::policy::{trial_streams, AlgoParams, Inspector, World};
use crate::sensing::{DetectorModel, InspectorSpec};

/// Everything a source-free exploration walk needs.
#[derive(Debug, Clone, Copy)]
pub struct WalkSetup<'a> {
    pub map: &'a MapSpec,
    pub cm: &'a CompressedMap,
    pub detector: &'a DetectorModel,
    pub spec: &'a InspectorSpec,
    pub params: &'a AlgoParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    /// Uniform over collision-free placements of the whole map.
    Uniform,
    /// Uniform over collision-free placements inside one bin.
    InBin(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    Cover,
    Reach(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// First step at which each bin (grid index) was measured in.
    pub first_visit: Vec<Option<usize>>,
    pub cover_steps: Option<usize>,
    pub cover_seconds: Option<f64>,
    /// Motions executed.
    pub steps: usize,
    pub off_graph: u64,
}

fn start_pose(setup: &WalkSetup<'_>, world_rng: &mut impl Rng, start: Start) -> Result<Pose> {
    match start {
        Start::Uniform => setup.map.sample_free_pose(world_rng, setup.spec.r_i),
        Start::InBin(bin) => {
            if !setup.cm.is_free_bin(bin) {
                return Err(Error::NotFreeBin(bin));
            }
            let (lo, hi) = setup.cm.bin_bounds(bin);
            let r_i = setup.spec.r_i;
            for _ in 0..10_000 {
                let p = Vec2::new(world_rng.gen_range(lo.x..hi.x), world_rng.gen_range(lo.y..hi.y));
                if setup.map.is_free(p, r_i) {
                    return Ok(Pose::new(p, world_rng.gen_range(0.0..TAU)));
                }
            }
            let center = (lo + hi) * 0.5;
            if setup.map.is_free(center, r_i) {
                Ok(Pose::new(center, world_rng.gen_range(0.0..TAU)))
            } else {
                Err(Error::NoFreeSpace)
            }
        }
    }
}

fn walk(setup: &WalkSetup<'_>, start: Start, seed: u64, cap: usize, stop: Stop) -> Result<Rollout> {
    let (mut world_rng, inspector_rng) = trial_streams(seed);
    let pose = start_pose(setup, &mut world_rng, start)?;
    let mut world = World::at(setup.map, setup.detector, setup.spec, pose, world_rng)?;
    let mut inspector = Inspector::new(setup.params.clone(), inspector_rng).without_testing();
    let mut tracker = VisitTracker::new(setup.cm);
    let mut seconds = 0.0;
    let mut cover_seconds = None;
    let mut t = 0;
    loop {
        tracker.record(world.pose.position, t)?;
        if tracker.is_covered() && cover_seconds.is_none() {
            cover_seconds = Some(seconds);
        }
        let done = match stop {
            Stop::Cover => tracker.is_covered(),
            Stop::Reach(bin) => tracker.first_visit(bin).is_some(),
        };
        if done || t >= cap {
            break;
        }
        let counts = world.measure();
        let cmd = inspector.plan(counts);
        let outcome = world.execute(cmd)?;
        inspector.commit(cmd.ds)?;
        seconds += setup.spec.measure_seconds + outcome.realized / setup.spec.speed;
        t += 1;
    }
    Ok(Rollout {
        first_visit: tracker.first_visits().to_vec(),
        cover_steps: tracker.cover_time(),
        cover_seconds,
        steps: t,
        off_graph: tracker.off_graph(),
    })
}

/// Source-free exploration until every free bin has been visited or `cap`
/// motions have run, recording first-visit steps of all bins.
pub fn first_visit_rollout(setup: &WalkSetup<'_>, start: Start, seed: u64, cap: usize) -> Result<Rollout> {
    walk(setup, start, seed, cap, Stop::Cover)
}

/// A cover-time rollout from a uniform start.
pub fn cover_rollout(setup: &WalkSetup<'_>, seed: u64, cap: usize) -> Result<Rollout> {
    first_visit_rollout(setup, Start::Uniform, seed, cap)
}

/// First-passage times to one bin, with right-censoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageSample {
    /// Uncensored passage times in rollout order.
    pub observed: Vec<u64>,
    pub censored: usize,
    /// Censoring level: the smaller of the hard cap and 50 times the median
    /// of the raw sample.
    pub cap: u64,
}

impl PassageSample {
    fn from_raw(raw: &[Option<u64>], hard_cap: u64) -> Self {
        let mut all: Vec<u64> = raw.iter().map(|t| t.unwrap_or(hard_cap)).collect();
        all.sort_unstable();
        let median = all.get(all.len() / 2).copied().unwrap_or(0);
        let cap = hard_cap.min(median.saturating_mul(50).max(1));
        let mut observed = Vec::with_capacity(raw.len());
        let mut censored = 0;
        for t in raw {
            match t {
                Some(t) if *t <= cap => observed.push(*t),
                _ => censored += 1,
            }
        }
        Self { observed, censored, cap }
    }

    pub fn len(&self) -> usize {
        self.observed.len() + self.censored
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.censored as f64 / self.len() as f64
        }
    }

    /// Empirical `level` quantile; censored draws count as `cap`.
    pub fn quantile(&self, level: f64) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        let mut sorted = self.observed.clone();
        sorted.sort_unstable();
        let rank = ((level * self.len() as f64).ceil() as usize).clamp(1, self.len()) - 1;
        sorted.get(rank).copied().unwrap_or(self.cap) as f64
    }
}

fn check_connected(cm: &CompressedMap) -> Result<()> {
    if cm.free_count() == 0 {
        Err(Error::NoFreeSpace)
    } else if !is_traversable(cm) {
        Err(Error::Disconnected)
    } else {
        Ok(())
    }
}

/// Passage times to `target` over `rollouts` walks with seeds
/// `seed_base..seed_base + rollouts`.
pub fn sample_first_passage(
    setup: &WalkSetup<'_>,
    target: usize,
    start: Start,
    rollouts: usize,
    seed_base: u64,
    hard_cap: usize,
) -> Result<PassageSample> {
    if !setup.cm.is_free_bin(target) {
        return Err(Error::NotFreeBin(target));
    }
    check_connected(setup.cm)?;
    let raw = (0..rollouts as u64)
        .into_par_iter()
        .map(|k| {
            walk(setup, start, seed_base.wrapping_add(k), hard_cap, Stop::Reach(target))
                .map(|r| r.first_visit[target].map(|t| t as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PassageSample::from_raw(&raw, hard_cap as u64))
}

/// Hitting-time samples for every free bin from a shared set of walks.
/// Returns one sample per free bin, in `cm.free_bins()` order.
pub fn sample_all_passages(
    setup: &WalkSetup<'_>,
    start: Start,
    rollouts: usize,
    seed_base: u64,
    hard_cap: usize,
) -> Result<Vec<PassageSample>> {
    check_connected(setup.cm)?;
    let runs = (0..rollouts as u64)
        .into_par_iter()
        .map(|k| first_visit_rollout(setup, start, seed_base.wrapping_add(k), hard_cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(setup
        .cm
        .free_bins()
        .map(|b| {
            let raw: Vec<Option<u64>> = runs.iter().map(|r| r.first_visit[b].map(|t| t as u64)).collect();
            PassageSample::from_raw(&raw, hard_cap as u64)
        })
        .collect())
}

/// Monte Carlo pairwise traversal quantiles: from each free bin, `rollouts`
/// walks record hitting times of all others, and the `level` quantile of
/// each pair is kept.
pub fn estimate_pairwise_quantiles(
    setup: &WalkSetup<'_>,
    rollouts: usize,
    level: f64,
    seed_base: u64,
    hard_cap: usize,
) -> Result<QuantileTable> {
    check_connected(setup.cm)?;
    if rollouts == 0 {
        return Err(Error::InvalidParams("need at least one rollout per start".into()));
    }
    let bins: Vec<usize> = setup.cm.free_bins().collect();
    let rows = bins
        .iter()
        .enumerate()
        .map(|(i, &from)| {
            let base = seed_base.wrapping_add((i * rollouts) as u64);
            let samples = sample_all_passages(setup, Start::InBin(from), rollouts, base, hard_cap)?;
            Ok(samples
                .iter()
                .zip(&bins)
                .map(|(s, &to)| if to == from { 0.0 } else { s.quantile(level) })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    QuantileTable::new(setup.cm, rows.concat(), level)
}
