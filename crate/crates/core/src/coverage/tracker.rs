use serde::{Deserialize, Serialize};

use crate::discretization::CompressedMap;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::sensing::InspectorSpec;

/// Records which bins the robot has measured in, and when.
#[derive(Debug, Clone)]
pub struct VisitTracker<'a> {
    cm: &'a CompressedMap,
    first_visit: Vec<Option<usize>>,
    visits: Vec<u64>,
    /// Step indices at which a new free bin was entered, ascending.
    discoveries: Vec<usize>,
    free_total: usize,
    /// Records that landed in bins the compressed map marks occupied. The
    /// discretization is conservative, so a collision-free position can sit
    /// in a partially blocked bin.
    off_graph: u64,
    last_step: Option<usize>,
}

impl<'a> VisitTracker<'a> {
    pub fn new(cm: &'a CompressedMap) -> Self {
        Self {
            cm,
            first_visit: vec![None; cm.bin_count()],
            visits: vec![0; cm.bin_count()],
            discoveries: Vec::new(),
            free_total: cm.free_count(),
            off_graph: 0,
            last_step: None,
        }
    }

    pub fn map(&self) -> &CompressedMap {
        self.cm
    }

    /// Records a measurement at `position` taken at step `t`. Steps must not
    /// decrease.
    pub fn record(&mut self, position: Vec2, t: usize) -> Result<()> {
        let bin = self.cm.bin_of(position).ok_or(Error::OutOfBounds(position.x, position.y))?;
        if self.last_step.is_some_and(|last| t < last) {
            return Err(Error::Invariant(format!("step {t} recorded after {:?}", self.last_step)));
        }
        self.last_step = Some(t);
        self.visits[bin] += 1;
        if !self.cm.is_free_bin(bin) {
            self.off_graph += 1;
            return Ok(());
        }
        if self.first_visit[bin].is_none() {
            self.first_visit[bin] = Some(t);
            self.discoveries.push(t);
        }
        Ok(())
    }

    pub fn first_visit(&self, bin: usize) -> Option<usize> {
        self.first_visit.get(bin).copied().flatten()
    }

    pub fn first_visits(&self) -> &[Option<usize>] {
        &self.first_visit
    }

    pub fn visits(&self, bin: usize) -> u64 {
        self.visits.get(bin).copied().unwrap_or(0)
    }

    pub fn off_graph(&self) -> u64 {
        self.off_graph
    }

    pub fn visited_count(&self) -> usize {
        self.discoveries.len()
    }

    pub fn is_covered(&self) -> bool {
        self.free_total > 0 && self.discoveries.len() == self.free_total
    }

    /// Step at which the last free bin was first entered.
    pub fn cover_time(&self) -> Option<usize> {
        if self.is_covered() {
            self.discoveries.last().copied()
        } else {
            None
        }
    }

    /// Fraction of free bins visited at or before step `t`.
    pub fn fraction_at(&self, t: usize) -> f64 {
        if self.free_total == 0 {
            return 0.0;
        }
        let seen = self.discoveries.partition_point(|&d| d <= t);
        seen as f64 / self.free_total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub cover_time: Option<usize>,
    /// Seconds spent up to the cover time (or over the whole run when the
    /// map was never covered).
    pub wall_clock: f64,
    /// `coverage_fraction[t]` for every recorded step.
    pub coverage_fraction: Vec<f64>,
    pub off_graph: u64,
}

/// Coverage curve and timing. `realized[k]` is the path length of motion `k`;
/// each step costs one measurement plus its travel time.
pub fn cover_statistics(tracker: &VisitTracker<'_>, realized: &[f64], spec: &InspectorSpec) -> CoverageStats {
    let horizon = tracker.last_step.map_or(0, |t| t + 1);
    let coverage_fraction = (0..horizon).map(|t| tracker.fraction_at(t)).collect();
    let cover_time = tracker.cover_time();
    let counted = cover_time.unwrap_or(realized.len()).min(realized.len());
    let wall_clock = realized[..counted]
        .iter()
        .map(|d| spec.measure_seconds + d / spec.speed)
        .sum();
    CoverageStats {
        cover_time,
        wall_clock,
        coverage_fraction,
        off_graph: tracker.off_graph,
    }
}
