use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SCHEMA_VERSION};
use super::{thread_pool, write_csv, write_json};
use crate::coverage::{cover_rollout, WalkSetup};
use crate::discretization::discretize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverRow {
    pub env_id: String,
    #[serde(rename = "c_U")]
    pub c_u: f64,
    pub bins: usize,
    pub trial: usize,
    pub cover_steps: Option<usize>,
    pub cover_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTraceRow {
    pub env_id: String,
    #[serde(rename = "c_U")]
    pub c_u: f64,
    pub bins: usize,
    pub t: usize,
    pub seconds: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub env_id: String,
    #[serde(rename = "c_U")]
    pub c_u: f64,
    pub epsilon: f64,
    pub bins: usize,
    pub free_bins: usize,
    pub trials: usize,
    pub covered: usize,
    pub mean_steps: Option<f64>,
    pub max_steps: Option<usize>,
    pub mean_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub schema_version: u32,
    pub seed_base: u64,
    pub cells: Vec<CoverageCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageOutput {
    pub summary: CoverageSummary,
    pub rows: Vec<CoverRow>,
    pub trace: Vec<CoverageTraceRow>,
}

impl CoverageOutput {
    /// Writes `cover_times.csv`, `coverage_trace.csv` and `coverage.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("cover_times.csv"), &self.rows)?;
        write_csv(&dir.join("coverage_trace.csv"), &self.trace)?;
        write_json(&dir.join("coverage.json"), &self.summary)?;
        Ok(())
    }

    /// Mean cover steps of one cell.
    pub fn mean(&self, env_id: &str, c_u: f64, bins: usize) -> Option<f64> {
        self.summary
            .cells
            .iter()
            .find(|c| c.env_id == env_id && c.c_u == c_u && c.bins == bins)
            .and_then(|c| c.mean_steps)
    }
}

const TRACE_POINTS: usize = 200;

/// Cover-time study over every map, step bound and discretization. Trial `k`
/// of every cell uses seed `seed_base + k`, so cells share random numbers.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageOutput> {
    let study = cfg
        .coverage
        .as_ref()
        .ok_or_else(|| Error::Config("config has no coverage section".into()))?;
    let maps = cfg.load_maps()?;
    let pool = thread_pool(cfg.workers)?;
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    let mut cells = Vec::new();
    for (env_id, map) in &maps {
        let source_free = map.clone().with_source(None);
        for &eps in &study.discretizations {
            let cm = discretize(&source_free, eps, cfg.inspector.r_i)?;
            for &c_u in &study.c_u {
                let params = cfg.algo_params_for(c_u, map.l_x, map.l_y)?;
                let setup = WalkSetup {
                    map: &source_free,
                    cm: &cm,
                    detector: &cfg.detector,
                    spec: &cfg.inspector,
                    params: &params,
                };
                let runs = pool.install(|| {
                    (0..study.trials)
                        .into_par_iter()
                        .map(|k| cover_rollout(&setup, cfg.seed_base.wrapping_add(k as u64), study.max_steps))
                        .collect::<Result<Vec<_>>>()
                })?;
                let bins = cm.bin_count();
                let covered: Vec<(usize, f64)> = runs
                    .iter()
                    .filter_map(|r| r.cover_steps.zip(r.cover_seconds))
                    .collect();
                let n = covered.len();
                let mean_steps = (n > 0).then(|| covered.iter().map(|c| c.0 as f64).sum::<f64>() / n as f64);
                let mean_seconds = (n > 0).then(|| covered.iter().map(|c| c.1).sum::<f64>() / n as f64);
                let max_steps = covered.iter().map(|c| c.0).max();
                for (trial, r) in runs.iter().enumerate() {
                    rows.push(CoverRow {
                        env_id: env_id.clone(),
                        c_u,
                        bins,
                        trial,
                        cover_steps: r.cover_steps,
                        cover_seconds: r.cover_seconds,
                    });
                }
                let horizon = runs.iter().map(|r| r.steps).max().unwrap_or(0);
                let stride = (horizon / TRACE_POINTS).max(1);
                let seconds_per_step = match (mean_steps, mean_seconds) {
                    (Some(s), Some(sec)) if s > 0.0 => sec / s,
                    _ => 0.0,
                };
                let discoveries: Vec<Vec<usize>> = runs
                    .iter()
                    .map(|r| {
                        let mut d: Vec<usize> = cm.free_bins().filter_map(|b| r.first_visit[b]).collect();
                        d.sort_unstable();
                        d
                    })
                    .collect();
                let free = cm.free_count().max(1) as f64;
                for t in (0..=horizon).step_by(stride) {
                    let coverage = discoveries
                        .iter()
                        .map(|d| d.partition_point(|&x| x <= t) as f64 / free)
                        .sum::<f64>()
                        / runs.len().max(1) as f64;
                    trace.push(CoverageTraceRow {
                        env_id: env_id.clone(),
                        c_u,
                        bins,
                        t,
                        seconds: t as f64 * seconds_per_step,
                        coverage,
                    });
                }
                cells.push(CoverageCell {
                    env_id: env_id.clone(),
                    c_u,
                    epsilon: eps,
                    bins,
                    free_bins: cm.free_count(),
                    trials: study.trials,
                    covered: n,
                    mean_steps,
                    max_steps,
                    mean_seconds,
                });
            }
        }
    }
    Ok(CoverageOutput {
        summary: CoverageSummary {
            schema_version: SCHEMA_VERSION,
            seed_base: cfg.seed_base,
            cells,
        },
        rows,
        trace,
    })
}
