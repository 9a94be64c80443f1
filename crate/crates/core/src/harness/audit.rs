use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SCHEMA_VERSION};
use super::{thread_pool, write_csv, write_json};
use crate::error::{Error, Result};
use crate::geometry::MapSpec;
use crate::policy::{run_trial_with, AlgoParams, MotionOutcome, Observer};
use crate::stats::{ks_two_sample, mi_estimate, StepBins};

/// Significance below which the leaky scheme counts as separating two maps.
pub const LEAKY_ALPHA: f64 = 0.001;

/// Straight-line distances between consecutive heading changes. Headings
/// change at every commanded rotation and at every redirect, so each motion
/// contributes one or more segments. This record depends on obstacle layout
/// and exists only to demonstrate what the audit catches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeakyRecord {
    pub segments: Vec<f64>,
}

impl Observer for LeakyRecord {
    fn on_motion(&mut self, _motions: usize, outcome: &MotionOutcome) {
        self.segments.extend(outcome.segments.iter().copied().filter(|&s| s > 0.0));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub map_a: String,
    pub map_b: String,
    pub repetition: usize,
    pub seed_a: u64,
    pub seed_b: u64,
    pub steps_ks_p: f64,
    pub mi_nats: f64,
    pub mi_permutation_p: f64,
    pub leaky_ks_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub map_a: String,
    pub map_b: String,
    pub repetitions: usize,
    /// Fraction of repetitions where KS on commanded steps rejects at alpha.
    pub steps_reject_rate: f64,
    /// Fraction with MI permutation P-value >= alpha.
    pub mi_pass_rate: f64,
    /// Fraction where KS on the leaky record gives P < 0.001.
    pub leaky_reject_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub seed_base: u64,
    pub alpha: f64,
    pub leaky_alpha: f64,
    pub steps_per_run: usize,
    pub pairs: Vec<PairSummary>,
    /// Each map against itself with fresh seeds.
    pub self_checks: Vec<PairSummary>,
    #[serde(skip)]
    pub rows: Vec<AuditRow>,
}

impl AuditReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("audit.json"), self)?;
        write_csv(&dir.join("audit_pairs.csv"), &self.rows)?;
        Ok(())
    }
}

struct Run {
    steps: Vec<f64>,
    leaky: Vec<f64>,
}

fn run_once(cfg: &ExperimentConfig, params: &AlgoParams, map: &MapSpec, seed: u64) -> Result<Run> {
    let mut leaky = LeakyRecord::default();
    let result = run_trial_with(params, map, &cfg.detector, &cfg.inspector, seed, &mut leaky)?;
    Ok(Run {
        steps: result.memory.steps,
        leaky: leaky.segments,
    })
}

fn summarize(a: &str, b: &str, rows: &[AuditRow], alpha: f64) -> PairSummary {
    let n = rows.len().max(1) as f64;
    let frac = |f: &dyn Fn(&AuditRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
    PairSummary {
        map_a: a.into(),
        map_b: b.into(),
        repetitions: rows.len(),
        steps_reject_rate: frac(&|r| r.steps_ks_p < alpha),
        mi_pass_rate: frac(&|r| r.mi_permutation_p >= alpha),
        leaky_reject_rate: frac(&|r| r.leaky_ks_p < LEAKY_ALPHA),
    }
}

/// Compares source-free maps through what the inspector records (commanded
/// steps) and through the leaky turn-to-turn record. Every unordered pair of
/// maps, plus each map against itself, is run `pairs` times.
pub fn privacy_audit(cfg: &ExperimentConfig) -> Result<AuditReport> {
    let audit = cfg
        .audit
        .as_ref()
        .ok_or_else(|| Error::Config("config has no audit section".into()))?;
    let maps: Vec<(String, MapSpec)> = cfg
        .load_maps()?
        .into_iter()
        .filter(|(_, m)| m.active_source().is_none())
        .collect();
    if maps.len() < 2 {
        return Err(Error::Config(format!("privacy audit needs >= 2 source-free maps, got {}", maps.len())));
    }
    if audit.steps < 1000 {
        return Err(Error::Config(format!("privacy audit needs >= 1000 steps per run, got {}", audit.steps)));
    }
    let mut comparisons = Vec::new();
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            comparisons.push((i, j));
        }
    }
    let cross = comparisons.len();
    comparisons.extend((0..maps.len()).map(|i| (i, i)));

    let params: Vec<AlgoParams> = maps
        .iter()
        .map(|(_, m)| {
            let mut p = cfg.algo_params(m)?;
            p.max_steps = audit.steps;
            p.validate()?;
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let bins = StepBins::new(0.0, cfg.algorithm.c_u, audit.bins)?;
    let reps = audit.pairs;
    let jobs: Vec<(usize, usize)> = (0..comparisons.len()).flat_map(|c| (0..reps).map(move |r| (c, r))).collect();
    let rows = thread_pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let (i, j) = comparisons[c];
                let k = 2 * (c * reps + r) as u64;
                let (seed_a, seed_b) = (cfg.seed_base.wrapping_add(k), cfg.seed_base.wrapping_add(k + 1));
                let a = run_once(cfg, &params[i], &maps[i].1, seed_a)?;
                let b = run_once(cfg, &params[j], &maps[j].1, seed_b)?;
                let steps_ks = ks_two_sample(&a.steps, &b.steps)?;
                let leaky_ks = ks_two_sample(&a.leaky, &b.leaky)?;
                let m = a.steps.len().min(b.steps.len());
                let pooled: Vec<(f64, usize)> = a.steps[..m]
                    .iter()
                    .map(|&d| (d, 0))
                    .chain(b.steps[..m].iter().map(|&d| (d, 1)))
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed_a);
                rng.set_stream(3);
                let mi = mi_estimate(&pooled, bins, audit.permutations, &mut rng)?;
                Ok(AuditRow {
                    map_a: maps[i].0.clone(),
                    map_b: maps[j].0.clone(),
                    repetition: r,
                    seed_a,
                    seed_b,
                    steps_ks_p: steps_ks.p_value,
                    mi_nats: mi.mi_nats,
                    mi_permutation_p: mi.permutation_p,
                    leaky_ks_p: leaky_ks.p_value,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut pairs = Vec::new();
    let mut self_checks = Vec::new();
    for (c, &(i, j)) in comparisons.iter().enumerate() {
        let mine = &rows[c * reps..(c + 1) * reps];
        let s = summarize(&maps[i].0, &maps[j].0, mine, audit.alpha);
        if c < cross {
            pairs.push(s);
        } else {
            self_checks.push(s);
        }
    }
    Ok(AuditReport {
        schema_version: SCHEMA_VERSION,
        seed_base: cfg.seed_base,
        alpha: audit.alpha,
        leaky_alpha: LEAKY_ALPHA,
        steps_per_run: audit.steps,
        pairs,
        self_checks,
        rows,
    })
}
