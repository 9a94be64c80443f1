use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{place_source, ExperimentConfig, SourceCondition, SCHEMA_VERSION};
use super::{thread_pool, write_csv, write_json};
use crate::coverage::VisitTracker;
use crate::discretization::{discretize, CompressedMap};
use crate::error::{Error, Result};
use crate::geometry::MapSpec;
use crate::policy::{run_trial, AlgoParams, Decision, Reference};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub condition: String,
    pub map: String,
    pub source_strength: Option<f64>,
    pub seed: u64,
    pub decision: Decision,
    pub steps: usize,
    pub cover_steps: Option<usize>,
    pub detect_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueRow {
    pub condition: String,
    pub seed: u64,
    pub t: usize,
    pub p_value: f64,
    pub p_min: f64,
}

/// Commanded steps of the first trial of each condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub condition: String,
    pub seed: u64,
    pub index: usize,
    pub ds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub absence_confirmed: usize,
    pub anomaly_detected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSummary {
    pub epsilon: f64,
    pub free_bins: usize,
    pub covered_trials: usize,
    pub mean_steps: Option<f64>,
    pub max_steps: Option<usize>,
    pub mean_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    pub trials: usize,
    pub median_log10_p_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub map: String,
    pub source_strength: Option<f64>,
    pub trials: usize,
    pub decisions: DecisionCounts,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub cover: Vec<CoverSummary>,
    pub mean_detection_steps: Option<f64>,
    pub median_detection_steps: Option<f64>,
    pub p_trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmEcho {
    pub background: f64,
    pub z: f64,
    pub p_star: f64,
    pub max_steps: usize,
    pub tests: usize,
    pub c_l: f64,
    pub c_u: f64,
    pub trigger: f64,
    pub reference: String,
    pub reference_c_l_prime: f64,
    pub reference_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub condition: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub source_free_trials: usize,
    pub false_positives: usize,
    pub fpr: Option<f64>,
    pub source_present_trials: usize,
    pub false_negatives: usize,
    pub fnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub schema_version: u32,
    pub seed_base: u64,
    pub trials_per_condition: usize,
    pub algorithm: AlgorithmEcho,
    pub conditions: Vec<ConditionSummary>,
    pub totals: Totals,
    pub skipped: Vec<Skipped>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub summary: BatchSummary,
    pub trials: Vec<TrialRow>,
    pub pvalues: Vec<PValueRow>,
    pub steps: Vec<StepRow>,
}

impl BatchOutput {
    /// Writes `summary.json`, `trials.csv`, `pvalues.csv` and `steps.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("summary.json"), &self.summary)?;
        write_csv(&dir.join("trials.csv"), &self.trials)?;
        write_csv(&dir.join("pvalues.csv"), &self.pvalues)?;
        write_csv(&dir.join("steps.csv"), &self.steps)?;
        Ok(())
    }
}

fn condition_label(map: &str, cond: &Option<SourceCondition>) -> String {
    match cond {
        None => format!("{map}/none"),
        Some(c) => match (c.x, c.y) {
            (Some(x), Some(y)) => format!("{map}/s{}@{x},{y}", c.strength),
            _ => format!("{map}/s{}", c.strength),
        },
    }
}

fn echo(params: &AlgoParams) -> AlgorithmEcho {
    let (reference, c_l_prime, delta) = match &params.reference {
        Reference::Analytic(cdf) => ("analytic", cdf.c_l_prime, cdf.delta),
        Reference::Empirical { .. } => ("empirical", params.c_l / params.c_u, crate::sensing::exceedance_probability(params.background, params.z)),
    };
    AlgorithmEcho {
        background: params.background,
        z: params.z,
        p_star: params.p_star,
        max_steps: params.max_steps,
        tests: params.tests,
        c_l: params.c_l,
        c_u: params.c_u,
        trigger: params.trigger(),
        reference: reference.into(),
        reference_c_l_prime: c_l_prime,
        reference_delta: delta,
    }
}

struct Job<'a> {
    condition: usize,
    seed: u64,
    map: &'a MapSpec,
    params: &'a AlgoParams,
    cms: &'a [CompressedMap],
    source: Option<SourceCondition>,
    first: bool,
}

struct Outcome {
    row: TrialRow,
    pvalues: Vec<PValueRow>,
    cover: Vec<(Option<usize>, Option<f64>)>,
    steps: Vec<f64>,
}

fn run_job(cfg: &ExperimentConfig, job: &Job<'_>, label: &str, map_label: &str) -> Result<Outcome> {
    let map = match &job.source {
        None => job.map.clone().with_source(None),
        Some(c) => {
            let src = place_source(c, job.map, cfg.detector.clamp, job.seed)?;
            job.map.clone().with_source(Some(src))
        }
    };
    let result = run_trial(job.params, &map, &cfg.detector, &cfg.inspector, job.seed)?;
    let rec = result
        .omniscient
        .as_ref()
        .ok_or_else(|| Error::Invariant("trial returned no omniscient record".into()))?;
    if let Some(bad) = rec.positions.iter().find(|p| !map.is_free(**p, cfg.inspector.r_i)) {
        return Err(Error::Invariant(format!("robot in collision at ({}, {})", bad.x, bad.y)));
    }
    let cover = job
        .cms
        .iter()
        .map(|cm| {
            let mut tracker = VisitTracker::new(cm);
            for (t, p) in rec.positions.iter().enumerate() {
                tracker.record(*p, t)?;
            }
            let steps = tracker.cover_time();
            let seconds = steps.map(|c| {
                rec.realized[..c]
                    .iter()
                    .map(|d| cfg.inspector.measure_seconds + d / cfg.inspector.speed)
                    .sum()
            });
            Ok((steps, seconds))
        })
        .collect::<Result<Vec<_>>>()?;
    let pvalues = result
        .p_trace
        .iter()
        .map(|p| PValueRow {
            condition: label.to_string(),
            seed: job.seed,
            t: p.t,
            p_value: p.p_value,
            p_min: p.p_min,
        })
        .collect();
    Ok(Outcome {
        row: TrialRow {
            condition: label.to_string(),
            map: map_label.to_string(),
            source_strength: job.source.map(|s| s.strength),
            seed: job.seed,
            decision: result.decision,
            steps: result.steps,
            cover_steps: cover.first().and_then(|c| c.0),
            detect_steps: (result.decision == Decision::AnomalyDetected).then_some(result.steps),
        },
        pvalues,
        cover,
        steps: if job.first { result.memory.steps } else { Vec::new() },
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Runs every (map, source condition, trial) combination. Trial `k` in that
/// order gets seed `seed_base + k`; results do not depend on `workers`.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<BatchOutput> {
    let maps = cfg.load_maps()?;
    let mut warnings = Vec::new();
    let mut skipped = Vec::new();
    let mut prepared = Vec::new();
    for (label, map) in &maps {
        warnings.extend(cfg.epsilon_warnings(label, map));
        let ready = (|| -> Result<(AlgoParams, Vec<CompressedMap>)> {
            cfg.inspector.check_fits(map)?;
            map.sample_free_position(&mut ChaCha8Rng::seed_from_u64(0), cfg.inspector.r_i)?;
            let params = cfg.algo_params(map)?;
            let cms = cfg
                .discretizations
                .iter()
                .map(|&e| discretize(map, e, cfg.inspector.r_i))
                .collect::<Result<Vec<_>>>()?;
            Ok((params, cms))
        })();
        prepared.push(ready);
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let mut labels = Vec::new();
    let mut jobs = Vec::new();
    let mut k = 0u64;
    for ((map_label, map), ready) in maps.iter().zip(&prepared) {
        for cond in &cfg.source_conditions {
            let label = condition_label(map_label, cond);
            let index = labels.len();
            match ready {
                Ok((params, cms)) => {
                    labels.push((label, map_label.clone(), *cond, true));
                    for trial in 0..cfg.trials_per_condition {
                        jobs.push(Job {
                            condition: index,
                            seed: cfg.seed_base.wrapping_add(k + trial as u64),
                            map,
                            params,
                            cms,
                            source: *cond,
                            first: trial == 0,
                        });
                    }
                }
                Err(e) => {
                    eprintln!("error: skipping {label}: {e}");
                    skipped.push(Skipped {
                        condition: label.clone(),
                        reason: e.to_string(),
                    });
                    labels.push((label, map_label.clone(), *cond, false));
                }
            }
            k += cfg.trials_per_condition as u64;
        }
    }

    let outcomes = thread_pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|job| {
                let (label, map_label, _, _) = &labels[job.condition];
                run_job(cfg, job, label, map_label)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut trials = Vec::with_capacity(outcomes.len());
    let mut pvalues = Vec::new();
    let mut steps = Vec::new();
    let mut conditions = Vec::new();
    let reference_params = match prepared.iter().find_map(|p| p.as_ref().ok()) {
        Some((p, _)) => p.clone(),
        None => cfg.algo_params_for(cfg.algorithm.c_u, 10.0, 10.0)?,
    };
    let mut totals = Totals {
        source_free_trials: 0,
        false_positives: 0,
        fpr: None,
        source_present_trials: 0,
        false_negatives: 0,
        fnr: None,
    };
    for (index, (label, map_label, cond, active)) in labels.iter().enumerate() {
        if !active {
            continue;
        }
        let mine: Vec<(&Job<'_>, &Outcome)> = jobs.iter().zip(&outcomes).filter(|(j, _)| j.condition == index).collect();
        let mut decisions = DecisionCounts::default();
        for (_, o) in &mine {
            match o.row.decision {
                Decision::AbsenceConfirmed => decisions.absence_confirmed += 1,
                Decision::AnomalyDetected => decisions.anomaly_detected += 1,
                Decision::Continue => return Err(Error::Invariant("trial ended without a verdict".into())),
            }
        }
        let n = mine.len();
        if decisions.absence_confirmed + decisions.anomaly_detected != n {
            return Err(Error::Invariant(format!("{label}: decision counts do not sum to {n}")));
        }
        let rate = |x: usize| (n > 0).then(|| x as f64 / n as f64);
        let (fpr, fnr) = if cond.is_none() {
            totals.source_free_trials += n;
            totals.false_positives += decisions.anomaly_detected;
            (rate(decisions.anomaly_detected), None)
        } else {
            totals.source_present_trials += n;
            totals.false_negatives += decisions.absence_confirmed;
            (None, rate(decisions.absence_confirmed))
        };
        let cms = &prepared[maps.iter().position(|(l, _)| l == map_label).unwrap_or(0)]
            .as_ref()
            .map_err(|e| Error::Invariant(e.to_string()))?
            .1;
        let cover = cfg
            .discretizations
            .iter()
            .enumerate()
            .map(|(i, &eps)| {
                let covered: Vec<(usize, f64)> = mine
                    .iter()
                    .filter_map(|(_, o)| o.cover[i].0.zip(o.cover[i].1))
                    .collect();
                let step_values: Vec<f64> = covered.iter().map(|c| c.0 as f64).collect();
                let secs: Vec<f64> = covered.iter().map(|c| c.1).collect();
                CoverSummary {
                    epsilon: eps,
                    free_bins: cms[i].free_count(),
                    covered_trials: covered.len(),
                    mean_steps: mean(&step_values),
                    max_steps: covered.iter().map(|c| c.0).max(),
                    mean_seconds: mean(&secs),
                }
            })
            .collect();
        let mut detect: Vec<f64> = mine.iter().filter_map(|(_, o)| o.row.detect_steps.map(|d| d as f64)).collect();
        let mean_detection_steps = mean(&detect);
        let median_detection_steps = median(&mut detect);
        let mut p_trace = Vec::new();
        let interval = reference_params.test_interval();
        for test in 1..=reference_params.tests {
            let t = test * interval;
            let mut logs: Vec<f64> = mine
                .iter()
                .flat_map(|(_, o)| o.pvalues.iter().filter(|p| p.t == t).map(|p| p.p_min.log10()))
                .collect();
            if let Some(m) = median(&mut logs) {
                p_trace.push(TracePoint {
                    t,
                    trials: logs.len(),
                    median_log10_p_min: m,
                });
            }
        }
        conditions.push(ConditionSummary {
            condition: label.clone(),
            map: map_label.clone(),
            source_strength: cond.map(|c| c.strength),
            trials: n,
            decisions,
            fpr,
            fnr,
            cover,
            mean_detection_steps,
            median_detection_steps,
            p_trace,
        });
        for (job, o) in mine {
            trials.push(o.row.clone());
            pvalues.extend(o.pvalues.iter().cloned());
            steps.extend(o.steps.iter().enumerate().map(|(index, &ds)| StepRow {
                condition: label.clone(),
                seed: job.seed,
                index,
                ds,
            }));
        }
    }
    totals.fpr = (totals.source_free_trials > 0).then(|| totals.false_positives as f64 / totals.source_free_trials as f64);
    totals.fnr =
        (totals.source_present_trials > 0).then(|| totals.false_negatives as f64 / totals.source_present_trials as f64);

    Ok(BatchOutput {
        summary: BatchSummary {
            schema_version: SCHEMA_VERSION,
            seed_base: cfg.seed_base,
            trials_per_condition: cfg.trials_per_condition,
            algorithm: echo(&reference_params),
            conditions,
            totals,
            skipped,
            warnings,
        },
        trials,
        pvalues,
        steps,
    })
}
