use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::batch::{BatchSummary, PValueRow, StepRow};
use super::table::CoverageTraceRow;
use crate::error::{Error, Result};
use crate::stats::ReferenceCdf;

/// Coverage curves skip the first steps, where every run trivially sits in
/// its start bin.
pub const COVERAGE_CURVE_START: usize = 10;

/// Confidence level of the DKW band around empirical step CDFs.
pub const DKW_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    PvalueEvolution,
    CoverageCurve,
    StepCdf,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pvalue_evolution" => Ok(Self::PvalueEvolution),
            "coverage_curve" => Ok(Self::CoverageCurve),
            "step_cdf" => Ok(Self::StepCdf),
            other => Err(Error::Usage(format!(
                "unknown plot kind {other:?} (expected pvalue_evolution, coverage_curve or step_cdf)"
            ))),
        }
    }
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn read_summary(dir: &Path) -> Result<BatchSummary> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

#[derive(Serialize)]
struct PvalueOut<'a> {
    condition: &'a str,
    seed: u64,
    t: usize,
    p_min: f64,
    log10_p: f64,
}

#[derive(Serialize)]
struct StepCdfOut<'a> {
    condition: &'a str,
    s_normalized: f64,
    empirical: f64,
    reference: f64,
    dkw_lower: f64,
    dkw_upper: f64,
    within_band: bool,
}

/// DKW half-width for `m` samples at level `alpha`.
pub fn dkw_epsilon(m: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * m as f64)).sqrt()
}

/// Tidy CSV for one plot from a batch (`pvalue_evolution`, `step_cdf`) or
/// coverage (`coverage_curve`) output directory.
pub fn emit_plot_data(dir: &Path, kind: PlotKind) -> Result<String> {
    match kind {
        PlotKind::PvalueEvolution => {
            let summary = read_summary(dir)?;
            let floor = summary.algorithm.trigger.log10();
            let rows: Vec<PValueRow> = read_csv(&dir.join("pvalues.csv"))?;
            if rows.is_empty() {
                return Err(Error::Config("no P-values recorded".into()));
            }
            let out: Vec<PvalueOut<'_>> = rows
                .iter()
                .map(|r| PvalueOut {
                    condition: &r.condition,
                    seed: r.seed,
                    t: r.t,
                    p_min: r.p_min,
                    log10_p: r.p_min.log10().max(floor),
                })
                .collect();
            to_csv(&out)
        }
        PlotKind::CoverageCurve => {
            let rows: Vec<CoverageTraceRow> = read_csv(&dir.join("coverage_trace.csv"))?;
            let out: Vec<&CoverageTraceRow> = rows.iter().filter(|r| r.t >= COVERAGE_CURVE_START).collect();
            if out.is_empty() {
                return Err(Error::Config("no coverage trace recorded".into()));
            }
            to_csv(&out)
        }
        PlotKind::StepCdf => {
            let summary = read_summary(dir)?;
            let cdf = ReferenceCdf::new(summary.algorithm.reference_c_l_prime, summary.algorithm.reference_delta)?;
            let c_u = summary.algorithm.c_u;
            let steps: Vec<StepRow> = read_csv(&dir.join("steps.csv"))?;
            let mut by_condition: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for s in &steps {
                by_condition.entry(&s.condition).or_default().push(s.ds / c_u);
            }
            if by_condition.is_empty() {
                return Err(Error::Config("no step samples recorded".into()));
            }
            let mut out = Vec::new();
            for (condition, mut v) in by_condition {
                v.sort_by(f64::total_cmp);
                let eps = dkw_epsilon(v.len(), DKW_ALPHA);
                for k in 0..=100 {
                    let s = k as f64 / 100.0;
                    let empirical = v.partition_point(|&x| x <= s) as f64 / v.len() as f64;
                    let reference = cdf.cdf(s);
                    out.push(StepCdfOut {
                        condition,
                        s_normalized: s,
                        empirical,
                        reference,
                        dkw_lower: (empirical - eps).max(0.0),
                        dkw_upper: (empirical + eps).min(1.0),
                        within_band: (empirical - reference).abs() <= eps,
                    });
                }
            }
            to_csv(&out)
        }
    }
}
