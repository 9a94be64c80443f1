//! Config-driven experiments: batch Monte Carlo, coverage studies, the
//! privacy audit and plot-data export.

mod audit;
mod batch;
mod config;
mod plot;
mod table;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use audit::{privacy_audit, AuditReport, AuditRow, LeakyRecord, PairSummary};
pub use batch::{
    run_batch, BatchOutput, BatchSummary, ConditionSummary, CoverSummary, DecisionCounts, PValueRow, StepRow,
    TracePoint, TrialRow,
};
pub use config::{
    place_source, reference_sample, AlgorithmConfig, AuditConfig, CoverageConfig, ExperimentConfig, ReferenceKind,
    SourceCondition, SCHEMA_VERSION,
};
pub use plot::{emit_plot_data, PlotKind};
pub use table::{run_coverage, CoverRow, CoverageCell, CoverageOutput, CoverageTraceRow};

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
