use std::path::{Path, PathBuf};
use std::process::ExitCode;

use absence::coverage::{estimate_pairwise_quantiles, hierarchical_bound, traversal_level, Partition, VisitTracker, WalkSetup};
use absence::discretization::{discretize, is_traversable};
use absence::harness::{emit_plot_data, place_source, privacy_audit, run_batch, run_coverage, ExperimentConfig, SourceCondition};
use absence::policy::run_trial;
use absence::{Error, MapSpec, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

/// Privacy-preserving source-absence inspection simulator.
#[derive(Debug, Parser)]
#[command(name = "absence", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trial and print its verdict as JSON.
    Trial {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Source as `x,y,strength`.
        #[arg(long)]
        source: Option<String>,
    },
    /// Run every map x source condition x trial in the config.
    Batch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cover-time study over step bounds and discretizations.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare source-free maps through the recorded steps.
    PrivacyAudit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// High-probability cover-time bound for one map.
    Bound {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Inspector, detector and algorithm settings (built-in defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Step bound; defaults to the config's `c_u`.
        #[arg(long)]
        c_u: Option<f64>,
        /// Rollouts per start bin for the traversal quantiles.
        #[arg(long, default_value_t = 400)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `adjacent` or `random:SEED`.
        #[arg(long, default_value = "adjacent")]
        partition: String,
    },
    /// Emit tidy CSV for plotting from an output directory.
    PlotData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: String,
    },
}

const DEFAULT_CONFIG: &str = r#"{
    "schema_version": 1,
    "maps": [],
    "inspector": {"r_i": 0.4, "r_d": 3.0, "speed": 0.1, "measure_seconds": 3.0},
    "detector": {"background": 60.0, "z": 3.0, "clamp": 0.1},
    "algorithm": {"p_star": 0.005, "max_steps": 2000, "tests": 20, "c_u": 2.0},
    "trials_per_condition": 0,
    "source_conditions": [],
    "seed_base": 0,
    "discretizations": []
}"#;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 1,
        Error::Invariant(_) => 3,
        _ => 2,
    }
}

fn parse_source(s: &str) -> Result<SourceCondition> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Usage(format!("--source expects x,y,strength: {e}")))?;
    match parts.as_slice() {
        [x, y, strength] => Ok(SourceCondition {
            strength: *strength,
            x: Some(*x),
            y: Some(*y),
        }),
        _ => Err(Error::Usage("--source expects x,y,strength".into())),
    }
}

fn parse_partition(s: &str) -> Result<Partition> {
    match s.split_once(':') {
        None if s == "adjacent" => Ok(Partition::Adjacent),
        Some(("random", seed)) => seed
            .parse()
            .map(Partition::Random)
            .map_err(|e| Error::Usage(format!("bad partition seed: {e}"))),
        _ => Err(Error::Usage(format!("unknown partition {s:?}"))),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn trial(map: &Path, config: &Path, seed: u64, source: Option<&str>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let map = MapSpec::load(map).map_err(|e| Error::Config(format!("{}: {e}", map.display())))?;
    cfg.inspector.check_fits(&map)?;
    let map = match source.map(parse_source).transpose()? {
        Some(cond) => {
            let src = place_source(&cond, &map, cfg.detector.clamp, seed)?;
            map.with_source(Some(src))
        }
        None => map,
    };
    let params = cfg.algo_params(&map)?;
    let result = run_trial(&params, &map, &cfg.detector, &cfg.inspector, seed)?;
    let positions = result.omniscient.as_ref().map(|r| r.positions.as_slice()).unwrap_or(&[]);
    let mut cover = Vec::new();
    for &eps in &cfg.discretizations {
        let cm = discretize(&map, eps, cfg.inspector.r_i)?;
        let mut tracker = VisitTracker::new(&cm);
        for (t, p) in positions.iter().enumerate() {
            tracker.record(*p, t)?;
        }
        cover.push(json!({"epsilon": eps, "cover_steps": tracker.cover_time()}));
    }
    print_json(&json!({
        "seed": seed,
        "decision": result.decision,
        "steps": result.steps,
        "p_min": result.memory.p_min,
        "p_trace": result.p_trace,
        "cover": cover,
    }))
}

#[allow(clippy::too_many_arguments)]
fn bound(
    map: &Path,
    epsilon: f64,
    delta: f64,
    config: Option<&Path>,
    c_u: Option<f64>,
    rollouts: usize,
    seed: u64,
    partition: &str,
) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Usage(format!("--delta must lie in (0, 1), got {delta}")));
    }
    let partition = parse_partition(partition)?;
    let cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_json(DEFAULT_CONFIG, Path::new("."))?,
    };
    let map = MapSpec::load(map)
        .map_err(|e| Error::Config(format!("{}: {e}", map.display())))?
        .with_source(None);
    let cm = discretize(&map, epsilon, cfg.inspector.r_i)?;
    if !is_traversable(&cm) {
        return Err(Error::Config(format!("map is not traversable at epsilon {epsilon}")));
    }
    let params = cfg.algo_params_for(c_u.unwrap_or(cfg.algorithm.c_u), map.l_x, map.l_y)?;
    let setup = WalkSetup {
        map: &map,
        cm: &cm,
        detector: &cfg.detector,
        spec: &cfg.inspector,
        params: &params,
    };
    let level = traversal_level(cm.free_count(), delta);
    let table = estimate_pairwise_quantiles(&setup, rollouts, level, seed, 1_000_000)?;
    let result = hierarchical_bound(&cm, |u, v| table.get(u, v), delta, partition)?;
    print_json(&json!({
        "epsilon": epsilon,
        "c_u": params.c_u,
        "rollouts_per_start": rollouts,
        "bound": result,
    }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trial {
            map,
            config,
            seed,
            source,
        } => trial(&map, &config, seed, source.as_deref()),
        Command::Batch { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let output = run_batch(&cfg)?;
            output.write(&out)?;
            print_json(&json!({"out": out, "totals": output.summary.totals}))
        }
        Command::Coverage { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let output = run_coverage(&cfg)?;
            output.write(&out)?;
            print_json(&json!({"out": out, "cells": output.summary.cells.len()}))
        }
        Command::PrivacyAudit { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = privacy_audit(&cfg)?;
            report.write(&out)?;
            print_json(&json!({"out": out, "pairs": report.pairs, "self_checks": report.self_checks}))
        }
        Command::Bound {
            map,
            epsilon,
            delta,
            config,
            c_u,
            rollouts,
            seed,
            partition,
        } => bound(&map, epsilon, delta, config.as_deref(), c_u, rollouts, seed, &partition),
        Command::PlotData { input, kind } => {
            let csv = emit_plot_data(&input, kind.parse()?)?;
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
