use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{discretize, validate};
use crate::error::{Error, Result};
use crate::geometry::{MapSpec, SourceSpec, Vec2};
use crate::policy::{AlgoParams, Reference};
use crate::sensing::{DetectorModel, InspectorSpec};
use crate::stats::ReferenceCdf;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    Analytic,
    Empirical,
}

/// Algorithm section of the config. Optional fields default from the
/// detector section (`background`, `z`) or from `c_u` (`c_l = c_u / 10`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub p_star: f64,
    pub max_steps: usize,
    pub tests: usize,
    pub c_u: f64,
    #[serde(default)]
    pub c_l: Option<f64>,
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default)]
    pub background: Option<f64>,
    #[serde(default)]
    pub reference: ReferenceKind,
    /// Size of the simulated reference sample for the empirical form.
    #[serde(default = "default_reference_size")]
    pub reference_size: usize,
}

fn default_reference_size() -> usize {
    10_000
}

/// A source placement. Without coordinates the source is placed uniformly
/// over free space, independently per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceCondition {
    pub strength: f64,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub c_u: Vec<f64>,
    pub discretizations: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_cover_cap")]
    pub max_steps: usize,
}

fn default_cover_cap() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub pairs: usize,
    pub steps: usize,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_permutations() -> usize {
    200
}

fn default_bins() -> usize {
    20
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Map files, relative to the config file.
    pub maps: Vec<PathBuf>,
    pub inspector: InspectorSpec,
    pub detector: DetectorModel,
    pub algorithm: AlgorithmConfig,
    pub trials_per_condition: usize,
    /// `null` entries mean source free.
    pub source_conditions: Vec<Option<SourceCondition>>,
    pub seed_base: u64,
    pub discretizations: Vec<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub coverage: Option<CoverageConfig>,
    #[serde(default)]
    pub audit: Option<AuditConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.inspector.validate()?;
        self.detector.validate(&self.inspector)?;
        self.algo_params_for(self.algorithm.c_u, 10.0, 10.0)?;
        for s in self.source_conditions.iter().flatten() {
            if !(s.strength >= 0.0 && s.strength.is_finite()) || s.x.is_some() != s.y.is_some() {
                return Err(Error::Config(format!("bad source condition {s:?}")));
            }
        }
        if self.discretizations.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("discretizations must be positive".into()));
        }
        Ok(())
    }

    pub fn map_path(&self, map: &Path) -> PathBuf {
        if map.is_absolute() {
            map.to_path_buf()
        } else {
            self.base_dir.join(map)
        }
    }

    /// Loads every referenced map, labeled by its name (or file stem).
    pub fn load_maps(&self) -> Result<Vec<(String, MapSpec)>> {
        self.maps
            .iter()
            .map(|p| {
                let full = self.map_path(p);
                let map = MapSpec::load(&full).map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
                let label = map
                    .name
                    .clone()
                    .or_else(|| full.file_stem().map(|s| s.to_string_lossy().into_owned()))
                    .unwrap_or_else(|| "map".into());
                Ok((label, map))
            })
            .collect()
    }

    /// Algorithm parameters for one step bound `c_u` on a map of the given
    /// size.
    pub fn algo_params_for(&self, c_u: f64, l_x: f64, l_y: f64) -> Result<AlgoParams> {
        let a = &self.algorithm;
        let background = a.background.unwrap_or(self.detector.background);
        let z = a.z.unwrap_or(self.detector.z);
        let c_l = if a.c_u == c_u { a.c_l.unwrap_or(c_u / 10.0) } else { c_u / 10.0 };
        let mut params = AlgoParams::analytic(background, (l_x, l_y), a.p_star, a.max_steps, a.tests, z, c_l, c_u)?;
        if a.reference == ReferenceKind::Empirical {
            let cdf = ReferenceCdf::from_params(c_l, c_u, background, z)?;
            params.reference = Reference::Empirical {
                sample: reference_sample(&cdf, a.reference_size, 0x5eed),
            };
            params.validate()?;
        }
        Ok(params)
    }

    pub fn algo_params(&self, map: &MapSpec) -> Result<AlgoParams> {
        self.algo_params_for(self.algorithm.c_u, map.l_x, map.l_y)
    }

    /// Discretization warnings for `map`: every configured ε that fails the
    /// compression inequalities or traversability.
    pub fn epsilon_warnings(&self, label: &str, map: &MapSpec) -> Vec<String> {
        self.discretizations
            .iter()
            .filter_map(|&eps| match discretize(map, eps, self.inspector.r_i) {
                Ok(cm) => {
                    let report = validate(eps, &self.inspector, &cm);
                    (!report.is_valid()).then(|| format!("{label}: epsilon {eps} is not valid ({report:?})"))
                }
                Err(e) => Some(format!("{label}: epsilon {eps}: {e}")),
            })
            .collect()
    }
}

/// Draws `n` normalized steps from the source-free step law.
pub fn reference_sample(cdf: &ReferenceCdf, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let scale = if rng.gen::<f64>() < cdf.delta { cdf.c_l_prime } else { 1.0 };
            scale * rng.gen::<f64>()
        })
        .collect()
}

/// Places a source for one trial. Unpositioned sources use their own random
/// stream so the trial's physics and inspector streams are untouched.
pub fn place_source(cond: &SourceCondition, map: &MapSpec, clamp: f64, seed: u64) -> Result<SourceSpec> {
    let position = match (cond.x, cond.y) {
        (Some(x), Some(y)) => Vec2::new(x, y),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            map.sample_free_position(&mut rng, clamp)?
        }
    };
    Ok(SourceSpec {
        position,
        strength: cond.strength,
    })
}
