//! Experiment configuration files.
//!
//! Config files are the single source of truth for a run; command-line flags
//! override only scalar fields (seed, output directory, workers). Paths
//! inside a config resolve relative to the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use failprob_core::oracle::{
    FailureOracle, GenerationPool, HotPattern, PlantedModel, PoolOracle, Probability,
};
use failprob_core::report::RunMeta;
use failprob_core::space::ParamSpace;
use failprob_core::template::Template;
use failprob_core::{Error, Result};

/// Enumeration budget for exact reference values.
pub const EXACT_MU_BUDGET: u128 = 10_000_000;

/// Where the parameter space comes from: a template file or a bare shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
}

impl SpaceSpec {
    pub fn build(&self, base_dir: &Path) -> Result<(Arc<ParamSpace>, Option<Template>)> {
        match (&self.template, &self.shape) {
            (Some(path), None) => {
                let tpl = Template::load(&resolve(base_dir, path))?;
                Ok((tpl.space().clone(), Some(tpl)))
            }
            (None, Some(shape)) => Ok((ParamSpace::from_shape(shape)?.into_arc(), None)),
            _ => Err(Error::Contract(
                "space must give exactly one of 'template' or 'shape'".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantedSpec {
    #[serde(default)]
    pub hot: Vec<HotPattern>,
    pub base_rate: Probability,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoolOracleSpec {
    pub path: PathBuf,
    pub k: u32,
}

/// Oracle choice: a planted synthetic model or a cached generation pool.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<PlantedSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolOracleSpec>,
}

/// A built oracle plus the exact reference failure probability when one is
/// computable at desk scale.
pub struct BuiltOracle {
    pub oracle: Box<dyn FailureOracle>,
    pub reference_mu: Option<f64>,
}

impl OracleSpec {
    pub fn build(&self, base_dir: &Path, space: &Arc<ParamSpace>) -> Result<BuiltOracle> {
        match (&self.planted, &self.pool) {
            (Some(spec), None) => {
                let model = PlantedModel {
                    hot_patterns: spec.hot.clone(),
                    base_rate: spec.base_rate.clone(),
                };
                model.validate(space)?;
                let reference_mu = model.exact_mu_f64(space, EXACT_MU_BUDGET).ok();
                Ok(BuiltOracle {
                    oracle: Box::new(model),
                    reference_mu,
                })
            }
            (None, Some(spec)) => {
                let pool = GenerationPool::load_jsonl(&resolve(base_dir, &spec.path))?;
                let oracle = PoolOracle::new(pool, spec.k)?;
                let reference_mu = oracle.exact_mu_f64(space).ok();
                Ok(BuiltOracle {
                    oracle: Box::new(oracle),
                    reference_mu,
                })
            }
            _ => Err(Error::Contract(
                "oracle must give exactly one of 'planted' or 'pool'".into(),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CemSection {
    pub n: u64,
    pub t: u32,
    pub zeta: f64,
}

fn default_alpha() -> f64 {
    0.01
}

fn default_nominal() -> f64 {
    0.99
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_replicates() -> u64 {
    100
}

fn default_target_rse() -> f64 {
    0.01
}

fn default_retain() -> bool {
    true
}

/// Configuration for `run` and `baseline`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    pub oracle: OracleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cem: Option<CemSection>,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub m: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub reuse: bool,
    #[serde(default = "default_retain")]
    pub retain_samples: bool,
    #[serde(default)]
    pub meta: RunMeta,
}

/// Configuration for `sweep`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    pub oracle: OracleSpec,
    pub cem: SweepCemSection,
    pub n_grid: Vec<u64>,
    pub m_grid: Vec<u64>,
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default = "default_nominal")]
    pub nominal: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_target_rse")]
    pub target_rse: f64,
    /// Count inferences as max(T×N, M) per cell (CEM draws reused for the
    /// first sample set); estimates always use fresh draws so replicate
    /// sample sets stay independent.
    #[serde(default = "default_reuse_true")]
    pub reuse: bool,
}

fn default_reuse_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SweepCemSection {
    pub t: u32,
    pub zeta: f64,
}

/// Configuration for `coverage`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageConfig {
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    pub oracle: OracleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cem: Option<CemSection>,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub m: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default = "default_nominal")]
    pub nominal: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Resolve a possibly relative path against the config file directory.
pub fn resolve(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}
