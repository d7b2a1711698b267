use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

use pfit::classify::{MixingOptions, PairPlan, DEFAULT_MASS_THRESHOLD, DEFAULT_TAIL_WINDOW};
use pfit::partition::{SamplingScheme, DEFAULT_SAMPLES_PER_CELL};
use pfit::placement::{Mode, Solver, DEFAULT_ALPHA, DEFAULT_EPSILON};
use pfit::{LogBase, OutsidePolicy};

use crate::ConfigError;

/// Largest partition the CLI accepts.
pub const MAX_CELLS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub substeps: Option<usize>,
    /// CSV velocity data (`x,y,u,v`) for `name = "gridded-flow"`.
    #[serde(default)]
    pub velocity_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementConfig {
    pub mode: Mode,
    pub count: usize,
    pub epsilon: f64,
    pub solver: Solver,
    pub alpha: f64,
    pub admissible: Option<Vec<usize>>,
    /// Also search for the smallest full cover up to this size (exact search).
    pub full_cover_max: Option<usize>,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Actuator,
            count: 1,
            epsilon: DEFAULT_EPSILON,
            solver: Solver::LpRounded,
            alpha: DEFAULT_ALPHA,
            admissible: None,
            full_cover_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub mass_threshold: f64,
    /// Horizon of the mixing test; defaults to the run's `n_max`.
    pub n_max: Option<usize>,
    pub tol: f64,
    pub tail_window: usize,
    pub pairs: PairPlan,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            mass_threshold: DEFAULT_MASS_THRESHOLD,
            n_max: None,
            tol: 1e-6,
            tail_window: DEFAULT_TAIL_WINDOW,
            pairs: PairPlan::default(),
        }
    }
}

impl ClassifyConfig {
    pub fn mixing_options(&self, default_n_max: usize) -> MixingOptions {
        MixingOptions {
            n_max: self.n_max.unwrap_or(default_n_max),
            tol: self.tol,
            tail_window: self.tail_window,
            pairs: self.pairs.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub dims: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples_per_cell: usize,
    #[serde(default)]
    pub sampling: SamplingScheme,
    #[serde(default)]
    pub outside_policy: OutsidePolicy,
    /// `"lebesgue"`, `"uniform"`, or a path to a JSON array of weights.
    #[serde(default = "default_measure")]
    pub measure: String,
    /// Transfer horizon; `N - 1` when absent.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES_PER_CELL
}

fn default_measure() -> String {
    "lebesgue".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Flags that override fields of the config file (or stand in for it).
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Run configuration (JSON).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// System name: identity, doubling, baker, rotation, double-gyre, gridded-flow.
    #[arg(long)]
    pub system: Option<String>,
    /// System parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    /// Euler time step for flow systems.
    #[arg(long)]
    pub step: Option<f64>,
    /// Euler sub-steps per map application.
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Velocity CSV for gridded-flow.
    #[arg(long)]
    pub velocity_file: Option<PathBuf>,
    /// Cells per axis, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Samples per cell.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Use seeded random sampling instead of the uniform subgrid.
    #[arg(long)]
    pub seed: Option<u64>,
    /// absorb, renormalize or reject samples that leave the domain.
    #[arg(long, value_parser = parse_policy)]
    pub outside_policy: Option<OutsidePolicy>,
    /// lebesgue, uniform, or a JSON weights file.
    #[arg(long)]
    pub measure: Option<String>,
    /// Transfer horizon (default: number of cells - 1).
    #[arg(long)]
    pub n_max: Option<usize>,
    /// nats or bits.
    #[arg(long, value_parser = parse_base)]
    pub log_base: Option<LogBase>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<OutsidePolicy, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
        format!("unknown outside policy `{s}` (expected absorb, renormalize or reject)")
    })
}

fn parse_base(s: &str) -> Result<LogBase, String> {
    match s {
        "nats" | "e" => Ok(LogBase::Nats),
        "bits" | "2" => Ok(LogBase::Bits),
        _ => Err(format!("unknown log base `{s}` (expected nats or bits)")),
    }
}

impl RunConfig {
    /// Reads the config file (if any) and applies flag overrides.
    pub fn resolve(ov: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match &ov.config {
            Some(path) => Self::load(path)?,
            None => {
                let Some(name) = &ov.system else {
                    return Err(ConfigError::new("either --config or --system is required").into());
                };
                let Some(dims) = &ov.dims else {
                    return Err(ConfigError::new("--dims is required without --config").into());
                };
                RunConfig {
                    system: SystemConfig {
                        name: name.clone(),
                        params: Vec::new(),
                        step: None,
                        substeps: None,
                        velocity_file: None,
                    },
                    dims: dims.clone(),
                    samples_per_cell: DEFAULT_SAMPLES_PER_CELL,
                    sampling: SamplingScheme::UniformSubgrid,
                    outside_policy: OutsidePolicy::Absorb,
                    measure: default_measure(),
                    n_max: None,
                    log_base: LogBase::Nats,
                    placement: PlacementConfig::default(),
                    classify: ClassifyConfig::default(),
                    output_dir: default_output(),
                }
            }
        };
        if let Some(v) = &ov.system {
            cfg.system.name = v.clone();
        }
        if let Some(v) = &ov.params {
            cfg.system.params = v.clone();
        }
        if let Some(v) = ov.step {
            cfg.system.step = Some(v);
        }
        if let Some(v) = ov.substeps {
            cfg.system.substeps = Some(v);
        }
        if let Some(v) = &ov.velocity_file {
            cfg.system.velocity_file = Some(v.clone());
        }
        if let Some(v) = &ov.dims {
            cfg.dims = v.clone();
        }
        if let Some(v) = ov.samples {
            cfg.samples_per_cell = v;
        }
        if let Some(seed) = ov.seed {
            cfg.sampling = SamplingScheme::Random { seed };
        }
        if let Some(v) = ov.outside_policy {
            cfg.outside_policy = v;
        }
        if let Some(v) = &ov.measure {
            cfg.measure = v.clone();
        }
        if let Some(v) = ov.n_max {
            cfg.n_max = Some(v);
        }
        if let Some(v) = ov.log_base {
            cfg.log_base = v;
        }
        if let Some(v) = &ov.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::new(format!("invalid config {}: {e}", path.display())))?;
        // relative paths inside the config are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(v) = &cfg.system.velocity_file {
            cfg.system.velocity_file = Some(base.join(v));
        }
        if !matches!(cfg.measure.as_str(), "lebesgue" | "uniform") {
            cfg.measure = base.join(&cfg.measure).display().to_string();
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let bad = |m: String| -> anyhow::Result<()> { Err(ConfigError::new(m).into()) };
        if self.dims.is_empty() || self.dims.len() > 2 {
            return bad(format!("dims must have 1 or 2 entries, got {:?}", self.dims));
        }
        let n = self
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .unwrap_or(usize::MAX);
        if n > MAX_CELLS {
            return bad(format!("partition has {n} cells, above the limit of {MAX_CELLS}"));
        }
        if self.n_max == Some(0) {
            return bad("n_max must be at least 1".into());
        }
        if let Some(path) = &self.system.velocity_file {
            if !path.exists() {
                return bad(format!("velocity file {} does not exist", path.display()));
            }
        }
        if !matches!(self.measure.as_str(), "lebesgue" | "uniform") && !Path::new(&self.measure).exists() {
            return bad(format!("measure file {} does not exist", self.measure));
        }
        Ok(())
    }

    pub fn out(&self, file: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating {}", self.output_dir.display()))?;
        Ok(self.output_dir.join(file))
    }
}
