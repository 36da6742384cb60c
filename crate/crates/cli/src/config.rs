//! Experiment configuration files.
//!
//! A config is a TOML document. Every section is optional and falls back to
//! the defaults of the selected environment; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/bench"
//!
//! [env]
//! kind = "brownian"
//! u_max = 0.5
//!
//! [network]
//! hidden_layers = 3
//! hidden_width = 32
//!
//! [train]
//! episodes = 6000
//! mu = 0.1
//! ```
//!
//! `PIRL_OUTPUT_DIR` and `PIRL_SEED` override `output_dir` and `seed`.

use std::fs;
use std::path::{Path, PathBuf};

use pirl_core::benchmark::{make_brownian_benchmark, BrownianBenchmark, BrownianConfig};
use pirl_core::env::{Environment, Region};
use pirl_core::qnet::NetworkSpec;
use pirl_core::training::TrainConfig;
use pirl_core::vehicle::{make_cornering_env, make_drift_env, VehicleEnv, VehicleEnvConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUTPUT_DIR_VAR: &str = "PIRL_OUTPUT_DIR";
pub const SEED_VAR: &str = "PIRL_SEED";

#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Brownian(BrownianConfig),
    Cornering(VehicleEnvConfig),
    Drift(VehicleEnvConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Brownian(BrownianConfig::default())
    }
}

/// A constructed environment.
pub enum BuiltEnv {
    Brownian(BrownianBenchmark),
    Vehicle(VehicleEnv),
}

impl BuiltEnv {
    pub fn as_dyn(&self) -> &dyn Environment {
        match self {
            BuiltEnv::Brownian(e) => e,
            BuiltEnv::Vehicle(e) => e,
        }
    }
}

impl EnvConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvConfig::Brownian(_) => "brownian",
            EnvConfig::Cornering(_) => "cornering",
            EnvConfig::Drift(_) => "drift",
        }
    }

    /// Overlays `table` (minus its `kind` key) on the defaults of that kind.
    pub fn from_table(mut table: toml::Table) -> Result<Self, CliError> {
        let kind = match table.remove("kind") {
            None => "brownian".to_string(),
            Some(toml::Value::String(k)) => k,
            Some(other) => return Err(CliError::Config(format!("env.kind must be a string, got {other}"))),
        };
        let overlay = |base: toml::Table| -> toml::Value {
            let mut merged = toml::Value::Table(base);
            merge(&mut merged, toml::Value::Table(table.clone()));
            merged
        };
        let parse_err = |e: toml::de::Error| CliError::Config(format!("[env]: {e}"));
        Ok(match kind.as_str() {
            "brownian" => EnvConfig::Brownian(overlay(to_table(&BrownianConfig::default())?).try_into().map_err(parse_err)?),
            "cornering" => EnvConfig::Cornering(overlay(to_table(&VehicleEnvConfig::cornering())?).try_into().map_err(parse_err)?),
            "drift" => EnvConfig::Drift(overlay(to_table(&VehicleEnvConfig::drift())?).try_into().map_err(parse_err)?),
            other => {
                return Err(CliError::Config(format!(
                    "unknown env.kind {other:?} (expected brownian, cornering or drift)"
                )))
            }
        })
    }

    pub fn to_table(&self) -> Result<toml::Table, CliError> {
        let mut t = match self {
            EnvConfig::Brownian(c) => to_table(c)?,
            EnvConfig::Cornering(c) | EnvConfig::Drift(c) => to_table(c)?,
        };
        t.insert("kind".into(), toml::Value::String(self.kind().into()));
        Ok(t)
    }

    pub fn build(&self) -> Result<BuiltEnv, CliError> {
        let cfg_err = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        Ok(match self {
            EnvConfig::Brownian(c) => BuiltEnv::Brownian(make_brownian_benchmark(c.clone()).map_err(|e| cfg_err(&e))?),
            EnvConfig::Cornering(c) => BuiltEnv::Vehicle(make_cornering_env(c.clone()).map_err(|e| cfg_err(&e))?),
            EnvConfig::Drift(c) => BuiltEnv::Vehicle(make_drift_env(c.clone()).map_err(|e| cfg_err(&e))?),
        })
    }
}

fn to_table<T: Serialize>(v: &T) -> Result<toml::Table, CliError> {
    match toml::Value::try_from(v) {
        Ok(toml::Value::Table(t)) => Ok(t),
        Ok(_) => Err(CliError::Config("expected a table".into())),
        Err(e) => Err(CliError::Config(e.to_string())),
    }
}

/// Recursive table overlay; non-table values replace.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            hidden_width: 32,
        }
    }
}

/// Finite-difference oracle grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Points per state axis.
    pub points: Vec<usize>,
    /// Axis bounds; default to the collocation box.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Defaults to the environment's τ_max.
    pub tau_max: Option<f64>,
    pub output_dt: f64,
    pub dtau: Option<f64>,
    /// Mollifier width; defaults to two cells of the finest axis.
    pub epsilon: Option<f64>,
    pub cfl_safety: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            points: vec![201],
            lower: None,
            upper: None,
            tau_max: None,
            output_dt: 0.02,
            dtau: None,
            epsilon: None,
            cfl_safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub rollouts: usize,
    /// Write one trajectory CSV per rollout.
    pub trajectories: bool,
    /// Start sampled rollouts at this remaining horizon instead of drawing
    /// it from the environment's horizon distribution.
    pub horizon: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rollouts: 100,
            trajectories: true,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub oracle: OracleConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            env: EnvConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            oracle: OracleConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Everything but `[env]`, which needs the kind before its defaults are known.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSections {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    network: NetworkConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    oracle: OracleConfig,
    #[serde(default)]
    eval: EvalConfig,
}

impl ExperimentConfig {
    /// Parses a config without consulting the environment variables.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let env = match table.remove("env") {
            None => EnvConfig::default(),
            Some(toml::Value::Table(t)) => EnvConfig::from_table(t)?,
            Some(_) => return Err(CliError::Config("[env] must be a table".into())),
        };
        let rest: FileSections = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let defaults = Self::default();
        let cfg = Self {
            seed: rest.seed.unwrap_or(defaults.seed),
            output_dir: rest.output_dir.unwrap_or(defaults.output_dir),
            env,
            network: rest.network,
            train: rest.train,
            oracle: rest.oracle,
            eval: rest.eval,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies the environment overrides.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply_overrides(std::env::var(OUTPUT_DIR_VAR).ok(), std::env::var(SEED_VAR).ok())?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, output_dir: Option<String>, seed: Option<String>) -> Result<(), CliError> {
        if let Some(dir) = output_dir.filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        if let Some(s) = seed.filter(|s| !s.is_empty()) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_VAR} must be an unsigned integer, got {s:?}")))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config("seed must fit in a signed 64-bit integer".into()));
        }
        let env = self.env.build()?;
        self.network_spec(env.as_dyn())
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.oracle.points.iter().any(|&p| p < 3) {
            return Err(CliError::Config("oracle.points must all be >= 3".into()));
        }
        if self.eval.rollouts == 0 {
            return Err(CliError::Config("eval.rollouts must be >= 1".into()));
        }
        if let Some(h) = self.eval.horizon {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(CliError::Config(format!("eval.horizon must be a non-negative number, got {h}")));
            }
        }
        Ok(())
    }

    pub fn network_spec(&self, env: &dyn Environment) -> NetworkSpec {
        NetworkSpec {
            input_dim: 1 + env.feature_dim(),
            hidden_layers: self.network.hidden_layers,
            hidden_width: self.network.hidden_width,
            output_dim: env.num_actions(),
        }
    }

    /// The fully resolved config as TOML.
    pub fn to_toml(&self) -> Result<String, CliError> {
        let mut t = toml::Table::new();
        t.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        t.insert("output_dir".into(), toml::Value::String(self.output_dir.display().to_string()));
        t.insert("env".into(), toml::Value::Table(self.env.to_table()?));
        t.insert("network".into(), toml::Value::Table(to_table(&self.network)?));
        t.insert("train".into(), toml::Value::Table(to_table(&self.train)?));
        t.insert("oracle".into(), toml::Value::Table(to_table(&self.oracle)?));
        t.insert("eval".into(), toml::Value::Table(to_table(&self.eval)?));
        toml::to_string(&t).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Bounds of the oracle grid: explicit, or the collocation box.
pub fn oracle_bounds(cfg: &OracleConfig, env: &dyn Environment) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (lo, hi) = match &env.domains().collocation {
        Region::Box { lo, hi } | Region::Faces { lo, hi, .. } => (lo.clone(), hi.clone()),
    };
    Ok((cfg.lower.clone().unwrap_or(lo), cfg.upper.clone().unwrap_or(hi)))
}
