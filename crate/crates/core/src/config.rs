//! Run configuration.
//!
//! Layers, lowest to highest: built-in defaults, a TOML file, environment
//! variables, then `key=value` overrides from the command line. Environment
//! variables name a dotted key with `__` between parts after the `QREFINE_`
//! prefix, so `QREFINE_TERMINATION__EPSILON1=0.02` sets
//! `termination.epsilon1`. Values are read as TOML literals when they parse
//! as one and as plain strings otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::detectors::{DetectorKind, DetectorOptions};
use crate::expr::EvalOptions;
use crate::llm::CostModel;
use crate::model::Weights;
use crate::orchestrator::{RefineConfig, RoutingKind, RoutingPolicy, DEFAULT_ORDER};
use crate::scoring::TerminationConfig;

pub const ENV_PREFIX: &str = "QREFINE_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactualSettings {
    pub jaccard_threshold: f64,
}

impl Default for FactualSettings {
    fn default() -> Self {
        FactualSettings { jaccard_threshold: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MathSettings {
    pub max_exponent: u32,
}

impl Default for MathSettings {
    fn default() -> Self {
        MathSettings {
            max_exponent: EvalOptions::default().max_exponent,
        }
    }
}

/// Which detectors run when a transport is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// Rule-based only.
    Rules,
    /// Rules first, model on indeterminate verdicts.
    #[default]
    Hybrid,
    /// Model only.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSettings {
    pub mode: DetectorMode,
    pub factual: FactualSettings,
    pub math: MathSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub model_generator: String,
    pub model_detector: String,
    /// Requests per minute; 0 disables the limiter.
    pub rate_limit_rpm: u32,
    pub base_url: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub jitter_seed: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            model_generator: "gpt-4.1-nano".into(),
            model_detector: "gpt-4.1-nano".into(),
            rate_limit_rpm: 0,
            base_url: None,
            timeout_secs: 60,
            max_retries: 3,
            jitter_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorSettings {
    pub routing: RoutingKind,
    pub order: [DetectorKind; 4],
    /// Co-occurrence weights, rows and columns in component order
    /// (consistency, solvability, factual, math).
    pub matrix: Option<[[f64; 4]; 4]>,
    pub full_pass: bool,
    /// Concurrent refine runs; 0 means one per core.
    pub workers: usize,
}

impl Default for OrchestratorSettings {
    fn default() -> Self {
        OrchestratorSettings {
            routing: RoutingKind::StaticOrder,
            order: DEFAULT_ORDER,
            matrix: None,
            full_pass: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: PathBuf::from("traces"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub weights: Weights,
    pub termination: TerminationConfig,
    pub detectors: DetectorSettings,
    pub llm: LlmSettings,
    pub orchestrator: OrchestratorSettings,
    /// Entries here are added to, or replace, the built-in price table.
    pub cost_model: Option<CostModel>,
    pub kb: Option<PathBuf>,
    /// Directory of prompt template overrides.
    pub templates: Option<PathBuf>,
    pub output: OutputSettings,
}

/// Reads a TOML literal, falling back to a bare string.
fn parse_scalar(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Paths in a config file are relative to the file's directory.
fn resolve_paths(table: &mut Table, base: &Path) {
    let fix = |v: &mut Value| {
        if let Value::String(s) = v {
            if Path::new(s.as_str()).is_relative() {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        }
    };
    for key in ["kb", "templates"] {
        if let Some(v) = table.get_mut(key) {
            fix(v);
        }
    }
    if let Some(v) = table
        .get_mut("output")
        .and_then(Value::as_table_mut)
        .and_then(|o| o.get_mut("dir"))
    {
        fix(v);
    }
}

fn set_path(root: &mut Table, path: &[String], value: Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("`{p}` is not a table")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Merges the layers and deserializes. `env` is the process environment
    /// (passed in so tests can control it); `overrides` are `key=value`
    /// strings with dotted keys.
    pub fn load(
        file: Option<&Path>,
        env: &[(String, String)],
        overrides: &[String],
    ) -> Result<RunConfig, ConfigError> {
        let mut root = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                let mut t = text.parse::<Table>().map_err(|e| ConfigError::Parse {
                    origin: path.display().to_string(),
                    message: e.to_string(),
                })?;
                if let Some(base) = path.parent() {
                    resolve_paths(&mut t, base);
                }
                t
            }
            None => Table::new(),
        };
        let mut env_sorted: Vec<_> = env.iter().collect();
        env_sorted.sort();
        for (k, v) in env_sorted {
            if k == "QREFINE_BASE_URL" {
                set_path(&mut root, &["llm".into(), "base_url".into()], Value::String(v.clone()))?;
                continue;
            }
            let Some(rest) = k.strip_prefix(ENV_PREFIX) else { continue };
            if !rest.contains("__") {
                continue;
            }
            let path: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
            set_path(&mut root, &path, parse_scalar(v))?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .filter(|(k, _)| !k.trim().is_empty())
                .ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            let path: Vec<String> = k.trim().split('.').map(str::to_string).collect();
            set_path(&mut root, &path, parse_scalar(v.trim()))?;
        }
        let cfg: RunConfig = Value::Table(root).try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            origin: "configuration".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks cross-field invariants and that referenced paths exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.termination
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let j = self.detectors.factual.jaccard_threshold;
        if !(j > 0.0 && j <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "detectors.factual.jaccard_threshold {j} must be in (0, 1]"
            )));
        }
        self.routing_policy()?;
        for (key, path) in [("kb", &self.kb), ("templates", &self.templates)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::Invalid(format!("{key} path {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn routing_policy(&self) -> Result<RoutingPolicy, ConfigError> {
        let o = &self.orchestrator;
        let p = match o.routing {
            RoutingKind::StaticOrder => RoutingPolicy::static_order(o.order),
            RoutingKind::CooccurrencePriority => {
                RoutingPolicy::cooccurrence(o.matrix.unwrap_or([[1.0; 4]; 4]), o.order)
            }
        };
        p.map_err(|e| ConfigError::Invalid(format!("orchestrator: {e}")))
    }

    pub fn refine_config(&self) -> Result<RefineConfig, ConfigError> {
        Ok(RefineConfig {
            weights: self.weights,
            termination: self.termination,
            policy: self.routing_policy()?,
            full_pass: self.orchestrator.full_pass,
        })
    }

    pub fn detector_options(&self) -> DetectorOptions {
        DetectorOptions {
            eval: EvalOptions {
                max_exponent: self.detectors.math.max_exponent,
            },
            jaccard_threshold: self.detectors.factual.jaccard_threshold,
        }
    }

    /// Built-in prices with the configured entries merged over them.
    pub fn cost_model(&self) -> CostModel {
        match &self.cost_model {
            Some(c) => CostModel::default().merged(c),
            None => CostModel::default(),
        }
    }
}
