//! TOML configuration: one flat table per module plus a schema version.
//!
//! Every table and field is optional; omitted values take the defaults
//! documented on each struct. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::PidGains;
use crate::channel::{LinkBudget, LinkConfig};
use crate::cost::{CostModel, CostWeights};
use crate::dynamics::DynamicsParams;
use crate::harness::HarnessConfig;
use crate::scenario::ScenarioGeometry;
use crate::solver::SolverConfig;
use crate::surrogate::SmoothingConfig;
use crate::swarm::SwarmConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Base seed; realization `r` uses stream `r` of this seed.
    pub seed: u64,
    pub scenario: ScenarioGeometry,
    pub dynamics: DynamicsParams,
    pub link: LinkConfig,
    pub smoothing: SmoothingConfig,
    pub weights: CostWeights,
    pub solver: SolverConfig,
    pub swarm: SwarmConfig,
    pub pid: PidGains,
    pub harness: HarnessConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            scenario: ScenarioGeometry::default(),
            dynamics: DynamicsParams::default(),
            link: LinkConfig::default(),
            smoothing: SmoothingConfig::default(),
            weights: CostWeights::default(),
            solver: SolverConfig::default(),
            swarm: SwarmConfig::default(),
            pid: PidGains::default(),
            harness: HarnessConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.scenario.validate()?;
        self.dynamics.validate()?;
        LinkBudget::from_config(&self.link)?;
        self.smoothing.validate()?;
        self.weights.validate()?;
        self.solver.validate()?;
        self.swarm.validate()?;
        self.pid.validate()?;
        self.harness.validate()?;
        Ok(())
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| locate(e, text))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid("config", e.to_string()))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn link_budget(&self) -> Result<LinkBudget> {
        LinkBudget::from_config(&self.link)
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        Ok(CostModel::new(self.weights.clone(), self.link_budget()?, self.smoothing, self.dynamics))
    }

    /// Number of control periods in an episode.
    pub fn steps(&self) -> usize {
        (self.scenario.duration_s / self.dynamics.ts).round() as usize
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| Error::ConfigParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.validate().map_err(|e| match locate(e, &text) {
        Error::ConfigParse { message, .. } => Error::ConfigParse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    Ok(cfg)
}

/// Attaches the line of the offending key to a validation error, when present in the text.
fn locate(err: Error, text: &str) -> Error {
    let Error::InvalidConfig { field, reason } = &err else {
        return err;
    };
    let (table, key) = match field.rsplit_once('.') {
        Some((t, k)) => (t, k.split('[').next().unwrap_or(k)),
        None => ("", field.as_str()),
    };
    let mut current = "";
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        if current == table && k.trim() == key {
            return Error::ConfigParse {
                path: "<string>".into(),
                message: format!("line {}: `{field}` {reason}", n + 1),
            };
        }
    }
    err
}
