//! Run configuration: a versioned TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use iscc_core::sacrl::{SacConfig, TrainOptions};
use iscc_core::{PoolSpec, ScenarioConfig, ScheduleMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const POLICY_NAMES: [&str; 8] = [
    "greedy",
    "ml-c",
    "ml-cc",
    "ml-scc",
    "mp-tsc",
    "random",
    "sac",
    "exhaustive",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    /// Pool used for the shortened run. The long run uses `scenario.pool`.
    pub short_pool: Option<PoolSpec<f64>>,
    /// Largest accepted `|gain_long − gain_short| / gain_long`.
    pub tolerance: f64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            short_pool: None,
            tolerance: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: ScenarioConfig<f64>,
    pub mode: ScheduleMode,
    pub policy: String,
    /// Policies for `compare`.
    pub policies: Vec<String>,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Seed of the `random` policy.
    pub random_seed: u64,
    /// Learned parameters for the `sac` policy.
    pub params: Option<PathBuf>,
    pub sac: SacConfig,
    pub train: TrainOptions,
    pub robustness: RobustnessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioConfig::default(),
            mode: ScheduleMode::Zeros,
            policy: "greedy".into(),
            policies: ["greedy", "ml-c", "ml-cc", "ml-scc", "mp-tsc", "random"]
                .map(String::from)
                .to_vec(),
            rounds: 5,
            seeds: (0..10).collect(),
            out_dir: PathBuf::from("out"),
            random_seed: 0,
            params: None,
            sac: SacConfig::default(),
            train: TrainOptions::default(),
            robustness: RobustnessConfig::default(),
        }
    }
}

fn check_policy(name: &str) -> Result<(), CliError> {
    if POLICY_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown policy `{name}`; valid names: {}",
            POLICY_NAMES.join(", ")
        )))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        // toml errors carry the line, column and field
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Accepts a full summary file too, reading its `config` echo.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        let inner = match value.get("config") {
            Some(c) if value.get("command").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        check_policy(&self.policy)?;
        for p in &self.policies {
            check_policy(p)?;
        }
        if self.seeds.is_empty() {
            return Err(CliError::Usage("seeds must not be empty".into()));
        }
        if self.rounds == 0 {
            return Err(CliError::Usage("rounds must be at least 1".into()));
        }
        self.scenario.validate()?;
        self.sac.validate()?;
        if let Some(p) = &self.robustness.short_pool {
            p.validate()?;
        }
        Ok(())
    }
}

/// Parses `1,2,5`, `0-9` or a mix of both.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| s.trim().parse::<u64>().map_err(|e| format!("bad seed `{s}`: {e}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}
