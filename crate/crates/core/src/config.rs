//! Project configuration, read from TOML.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::etc::{partition_plane, LtiLoop, TriggerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub name: String,
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub k: [f64; 2],
    pub initial: [f64; 2],
}

impl LoopConfig {
    pub fn plant(&self) -> LtiLoop {
        LtiLoop {
            name: self.name.clone(),
            a: self.a,
            b: self.b,
            k: self.k,
        }
    }
}

/// How the early-update windows are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum EarlyRule {
    /// No early updates: loop automata have no `Ear` locations.
    None,
    /// `d̄ₛ = τ̲ₛ^σ₁`, `d̲ₛ = d̄ₛ − offset` (time units).
    Offset { offset: f64 },
    /// Explicit windows in ticks.
    Table { lower: Vec<i64>, upper: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub bounds_directions: usize,
    pub margin_ticks: i64,
    pub transition_directions: usize,
    pub transition_step: f64,
    pub inflate: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            bounds_directions: 101,
            margin_ticks: 1,
            transition_directions: 41,
            transition_step: crate::etc::DEFAULT_STEP,
            inflate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_updates: usize,
    pub reachable_only: bool,
    pub location_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_updates: 5_000_000,
            reachable_only: true,
            location_budget: crate::automata::DEFAULT_LOCATION_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub horizon: f64,
    pub seed: u64,
    pub runs: usize,
    pub perturb_initial: bool,
    pub record_step: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon: 10.0,
            seed: 0,
            runs: 1,
            perturb_initial: false,
            record_step: Some(0.01),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    pub q: usize,
    pub sigmas: Vec<f64>,
    pub sigma_bar: f64,
    pub tau_cap: f64,
    /// Network occupancy time per update (time units).
    pub delta: f64,
    #[serde(default = "default_scale")]
    pub scale: i64,
    #[serde(default)]
    pub ear_max: Option<i64>,
    pub early: EarlyRule,
    /// Start every loop in the environment-chosen region set instead of the
    /// region of its initial state.
    #[serde(default)]
    pub initial_regions: Option<Vec<usize>>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimSection,
    pub loops: Vec<LoopConfig>,
}

fn default_scale() -> i64 {
    1000
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> Result<ProjectConfig, ConfigError> {
        let cfg: ProjectConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ProjectConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        ProjectConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn trigger(&self) -> TriggerConfig {
        TriggerConfig {
            sigmas: self.sigmas.clone(),
            sigma_bar: self.sigma_bar,
            tau_cap: self.tau_cap,
        }
    }

    pub fn delta_ticks(&self) -> i64 {
        (self.delta * self.scale as f64).round() as i64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        partition_plane(self.q).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.sigmas.is_empty() {
            return bad("at least one triggering coefficient is required".into());
        }
        self.trigger()
            .check()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.scale < 1 {
            return bad("scale must be positive".into());
        }
        let ticks = self.delta * self.scale as f64;
        if ticks < 0.5 || (ticks - ticks.round()).abs() > 1e-9 {
            return bad(format!(
                "delta {} is not a positive whole number of ticks",
                self.delta
            ));
        }
        match (&self.early, self.ear_max) {
            (EarlyRule::None, Some(_)) => return bad("ear_max needs an early-update rule".into()),
            (_, Some(m)) if m < 1 => return bad("ear_max must be at least 1".into()),
            (EarlyRule::Offset { offset }, _) if *offset < 0.0 => {
                return bad("early offset must be nonnegative".into())
            }
            (EarlyRule::Table { lower, upper }, _)
                if lower.len() != self.q || upper.len() != self.q =>
            {
                return bad("early table needs one entry per region".into())
            }
            _ => {}
        }
        if let Some(set) = &self.initial_regions {
            if set.is_empty() || set.iter().any(|&s| s == 0 || s > self.q) {
                return bad("initial regions are numbered 1..=q".into());
            }
        }
        if self.loops.is_empty() {
            return bad("no loops".into());
        }
        let mut names = BTreeSet::new();
        for l in &self.loops {
            if l.name == "net" || !names.insert(l.name.as_str()) {
                return bad(format!("loop name `{}` is reserved or repeated", l.name));
            }
            l.plant()
                .check()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if l.initial == [0.0, 0.0] {
                return bad(format!("loop `{}` starts at the origin", l.name));
            }
        }
        if self.sim.horizon <= 0.0 || self.sim.runs == 0 {
            return bad("simulation horizon and run count must be positive".into());
        }
        Ok(())
    }

    /// The configuration without the simulation section, which is all the
    /// synthesis depends on.
    pub fn model_part(&self) -> ProjectConfig {
        let mut c = self.clone();
        c.sim = SimSection::default();
        c
    }
}
