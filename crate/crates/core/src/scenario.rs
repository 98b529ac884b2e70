//! Scenario files and the synthesis pipeline they drive.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cbf::{synthesize, CbfError, CbfSpec};
use crate::controller::{ControllerError, ControllerParams};
use crate::plant::{Disturbance, Plant, PlantError};
use crate::stl::{parse_formula, Formula, ParseError, PredicateTable};
use crate::transform::{to_desired_form, DesiredForm, TransformConfig, TransformError};
use crate::tree::{assign_times, build_tree, TimedTree, TimingConfig, TreeError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cbf(#[from] CbfError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// End time; the specification horizon when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
    pub initial_state: Vec<f64>,
    /// Initial `xhat` and `z`; the initial state when absent.
    #[serde(default)]
    pub initial_estimate: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    0.005
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub svg: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub predicates: PredicateTable,
    pub formula: String,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub timing: TimingConfig,
    /// Node index to margin `b` for temporal nodes of the transformed formula.
    #[serde(default)]
    pub margins: BTreeMap<usize, f64>,
    #[serde(default)]
    pub controller: ControllerParams,
    pub plant: Plant,
    /// Zero when absent. Used only to drive the plant.
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
    pub sim: SimConfig,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// The configuration with every default written out.
    pub fn effective(&self) -> Self {
        let mut out = self.clone();
        if out.disturbance.is_none() {
            out.disturbance = Some(Disturbance::zero(self.plant.disturbance_dim()));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn disturbance(&self) -> Disturbance {
        self.disturbance.clone().unwrap_or_else(|| Disturbance::zero(self.plant.disturbance_dim()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.plant.validate()?;
        self.controller.validate(self.plant.input_dim())?;
        let n = self.plant.state_dim();
        let bad = |s: String| Err(ScenarioError::Invalid(s));
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite()) {
            return bad(format!("sim.dt must be positive, got {}", self.sim.dt));
        }
        if let Some(h) = self.sim.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("sim.horizon must be positive, got {h}"));
            }
        }
        if self.sim.initial_state.len() != n || self.sim.initial_state.iter().any(|v| !v.is_finite()) {
            return bad(format!("sim.initial_state must hold {n} finite values"));
        }
        if let Some(est) = &self.sim.initial_estimate {
            if est.len() != n || est.iter().any(|v| !v.is_finite()) {
                return bad(format!("sim.initial_estimate must hold {n} finite values"));
            }
        }
        if let Some(d) = &self.disturbance {
            if d.channels.len() != self.plant.disturbance_dim() {
                return bad(format!("disturbance must have {} channels", self.plant.disturbance_dim()));
            }
        }
        if self.predicates.max_dim() > n {
            return bad(format!("predicates use {} state components, plant has {n}", self.predicates.max_dim()));
        }
        Ok(())
    }
}

/// Every stage of the synthesis pipeline for one scenario.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub original: Formula,
    pub desired: DesiredForm,
    pub timed: TimedTree,
    pub spec: CbfSpec,
}

pub fn parse_scenario_formula(cfg: &ScenarioConfig) -> Result<Formula, ScenarioError> {
    Ok(parse_formula(&cfg.formula, &cfg.predicates)?)
}

pub fn transform_stage(cfg: &ScenarioConfig) -> Result<(Formula, DesiredForm), ScenarioError> {
    let original = parse_scenario_formula(cfg)?;
    let desired = to_desired_form(&original, &cfg.predicates, &cfg.transform)?;
    Ok((original, desired))
}

pub fn tree_stage(cfg: &ScenarioConfig) -> Result<(Formula, DesiredForm, TimedTree), ScenarioError> {
    let (original, desired) = transform_stage(cfg)?;
    let timed = assign_times(&build_tree(&desired.formula)?, &cfg.timing)?;
    Ok((original, desired, timed))
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Pipeline, ScenarioError> {
    let (original, desired, timed) = tree_stage(cfg)?;
    let spec = synthesize(&timed, &desired.predicates, &cfg.margins, cfg.transform.kappa)?;
    Ok(Pipeline { original, desired, timed, spec })
}
