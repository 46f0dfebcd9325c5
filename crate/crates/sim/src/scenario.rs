//! Scenario files: a versioned JSON document describing the map, the
//! robot models, the prior belief, the ground-truth start and the planner
//! settings. Covariances are stored row-major.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use aliasplan_core::belief::{GaussianComponent, MixtureBelief, DEFAULT_PRUNING_THRESHOLD};
use aliasplan_core::planner::{PlannerConfig, RefinementOrder, DEFAULT_OBS_SAMPLES};
use aliasplan_core::world::{
    normalize_angle, ActionId, ClassId, Landmark, LandmarkMap, MotionModel, MotionPrimitive, ObservationModel,
    RobotPose, WorldModel, DEFAULT_ASSOCIATION_CAP, DEFAULT_GATE_PROBABILITY,
};
use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCENARIO_VERSION: u32 = 1;
pub const DEFAULT_TERMINATION_ENTROPY: f64 = 0.05;
pub const DEFAULT_MAX_STEPS: usize = 100;

/// Tolerance used to match the true start against a prior mode mean.
const START_TOLERANCE: f64 = 1e-9;

const FIG2_SOURCE: &str = include_str!("../scenarios/fig2.scenario");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{}invalid {field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

impl ScenarioError {
    /// Name of the offending field, for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkSpec {
    pub id: u32,
    pub class: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveSpec {
    pub name: String,
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FovSpec {
    pub range: f64,
    pub half_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub weight: f64,
    pub mean: [f64; 3],
    pub covariance: [f64; 9],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "default_samples")]
    pub n_obs_samples: usize,
    #[serde(default)]
    pub rng_seed: u64,
    /// Hypothesis indices to add first; the rest follow by weight.
    #[serde(default)]
    pub refinement_order: Option<Vec<usize>>,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        Self {
            budget: None,
            n_obs_samples: DEFAULT_OBS_SAMPLES,
            rng_seed: 0,
            refinement_order: None,
        }
    }
}

fn default_samples() -> usize {
    DEFAULT_OBS_SAMPLES
}
fn default_pruning() -> f64 {
    DEFAULT_PRUNING_THRESHOLD
}
fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}
fn default_termination() -> f64 {
    DEFAULT_TERMINATION_ENTROPY
}
fn default_gate() -> f64 {
    DEFAULT_GATE_PROBABILITY
}
fn default_cap() -> usize {
    DEFAULT_ASSOCIATION_CAP
}

/// On-disk form of a scenario, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub classes: Vec<String>,
    pub landmarks: Vec<LandmarkSpec>,
    pub motion_primitives: Vec<PrimitiveSpec>,
    pub process_noise: [f64; 9],
    pub measurement_noise: [f64; 4],
    pub fov: FovSpec,
    pub prior_modes: Vec<ModeSpec>,
    pub true_start: [f64; 3],
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default = "default_pruning")]
    pub pruning_threshold: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_termination")]
    pub termination_entropy: f64,
    #[serde(default = "default_gate")]
    pub gate_probability: f64,
    #[serde(default = "default_cap")]
    pub association_cap: usize,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub classes: Vec<String>,
    pub world: WorldModel,
    pub prior: MixtureBelief,
    pub true_start: RobotPose,
    /// Prior mode whose mean is the true start.
    pub true_mode: usize,
    pub planner: PlannerConfig,
    pub pruning_threshold: f64,
    pub max_steps: usize,
    pub termination_entropy: f64,
}

impl Scenario {
    pub fn actions(&self) -> Vec<ActionId> {
        self.world.motion.actions().collect()
    }

    pub fn action_name(&self, action: ActionId) -> &str {
        self.world
            .motion
            .primitive(action)
            .map(|p| p.name.as_str())
            .unwrap_or("?")
    }

    pub fn class_name(&self, class: ClassId) -> &str {
        self.classes.get(class.0 as usize).map_or("?", String::as_str)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.validate().map_err(|e| match e {
        ScenarioError::Invalid { field, message, .. } => {
            let line = locate(text, &field);
            ScenarioError::Invalid { field, line, message }
        }
        other => other,
    })
}

/// The two-mode budget scenario shipped with the crate.
pub fn fig2() -> Scenario {
    parse_scenario(FIG2_SOURCE).expect("bundled scenario is valid")
}

pub fn fig2_source() -> &'static str {
    FIG2_SOURCE
}

/// Line of the first occurrence of the top-level key of `field`.
fn locate(text: &str, field: &str) -> Option<usize> {
    let key = if field == "prior weights" {
        "prior_modes"
    } else {
        field.split(['.', '[']).next()?
    };
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        line: None,
        message: message.into(),
    }
}

fn finite(values: &[f64], field: &str) -> Result<(), ScenarioError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(field, "values must be finite"))
    }
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<Scenario, ScenarioError> {
        if self.version != SCENARIO_VERSION {
            return Err(invalid(
                "version",
                format!("expected {SCENARIO_VERSION}, found {}", self.version),
            ));
        }

        let mut class_set = HashSet::new();
        for c in &self.classes {
            if !class_set.insert(c.as_str()) {
                return Err(invalid("classes", format!("duplicate class {c:?}")));
            }
        }
        if self.classes.len() > usize::from(u16::MAX) {
            return Err(invalid("classes", "too many classes"));
        }

        if self.landmarks.is_empty() {
            return Err(invalid("landmarks", "at least one landmark is required"));
        }
        let mut landmarks = Vec::with_capacity(self.landmarks.len());
        for (k, l) in self.landmarks.iter().enumerate() {
            let field = format!("landmarks[{k}]");
            finite(&[l.x, l.y], &field)?;
            let class = self
                .classes
                .iter()
                .position(|c| *c == l.class)
                .ok_or_else(|| invalid(&field, format!("class {:?} is not in the class set", l.class)))?;
            landmarks.push(Landmark::new(l.id, class as u16, l.x, l.y));
        }
        let map = LandmarkMap::new(landmarks).map_err(|e| invalid("landmarks", e.to_string()))?;

        if self.motion_primitives.is_empty() {
            return Err(invalid("motion_primitives", "at least one action is required"));
        }
        let mut names = HashSet::new();
        for (k, p) in self.motion_primitives.iter().enumerate() {
            let field = format!("motion_primitives[{k}]");
            finite(&[p.dx, p.dy, p.dtheta], &field)?;
            if !names.insert(p.name.as_str()) {
                return Err(invalid(field, format!("duplicate action name {:?}", p.name)));
            }
        }
        let primitives = self
            .motion_primitives
            .iter()
            .map(|p| MotionPrimitive::new(p.name.clone(), p.dx, p.dy, p.dtheta))
            .collect();
        finite(&self.process_noise, "process_noise")?;
        let motion = MotionModel::new(primitives, Matrix3::from_row_slice(&self.process_noise))
            .map_err(|e| invalid("process_noise", e.to_string()))?;

        finite(&self.measurement_noise, "measurement_noise")?;
        finite(&[self.fov.range, self.fov.half_angle], "fov")?;
        let observation = ObservationModel::new(
            Matrix2::from_row_slice(&self.measurement_noise),
            self.fov.range,
            self.fov.half_angle,
        )
        .map_err(|e| match e {
            aliasplan_core::ModelError::InvalidFieldOfView { .. } => invalid("fov", e.to_string()),
            _ => invalid("measurement_noise", e.to_string()),
        })?;

        let world = WorldModel::new(map, motion, observation)
            .with_gate_probability(self.gate_probability)
            .map_err(|e| invalid("gate_probability", e.to_string()))?;
        if self.association_cap == 0 {
            return Err(invalid("association_cap", "must be positive"));
        }
        let world = world.with_association_cap(self.association_cap);

        if self.prior_modes.is_empty() {
            return Err(invalid("prior_modes", "at least one prior mode is required"));
        }
        let mut modes = Vec::with_capacity(self.prior_modes.len());
        for (k, m) in self.prior_modes.iter().enumerate() {
            let field = format!("prior_modes[{k}]");
            finite(&m.mean, &field)?;
            finite(&m.covariance, &field)?;
            if !(m.weight.is_finite() && m.weight >= 0.0) {
                return Err(invalid("prior weights", format!("{field} has weight {}", m.weight)));
            }
            let g = GaussianComponent::new(Vector3::from(m.mean), Matrix3::from_row_slice(&m.covariance))
                .map_err(|e| invalid(format!("{field}.covariance"), e.to_string()))?;
            modes.push((m.weight, g));
        }
        let total: f64 = self.prior_modes.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > aliasplan_core::belief::WEIGHT_SUM_TOLERANCE {
            return Err(invalid("prior weights", format!("weights sum to {total}, expected 1")));
        }
        let prior = MixtureBelief::from_modes(modes).map_err(|e| invalid("prior weights", e.to_string()))?;

        finite(&self.true_start, "true_start")?;
        let true_start = RobotPose::new(self.true_start[0], self.true_start[1], self.true_start[2]);
        let matches: Vec<usize> = self
            .prior_modes
            .iter()
            .enumerate()
            .filter(|(_, m)| {
                (m.mean[0] - true_start.x).abs() <= START_TOLERANCE
                    && (m.mean[1] - true_start.y).abs() <= START_TOLERANCE
                    && normalize_angle(m.mean[2] - true_start.heading).abs() <= START_TOLERANCE
            })
            .map(|(k, _)| k)
            .collect();
        let true_mode = match matches.as_slice() {
            [k] => *k,
            [] => return Err(invalid("true_start", "does not coincide with any prior mode mean")),
            _ => return Err(invalid("true_start", "coincides with more than one prior mode mean")),
        };

        let refinement_order = match &self.planner.refinement_order {
            None => RefinementOrder::WeightDescending,
            Some(order) => RefinementOrder::Explicit(order.clone()),
        };
        let planner = PlannerConfig {
            budget: self.planner.budget,
            n_obs_samples: self.planner.n_obs_samples,
            rng_seed: self.planner.rng_seed,
            refinement_order,
            ..PlannerConfig::default()
        };
        planner
            .validate()
            .map_err(|e| invalid("planner", e.to_string()))?;
        if let Some(order) = &self.planner.refinement_order {
            aliasplan_core::planner::refinement_sequence(&planner.refinement_order, &prior.weights())
                .map_err(|_| invalid("planner.refinement_order", format!("{order:?} is not a set of distinct mode indices")))?;
        }

        if !(0.0..1.0).contains(&self.pruning_threshold) {
            return Err(invalid("pruning_threshold", "must lie in [0, 1)"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be positive"));
        }
        if !(self.termination_entropy.is_finite() && self.termination_entropy >= 0.0) {
            return Err(invalid("termination_entropy", "must be finite and non-negative"));
        }

        Ok(Scenario {
            name: self.name.clone(),
            classes: self.classes.clone(),
            world,
            prior,
            true_start,
            true_mode,
            planner,
            pruning_threshold: self.pruning_threshold,
            max_steps: self.max_steps,
            termination_entropy: self.termination_entropy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ScenarioFile {
        serde_json::from_str(
            r#"{
                "version": 1,
                "classes": ["a", "b"],
                "landmarks": [{"id": 1, "class": "a", "x": 1.0, "y": 0.0}],
                "motion_primitives": [{"name": "F", "dx": 1.0, "dy": 0.0, "dtheta": 0.0}],
                "process_noise": [0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.001],
                "measurement_noise": [0.01, 0, 0, 0.01],
                "fov": {"range": 3.0, "half_angle": 1.0},
                "prior_modes": [
                    {"weight": 0.5, "mean": [0, 0, 0], "covariance": [0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.001]},
                    {"weight": 0.5, "mean": [5, 0, 0], "covariance": [0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.001]}
                ],
                "true_start": [0, 0, 0]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let s = minimal().validate().unwrap();
        assert_eq!(s.max_steps, DEFAULT_MAX_STEPS);
        assert_eq!(s.termination_entropy, DEFAULT_TERMINATION_ENTROPY);
        assert_eq!(s.planner.n_obs_samples, DEFAULT_OBS_SAMPLES);
        assert_eq!(s.true_mode, 0);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut f = minimal();
        f.prior_modes[1].weight = 0.4;
        let err = f.validate().unwrap_err();
        assert_eq!(err.field(), Some("prior weights"));
    }

    #[test]
    fn empty_action_list_is_rejected() {
        let mut f = minimal();
        f.motion_primitives.clear();
        assert_eq!(f.validate().unwrap_err().field(), Some("motion_primitives"));
    }

    #[test]
    fn true_start_must_match_one_mode() {
        let mut f = minimal();
        f.true_start = [1.0, 0.0, 0.0];
        assert_eq!(f.validate().unwrap_err().field(), Some("true_start"));
        let mut f = minimal();
        f.prior_modes[1].mean = [0.0, 0.0, 0.0];
        assert_eq!(f.validate().unwrap_err().field(), Some("true_start"));
    }

    #[test]
    fn unknown_class_names_the_landmark() {
        let mut f = minimal();
        f.landmarks[0].class = "c".into();
        assert_eq!(f.validate().unwrap_err().field(), Some("landmarks[0]"));
    }

    #[test]
    fn refinement_order_is_checked() {
        let mut f = minimal();
        f.planner.refinement_order = Some(vec![2]);
        assert_eq!(f.validate().unwrap_err().field(), Some("planner.refinement_order"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_scenario("{\n  \"version\": 1,\n  oops\n}").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn validation_errors_point_at_the_field() {
        let text = serde_json::to_string_pretty(&ScenarioFile {
            motion_primitives: vec![],
            ..minimal()
        })
        .unwrap();
        let err = parse_scenario(&text).unwrap_err();
        let expected = text.lines().position(|l| l.contains("\"motion_primitives\"")).unwrap() + 1;
        match err {
            ScenarioError::Invalid { line, .. } => assert_eq!(line, Some(expected)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bundled_scenario_has_two_even_modes() {
        let s = fig2();
        assert_eq!(s.prior.weights(), vec![0.5, 0.5]);
        assert_eq!(s.planner.budget, Some(6));
    }
}
