//! JSON form of a mixture belief, used by `plan --belief`.

use std::fs;
use std::path::Path;

use aliasplan_core::belief::{GaussianComponent, HypothesisComponent, MixtureBelief};
use aliasplan_core::world::{AssociationVector, LandmarkId};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::scenario::{ScenarioError, SCENARIO_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRecord {
    pub weight: f64,
    pub mean: [f64; 3],
    pub covariance: [f64; 9],
    /// Landmark ids assigned at each past step.
    #[serde(default)]
    pub history: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefRecord {
    pub version: u32,
    #[serde(default)]
    pub step: usize,
    pub components: Vec<ComponentRecord>,
}

impl BeliefRecord {
    pub fn from_belief(belief: &MixtureBelief) -> Self {
        let components = belief
            .components()
            .iter()
            .map(|c| {
                let cov = c.gaussian.covariance;
                let mut covariance = [0.0; 9];
                for r in 0..3 {
                    for k in 0..3 {
                        covariance[3 * r + k] = cov[(r, k)];
                    }
                }
                ComponentRecord {
                    weight: c.weight,
                    mean: [c.gaussian.mean[0], c.gaussian.mean[1], c.gaussian.mean[2]],
                    covariance,
                    history: c
                        .history
                        .iter()
                        .map(|b| b.ids().iter().map(|id| id.0).collect())
                        .collect(),
                }
            })
            .collect();
        Self {
            version: SCENARIO_VERSION,
            step: belief.step(),
            components,
        }
    }

    pub fn to_belief(&self) -> Result<MixtureBelief, ScenarioError> {
        let invalid = |field: String, message: String| ScenarioError::Invalid {
            field,
            line: None,
            message,
        };
        if self.version != SCENARIO_VERSION {
            return Err(invalid(
                "version".into(),
                format!("expected {SCENARIO_VERSION}, found {}", self.version),
            ));
        }
        let mut components = Vec::with_capacity(self.components.len());
        for (k, c) in self.components.iter().enumerate() {
            let gaussian = GaussianComponent::new(Vector3::from(c.mean), Matrix3::from_row_slice(&c.covariance))
                .map_err(|e| invalid(format!("components[{k}].covariance"), e.to_string()))?;
            components.push(HypothesisComponent {
                weight: c.weight,
                gaussian,
                history: c
                    .history
                    .iter()
                    .map(|ids| AssociationVector(ids.iter().copied().map(LandmarkId).collect()))
                    .collect(),
            });
        }
        MixtureBelief::new(components, self.step).map_err(|e| invalid("components".into(), e.to_string()))
    }
}

pub fn load_belief(path: impl AsRef<Path>) -> Result<MixtureBelief, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_belief(&text)
}

pub fn parse_belief(text: &str) -> Result<MixtureBelief, ScenarioError> {
    let record: BeliefRecord = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    record.to_belief()
}

pub fn belief_to_json(belief: &MixtureBelief) -> String {
    serde_json::to_string_pretty(&BeliefRecord::from_belief(belief)).expect("belief records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fig2;

    #[test]
    fn round_trip_preserves_the_belief() {
        let prior = fig2().prior;
        let back = parse_belief(&belief_to_json(&prior)).unwrap();
        assert_eq!(back, prior);
    }

    #[test]
    fn weights_are_validated() {
        let mut record = BeliefRecord::from_belief(&fig2().prior);
        record.components[0].weight = 0.2;
        assert!(record.to_belief().is_err());
    }
}
