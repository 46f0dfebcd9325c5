//! Ground-truth robot and measurement generation.
//!
//! The true pose and the true associations live in [`GroundTruth`]; the
//! agent only ever receives the [`ObservationSet`] returned by
//! [`step_world`].

use std::collections::BTreeMap;
use std::time::Duration;

use aliasplan_core::belief::MixtureBelief;
use aliasplan_core::planner::simulate_observations;
use aliasplan_core::rng::{correlated_normal, stream, StreamRng};
use aliasplan_core::world::{ActionId, AssociationVector, ModelError, ObservationSet, RobotPose, WorldModel};
use nalgebra::{Matrix3, Vector3};

use crate::episode::Method;

const WORLD_STREAM: u64 = 0x776f_726c_64;

/// The simulator side of an episode.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pose: RobotPose,
    rng: StreamRng,
    noisy: bool,
    last_association: AssociationVector,
}

impl GroundTruth {
    pub fn new(start: RobotPose, seed: u64) -> Self {
        Self {
            pose: start,
            rng: stream(seed, WORLD_STREAM, 0),
            noisy: true,
            last_association: AssociationVector::default(),
        }
    }

    /// Motion and measurements without noise.
    pub fn noiseless(start: RobotPose) -> Self {
        Self {
            noisy: false,
            ..Self::new(start, 0)
        }
    }

    pub fn pose(&self) -> RobotPose {
        self.pose
    }

    /// Landmarks behind the last observation, in measurement order.
    pub fn last_association(&self) -> &AssociationVector {
        &self.last_association
    }

    /// Teleports the robot. Used by tests that check the agent cannot see it.
    pub fn set_pose(&mut self, pose: RobotPose) {
        self.pose = pose;
    }

    /// Observes from the current pose without moving.
    pub fn observe(&mut self, world: &WorldModel) -> ObservationSet {
        let (z, beta) = simulate_observations(world, &self.pose, self.noisy, &mut self.rng);
        self.last_association = beta;
        z
    }
}

/// Full simulation state of one episode.
#[derive(Debug, Clone)]
pub struct SimState {
    pub truth: GroundTruth,
    pub belief: MixtureBelief,
    pub step: usize,
    pub planning_time: BTreeMap<Method, Duration>,
}

impl SimState {
    pub fn new(truth: GroundTruth, belief: MixtureBelief) -> Self {
        Self {
            truth,
            belief,
            step: 0,
            planning_time: BTreeMap::new(),
        }
    }
}

fn lower_factor(m: &Matrix3<f64>) -> Matrix3<f64> {
    m.cholesky().map(|c| c.l()).unwrap_or_else(Matrix3::zeros)
}

/// Executes `action` on the true robot with process noise, then observes
/// every landmark in view with measurement noise.
pub fn step_world(world: &WorldModel, truth: &mut GroundTruth, action: ActionId) -> Result<ObservationSet, ModelError> {
    let w: Option<Vector3<f64>> = truth
        .noisy
        .then(|| correlated_normal(&lower_factor(world.motion.noise()), &mut truth.rng));
    truth.pose = world.motion.propagate_pose(&truth.pose, action, w.as_ref())?;
    Ok(truth.observe(world))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fig2;
    use aliasplan_core::world::predict_measurement;

    #[test]
    fn nothing_in_view_gives_an_empty_set() {
        let s = fig2();
        let mut truth = GroundTruth::new(RobotPose::new(20.0, -20.0, 0.0), 1);
        let z = step_world(&s.world, &mut truth, ActionId(0)).unwrap();
        assert!(z.is_empty());
    }

    #[test]
    fn noiseless_observation_equals_prediction() {
        let s = fig2();
        let mut truth = GroundTruth::noiseless(s.true_start);
        let left = s.world.motion.action_by_name("LEFT").unwrap();
        let z = step_world(&s.world, &mut truth, left).unwrap();
        assert_eq!(z.len(), 1);
        let id = truth.last_association().ids()[0];
        let lm = s.world.landmark(id).unwrap();
        assert_eq!(s.class_name(lm.class), "pentagon");
        assert_eq!(z.measurements[0].z, predict_measurement(&truth.pose(), lm));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let s = fig2();
        let run = |seed| {
            let mut truth = GroundTruth::new(s.true_start, seed);
            (0..5)
                .map(|k| step_world(&s.world, &mut truth, ActionId(k % 2)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
