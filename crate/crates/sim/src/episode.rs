//! Plan, act, observe, update, prune: the disambiguation loop.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use aliasplan_core::belief::{predict, prune_and_renormalize, update, BeliefError, MixtureBelief};
use aliasplan_core::planner::{
    select_action_budgeted, select_action_exhaustive, select_action_guaranteed, PlanError, PlanOutcome,
    PlannerConfig,
};
use aliasplan_core::rng::stream;
use aliasplan_core::world::{chi2_quantile_2dof, ActionId, RobotPose, WorldModel};
use rand::RngCore;
use serde::Serialize;

use crate::scenario::Scenario;
use crate::world_sim::{step_world, GroundTruth, SimState};

const PLAN_STREAM: u64 = 0x706c_616e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum Method {
    /// Every hypothesis, every action.
    #[value(name = "da-bsp")]
    DaBsp,
    /// Hypothesis subsets grown until one action is certified.
    #[value(name = "d2a-bsp")]
    D2aBsp,
    /// As `d2a-bsp` under the scenario's component budget.
    #[value(name = "d2a-bsp-budget")]
    D2aBspBudget,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::DaBsp => "da-bsp",
            Self::D2aBsp => "d2a-bsp",
            Self::D2aBspBudget => "d2a-bsp-budget",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One planning call with the chosen method.
pub fn plan(
    world: &WorldModel,
    belief: &MixtureBelief,
    actions: &[ActionId],
    config: &PlannerConfig,
    method: Method,
) -> Result<PlanOutcome, PlanError> {
    match method {
        Method::DaBsp => select_action_exhaustive(world, belief, actions, config),
        Method::D2aBsp => select_action_guaranteed(world, belief, actions, config),
        Method::D2aBspBudget => select_action_budgeted(world, belief, actions, config),
    }
}

/// Planner seed for step `step` of the episode with seed `seed`.
pub fn step_seed(base: u64, seed: u64, step: usize) -> u64 {
    base ^ stream(seed, PLAN_STREAM, step as u64).next_u64()
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub outcome: PlanOutcome,
    pub planning_time: Duration,
    pub observations: usize,
    /// The observation had zero likelihood; the belief was only predicted.
    pub unexplained: bool,
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub components_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub method: Method,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub final_belief: MixtureBelief,
    pub final_pose: RobotPose,
    pub final_entropy: f64,
    /// Weight of the components whose position gate contains the true pose.
    pub truth_weight: f64,
    pub planning_time: Duration,
}

impl EpisodeReport {
    pub fn actions(&self) -> Vec<ActionId> {
        self.steps.iter().map(|s| s.outcome.chosen).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("planning failed at step {step}: {source}")]
    Plan {
        step: usize,
        #[source]
        source: PlanError,
    },
    #[error("belief update failed at step {step}: {source}")]
    Belief {
        step: usize,
        #[source]
        source: BeliefError,
    },
}

/// Total weight of components whose 99% position gate contains `pose`.
pub fn weight_near(belief: &MixtureBelief, pose: &RobotPose) -> f64 {
    let gate = chi2_quantile_2dof(0.99);
    belief
        .components()
        .iter()
        .filter(|c| {
            let g = &c.gaussian;
            let d = nalgebra::Vector2::new(pose.x - g.mean[0], pose.y - g.mean[1]);
            let p = g.covariance.fixed_view::<2, 2>(0, 0).into_owned();
            p.try_inverse().is_some_and(|inv| (d.transpose() * inv * d)[(0, 0)] <= gate)
        })
        .map(|c| c.weight)
        .sum()
}

/// Runs one episode from the scenario's prior and true start.
pub fn run_disambiguation(scenario: &Scenario, method: Method, seed: u64) -> Result<EpisodeReport, EpisodeError> {
    let truth = GroundTruth::new(scenario.true_start, seed);
    run_from(scenario, method, seed, SimState::new(truth, scenario.prior.clone()))
}

/// Runs an episode from an explicit simulation state.
pub fn run_from(
    scenario: &Scenario,
    method: Method,
    seed: u64,
    mut state: SimState,
) -> Result<EpisodeReport, EpisodeError> {
    let world = &scenario.world;
    let actions = scenario.actions();
    let mut steps = Vec::new();
    let mut termination = Termination::MaxSteps;
    while state.step < scenario.max_steps {
        let entropy_before = state.belief.entropy();
        if entropy_before < scenario.termination_entropy {
            termination = Termination::Converged;
            break;
        }
        let step = state.step;
        let config = PlannerConfig {
            rng_seed: step_seed(scenario.planner.rng_seed, seed, step),
            ..scenario.planner.clone()
        };
        let started = Instant::now();
        let outcome = plan(world, &state.belief, &actions, &config, method)
            .map_err(|source| EpisodeError::Plan { step, source })?;
        let elapsed = started.elapsed();
        *state.planning_time.entry(method).or_default() += elapsed;

        let action = outcome.chosen;
        let z = step_world(world, &mut state.truth, action).map_err(|e| EpisodeError::Belief {
            step,
            source: e.into(),
        })?;
        let (updated, unexplained) = match update(world, &state.belief, action, &z) {
            Ok((b, _)) => (b, false),
            Err(BeliefError::ZeroLikelihood) => (
                predict(world, &state.belief, action).map_err(|source| EpisodeError::Belief { step, source })?,
                true,
            ),
            Err(source) => return Err(EpisodeError::Belief { step, source }),
        };
        state.belief = prune_and_renormalize(&updated, scenario.pruning_threshold)
            .map_err(|source| EpisodeError::Belief { step, source })?;
        state.step += 1;
        steps.push(StepRecord {
            step,
            outcome,
            planning_time: elapsed,
            observations: z.len(),
            unexplained,
            entropy_before,
            entropy_after: state.belief.entropy(),
            components_after: state.belief.len(),
        });
    }
    if termination == Termination::MaxSteps && state.belief.entropy() < scenario.termination_entropy {
        termination = Termination::Converged;
    }
    let final_pose = state.truth.pose();
    Ok(EpisodeReport {
        method,
        seed,
        termination,
        final_entropy: state.belief.entropy(),
        truth_weight: weight_near(&state.belief, &final_pose),
        final_pose,
        planning_time: state.planning_time.get(&method).copied().unwrap_or_default(),
        final_belief: state.belief,
        steps,
    })
}

/// One CSV row per action per planning step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRow {
    pub step: usize,
    pub action: String,
    pub lb: f64,
    pub ub: f64,
    pub exact: Option<f64>,
    pub selection_size: usize,
    pub guaranteed: bool,
    pub chosen: bool,
}

pub fn decision_rows(scenario: &Scenario, step: usize, outcome: &PlanOutcome) -> Vec<DecisionRow> {
    outcome
        .evaluations
        .iter()
        .map(|e| DecisionRow {
            step,
            action: scenario.action_name(e.action).to_string(),
            lb: e.interval.lb,
            ub: e.interval.ub,
            exact: e.exact,
            selection_size: e.selection.len(),
            guaranteed: e.guaranteed,
            chosen: e.action == outcome.chosen,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EpisodeRow {
    step: usize,
    action: String,
    lb: f64,
    ub: f64,
    exact: Option<f64>,
    selection_size: usize,
    guaranteed: bool,
    chosen: bool,
    entropy_after: f64,
    components_after: usize,
}

/// Decision trace of an episode. Wall-clock times are left out so that the
/// file only depends on the inputs.
pub fn write_episode_csv<W: Write>(scenario: &Scenario, report: &EpisodeReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &report.steps {
        for d in decision_rows(scenario, s.step, &s.outcome) {
            w.serialize(EpisodeRow {
                step: d.step,
                action: d.action,
                lb: d.lb,
                ub: d.ub,
                exact: d.exact,
                selection_size: d.selection_size,
                guaranteed: d.guaranteed,
                chosen: d.chosen,
                entropy_after: s.entropy_after,
                components_after: s.components_after,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_decision_csv<W: Write>(rows: &[DecisionRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fig2;

    #[test]
    fn fig2_episode_finds_the_true_mode() {
        let s = fig2();
        let r = run_disambiguation(&s, Method::D2aBsp, 1).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.truth_weight >= 1.0 - s.termination_entropy, "{}", r.truth_weight);
        assert_eq!(s.action_name(r.steps[0].outcome.chosen), "LEFT");
    }

    #[test]
    fn step_seeds_differ_by_step_and_seed() {
        assert_ne!(step_seed(0, 1, 0), step_seed(0, 1, 1));
        assert_ne!(step_seed(0, 1, 0), step_seed(0, 2, 0));
        assert_eq!(step_seed(5, 1, 0), step_seed(5, 1, 0));
    }

    #[test]
    fn csv_has_one_row_per_action_and_step() {
        let s = fig2();
        let r = run_disambiguation(&s, Method::DaBsp, 2).unwrap();
        let mut buf = Vec::new();
        write_episode_csv(&s, &r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,action,lb,ub,exact,selection_size,guaranteed,chosen,entropy_after"));
        assert_eq!(text.lines().count(), 1 + 2 * r.steps.len());
    }
}
