//! The budget experiment on the two-mode scenario and the runtime
//! experiment over a family of aliased scenarios.

use std::io::Write;
use std::time::Instant;

use aliasplan_core::belief::{predict, prune_and_renormalize, update, BeliefError};
use aliasplan_core::planner::{
    evaluate_objective_bounds, evaluate_objective_exact, sample_future_observations, select_action_budgeted,
    separated_action, ObservationSampleSet, PlanError, PlanOutcome, PlannerConfig, RefinementOrder,
};
use aliasplan_core::rng::stream;
use aliasplan_core::simplification::{BoundInterval, DistilledSelection};
use aliasplan_core::world::ActionId;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::episode::{plan, step_seed, Method};
use crate::scenario::{
    FovSpec, LandmarkSpec, ModeSpec, PlannerSpec, PrimitiveSpec, Scenario, ScenarioError, ScenarioFile,
    SCENARIO_VERSION,
};
use crate::world_sim::{step_world, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Separated(ActionId),
    Overlapping,
}

/// Intervals of every action for one fixed hypothesis subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub selection: Vec<usize>,
    pub intervals: Vec<(ActionId, BoundInterval)>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct BudgetReport {
    pub budget: usize,
    /// Largest number of association realizations over all samples.
    pub l_max: usize,
    /// Hypotheses usable under the budget.
    pub k_max: usize,
    pub selections: Vec<SelectionReport>,
    pub exact: Vec<(ActionId, f64)>,
    pub argmin: ActionId,
    /// Budgeted planner runs, one per single-hypothesis starting order.
    pub budgeted: Vec<(usize, PlanOutcome)>,
}

fn samples_for(scenario: &Scenario, config: &PlannerConfig) -> Result<Vec<ObservationSampleSet>, PlanError> {
    scenario
        .actions()
        .into_iter()
        .map(|a| sample_future_observations(&scenario.world, &scenario.prior, a, config.n_obs_samples, config.rng_seed))
        .collect()
}

/// Evaluates every single-hypothesis subset and the full set on the
/// scenario prior, on one shared sample set per action.
pub fn experiment_budget(scenario: &Scenario) -> Result<BudgetReport, PlanError> {
    let world = &scenario.world;
    let belief = &scenario.prior;
    let config = scenario.planner.clone();
    let budget = config.budget.ok_or(PlanError::InvalidConfig("the budget experiment needs a budget"))?;
    let samples = samples_for(scenario, &config)?;
    let weights = belief.weights();

    let mut l_max = 0;
    for (a, set) in scenario.actions().into_iter().zip(&samples) {
        let gaussians = predict(world, belief, a)?.gaussians();
        for s in &set.samples {
            l_max = l_max.max(world.enumerate_associations(&gaussians, &s.observations)?.len());
        }
    }
    let k_max = if l_max == 0 { belief.len() } else { (budget / l_max).clamp(1, belief.len()) };

    let mut selections = Vec::new();
    for j in 0..belief.len() {
        let sel = DistilledSelection::new(vec![j], &weights)?;
        let mut intervals = Vec::new();
        for set in &samples {
            intervals.push((set.action, evaluate_objective_bounds(world, belief, &sel, set.action, set)?));
        }
        let bounds: Vec<BoundInterval> = intervals.iter().map(|(_, i)| *i).collect();
        let verdict = match separated_action(&bounds) {
            Some(k) => Verdict::Separated(intervals[k].0),
            None => Verdict::Overlapping,
        };
        selections.push(SelectionReport {
            selection: vec![j],
            intervals,
            verdict,
        });
    }

    let mut exact = Vec::new();
    for set in &samples {
        exact.push((set.action, evaluate_objective_exact(world, belief, set.action, set)?));
    }
    let mut argmin = exact[0].0;
    let mut best = exact[0].1;
    for &(a, v) in &exact[1..] {
        if v < best {
            best = v;
            argmin = a;
        }
    }

    let mut budgeted = Vec::new();
    for j in 0..belief.len() {
        let cfg = PlannerConfig {
            refinement_order: RefinementOrder::Explicit(vec![j]),
            ..config.clone()
        };
        budgeted.push((j, select_action_budgeted(world, belief, &scenario.actions(), &cfg)?));
    }

    Ok(BudgetReport {
        budget,
        l_max,
        k_max,
        selections,
        exact,
        argmin,
        budgeted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct BudgetRow {
    selection: String,
    action: String,
    lb: f64,
    ub: f64,
    exact: f64,
    verdict: String,
}

/// One row per (selection, action); the full-set rows carry the exact value
/// in every column.
pub fn write_budget_csv<W: Write>(scenario: &Scenario, report: &BudgetReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let exact_of = |a: ActionId| report.exact.iter().find(|(b, _)| *b == a).map_or(f64::NAN, |(_, v)| *v);
    for s in &report.selections {
        let label = selection_label(&s.selection);
        for (a, i) in &s.intervals {
            w.serialize(BudgetRow {
                selection: label.clone(),
                action: scenario.action_name(*a).to_string(),
                lb: i.lb,
                ub: i.ub,
                exact: exact_of(*a),
                verdict: verdict_label(scenario, s.verdict),
            })?;
        }
    }
    for (a, v) in &report.exact {
        w.serialize(BudgetRow {
            selection: "full".into(),
            action: scenario.action_name(*a).to_string(),
            lb: *v,
            ub: *v,
            exact: *v,
            verdict: format!("argmin {}", scenario.action_name(report.argmin)),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Components are numbered from 1 in reports.
pub fn selection_label(selection: &[usize]) -> String {
    let names: Vec<String> = selection.iter().map(|j| format!("{}", j + 1)).collect();
    format!("component {}", names.join("+"))
}

pub fn verdict_label(scenario: &Scenario, verdict: Verdict) -> String {
    match verdict {
        Verdict::Separated(a) => format!("separated {}", scenario.action_name(a)),
        Verdict::Overlapping => "overlapping".into(),
    }
}

/// Settings of the runtime experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    pub m0: Vec<usize>,
    pub seeds: u64,
    /// Planning sessions per episode at most.
    pub steps: usize,
    pub n_obs_samples: usize,
    /// Each session is timed this many times and the fastest run kept.
    pub repeats: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            m0: vec![2, 4, 8],
            seeds: 10,
            steps: 5,
            n_obs_samples: 32,
            repeats: 5,
        }
    }
}

const FAMILY_STREAM: u64 = 0x6661_6d69_6c79;
const FAMILY_CLASSES: [&str; 5] = ["blue-square", "circle", "diamond", "pentagon", "triangle"];
const MODE_SPACING: f64 = 20.0;

/// Spots for the landmark left of each place, relative to the point reached
/// by LEFT. Spaced wider than the measurement gate.
const LEFT_SPOTS: [(f64, f64); 8] = [
    (-1.05, 1.3),
    (-0.35, 1.3),
    (0.35, 1.3),
    (1.05, 1.3),
    (-1.05, 2.0),
    (-0.35, 2.0),
    (0.35, 2.0),
    (1.05, 2.0),
];

/// `m0` identical-looking starting places along a corridor, each facing a
/// blue square. Left of each place stands a landmark of random class at a
/// spot no other place shares (for up to eight places); right of it a landmark of random class at the
/// same spot everywhere.
pub fn runtime_scenario(m0: usize, seed: u64, n_obs_samples: usize) -> ScenarioFile {
    let mut rng = stream(seed, FAMILY_STREAM, m0 as u64);
    let heading = std::f64::consts::FRAC_PI_2;
    let mut spots = LEFT_SPOTS.to_vec();
    spots.shuffle(&mut rng);
    let mut landmarks = Vec::new();
    let mut id = 1;
    let mut push = |class: &str, x: f64, y: f64| {
        landmarks.push(LandmarkSpec {
            id,
            class: class.into(),
            x,
            y,
        });
        id += 1;
    };
    for m in 0..m0 {
        let cx = MODE_SPACING * m as f64;
        push("blue-square", cx, 2.0);
        let (du, dv) = spots[m % spots.len()];
        let class = FAMILY_CLASSES[rng.random_range(1..FAMILY_CLASSES.len())];
        push(class, cx - 3.0 + du, dv);
        let class = FAMILY_CLASSES[rng.random_range(1..FAMILY_CLASSES.len())];
        push(class, cx + 3.0, 2.0);
    }
    let cov = [0.0025, 0.0, 0.0, 0.0, 0.0025, 0.0, 0.0, 0.0, 0.0001];
    let prior_modes = (0..m0)
        .map(|m| ModeSpec {
            weight: 1.0 / m0 as f64,
            mean: [MODE_SPACING * m as f64, 0.0, heading],
            covariance: cov,
        })
        .collect::<Vec<_>>();
    let true_start = prior_modes[rng.random_range(0..m0)].mean;
    ScenarioFile {
        version: SCENARIO_VERSION,
        name: format!("corridor-{m0}"),
        classes: FAMILY_CLASSES.iter().map(|c| c.to_string()).collect(),
        landmarks,
        motion_primitives: vec![
            PrimitiveSpec {
                name: "LEFT".into(),
                dx: 0.0,
                dy: 3.0,
                dtheta: 0.0,
            },
            PrimitiveSpec {
                name: "RIGHT".into(),
                dx: 0.0,
                dy: -3.0,
                dtheta: 0.0,
            },
            PrimitiveSpec {
                name: "BACK".into(),
                dx: -2.0,
                dy: 0.0,
                dtheta: 0.0,
            },
        ],
        process_noise: [0.001, 0.0, 0.0, 0.0, 0.001, 0.0, 0.0, 0.0, 0.0001],
        measurement_noise: [0.01, 0.0, 0.0, 0.01],
        fov: FovSpec {
            range: 2.5,
            half_angle: std::f64::consts::FRAC_PI_3,
        },
        prior_modes,
        true_start,
        planner: PlannerSpec {
            n_obs_samples,
            ..PlannerSpec::default()
        },
        pruning_threshold: 1e-3,
        max_steps: 100,
        termination_entropy: 0.05,
        gate_probability: aliasplan_core::world::DEFAULT_GATE_PROBABILITY,
        association_cap: aliasplan_core::world::DEFAULT_ASSOCIATION_CAP,
    }
}

/// Timing of one method at one `M0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeRow {
    #[serde(rename = "M0")]
    pub m0: usize,
    pub method: String,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub sessions: usize,
    pub mean_zeta_evaluations: f64,
    /// Sessions where the two methods chose different actions.
    pub disagreements: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Plans with both methods on the same belief at every step of each seed's
/// episode, executing the exhaustive choice.
pub fn experiment_runtime(config: &RuntimeConfig) -> Result<Vec<RuntimeRow>, ExperimentError> {
    let methods = [Method::DaBsp, Method::D2aBsp];
    let mut rows = Vec::new();
    for &m0 in &config.m0 {
        let mut times = vec![Vec::new(); methods.len()];
        let mut zetas = vec![Vec::new(); methods.len()];
        let mut disagreements = 0;
        for seed in 0..config.seeds {
            let scenario = runtime_scenario(m0, seed, config.n_obs_samples).validate()?;
            let world = &scenario.world;
            let actions = scenario.actions();
            let mut truth = GroundTruth::new(scenario.true_start, seed);
            let mut belief = scenario.prior.clone();
            for step in 0..config.steps {
                if step > 0 && belief.entropy() < scenario.termination_entropy {
                    break;
                }
                let cfg = PlannerConfig {
                    rng_seed: step_seed(scenario.planner.rng_seed, seed, step),
                    ..scenario.planner.clone()
                };
                let mut chosen = Vec::new();
                for (k, &method) in methods.iter().enumerate() {
                    let mut fastest = f64::INFINITY;
                    let mut outcome = None;
                    for _ in 0..config.repeats.max(1) {
                        let started = Instant::now();
                        let o = plan(world, &belief, &actions, &cfg, method)?;
                        fastest = fastest.min(started.elapsed().as_secs_f64());
                        outcome = Some(o);
                    }
                    let outcome = outcome.expect("at least one run");
                    times[k].push(fastest);
                    zetas[k].push(outcome.zeta_evaluations as f64);
                    chosen.push(outcome.chosen);
                }
                if chosen.iter().any(|a| *a != chosen[0]) {
                    disagreements += 1;
                }
                let action = chosen[0];
                let z = step_world(world, &mut truth, action).map_err(BeliefError::from)?;
                belief = match update(world, &belief, action, &z) {
                    Ok((b, _)) => b,
                    Err(BeliefError::ZeroLikelihood) => predict(world, &belief, action)?,
                    Err(e) => return Err(e.into()),
                };
                belief = prune_and_renormalize(&belief, scenario.pruning_threshold)?;
            }
        }
        for (k, method) in methods.iter().enumerate() {
            let (mean_time_s, std_time_s) = mean_std(&times[k]);
            rows.push(RuntimeRow {
                m0,
                method: method.name().into(),
                mean_time_s,
                std_time_s,
                sessions: times[k].len(),
                mean_zeta_evaluations: mean_std(&zetas[k]).0,
                disagreements,
            });
        }
    }
    Ok(rows)
}

pub fn write_runtime_csv<W: Write>(rows: &[RuntimeRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
