//! Myopic action selection on the expected posterior weight entropy.
//!
//! Future observations are sampled once per action from the original
//! belief and shared by the exact and the bounded evaluation. The bounded
//! evaluation grows a distilled hypothesis subset in a fixed order and stops
//! as soon as one action's interval separates from all others.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix3};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::belief::{feasibility_column, predict, weights_entropy, zeta_column, BeliefError, MixtureBelief};
use crate::rng::{correlated_normal, stream};
use crate::simplification::{BoundCache, BoundError, BoundInterval, DistilledSelection};
use crate::sum::CompensatedSum;
use crate::world::{ActionId, AssociationVector, Measurement, ModelError, ObservationSet, RobotPose, WorldModel};

/// Default number of sampled observations per action.
pub const DEFAULT_OBS_SAMPLES: usize = 64;

const SAMPLE_STREAM: u64 = 0x6f62_7365_7276_65;

/// Slack used when an action with a higher index must beat a lower one
/// strictly, so that rounding alone never breaks a tie.
const SEPARATION_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no candidate actions")]
    NoActions,
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("refinement order is not a set of distinct hypothesis indices below {0}")]
    InvalidRefinementOrder(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RefinementOrder {
    /// Heaviest hypothesis first, lower index on equal weight.
    #[default]
    WeightDescending,
    /// Given indices first, then the rest by weight.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LexicographicActionIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Cap on `|M_s| * |L|`.
    pub budget: Option<usize>,
    pub n_obs_samples: usize,
    pub rng_seed: u64,
    pub refinement_order: RefinementOrder,
    pub tie_break: TieBreak,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            budget: None,
            n_obs_samples: DEFAULT_OBS_SAMPLES,
            rng_seed: 0,
            refinement_order: RefinementOrder::WeightDescending,
            tie_break: TieBreak::LexicographicActionIndex,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.n_obs_samples == 0 {
            return Err(PlanError::InvalidConfig("n_obs_samples must be at least 1"));
        }
        if self.budget == Some(0) {
            return Err(PlanError::InvalidConfig("budget must be positive"));
        }
        Ok(())
    }
}

/// One simulated future observation and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSample {
    pub observations: ObservationSet,
    /// Index of the hypothesis the pose was drawn from.
    pub hypothesis: usize,
    pub pose: RobotPose,
    /// The association used to generate the observations; never read by
    /// the planner.
    pub association: AssociationVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSampleSet {
    pub action: ActionId,
    pub samples: Vec<ObservationSample>,
}

/// Observes every landmark visible from `pose`, in a uniformly random order,
/// with measurement noise when `noisy` is set.
pub fn simulate_observations<R: Rng + ?Sized>(
    world: &WorldModel,
    pose: &RobotPose,
    noisy: bool,
    rng: &mut R,
) -> (ObservationSet, AssociationVector) {
    let mut visible = world.visible_landmarks(pose);
    visible.shuffle(rng);
    let lower = noise_factor(world.observation.noise());
    let mut measurements = Vec::with_capacity(visible.len());
    let mut ids = Vec::with_capacity(visible.len());
    for l in visible {
        let mut z = crate::world::predict_measurement(pose, l);
        if noisy {
            z += correlated_normal(&lower, rng);
        }
        measurements.push(Measurement { z, class: l.class });
        ids.push(l.id);
    }
    (ObservationSet::new(measurements), AssociationVector(ids))
}

fn noise_factor(m: &Matrix2<f64>) -> Matrix2<f64> {
    m.cholesky().map(|c| c.l()).unwrap_or_else(Matrix2::zeros)
}

/// Draws `n` future observations for `action`: a hypothesis by weight, a pose
/// from its predicted Gaussian, then a noisy observation of everything in
/// view. Sample `s` only depends on `(seed, s)`, so actions share random
/// numbers.
pub fn sample_future_observations(
    world: &WorldModel,
    belief: &MixtureBelief,
    action: ActionId,
    n: usize,
    seed: u64,
) -> Result<ObservationSampleSet, PlanError> {
    let predicted = predict(world, belief, action)?;
    Ok(ObservationSampleSet {
        action,
        samples: sample_from_predicted(world, &predicted, n, seed),
    })
}

fn sample_from_predicted(world: &WorldModel, predicted: &MixtureBelief, n: usize, seed: u64) -> Vec<ObservationSample> {
    let factors: Vec<Matrix3<f64>> = predicted
        .components()
        .iter()
        .map(|c| {
            c.gaussian
                .covariance
                .cholesky()
                .map(|ch| ch.l())
                .unwrap_or_else(Matrix3::zeros)
        })
        .collect();
    let weights = predicted.weights();
    (0..n)
        .map(|s| {
            let mut rng = stream(seed, SAMPLE_STREAM, s as u64);
            let u: f64 = rng.random();
            let mut hypothesis = weights.len() - 1;
            let mut acc = 0.0;
            for (j, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    hypothesis = j;
                    break;
                }
            }
            // Never sample a hypothesis without mass, even after rounding.
            while weights[hypothesis] <= 0.0 && hypothesis > 0 {
                hypothesis -= 1;
            }
            let mean = predicted.components()[hypothesis].gaussian.mean;
            let x = mean + correlated_normal(&factors[hypothesis], &mut rng);
            let pose = RobotPose::from_vector(&x);
            let (observations, association) = simulate_observations(world, &pose, true, &mut rng);
            ObservationSample {
                observations,
                hypothesis,
                pose,
                association,
            }
        })
        .collect()
}

/// Lazily filled zeta columns for one sampled observation.
struct SampleContext {
    z: ObservationSet,
    realizations: Vec<AssociationVector>,
    feasible: Vec<Vec<bool>>,
    columns: Vec<Option<Vec<f64>>>,
    cache: BoundCache,
}

struct ActionContext {
    action: ActionId,
    predicted: MixtureBelief,
    samples: Vec<SampleContext>,
    zeta_evaluations: usize,
}

impl ActionContext {
    fn new(world: &WorldModel, belief: &MixtureBelief, action: ActionId, samples: &[ObservationSample]) -> Result<Self, PlanError> {
        let predicted = predict(world, belief, action)?;
        let gaussians = predicted.gaussians();
        let weights = predicted.weights();
        let mut contexts = Vec::with_capacity(samples.len());
        for s in samples {
            let z = s.observations.clone();
            let realizations = world.enumerate_associations(&gaussians, &z)?;
            let feasible: Vec<Vec<bool>> = gaussians
                .iter()
                .map(|g| feasibility_column(world, g, &realizations))
                .collect();
            let sigma = world.observation.max_joint_likelihood(z.len());
            let cache = BoundCache::new(&weights, sigma, realizations.len(), |i, j| feasible[j][i]);
            contexts.push(SampleContext {
                z,
                realizations,
                feasible,
                columns: vec![None; gaussians.len()],
                cache,
            });
        }
        Ok(Self {
            action,
            predicted,
            samples: contexts,
            zeta_evaluations: 0,
        })
    }

    fn column(&mut self, world: &WorldModel, s: usize, j: usize) -> Result<Vec<f64>, PlanError> {
        let ctx = &mut self.samples[s];
        if let Some(c) = &ctx.columns[j] {
            return Ok(c.clone());
        }
        let g = &self.predicted.components()[j].gaussian;
        let col = zeta_column(world, g, &ctx.realizations, &ctx.feasible[j], &ctx.z)?;
        self.zeta_evaluations += ctx.feasible[j].iter().filter(|f| **f).count();
        ctx.columns[j] = Some(col.clone());
        Ok(col)
    }

    fn add_hypothesis(&mut self, world: &WorldModel, j: usize) -> Result<(), PlanError> {
        for s in 0..self.samples.len() {
            let col = self.column(world, s, j)?;
            self.samples[s].cache.add(j, &col)?;
        }
        Ok(())
    }

    fn interval(&self) -> Result<BoundInterval, PlanError> {
        let mut lb = CompensatedSum::new();
        let mut ub = CompensatedSum::new();
        for s in &self.samples {
            let i = sample_interval(s)?;
            lb.add(i.lb);
            ub.add(i.ub);
        }
        let n = self.samples.len() as f64;
        Ok(BoundInterval::new(lb.value() / n, ub.value() / n)?)
    }

    fn exact(&mut self, world: &WorldModel) -> Result<f64, PlanError> {
        let weights = self.predicted.weights();
        let mut acc = CompensatedSum::new();
        for s in 0..self.samples.len() {
            let mut cols = Vec::with_capacity(weights.len());
            for j in 0..weights.len() {
                cols.push(self.column(world, s, j)?);
            }
            acc.add(exact_sample_entropy(&cols, &weights)?);
        }
        Ok(acc.value() / self.samples.len() as f64)
    }
}

/// Per-sample interval on the posterior weight entropy. A sample that no
/// hypothesis can explain contributes zero, as its likelihood does.
fn sample_interval(s: &SampleContext) -> Result<BoundInterval, PlanError> {
    if s.realizations.is_empty() {
        return Ok(BoundInterval::point(0.0));
    }
    let b = s.cache.bounds()?;
    if b.entropy.degenerate {
        if b.likelihood.ub <= 0.0 {
            return Ok(BoundInterval::point(0.0));
        }
        return Ok(BoundInterval::new(0.0, b.entropy.ub)?);
    }
    Ok(b.entropy.interval())
}

/// Posterior weight entropy from full zeta columns, zero when the
/// observation has zero likelihood.
fn exact_sample_entropy(columns: &[Vec<f64>], weights: &[f64]) -> Result<f64, PlanError> {
    let mut eta = CompensatedSum::new();
    for (col, w) in columns.iter().zip(weights) {
        for z in col {
            eta.add(z * w);
        }
    }
    let eta = eta.value();
    if !(eta > 0.0) {
        return Ok(0.0);
    }
    let mut post = Vec::with_capacity(columns.len() * columns.first().map_or(0, |c| c.len()));
    for (col, w) in columns.iter().zip(weights) {
        for z in col {
            post.push(z * w / eta);
        }
    }
    Ok(weights_entropy(&post)?)
}

/// Evaluation of one action at the end of a planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionEvaluation {
    pub action: ActionId,
    pub exact: Option<f64>,
    pub interval: BoundInterval,
    pub selection: DistilledSelection,
    pub guaranteed: bool,
}

/// Intervals of every action after one refinement step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub selection_size: usize,
    pub intervals: Vec<(ActionId, BoundInterval)>,
    /// Action whose interval separated at this step, if any.
    pub separated: Option<ActionId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub chosen: ActionId,
    pub evaluations: Vec<ActionEvaluation>,
    pub guaranteed: bool,
    pub trace: Vec<TraceEntry>,
    /// Number of zeta entries computed across all actions and samples.
    pub zeta_evaluations: usize,
}

impl PlanOutcome {
    pub fn selection_size(&self) -> usize {
        self.evaluations.first().map_or(0, |e| e.selection.len())
    }
}

/// Mean posterior weight entropy over the samples, with every hypothesis.
pub fn evaluate_objective_exact(
    world: &WorldModel,
    belief: &MixtureBelief,
    action: ActionId,
    samples: &ObservationSampleSet,
) -> Result<f64, PlanError> {
    if samples.samples.is_empty() {
        return Err(PlanError::InvalidConfig("sample set is empty"));
    }
    ActionContext::new(world, belief, action, &samples.samples)?.exact(world)
}

/// Certified interval on the objective using only the selected hypotheses.
pub fn evaluate_objective_bounds(
    world: &WorldModel,
    belief: &MixtureBelief,
    selection: &DistilledSelection,
    action: ActionId,
    samples: &ObservationSampleSet,
) -> Result<BoundInterval, PlanError> {
    if samples.samples.is_empty() {
        return Err(PlanError::InvalidConfig("sample set is empty"));
    }
    if selection.total() != belief.len() {
        return Err(PlanError::InvalidRefinementOrder(belief.len()));
    }
    let mut ctx = ActionContext::new(world, belief, action, &samples.samples)?;
    for &j in selection.selected() {
        ctx.add_hypothesis(world, j)?;
    }
    ctx.interval()
}

/// Hypothesis indices in refinement order.
pub fn refinement_sequence(order: &RefinementOrder, weights: &[f64]) -> Result<Vec<usize>, PlanError> {
    let m = weights.len();
    let mut by_weight: Vec<usize> = (0..m).collect();
    by_weight.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    match order {
        RefinementOrder::WeightDescending => Ok(by_weight),
        RefinementOrder::Explicit(first) => {
            let mut seen = vec![false; m];
            for &j in first {
                if j >= m || seen[j] {
                    return Err(PlanError::InvalidRefinementOrder(m));
                }
                seen[j] = true;
            }
            let mut seq = first.clone();
            seq.extend(by_weight.into_iter().filter(|&j| !seen[j]));
            Ok(seq)
        }
    }
}

/// Index of the action whose interval separates from every other one:
/// strictly below the lower bound of every earlier action and not above the
/// lower bound of every later action.
pub fn separated_action(intervals: &[BoundInterval]) -> Option<usize> {
    (0..intervals.len()).find(|&a| {
        intervals.iter().enumerate().all(|(b, other)| {
            if b < a {
                let margin = SEPARATION_MARGIN * other.lb.abs().max(1.0);
                intervals[a].ub < other.lb - margin
            } else if b > a {
                intervals[a].ub <= other.lb
            } else {
                true
            }
        })
    })
}

fn lexicographic_argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = a;
        }
    }
    best
}

/// Guaranteed selection: refines until one action separates, or until the
/// full hypothesis set where the comparison is exact.
pub fn select_action_guaranteed(
    world: &WorldModel,
    belief: &MixtureBelief,
    actions: &[ActionId],
    config: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    let config = PlannerConfig {
        budget: None,
        ..config.clone()
    };
    select(world, belief, actions, &config)
}

/// Budgeted selection: as [`select_action_guaranteed`] but never uses more
/// than `budget / |L|` hypotheses. Without separation inside the budget the
/// action with the lowest upper bound is returned, unguaranteed.
pub fn select_action_budgeted(
    world: &WorldModel,
    belief: &MixtureBelief,
    actions: &[ActionId],
    config: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    if config.budget.is_none() {
        return Err(PlanError::InvalidConfig("budgeted selection needs a budget"));
    }
    select(world, belief, actions, config)
}

fn build_contexts(
    world: &WorldModel,
    belief: &MixtureBelief,
    actions: &[ActionId],
    config: &PlannerConfig,
) -> Result<Vec<ActionContext>, PlanError> {
    config.validate()?;
    if actions.is_empty() {
        return Err(PlanError::NoActions);
    }
    actions
        .iter()
        .map(|&a| {
            let samples = sample_future_observations(world, belief, a, config.n_obs_samples, config.rng_seed)?;
            ActionContext::new(world, belief, a, &samples.samples)
        })
        .collect()
}

fn select(
    world: &WorldModel,
    belief: &MixtureBelief,
    actions: &[ActionId],
    config: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    let mut contexts = build_contexts(world, belief, actions, config)?;
    let weights = belief.weights();
    let m = weights.len();
    let order = refinement_sequence(&config.refinement_order, &weights)?;

    let l_max = contexts
        .iter()
        .flat_map(|c| c.samples.iter().map(|s| s.realizations.len()))
        .max()
        .unwrap_or(0);
    let k_max = match config.budget {
        Some(q) if l_max > 0 => (q / l_max).clamp(1, m),
        _ => m,
    };

    let mut trace = Vec::new();
    let mut chosen = None;
    let mut guaranteed = false;
    let mut exact: Vec<Option<f64>> = vec![None; contexts.len()];
    let mut intervals = Vec::new();

    for k in 1..=k_max {
        let j = order[k - 1];
        for ctx in &mut contexts {
            ctx.add_hypothesis(world, j)?;
        }
        intervals = contexts.iter().map(|c| c.interval()).collect::<Result<Vec<_>, _>>()?;
        if k == m {
            let values = contexts
                .iter_mut()
                .map(|c| c.exact(world))
                .collect::<Result<Vec<_>, _>>()?;
            let best = lexicographic_argmin(&values);
            for (e, v) in exact.iter_mut().zip(&values) {
                *e = Some(*v);
            }
            trace.push(TraceEntry {
                selection_size: k,
                intervals: actions.iter().copied().zip(intervals.iter().copied()).collect(),
                separated: Some(actions[best]),
            });
            chosen = Some(best);
            guaranteed = true;
            break;
        }
        let sep = separated_action(&intervals);
        trace.push(TraceEntry {
            selection_size: k,
            intervals: actions.iter().copied().zip(intervals.iter().copied()).collect(),
            separated: sep.map(|a| actions[a]),
        });
        if let Some(a) = sep {
            chosen = Some(a);
            guaranteed = true;
            break;
        }
    }

    let chosen = match chosen {
        Some(a) => a,
        None => {
            let ubs: Vec<f64> = intervals.iter().map(|i| i.ub).collect();
            lexicographic_argmin(&ubs)
        }
    };
    let size = trace.last().map_or(0, |t| t.selection_size);
    let selection = DistilledSelection::new(order[..size].to_vec(), &weights)?;
    let evaluations = contexts
        .iter()
        .zip(&intervals)
        .zip(&exact)
        .map(|((c, i), e)| ActionEvaluation {
            action: c.action,
            exact: *e,
            interval: *i,
            selection: selection.clone(),
            guaranteed,
        })
        .collect();
    Ok(PlanOutcome {
        chosen: actions[chosen],
        evaluations,
        guaranteed,
        trace,
        zeta_evaluations: contexts.iter().map(|c| c.zeta_evaluations).sum(),
    })
}

/// Full-hypothesis evaluation of every action; the lowest objective wins,
/// lower action index on ties.
pub fn select_action_exhaustive(
    world: &WorldModel,
    belief: &MixtureBelief,
    actions: &[ActionId],
    config: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    let mut contexts = build_contexts(world, belief, actions, config)?;
    let weights = belief.weights();
    let values = contexts
        .iter_mut()
        .map(|c| c.exact(world))
        .collect::<Result<Vec<_>, _>>()?;
    let best = lexicographic_argmin(&values);
    let selection = DistilledSelection::all(&weights)?;
    let evaluations = contexts
        .iter()
        .zip(&values)
        .map(|(c, v)| ActionEvaluation {
            action: c.action,
            exact: Some(*v),
            interval: BoundInterval::point(*v),
            selection: selection.clone(),
            guaranteed: true,
        })
        .collect();
    Ok(PlanOutcome {
        chosen: actions[best],
        evaluations,
        guaranteed: true,
        trace: Vec::new(),
        zeta_evaluations: contexts.iter().map(|c| c.zeta_evaluations).sum(),
    })
}
