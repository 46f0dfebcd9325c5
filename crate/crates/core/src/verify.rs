//! Randomized checks of the bound machinery against direct evaluation.
//!
//! Used by the property tests and by the `verify-bounds` command.

use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix3, Vector3};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::belief::{marginal_likelihood, posterior_weights, weights_entropy, GaussianComponent, MixtureBelief, ZetaTable};
use crate::oracle::brute_force_objective;
use crate::planner::{sample_future_observations, select_action_guaranteed, PlanError, PlannerConfig};
use crate::rng::stream;
use crate::simplification::{
    bounds_from_scratch, entropy_identity, eta_simplified, simplified_entropy, simplified_weights, BoundCache,
    BoundError, DistilledSelection,
};
use crate::sum::CompensatedSum;
use crate::world::{ActionId, Landmark, LandmarkMap, MotionModel, MotionPrimitive, ObservationModel, WorldModel};

const INSTANCE_STREAM: u64 = 0x696e_7374;
const SCENARIO_STREAM: u64 = 0x7363_656e;

/// Synthetic zeta table with weights, a subset and the likelihood cap.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInstance {
    pub table: ZetaTable,
    pub weights: Vec<f64>,
    /// Distinct hypothesis indices in insertion order.
    pub order: Vec<usize>,
    /// How many leading entries of `order` form the subset.
    pub subset_len: usize,
    pub sigma: f64,
}

impl BoundInstance {
    pub fn subset(&self) -> &[usize] {
        &self.order[..self.subset_len]
    }
}

/// Draws a random instance with at least one explainable realization.
/// Magnitudes span many decades and some entries are zero although
/// flagged feasible.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> BoundInstance {
    loop {
        let l = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let mut weights: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>().powi(3) + 1e-6 })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for w in &mut weights {
            *w /= total;
        }
        let sigma = 10f64.powf(rng.random_range(-3.0..6.0));
        let mut values = Vec::with_capacity(l * m);
        let mut feasible = Vec::with_capacity(l * m);
        for _ in 0..l * m {
            let f = rng.random_bool(0.75);
            let v = if f && !rng.random_bool(0.1) {
                sigma * 10f64.powf(rng.random_range(-12.0..0.0))
            } else {
                0.0
            };
            feasible.push(f);
            values.push(v);
        }
        let table = ZetaTable::new(alloc::vec![Default::default(); l], m, values, feasible).expect("shape");
        if !(marginal_likelihood(&weights, &table).unwrap_or(0.0) > 0.0) {
            continue;
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(rng);
        let subset_len = rng.random_range(1..=m);
        return BoundInstance {
            table,
            weights,
            order,
            subset_len,
            sigma,
        };
    }
}

/// Outcome of one family of checks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckSummary {
    pub instances: usize,
    pub violations: usize,
    /// Largest observed error, relative to the tolerance scale.
    pub worst: f64,
}

impl CheckSummary {
    fn record(&mut self, excess: f64, tol: f64) {
        self.worst = self.worst.max(excess);
        if excess > tol {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn scale(v: f64) -> f64 {
    v.abs().max(1.0)
}

fn rel_scale(v: f64) -> f64 {
    if v == 0.0 {
        f64::MIN_POSITIVE
    } else {
        v.abs()
    }
}

/// Exact `eta` and posterior entropy of an instance.
fn exact(inst: &BoundInstance) -> (f64, f64) {
    let (post, eta) = posterior_weights(&inst.weights, &inst.table).expect("eta > 0");
    (eta, weights_entropy(&post).expect("valid weights"))
}

/// Sandwich of `eta` and of the entropy for random subsets. The `eta`
/// check is relative; the entropy check is relative to `max(1, |H|)`.
pub fn check_bound_soundness(instances: usize, seed: u64, tol: f64) -> (CheckSummary, CheckSummary) {
    let mut eta_summary = CheckSummary::default();
    let mut h_summary = CheckSummary::default();
    for k in 0..instances {
        let inst = random_instance(&mut stream(seed, INSTANCE_STREAM, k as u64));
        let (eta, h) = exact(&inst);
        let sel = DistilledSelection::new(inst.subset().to_vec(), &inst.weights).expect("valid subset");
        eta_summary.instances += 1;
        h_summary.instances += 1;
        let b = match bounds_from_scratch(&inst.table, &inst.weights, &sel, inst.sigma) {
            Ok(b) => b,
            Err(BoundError::ZeroMass) => {
                // A subset of zero-weight hypotheses: the bounds are undefined,
                // the planner never builds one.
                continue;
            }
            Err(_) => {
                eta_summary.violations += 1;
                h_summary.violations += 1;
                continue;
            }
        };
        let eta_excess = (b.likelihood.lb - eta).max(eta - b.likelihood.ub).max(0.0) / rel_scale(eta);
        eta_summary.record(eta_excess, tol);
        let h_excess = (b.entropy.lb - h).max(h - b.entropy.ub).max(0.0) / scale(h);
        h_summary.record(h_excess, tol);
    }
    (eta_summary, h_summary)
}

/// The entropy identity against direct entropy, and the split of `eta`
/// into the subset and its complement.
pub fn check_identities(instances: usize, seed: u64) -> (CheckSummary, CheckSummary) {
    let mut identity = CheckSummary::default();
    let mut split = CheckSummary::default();
    for k in 0..instances {
        let inst = random_instance(&mut stream(seed, INSTANCE_STREAM ^ 1, k as u64));
        let (eta, h) = exact(&inst);
        let sel = DistilledSelection::new(inst.subset().to_vec(), &inst.weights).expect("valid subset");
        if !(sel.mass() > 0.0) {
            continue;
        }
        let sw = simplified_weights(&sel, &inst.weights).expect("mass > 0");
        let eta_s = eta_simplified(&sel, &inst.table, &sw).expect("aligned");
        let h_s = simplified_entropy(&sel, &inst.table, &sw, eta_s).expect("aligned");
        identity.instances += 1;
        let via_identity = entropy_identity(&sel, &inst.table, &inst.weights, eta, eta_s, h_s).expect("eta > 0");
        identity.record((via_identity - h).abs() / scale(h), 1e-9);

        split.instances += 1;
        let mut rest = CompensatedSum::new();
        for j in sel.complement() {
            for i in 0..inst.table.rows() {
                rest.add(inst.table.value(i, j) * inst.weights[j]);
            }
        }
        let recombined = sel.mass() * eta_s + rest.value();
        split.record((recombined - eta).abs() / rel_scale(eta), 1e-12);
    }
    (identity, split)
}

/// Full selection: both bounds equal the exact value.
pub fn check_convergence(instances: usize, seed: u64) -> (CheckSummary, CheckSummary) {
    let mut eta_summary = CheckSummary::default();
    let mut h_summary = CheckSummary::default();
    for k in 0..instances {
        let inst = random_instance(&mut stream(seed, INSTANCE_STREAM ^ 2, k as u64));
        let (eta, h) = exact(&inst);
        let sel = DistilledSelection::new(inst.order.clone(), &inst.weights).expect("full set");
        let b = bounds_from_scratch(&inst.table, &inst.weights, &sel, inst.sigma).expect("full set has mass");
        eta_summary.instances += 1;
        h_summary.instances += 1;
        let e = (b.likelihood.lb - eta).abs().max((b.likelihood.ub - eta).abs()) / rel_scale(eta);
        eta_summary.record(e, 1e-12);
        let e = (b.entropy.lb - h).abs().max((b.entropy.ub - h).abs()) / scale(h);
        h_summary.record(e, 1e-12);
    }
    (eta_summary, h_summary)
}

/// Incremental refinement against from-scratch bounds along a random
/// insertion order, at every step.
pub fn check_refinement(sequences: usize, seed: u64) -> CheckSummary {
    let mut summary = CheckSummary::default();
    for k in 0..sequences {
        let inst = random_instance(&mut stream(seed, INSTANCE_STREAM ^ 3, k as u64));
        let mut cache = BoundCache::from_table(&inst.table, &inst.weights, inst.sigma);
        summary.instances += 1;
        let mut worst: f64 = 0.0;
        let mut failed = false;
        for (step, &j) in inst.order.iter().enumerate() {
            let column: Vec<f64> = inst.table.column(j).collect();
            let sel = DistilledSelection::new(inst.order[..=step].to_vec(), &inst.weights).expect("valid prefix");
            let scratch = bounds_from_scratch(&inst.table, &inst.weights, &sel, inst.sigma);
            let incremental = cache.add(j, &column);
            match (incremental, scratch) {
                (Ok(a), Ok(b)) => {
                    let pairs = [
                        (a.likelihood.lb, b.likelihood.lb),
                        (a.likelihood.ub, b.likelihood.ub),
                        (a.entropy.lb, b.entropy.lb),
                        (a.entropy.ub, b.entropy.ub),
                    ];
                    for (x, y) in pairs {
                        worst = worst.max((x - y).abs() / scale(y));
                    }
                    if a.entropy.degenerate != b.entropy.degenerate {
                        failed = true;
                    }
                }
                (Err(a), Err(b)) if a == b => {}
                _ => failed = true,
            }
        }
        summary.record(if failed { f64::INFINITY } else { worst }, 1e-12);
    }
    summary
}

/// Small random world with a few aliased classes, 2 to 4 modes and 2 to 3
/// actions.
pub fn random_planning_instance(seed: u64, index: u64) -> (WorldModel, MixtureBelief, Vec<ActionId>) {
    let mut rng = stream(seed, SCENARIO_STREAM, index);
    let n_landmarks = rng.random_range(3..=6);
    let landmarks: Vec<Landmark> = (0..n_landmarks)
        .map(|i| {
            Landmark::new(
                i as u32 + 1,
                rng.random_range(0..2),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            )
        })
        .collect();
    let n_actions = rng.random_range(2..=3);
    let primitives: Vec<MotionPrimitive> = (0..n_actions)
        .map(|a| {
            MotionPrimitive::new(
                alloc::format!("a{a}"),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    let q = rng.random_range(0.001..0.01);
    let motion = MotionModel::new(primitives, Matrix3::from_diagonal(&Vector3::new(q, q, q * 0.1))).expect("spd");
    let r = rng.random_range(0.01..0.05);
    let observation = ObservationModel::new(
        Matrix2::identity() * r,
        rng.random_range(2.5..4.0),
        rng.random_range(core::f64::consts::FRAC_PI_3..core::f64::consts::PI),
    )
    .expect("valid sensor");
    let world = WorldModel::new(LandmarkMap::new(landmarks).expect("unique ids"), motion, observation);

    let m = rng.random_range(2..=4);
    let mut raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    for w in &mut raw {
        *w /= total;
    }
    let modes = raw
        .into_iter()
        .map(|w| {
            let var = rng.random_range(0.01..0.2);
            let g = GaussianComponent::new(
                Vector3::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-3.1..3.1),
                ),
                Matrix3::from_diagonal(&Vector3::new(var, var, rng.random_range(0.001..0.02))),
            )
            .expect("spd");
            (w, g)
        })
        .collect();
    let belief = MixtureBelief::from_modes(modes).expect("normalized");
    let actions = (0..n_actions).map(ActionId).collect();
    (world, belief, actions)
}

/// Result of comparing guaranteed selection with the brute-force argmin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GuaranteeSummary {
    pub instances: usize,
    pub guaranteed: usize,
    /// Guaranteed before the full hypothesis set was needed.
    pub early: usize,
    pub violations: usize,
}

/// Runs guaranteed selection on random small instances and checks every
/// guaranteed choice against the brute-force objective on the same samples.
pub fn check_guarantee_soundness(instances: usize, seed: u64, n_obs_samples: usize) -> Result<GuaranteeSummary, PlanError> {
    let mut summary = GuaranteeSummary::default();
    for k in 0..instances {
        let (world, belief, actions) = random_planning_instance(seed, k as u64);
        let config = PlannerConfig {
            n_obs_samples,
            rng_seed: seed ^ k as u64,
            ..PlannerConfig::default()
        };
        let outcome = select_action_guaranteed(&world, &belief, &actions, &config)?;
        summary.instances += 1;
        if !outcome.guaranteed {
            continue;
        }
        summary.guaranteed += 1;
        if outcome.selection_size() < belief.len() {
            summary.early += 1;
        }
        let mut values = Vec::with_capacity(actions.len());
        for &a in &actions {
            let samples = sample_future_observations(&world, &belief, a, n_obs_samples, config.rng_seed)?;
            let z: Vec<_> = samples.samples.into_iter().map(|s| s.observations).collect();
            values.push(brute_force_objective(&world, &belief, a, &z)?.value);
        }
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let chosen = values[outcome.chosen.0];
        if chosen > best + 1e-9 * scale(best) {
            summary.violations += 1;
        }
    }
    Ok(summary)
}
