//! Multi-hypothesis Gaussian-mixture belief over the robot pose.
//!
//! Every component carries the association history that produced it. The
//! data-association-aware update splits each predicted component into one
//! posterior component per association realization, weighted by the
//! expected likelihood `zeta` of that realization.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::sum::{compensated_sum, CompensatedSum};
use crate::world::{ActionId, AssociationVector, ConfidenceRegion, ModelError, ObservationSet, RobotPose, WorldModel};

/// Weights below this are treated as this value before taking a log.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Tolerance on the sum of mixture weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Default weight threshold used when pruning after an update.
pub const DEFAULT_PRUNING_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("belief has no components")]
    Empty,
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("zeta table has {table} hypothesis columns but the belief has {belief} components")]
    Misaligned { table: usize, belief: usize },
    #[error("observation has zero likelihood under every hypothesis")]
    ZeroLikelihood,
    #[error("pruning threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl GaussianComponent {
    pub fn new(mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<Self, BeliefError> {
        let covariance = symmetrize3(&covariance);
        if !mean.iter().all(|v| v.is_finite()) || !is_spd3(&covariance) {
            return Err(BeliefError::NotPositiveDefinite);
        }
        let mut mean = mean;
        mean[2] = crate::world::normalize_angle(mean[2]);
        Ok(Self { mean, covariance })
    }

    pub fn pose(&self) -> RobotPose {
        RobotPose::from_vector(&self.mean)
    }

    pub fn confidence_region(&self, sigmas: f64) -> ConfidenceRegion {
        ConfidenceRegion::from_gaussian(self, sigmas)
    }
}

fn symmetrize3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn is_spd3(m: &Matrix3<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && m.cholesky().is_some()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisComponent {
    pub weight: f64,
    pub gaussian: GaussianComponent,
    /// One association vector per past update, oldest first.
    pub history: Vec<AssociationVector>,
}

impl HypothesisComponent {
    pub fn new(weight: f64, gaussian: GaussianComponent) -> Self {
        Self {
            weight,
            gaussian,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureBelief {
    components: Vec<HypothesisComponent>,
    step: usize,
}

impl MixtureBelief {
    pub fn new(components: Vec<HypothesisComponent>, step: usize) -> Result<Self, BeliefError> {
        if components.is_empty() {
            return Err(BeliefError::Empty);
        }
        for c in &components {
            if !(c.weight >= 0.0 && c.weight <= 1.0 + WEIGHT_SUM_TOLERANCE) {
                return Err(BeliefError::InvalidWeight(c.weight));
            }
        }
        let total = compensated_sum(components.iter().map(|c| c.weight));
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(BeliefError::WeightSum(total));
        }
        Ok(Self { components, step })
    }

    /// Builds a belief with empty histories from `(weight, gaussian)` pairs.
    pub fn from_modes(modes: Vec<(f64, GaussianComponent)>) -> Result<Self, BeliefError> {
        Self::new(
            modes
                .into_iter()
                .map(|(w, g)| HypothesisComponent::new(w, g))
                .collect(),
            0,
        )
    }

    pub fn components(&self) -> &[HypothesisComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn gaussians(&self) -> Vec<GaussianComponent> {
        self.components.iter().map(|c| c.gaussian.clone()).collect()
    }

    pub fn entropy(&self) -> f64 {
        entropy_unchecked(self.components.iter().map(|c| c.weight))
    }

    /// Index of the heaviest component, lowest index on ties.
    pub fn max_weight_index(&self) -> usize {
        let mut best = 0;
        for (j, c) in self.components.iter().enumerate() {
            if c.weight > self.components[best].weight {
                best = j;
            }
        }
        best
    }
}

/// `b_{k+1}^-`: every component pushed through the linearized motion model.
pub fn predict(world: &WorldModel, belief: &MixtureBelief, action: ActionId) -> Result<MixtureBelief, BeliefError> {
    let mut components = Vec::with_capacity(belief.len());
    for c in belief.components() {
        let pose = c.gaussian.pose();
        let mean = world.motion.propagate_pose(&pose, action, None)?.to_vector();
        let f = world.motion.jacobian(&pose, action)?;
        let cov = f * c.gaussian.covariance * f.transpose() + world.motion.noise();
        components.push(HypothesisComponent {
            weight: c.weight,
            gaussian: GaussianComponent::new(mean, cov)?,
            history: c.history.clone(),
        });
    }
    Ok(MixtureBelief {
        components,
        step: belief.step,
    })
}

/// Result of conditioning one Gaussian component on one association.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    /// Gaussian marginal likelihood of the stacked measurement.
    pub marginal: f64,
    pub posterior: GaussianComponent,
}

/// EKF update of `component` given `z` under association `beta`, together
/// with the marginal likelihood of the linearized model.
pub fn condition(
    world: &WorldModel,
    component: &GaussianComponent,
    beta: &AssociationVector,
    z: &ObservationSet,
) -> Result<Conditioned, BeliefError> {
    if beta.len() != z.len() {
        return Err(ModelError::DimensionMismatch {
            association: beta.len(),
            measurements: z.len(),
        }
        .into());
    }
    if z.is_empty() {
        return Ok(Conditioned {
            marginal: 1.0,
            posterior: component.clone(),
        });
    }
    let pose = component.pose();
    let (h, predicted, noise) = world.stacked_model(&pose, beta)?;
    let p = DMatrix::from_column_slice(3, 3, component.covariance.as_slice());
    let innovation: DVector<f64> = z.stacked() - predicted;
    let s = &h * &p * h.transpose() + &noise;
    let s = (&s + s.transpose()) * 0.5;
    let chol = s.clone().cholesky().ok_or(BeliefError::NotPositiveDefinite)?;
    let solved = chol.solve(&innovation);
    let mahalanobis = innovation.dot(&solved);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let dim = innovation.len() as f64;
    let marginal = (-0.5 * (mahalanobis + log_det + dim * (2.0 * PI).ln())).exp();

    // K = P H^T S^-1, Joseph-form covariance.
    let pht = &p * h.transpose();
    let gain = chol.solve(&pht.transpose()).transpose();
    let mean = component.mean + Vector3::from_iterator((&gain * &innovation).iter().copied());
    let i_kh = DMatrix::identity(3, 3) - &gain * &h;
    let cov = &i_kh * &p * i_kh.transpose() + &gain * &noise * gain.transpose();
    let cov = Matrix3::from_iterator(cov.iter().copied());
    Ok(Conditioned {
        marginal,
        posterior: GaussianComponent::new(mean, cov)?,
    })
}

/// `zeta`: expected joint likelihood of `z` under association `beta` for a
/// propagated component. The Gaussian marginal of the linearized model is
/// multiplied by the association prior at the association-conditioned mean.
pub fn zeta(
    world: &WorldModel,
    component: &GaussianComponent,
    beta: &AssociationVector,
    z: &ObservationSet,
) -> Result<f64, BeliefError> {
    Ok(zeta_and_posterior(world, component, beta, z)?.0)
}

fn zeta_and_posterior(
    world: &WorldModel,
    component: &GaussianComponent,
    beta: &AssociationVector,
    z: &ObservationSet,
) -> Result<(f64, GaussianComponent), BeliefError> {
    let conditioned = condition(world, component, beta, z)?;
    let prior = world.association_prior(z, beta, &conditioned.posterior.pose())?;
    Ok((conditioned.marginal * prior, conditioned.posterior))
}

/// Which realizations are reachable from the confidence region of `component`.
pub fn feasibility_column(
    world: &WorldModel,
    component: &GaussianComponent,
    realizations: &[AssociationVector],
) -> Vec<bool> {
    let region = [component.confidence_region(world.region_sigmas)];
    realizations
        .iter()
        .map(|beta| world.association_feasibility_bound(beta, &region))
        .collect()
}

/// One hypothesis column of the zeta table. Entries whose realization is
/// unreachable from the component's confidence region are exactly zero.
pub fn zeta_column(
    world: &WorldModel,
    component: &GaussianComponent,
    realizations: &[AssociationVector],
    feasible: &[bool],
    z: &ObservationSet,
) -> Result<Vec<f64>, BeliefError> {
    realizations
        .iter()
        .zip(feasible)
        .map(|(beta, &ok)| if ok { zeta(world, component, beta, z) } else { Ok(0.0) })
        .collect()
}

/// `|L| x |M|` table of zeta values, row `i` for realization `i`, column `j`
/// for hypothesis `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaTable {
    realizations: Vec<AssociationVector>,
    hypotheses: usize,
    values: Vec<f64>,
    feasible: Vec<bool>,
}

impl ZetaTable {
    /// Row-major `values` and `feasible` of size `realizations.len() * hypotheses`.
    pub fn new(
        realizations: Vec<AssociationVector>,
        hypotheses: usize,
        values: Vec<f64>,
        feasible: Vec<bool>,
    ) -> Result<Self, BeliefError> {
        let n = realizations.len() * hypotheses;
        if values.len() != n || feasible.len() != n {
            return Err(BeliefError::Misaligned {
                table: values.len(),
                belief: n,
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(BeliefError::InvalidWeight(bad));
        }
        Ok(Self {
            realizations,
            hypotheses,
            values,
            feasible,
        })
    }

    /// Table without association labels, every entry marked feasible where
    /// it is non-zero. Used for synthetic instances.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, BeliefError> {
        let hypotheses = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != hypotheses) {
            return Err(BeliefError::Misaligned {
                table: rows.iter().map(|r| r.len()).max().unwrap_or(0),
                belief: hypotheses,
            });
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        let feasible = values.iter().map(|v| *v > 0.0).collect();
        Self::new(
            vec![AssociationVector::default(); rows.len()],
            hypotheses,
            values,
            feasible,
        )
    }

    pub fn realizations(&self) -> &[AssociationVector] {
        &self.realizations
    }

    /// `|L|`.
    pub fn rows(&self) -> usize {
        self.realizations.len()
    }

    /// `|M|`.
    pub fn cols(&self) -> usize {
        self.hypotheses
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.hypotheses + j]
    }

    pub fn is_feasible(&self, i: usize, j: usize) -> bool {
        self.feasible[i * self.hypotheses + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows()).map(move |i| self.value(i, j))
    }

    pub fn feasible_column(&self, j: usize) -> impl Iterator<Item = bool> + '_ {
        (0..self.rows()).map(move |i| self.is_feasible(i, j))
    }

    fn check_alignment(&self, weights: &[f64]) -> Result<(), BeliefError> {
        if weights.len() != self.hypotheses {
            return Err(BeliefError::Misaligned {
                table: self.hypotheses,
                belief: weights.len(),
            });
        }
        Ok(())
    }
}

/// Enumerates the realizations for `z` and fills every zeta entry.
pub fn build_zeta_table(
    world: &WorldModel,
    predicted: &MixtureBelief,
    z: &ObservationSet,
) -> Result<ZetaTable, BeliefError> {
    let gaussians = predicted.gaussians();
    let realizations = world.enumerate_associations(&gaussians, z)?;
    let l = realizations.len();
    let m = gaussians.len();
    let mut values = vec![0.0; l * m];
    let mut feasible = vec![false; l * m];
    for (j, g) in gaussians.iter().enumerate() {
        let f = feasibility_column(world, g, &realizations);
        let col = zeta_column(world, g, &realizations, &f, z)?;
        for i in 0..l {
            values[i * m + j] = col[i];
            feasible[i * m + j] = f[i];
        }
    }
    ZetaTable::new(realizations, m, values, feasible)
}

/// `eta = sum_i sum_j zeta^{ij} w^j`.
pub fn marginal_likelihood(weights: &[f64], table: &ZetaTable) -> Result<f64, BeliefError> {
    table.check_alignment(weights)?;
    let mut acc = CompensatedSum::new();
    for i in 0..table.rows() {
        for (j, w) in weights.iter().enumerate() {
            acc.add(table.value(i, j) * w);
        }
    }
    Ok(acc.value())
}

/// Posterior weights `zeta^{ij} w^j / eta`, ordered by hypothesis then
/// realization, together with `eta`.
pub fn posterior_weights(weights: &[f64], table: &ZetaTable) -> Result<(Vec<f64>, f64), BeliefError> {
    let eta = marginal_likelihood(weights, table)?;
    if !(eta > 0.0) {
        return Err(BeliefError::ZeroLikelihood);
    }
    let mut out = Vec::with_capacity(table.rows() * table.cols());
    for (j, w) in weights.iter().enumerate() {
        for i in 0..table.rows() {
            out.push(table.value(i, j) * w / eta);
        }
    }
    Ok((out, eta))
}

/// Predicts with `action`, then conditions every component on every
/// association realization of `z`.
pub fn update(
    world: &WorldModel,
    belief: &MixtureBelief,
    action: ActionId,
    z: &ObservationSet,
) -> Result<(MixtureBelief, f64), BeliefError> {
    let predicted = predict(world, belief, action)?;
    update_predicted(world, &predicted, z)
}

/// Measurement update of an already predicted belief.
pub fn update_predicted(
    world: &WorldModel,
    predicted: &MixtureBelief,
    z: &ObservationSet,
) -> Result<(MixtureBelief, f64), BeliefError> {
    let gaussians = predicted.gaussians();
    let realizations = world.enumerate_associations(&gaussians, z)?;
    let l = realizations.len();
    let m = gaussians.len();
    let mut values = vec![0.0; l * m];
    let mut feasible = vec![false; l * m];
    let mut posteriors = Vec::with_capacity(l * m);
    for (j, g) in gaussians.iter().enumerate() {
        let f = feasibility_column(world, g, &realizations);
        for (i, beta) in realizations.iter().enumerate() {
            let (zeta, post) = zeta_and_posterior(world, g, beta, z)?;
            values[i * m + j] = if f[i] { zeta } else { 0.0 };
            feasible[i * m + j] = f[i];
            posteriors.push(post);
        }
    }
    let table = ZetaTable::new(realizations, m, values, feasible)?;
    let (weights, eta) = posterior_weights(&predicted.weights(), &table)?;
    let mut components = Vec::with_capacity(l * m);
    let mut k = 0;
    for (j, parent) in predicted.components().iter().enumerate() {
        for (i, beta) in table.realizations().iter().enumerate() {
            let mut history = parent.history.clone();
            history.push(beta.clone());
            components.push(HypothesisComponent {
                weight: weights[j * l + i],
                gaussian: posteriors[k].clone(),
                history,
            });
            k += 1;
        }
    }
    let total = compensated_sum(components.iter().map(|c| c.weight));
    for c in &mut components {
        c.weight /= total;
    }
    Ok((
        MixtureBelief {
            components,
            step: predicted.step + 1,
        },
        eta,
    ))
}

/// Drops components lighter than `threshold` and renormalizes. If nothing
/// survives the heaviest component is kept alone.
pub fn prune_and_renormalize(belief: &MixtureBelief, threshold: f64) -> Result<MixtureBelief, BeliefError> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(BeliefError::InvalidThreshold(threshold));
    }
    let mut kept: Vec<HypothesisComponent> = belief
        .components()
        .iter()
        .filter(|c| c.weight >= threshold && c.weight > 0.0)
        .cloned()
        .collect();
    if kept.is_empty() {
        kept.push(belief.components()[belief.max_weight_index()].clone());
    }
    let total = compensated_sum(kept.iter().map(|c| c.weight));
    for c in &mut kept {
        c.weight /= total;
    }
    Ok(MixtureBelief {
        components: kept,
        step: belief.step,
    })
}

fn entropy_unchecked(weights: impl Iterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for w in weights {
        if w > 0.0 {
            acc.add(-w * w.max(WEIGHT_FLOOR).ln());
        }
    }
    acc.value().max(0.0)
}

/// Shannon entropy of a weight vector in nats.
pub fn weights_entropy(weights: &[f64]) -> Result<f64, BeliefError> {
    if let Some(&bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(BeliefError::InvalidWeight(bad));
    }
    Ok(entropy_unchecked(weights.iter().copied()))
}
