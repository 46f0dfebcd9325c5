//! Brute-force references for tests and acceptance runs.
//!
//! Nothing here calls into the inference, bounding or planning code. The
//! oracles only share the world model and the plain belief data types, and
//! redo enumeration, gating, zeta and the posterior with their own loops,
//! an LU factorization instead of Cholesky, and double-double sums.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::belief::{GaussianComponent, MixtureBelief};
use crate::world::{
    measurement_jacobian, predict_measurement, ActionId, AssociationVector, LandmarkId, ModelError, ObservationSet,
    RobotPose, WorldModel,
};

/// Reference value next to a candidate value.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub quantity: String,
    pub reference: f64,
    pub candidate: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

impl OracleReport {
    pub fn new(quantity: impl Into<String>, reference: f64, candidate: f64) -> Self {
        let abs_error = (reference - candidate).abs();
        let rel_error = if reference == 0.0 {
            abs_error
        } else {
            abs_error / reference.abs()
        };
        Self {
            quantity: quantity.into(),
            reference,
            candidate,
            abs_error,
            rel_error,
        }
    }

    pub fn within(&self, rel_tol: f64) -> bool {
        self.abs_error <= rel_tol * self.reference.abs().max(1.0)
    }
}

/// Double-double accumulator: the running sum is kept as an unevaluated
/// pair `hi + lo`.
#[derive(Debug, Clone, Copy, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        let lo = self.lo + err;
        self.hi = s + lo;
        self.lo = lo - (self.hi - s);
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `eta` as a plain double sum, hypothesis-major with double-double
/// accumulation. `rows[i][j]` is the value for realization `i`, hypothesis `j`.
pub fn brute_force_eta(rows: &[Vec<f64>], weights: &[f64]) -> f64 {
    let mut acc = DoubleDouble::default();
    for (j, w) in weights.iter().enumerate() {
        for row in rows {
            acc.add(row[j] * w);
        }
    }
    acc.value()
}

fn entropy(p: &[f64]) -> f64 {
    let mut acc = DoubleDouble::default();
    for &x in p {
        if x > 0.0 {
            acc.add(-x * x.ln());
        }
    }
    acc.value()
}

fn predicted_component(world: &WorldModel, g: &GaussianComponent, action: ActionId) -> Result<(Vector3<f64>, Matrix3<f64>), ModelError> {
    let pose = RobotPose::from_vector(&g.mean);
    let mean = world.motion.propagate_pose(&pose, action, None)?.to_vector();
    let f = world.motion.jacobian(&pose, action)?;
    let cov = f * g.covariance * f.transpose() + world.motion.noise();
    Ok((mean, (cov + cov.transpose()) * 0.5))
}

struct Linearized {
    innovation: DVector<f64>,
    h: DMatrix<f64>,
    s: DMatrix<f64>,
}

fn linearize(
    world: &WorldModel,
    mean: &Vector3<f64>,
    cov: &Matrix3<f64>,
    beta: &[LandmarkId],
    z: &ObservationSet,
) -> Result<Linearized, ModelError> {
    let n = beta.len();
    let pose = RobotPose::from_vector(mean);
    let mut h = DMatrix::zeros(2 * n, 3);
    let mut innovation = DVector::zeros(2 * n);
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for (r, id) in beta.iter().enumerate() {
        let l = world.landmark(*id)?;
        let jac = measurement_jacobian(&pose, l);
        let pred = predict_measurement(&pose, l);
        for c in 0..3 {
            h[(2 * r, c)] = jac[(0, c)];
            h[(2 * r + 1, c)] = jac[(1, c)];
        }
        innovation[2 * r] = z.measurements[r].z[0] - pred[0];
        innovation[2 * r + 1] = z.measurements[r].z[1] - pred[1];
        let noise = world.observation.noise();
        for a in 0..2 {
            for b in 0..2 {
                s[(2 * r + a, 2 * r + b)] = noise[(a, b)];
            }
        }
    }
    let p = DMatrix::from_fn(3, 3, |r, c| cov[(r, c)]);
    s += &h * p * h.transpose();
    Ok(Linearized { innovation, h, s })
}

fn gate_passes(world: &WorldModel, mean: &Vector3<f64>, cov: &Matrix3<f64>, z: &ObservationSet, r: usize, id: LandmarkId) -> bool {
    let single = ObservationSet::new(vec![z.measurements[r]]);
    let Ok(lin) = linearize(world, mean, cov, &[id], &single) else {
        return false;
    };
    match lin.s.lu().try_inverse() {
        Some(inv) => (lin.innovation.transpose() * inv * &lin.innovation)[(0, 0)] <= world.gate_threshold(),
        None => false,
    }
}

/// Every assignment of map landmarks to measurements, filtered to the
/// class-consistent, injective ones that pass the gate of one component on
/// every measurement. Sorted by landmark ids.
pub fn brute_force_associations(
    world: &WorldModel,
    predicted: &[(Vector3<f64>, Matrix3<f64>)],
    z: &ObservationSet,
) -> Vec<AssociationVector> {
    let ids: Vec<LandmarkId> = world.map.landmarks().iter().map(|l| l.id).collect();
    let n = z.len();
    let mut out = Vec::new();
    let mut counter = vec![0usize; n];
    loop {
        let beta: Vec<LandmarkId> = counter.iter().map(|&c| ids[c]).collect();
        let classes_ok = beta
            .iter()
            .zip(&z.measurements)
            .all(|(id, m)| world.landmark(*id).map(|l| l.class == m.class).unwrap_or(false));
        let injective = (0..n).all(|a| (a + 1..n).all(|b| beta[a] != beta[b]));
        if classes_ok
            && injective
            && predicted
                .iter()
                .any(|(m, p)| (0..n).all(|r| gate_passes(world, m, p, z, r, beta[r])))
        {
            out.push(AssociationVector(beta));
        }
        // Odometer increment over the cartesian product.
        let mut k = n;
        loop {
            if k == 0 {
                out.sort();
                return out;
            }
            k -= 1;
            counter[k] += 1;
            if counter[k] < ids.len() {
                break;
            }
            counter[k] = 0;
        }
    }
}

fn reachable(world: &WorldModel, mean: &Vector3<f64>, cov: &Matrix3<f64>, beta: &[LandmarkId]) -> bool {
    let block = nalgebra::Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
    let lambda = block.symmetric_eigenvalues().max().max(0.0);
    let reach = world.region_sigmas * lambda.sqrt() + world.observation.fov_range();
    beta.iter().all(|id| {
        world
            .landmark(*id)
            .map(|l| ((l.position[0] - mean[0]).powi(2) + (l.position[1] - mean[1]).powi(2)).sqrt() <= reach)
            .unwrap_or(false)
    })
}

fn oracle_zeta(
    world: &WorldModel,
    mean: &Vector3<f64>,
    cov: &Matrix3<f64>,
    beta: &AssociationVector,
    z: &ObservationSet,
) -> Result<f64, ModelError> {
    if z.is_empty() {
        return Ok(1.0);
    }
    if !reachable(world, mean, cov, beta.ids()) {
        return Ok(0.0);
    }
    let lin = linearize(world, mean, cov, beta.ids(), z)?;
    let lu = lin.s.clone().lu();
    let det = lu.determinant();
    let Some(inv) = lu.try_inverse() else {
        return Ok(0.0);
    };
    let m = (lin.innovation.transpose() * &inv * &lin.innovation)[(0, 0)];
    let dim = lin.innovation.len() as i32;
    let density = (-0.5 * m).exp() / ((2.0 * PI).powi(dim) * det).sqrt();
    let p = DMatrix::from_fn(3, 3, |r, c| cov[(r, c)]);
    let shift = p * lin.h.transpose() * inv * &lin.innovation;
    let updated = RobotPose::new(mean[0] + shift[0], mean[1] + shift[1], mean[2] + shift[2]);
    Ok(density * world.association_prior(z, beta, &updated)?)
}

/// Full zeta table for one observation, `rows[i][j]`.
pub fn brute_force_zeta_table(
    world: &WorldModel,
    belief: &MixtureBelief,
    action: ActionId,
    z: &ObservationSet,
) -> Result<(Vec<AssociationVector>, Vec<Vec<f64>>), ModelError> {
    let predicted = belief
        .components()
        .iter()
        .map(|c| predicted_component(world, &c.gaussian, action))
        .collect::<Result<Vec<_>, _>>()?;
    let realizations = brute_force_associations(world, &predicted, z);
    let mut rows = Vec::with_capacity(realizations.len());
    for beta in &realizations {
        let mut row = Vec::with_capacity(predicted.len());
        for (m, p) in &predicted {
            row.push(oracle_zeta(world, m, p, beta, z)?);
        }
        rows.push(row);
    }
    Ok((realizations, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleObjective {
    pub value: f64,
    /// Posterior weights per sample, hypothesis-major.
    pub posteriors: Vec<Vec<f64>>,
}

/// Mean posterior weight entropy over `samples`, evaluated from scratch with
/// every hypothesis. An observation with zero likelihood contributes zero
/// and has an empty posterior.
pub fn brute_force_objective(
    world: &WorldModel,
    belief: &MixtureBelief,
    action: ActionId,
    samples: &[ObservationSet],
) -> Result<OracleObjective, ModelError> {
    let weights: Vec<f64> = belief.components().iter().map(|c| c.weight).collect();
    let mut total = DoubleDouble::default();
    let mut posteriors = Vec::with_capacity(samples.len());
    for z in samples {
        let (_, rows) = brute_force_zeta_table(world, belief, action, z)?;
        let eta = brute_force_eta(&rows, &weights);
        let mut post = Vec::new();
        if eta > 0.0 {
            for (j, w) in weights.iter().enumerate() {
                for row in &rows {
                    post.push(row[j] * w / eta);
                }
            }
        }
        total.add(entropy(&post));
        posteriors.push(post);
    }
    Ok(OracleObjective {
        value: total.value() / samples.len().max(1) as f64,
        posteriors,
    })
}

/// Monte-Carlo zeta: mean of `P(Z | beta, x) P(beta | x)` over `k` draws
/// of `x` from `component`. Returns the estimate and its standard error.
pub fn mc_zeta(
    world: &WorldModel,
    component: &GaussianComponent,
    beta: &AssociationVector,
    z: &ObservationSet,
    k: usize,
    seed: u64,
) -> Result<(f64, f64), ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Symmetric square root from the eigendecomposition.
    let eigen = component.covariance.symmetric_eigen();
    let root = Matrix3::from_diagonal(&eigen.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let lower = eigen.eigenvectors * root * eigen.eigenvectors.transpose();
    let mut sum = DoubleDouble::default();
    let mut sum_sq = DoubleDouble::default();
    for _ in 0..k {
        let n = Vector3::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        let pose = RobotPose::from_vector(&(component.mean + lower * n));
        let v = world.joint_measurement_likelihood(z, beta, &pose)? * world.association_prior(z, beta, &pose)?;
        sum.add(v);
        sum_sq.add(v * v);
    }
    let kf = k as f64;
    let mean = sum.value() / kf;
    let var = (sum_sq.value() / kf - mean * mean).max(0.0);
    Ok((mean, (var / kf).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ClassId, Landmark, LandmarkMap, Measurement, MotionModel, MotionPrimitive, ObservationModel};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix2, Vector2};

    fn world() -> WorldModel {
        WorldModel::new(
            LandmarkMap::new(vec![
                Landmark::new(1, 0, 2.0, 0.0),
                Landmark::new(2, 0, 2.0, 0.3),
                Landmark::new(3, 1, 0.0, 2.0),
            ])
            .unwrap(),
            MotionModel::new(vec![MotionPrimitive::new("STAY", 0.0, 0.0, 0.0)], Matrix3::identity() * 1e-4).unwrap(),
            ObservationModel::new(Matrix2::identity() * 0.01, 10.0, PI).unwrap(),
        )
    }

    #[test]
    fn eta_shared_example_in_both_orders() {
        let rows = vec![vec![0.4, 0.1], vec![0.2, 0.3]];
        assert_relative_eq!(brute_force_eta(&rows, &[0.5, 0.5]), 0.5, epsilon = 1e-16);
        let mut row_major = 0.0;
        for row in &rows {
            for (v, w) in row.iter().zip([0.5, 0.5]) {
                row_major += v * w;
            }
        }
        assert_relative_eq!(row_major, 0.5, epsilon = 1e-16);
        assert_eq!(brute_force_eta(&[vec![0.25]], &[1.0]), 0.25);
    }

    #[test]
    fn double_double_recovers_cancelled_bits() {
        let rows = vec![vec![1.0], vec![1e100], vec![1.0], vec![-1e100]];
        assert_eq!(brute_force_eta(&rows, &[1.0]), 2.0);
    }

    #[test]
    fn cartesian_enumeration_of_two_classes() {
        let w = world();
        let z = ObservationSet::new(vec![
            Measurement {
                z: Vector2::new(2.0, 0.1),
                class: ClassId(0),
            },
            Measurement {
                z: Vector2::new(0.0, 2.0),
                class: ClassId(1),
            },
        ]);
        let g = (Vector3::zeros(), Matrix3::identity());
        let out = brute_force_associations(&w, &[g], &z);
        assert_eq!(
            out,
            vec![
                AssociationVector(vec![LandmarkId(1), LandmarkId(3)]),
                AssociationVector(vec![LandmarkId(2), LandmarkId(3)]),
            ]
        );
    }

    #[test]
    fn point_mass_mc_zeta_has_zero_variance() {
        let w = world();
        let g = GaussianComponent::new(Vector3::zeros(), Matrix3::identity() * 1e-30).unwrap();
        let z = ObservationSet::new(vec![Measurement {
            z: Vector2::new(2.05, 0.0),
            class: ClassId(0),
        }]);
        let beta = AssociationVector(vec![LandmarkId(1)]);
        let (est, se) = mc_zeta(&w, &g, &beta, &z, 1000, 1).unwrap();
        let pose = RobotPose::new(0.0, 0.0, 0.0);
        let expected = w.joint_measurement_likelihood(&z, &beta, &pose).unwrap() * w.association_prior(&z, &beta, &pose).unwrap();
        assert_relative_eq!(est, expected, max_relative = 1e-9);
        assert!(se <= 1e-9 * expected);
    }

    #[test]
    fn infeasible_association_has_zero_mc_zeta() {
        let w = WorldModel::new(
            LandmarkMap::new(vec![Landmark::new(1, 0, 1e6, 0.0)]).unwrap(),
            MotionModel::new(vec![], Matrix3::identity()).unwrap(),
            ObservationModel::new(Matrix2::identity() * 0.01, 10.0, PI).unwrap(),
        );
        let g = GaussianComponent::new(Vector3::zeros(), Matrix3::identity()).unwrap();
        let z = ObservationSet::new(vec![Measurement {
            z: Vector2::new(1e6, 0.0),
            class: ClassId(0),
        }]);
        let (est, _) = mc_zeta(&w, &g, &AssociationVector(vec![LandmarkId(1)]), &z, 1000, 1).unwrap();
        assert_eq!(est, 0.0);
    }

    #[test]
    fn report_errors_are_nonnegative() {
        let r = OracleReport::new("eta", 0.5, 0.5000001);
        assert!(r.abs_error >= 0.0 && r.rel_error >= 0.0);
        assert!(r.within(1e-6));
        assert!(!r.within(1e-8));
    }
}
