//! Ground-truth world description: poses, landmarks, motion and observation
//! models, field-of-view sensing and association enumeration.
//!
//! Measurements are landmark positions expressed in the robot body frame
//! (`d = 2`) tagged with a noiseless appearance class. Perceptual aliasing
//! therefore only arises between landmarks of the same class.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SMatrix, Vector2, Vector3};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::belief::GaussianComponent;

/// Measurement dimension: relative planar position.
pub const MEASUREMENT_DIM: usize = 2;

/// Default probability mass inside the per-component Mahalanobis gate.
pub const DEFAULT_GATE_PROBABILITY: f64 = 0.99;

/// Default cap on the number of enumerated association realizations.
pub const DEFAULT_ASSOCIATION_CAP: usize = 10_000;

/// Default number of standard deviations spanned by a confidence region.
pub const DEFAULT_REGION_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown action id {0}")]
    UnknownAction(usize),
    #[error("unknown landmark id {0}")]
    UnknownLandmark(u32),
    #[error("duplicate landmark id {0}")]
    DuplicateLandmark(u32),
    #[error("landmark map is empty")]
    EmptyMap,
    #[error("{0} covariance is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("association has {association} entries but the observation set has {measurements} measurements")]
    DimensionMismatch {
        association: usize,
        measurements: usize,
    },
    #[error("field of view must have range > 0 and half-angle in (0, pi], got range {range} and half-angle {half_angle}")]
    InvalidFieldOfView { range: f64, half_angle: f64 },
    #[error("association enumeration exceeded the cap of {cap} realizations")]
    AssociationCapExceeded { cap: usize },
    #[error("gate probability must lie in (0, 1), got {0}")]
    InvalidGate(f64),
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = angle % two_pi;
    if a <= -PI {
        a += two_pi;
    } else if a > PI {
        a -= two_pi;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, kept in `(-pi, pi]`.
    pub heading: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.heading)
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LandmarkId(pub u32);

/// Index into a scenario's declared class set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: LandmarkId,
    pub class: ClassId,
    pub position: Vector2<f64>,
}

impl Landmark {
    pub fn new(id: u32, class: u16, x: f64, y: f64) -> Self {
        Self {
            id: LandmarkId(id),
            class: ClassId(class),
            position: Vector2::new(x, y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkMap {
    landmarks: Vec<Landmark>,
}

impl LandmarkMap {
    pub fn new(landmarks: Vec<Landmark>) -> Result<Self, ModelError> {
        if landmarks.is_empty() {
            return Err(ModelError::EmptyMap);
        }
        let mut ids: Vec<u32> = landmarks.iter().map(|l| l.id.0).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateLandmark(w[0]));
        }
        Ok(Self { landmarks })
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn get(&self, id: LandmarkId) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }
}

fn is_spd<const D: usize>(m: &SMatrix<f64, D, D>) -> bool {
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    m.iter().all(|v| v.is_finite()) && asym <= 1e-12 * scale && m.cholesky().is_some()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionPrimitive {
    pub name: String,
    /// Body-frame displacement `(dx, dy, dtheta)`.
    pub delta: Vector3<f64>,
}

impl MotionPrimitive {
    pub fn new(name: impl Into<String>, dx: f64, dy: f64, dtheta: f64) -> Self {
        Self {
            name: name.into(),
            delta: Vector3::new(dx, dy, dtheta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    primitives: Vec<MotionPrimitive>,
    noise: Matrix3<f64>,
}

impl MotionModel {
    pub fn new(primitives: Vec<MotionPrimitive>, noise: Matrix3<f64>) -> Result<Self, ModelError> {
        if !is_spd(&noise) {
            return Err(ModelError::NotPositiveDefinite("process noise"));
        }
        Ok(Self { primitives, noise })
    }

    pub fn primitives(&self) -> &[MotionPrimitive] {
        &self.primitives
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> + '_ {
        (0..self.primitives.len()).map(ActionId)
    }

    pub fn noise(&self) -> &Matrix3<f64> {
        &self.noise
    }

    pub fn primitive(&self, action: ActionId) -> Result<&MotionPrimitive, ModelError> {
        self.primitives
            .get(action.0)
            .ok_or(ModelError::UnknownAction(action.0))
    }

    pub fn action_by_name(&self, name: &str) -> Option<ActionId> {
        self.primitives
            .iter()
            .position(|p| p.name == name)
            .map(ActionId)
    }

    /// `f(x, u, w)`: applies the body-frame primitive, then the world-frame
    /// additive noise sample (if any).
    pub fn propagate_pose(
        &self,
        pose: &RobotPose,
        action: ActionId,
        noise_sample: Option<&Vector3<f64>>,
    ) -> Result<RobotPose, ModelError> {
        let d = self.primitive(action)?.delta;
        let (s, c) = pose.heading.sin_cos();
        let mut x = pose.x + c * d[0] - s * d[1];
        let mut y = pose.y + s * d[0] + c * d[1];
        let mut heading = pose.heading + d[2];
        if let Some(w) = noise_sample {
            x += w[0];
            y += w[1];
            heading += w[2];
        }
        Ok(RobotPose::new(x, y, heading))
    }

    /// Jacobian of the noiseless propagation with respect to the pose.
    pub fn jacobian(&self, pose: &RobotPose, action: ActionId) -> Result<Matrix3<f64>, ModelError> {
        let d = self.primitive(action)?.delta;
        let (s, c) = pose.heading.sin_cos();
        Ok(Matrix3::new(
            1.0,
            0.0,
            -s * d[0] - c * d[1],
            0.0,
            1.0,
            c * d[0] - s * d[1],
            0.0,
            0.0,
            1.0,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModel {
    noise: Matrix2<f64>,
    fov_range: f64,
    fov_half_angle: f64,
}

impl ObservationModel {
    pub fn new(noise: Matrix2<f64>, fov_range: f64, fov_half_angle: f64) -> Result<Self, ModelError> {
        if !is_spd(&noise) {
            return Err(ModelError::NotPositiveDefinite("measurement noise"));
        }
        if !(fov_range > 0.0) || !(fov_half_angle > 0.0 && fov_half_angle <= PI) {
            return Err(ModelError::InvalidFieldOfView {
                range: fov_range,
                half_angle: fov_half_angle,
            });
        }
        Ok(Self {
            noise,
            fov_range,
            fov_half_angle,
        })
    }

    pub fn noise(&self) -> &Matrix2<f64> {
        &self.noise
    }

    pub fn fov_range(&self) -> f64 {
        self.fov_range
    }

    pub fn fov_half_angle(&self) -> f64 {
        self.fov_half_angle
    }

    pub fn dimension(&self) -> usize {
        MEASUREMENT_DIM
    }

    /// Whether a world-frame point is inside the sensor footprint at `pose`.
    pub fn in_fov(&self, pose: &RobotPose, point: &Vector2<f64>) -> bool {
        let rel = relative_position(pose, point);
        if rel.norm() > self.fov_range {
            return false;
        }
        self.fov_half_angle >= PI || rel[1].atan2(rel[0]).abs() <= self.fov_half_angle
    }

    /// Gaussian density of the measurement noise at `residual`.
    pub fn noise_density(&self, residual: &Vector2<f64>) -> f64 {
        let det = self.noise.determinant();
        let inv = self.noise.try_inverse().expect("noise covariance is SPD");
        let m = (residual.transpose() * inv * residual)[(0, 0)];
        (-0.5 * m).exp() / (2.0 * PI * det.sqrt())
    }

    /// `sigma`: the supremum of the joint measurement likelihood of `n`
    /// measurements over all states and associations.
    pub fn max_joint_likelihood(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let d = MEASUREMENT_DIM as f64;
        let log_peak = -(0.5 * d * (2.0 * PI).ln() + 0.5 * self.noise.determinant().ln());
        (n as f64 * log_peak).exp()
    }
}

fn relative_position(pose: &RobotPose, point: &Vector2<f64>) -> Vector2<f64> {
    let (s, c) = pose.heading.sin_cos();
    let dx = point[0] - pose.x;
    let dy = point[1] - pose.y;
    Vector2::new(c * dx + s * dy, -s * dx + c * dy)
}

/// Noiseless `h(x, l)`: the landmark position in the robot body frame.
pub fn predict_measurement(pose: &RobotPose, landmark: &Landmark) -> Vector2<f64> {
    relative_position(pose, &landmark.position)
}

/// Jacobian of [`predict_measurement`] with respect to `(x, y, heading)`.
pub fn measurement_jacobian(pose: &RobotPose, landmark: &Landmark) -> SMatrix<f64, 2, 3> {
    let (s, c) = pose.heading.sin_cos();
    let dx = landmark.position[0] - pose.x;
    let dy = landmark.position[1] - pose.y;
    SMatrix::<f64, 2, 3>::new(-c, -s, -s * dx + c * dy, s, -c, -c * dx - s * dy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub z: Vector2<f64>,
    pub class: ClassId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub measurements: Vec<Measurement>,
}

impl ObservationSet {
    pub fn new(measurements: Vec<Measurement>) -> Self {
        Self { measurements }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Measurements stacked into one `2n` vector.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            MEASUREMENT_DIM * self.len(),
            self.measurements.iter().flat_map(|m| [m.z[0], m.z[1]]),
        )
    }
}

/// One data-association realization: a landmark id per measurement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AssociationVector(pub Vec<LandmarkId>);

impl AssociationVector {
    pub fn new(ids: Vec<LandmarkId>) -> Self {
        Self(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[LandmarkId] {
        &self.0
    }
}

/// Disc that contains a pose confidence region: every pose a component can
/// plausibly take lies within `radius` of `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRegion {
    pub center: Vector2<f64>,
    pub radius: f64,
}

impl ConfidenceRegion {
    /// Disc circumscribing the `sigmas`-sigma ellipse of the position block.
    pub fn from_gaussian(component: &GaussianComponent, sigmas: f64) -> Self {
        let p = &component.covariance;
        let (a, b, c) = (p[(0, 0)], p[(0, 1)], p[(1, 1)]);
        let half_trace = 0.5 * (a + c);
        let lambda_max = half_trace + (0.25 * (a - c) * (a - c) + b * b).sqrt();
        Self {
            center: Vector2::new(component.mean[0], component.mean[1]),
            radius: sigmas * lambda_max.max(0.0).sqrt(),
        }
    }

    pub fn point(pose: &RobotPose) -> Self {
        Self {
            center: pose.position(),
            radius: 0.0,
        }
    }
}

/// Map, models and the enumeration settings shared by inference and
/// planning.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub map: LandmarkMap,
    pub motion: MotionModel,
    pub observation: ObservationModel,
    gate_threshold: f64,
    pub association_cap: usize,
    pub region_sigmas: f64,
}

impl WorldModel {
    pub fn new(map: LandmarkMap, motion: MotionModel, observation: ObservationModel) -> Self {
        Self {
            map,
            motion,
            observation,
            gate_threshold: chi2_quantile_2dof(DEFAULT_GATE_PROBABILITY),
            association_cap: DEFAULT_ASSOCIATION_CAP,
            region_sigmas: DEFAULT_REGION_SIGMAS,
        }
    }

    /// Sets the per-measurement gate to the chi-square quantile at `probability`.
    pub fn with_gate_probability(mut self, probability: f64) -> Result<Self, ModelError> {
        if !(probability > 0.0 && probability < 1.0) {
            return Err(ModelError::InvalidGate(probability));
        }
        self.gate_threshold = chi2_quantile_2dof(probability);
        Ok(self)
    }

    pub fn with_association_cap(mut self, cap: usize) -> Self {
        self.association_cap = cap;
        self
    }

    pub fn gate_threshold(&self) -> f64 {
        self.gate_threshold
    }

    pub fn landmark(&self, id: LandmarkId) -> Result<&Landmark, ModelError> {
        self.map.get(id).ok_or(ModelError::UnknownLandmark(id.0))
    }

    fn check_dimensions(&self, z: &ObservationSet, beta: &AssociationVector) -> Result<(), ModelError> {
        if z.len() != beta.len() {
            return Err(ModelError::DimensionMismatch {
                association: beta.len(),
                measurements: z.len(),
            });
        }
        Ok(())
    }

    /// `P(Z | beta, x)`: product of per-measurement Gaussian densities, zero
    /// when any assigned landmark is outside the field of view at `x`.
    pub fn joint_measurement_likelihood(
        &self,
        z: &ObservationSet,
        beta: &AssociationVector,
        pose: &RobotPose,
    ) -> Result<f64, ModelError> {
        self.check_dimensions(z, beta)?;
        let mut likelihood = 1.0;
        for (m, id) in z.measurements.iter().zip(beta.ids()) {
            let l = self.landmark(*id)?;
            if !self.observation.in_fov(pose, &l.position) {
                return Ok(0.0);
            }
            likelihood *= self.observation.noise_density(&(m.z - predict_measurement(pose, l)));
        }
        Ok(likelihood)
    }

    /// `P(beta | x)`: uniform over the class-consistent injective
    /// assignments whose landmarks are all visible from `x`.
    pub fn association_prior(
        &self,
        z: &ObservationSet,
        beta: &AssociationVector,
        pose: &RobotPose,
    ) -> Result<f64, ModelError> {
        self.check_dimensions(z, beta)?;
        let mut used: Vec<LandmarkId> = Vec::with_capacity(beta.len());
        for (m, id) in z.measurements.iter().zip(beta.ids()) {
            let l = self.landmark(*id)?;
            if l.class != m.class || used.contains(id) || !self.observation.in_fov(pose, &l.position) {
                return Ok(0.0);
            }
            used.push(*id);
        }
        // Count the feasible assignments class by class: with v visible
        // landmarks and k measurements of a class there are v!/(v-k)!.
        let mut classes: Vec<(ClassId, usize)> = Vec::new();
        for m in &z.measurements {
            match classes.iter_mut().find(|(c, _)| *c == m.class) {
                Some((_, k)) => *k += 1,
                None => classes.push((m.class, 1)),
            }
        }
        let mut feasible = 1.0;
        for (class, k) in classes {
            let visible = self
                .map
                .landmarks()
                .iter()
                .filter(|l| l.class == class && self.observation.in_fov(pose, &l.position))
                .count();
            for t in 0..k {
                feasible *= (visible - t) as f64;
            }
        }
        Ok(1.0 / feasible)
    }

    /// `alpha`: whether some pose inside one of the regions could see every
    /// landmark of `beta`. Over-approximates: any heading is allowed and each
    /// landmark only needs to be within range of the region.
    pub fn association_feasibility_bound(&self, beta: &AssociationVector, support: &[ConfidenceRegion]) -> bool {
        support.iter().any(|region| {
            let reach = region.radius + self.observation.fov_range;
            beta.ids().iter().all(|id| {
                self.map
                    .get(*id)
                    .is_some_and(|l| (l.position - region.center).norm() <= reach)
            })
        })
    }

    /// Innovation covariance of a single measurement of `landmark` under a
    /// Gaussian pose belief.
    pub fn innovation_covariance(&self, component: &GaussianComponent, landmark: &Landmark) -> Matrix2<f64> {
        let pose = component.pose();
        let h = measurement_jacobian(&pose, landmark);
        h * component.covariance * h.transpose() + self.observation.noise
    }

    /// All class-consistent injective association vectors for `z` whose every
    /// measurement passes the Mahalanobis gate of at least one common support
    /// component. Sorted lexicographically by landmark id.
    pub fn enumerate_associations(
        &self,
        support: &[GaussianComponent],
        z: &ObservationSet,
    ) -> Result<Vec<AssociationVector>, ModelError> {
        let n = z.len();
        let landmarks = self.map.landmarks();
        let nl = landmarks.len();
        let mut order: Vec<usize> = (0..nl).collect();
        order.sort_by_key(|&i| landmarks[i].id);

        // gate[(j * n + r) * nl + l]
        let mut gate = vec![false; support.len() * n * nl];
        for (j, component) in support.iter().enumerate() {
            let pose = component.pose();
            for (r, m) in z.measurements.iter().enumerate() {
                for (li, l) in landmarks.iter().enumerate() {
                    if l.class != m.class {
                        continue;
                    }
                    let innovation = m.z - predict_measurement(&pose, l);
                    let s = self.innovation_covariance(component, l);
                    let d2 = match s.cholesky() {
                        Some(ch) => innovation.dot(&ch.solve(&innovation)),
                        None => f64::INFINITY,
                    };
                    gate[(j * n + r) * nl + li] = d2 <= self.gate_threshold;
                }
            }
        }

        struct Search<'a> {
            n: usize,
            nl: usize,
            order: &'a [usize],
            gate: &'a [bool],
            landmarks: &'a [Landmark],
            cap: usize,
            out: Vec<AssociationVector>,
        }

        impl Search<'_> {
            fn visit(&mut self, r: usize, current: &mut Vec<usize>, alive: &[usize]) -> Result<(), ModelError> {
                if r == self.n {
                    if self.out.len() >= self.cap {
                        return Err(ModelError::AssociationCapExceeded { cap: self.cap });
                    }
                    self.out.push(AssociationVector(
                        current.iter().map(|&li| self.landmarks[li].id).collect(),
                    ));
                    return Ok(());
                }
                for &li in self.order {
                    if current.contains(&li) {
                        continue;
                    }
                    let next: Vec<usize> = alive
                        .iter()
                        .copied()
                        .filter(|&j| self.gate[(j * self.n + r) * self.nl + li])
                        .collect();
                    if next.is_empty() {
                        continue;
                    }
                    current.push(li);
                    self.visit(r + 1, current, &next)?;
                    current.pop();
                }
                Ok(())
            }
        }

        let mut search = Search {
            n,
            nl,
            order: &order,
            gate: &gate,
            landmarks,
            cap: self.association_cap,
            out: Vec::new(),
        };
        let alive: Vec<usize> = (0..support.len()).collect();
        if alive.is_empty() && n > 0 {
            return Ok(Vec::new());
        }
        search.visit(0, &mut Vec::with_capacity(n), &alive)?;
        Ok(search.out)
    }

    /// Landmarks visible from `pose`, in id order.
    pub fn visible_landmarks(&self, pose: &RobotPose) -> Vec<&Landmark> {
        let mut v: Vec<&Landmark> = self
            .map
            .landmarks()
            .iter()
            .filter(|l| self.observation.in_fov(pose, &l.position))
            .collect();
        v.sort_by_key(|l| l.id);
        v
    }

    /// Stacked Jacobian, prediction and block-diagonal noise for one
    /// association vector at `pose`.
    pub fn stacked_model(
        &self,
        pose: &RobotPose,
        beta: &AssociationVector,
    ) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>), ModelError> {
        let n = beta.len();
        let mut h = DMatrix::zeros(MEASUREMENT_DIM * n, 3);
        let mut predicted = DVector::zeros(MEASUREMENT_DIM * n);
        let mut noise = DMatrix::zeros(MEASUREMENT_DIM * n, MEASUREMENT_DIM * n);
        for (r, id) in beta.ids().iter().enumerate() {
            let l = self.landmark(*id)?;
            let row = MEASUREMENT_DIM * r;
            h.fixed_view_mut::<2, 3>(row, 0)
                .copy_from(&measurement_jacobian(pose, l));
            predicted
                .fixed_rows_mut::<2>(row)
                .copy_from(&predict_measurement(pose, l));
            noise
                .fixed_view_mut::<2, 2>(row, row)
                .copy_from(&self.observation.noise);
        }
        Ok((h, predicted, noise))
    }
}

/// Chi-square quantile with two degrees of freedom.
pub fn chi2_quantile_2dof(probability: f64) -> f64 {
    -2.0 * (1.0 - probability).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_PI_2;

    fn motion() -> MotionModel {
        MotionModel::new(
            vec![
                MotionPrimitive::new("RIGHT", 1.0, 0.0, 0.0),
                MotionPrimitive::new("LEFT", -1.0, 0.0, 0.0),
                MotionPrimitive::new("FORWARD", 1.0, 0.0, 0.0),
            ],
            Matrix3::identity() * 0.01,
        )
        .unwrap()
    }

    fn observation(range: f64, half_angle: f64) -> ObservationModel {
        ObservationModel::new(Matrix2::identity() * 0.01, range, half_angle).unwrap()
    }

    fn world(landmarks: Vec<Landmark>) -> WorldModel {
        WorldModel::new(LandmarkMap::new(landmarks).unwrap(), motion(), observation(10.0, PI))
    }

    #[test]
    fn heading_is_normalized_into_half_open_interval() {
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(3.0 * PI), PI);
        assert_relative_eq!(normalize_angle(2.5 * PI), FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(RobotPose::new(0.0, 0.0, -1.5 * PI).heading, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn propagate_pose_examples() {
        let m = motion();
        let p = m.propagate_pose(&RobotPose::new(0.0, 0.0, 0.0), ActionId(0), None).unwrap();
        assert_eq!(p, RobotPose::new(1.0, 0.0, 0.0));

        let p = m
            .propagate_pose(&RobotPose::new(0.0, 0.0, FRAC_PI_2), ActionId(2), None)
            .unwrap();
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.heading, FRAC_PI_2);

        let w = Vector3::new(0.1, -0.05, 0.0);
        let p = m
            .propagate_pose(&RobotPose::new(0.0, 0.0, 0.0), ActionId(0), Some(&w))
            .unwrap();
        assert_relative_eq!(p.x, 1.1, epsilon = 1e-12);
        assert_relative_eq!(p.y, -0.05, epsilon = 1e-12);
        assert_eq!(p.heading, 0.0);
    }

    #[test]
    fn unknown_action_is_rejected() {
        let err = motion()
            .propagate_pose(&RobotPose::new(0.0, 0.0, 0.0), ActionId(7), None)
            .unwrap_err();
        assert_eq!(err, ModelError::UnknownAction(7));
    }

    #[test]
    fn motion_jacobian_matches_finite_differences() {
        let m = motion();
        let pose = RobotPose::new(0.3, -1.2, 0.7);
        let jac = m.jacobian(&pose, ActionId(0)).unwrap();
        let eps = 1e-6;
        for k in 0..3 {
            let mut plus = pose.to_vector();
            let mut minus = pose.to_vector();
            plus[k] += eps;
            minus[k] -= eps;
            let fp = m.propagate_pose(&RobotPose::from_vector(&plus), ActionId(0), None).unwrap();
            let fm = m.propagate_pose(&RobotPose::from_vector(&minus), ActionId(0), None).unwrap();
            let col = (fp.to_vector() - fm.to_vector()) / (2.0 * eps);
            for r in 0..3 {
                assert_relative_eq!(jac[(r, k)], col[r], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn predict_measurement_examples() {
        let l = Landmark::new(1, 0, 3.0, 4.0);
        assert_eq!(predict_measurement(&RobotPose::new(0.0, 0.0, 0.0), &l), Vector2::new(3.0, 4.0));
        let z = predict_measurement(&RobotPose::new(0.0, 0.0, FRAC_PI_2), &Landmark::new(2, 0, 0.0, 2.0));
        assert_relative_eq!(z[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(z[1], 0.0, epsilon = 1e-12);
        let z = predict_measurement(&RobotPose::new(1.0, 1.0, 0.0), &Landmark::new(3, 0, 4.0, 5.0));
        assert_eq!(z, Vector2::new(3.0, 4.0));
    }

    #[test]
    fn measurement_jacobian_matches_finite_differences() {
        let l = Landmark::new(1, 0, 2.5, -1.0);
        let pose = RobotPose::new(0.4, 0.1, -2.2);
        let jac = measurement_jacobian(&pose, &l);
        let eps = 1e-6;
        for k in 0..3 {
            let mut plus = pose.to_vector();
            let mut minus = pose.to_vector();
            plus[k] += eps;
            minus[k] -= eps;
            let col = (predict_measurement(&RobotPose::from_vector(&plus), &l)
                - predict_measurement(&RobotPose::from_vector(&minus), &l))
                / (2.0 * eps);
            for r in 0..2 {
                assert_relative_eq!(jac[(r, k)], col[r], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn joint_likelihood_examples() {
        let w = world(vec![Landmark::new(1, 0, 3.0, 4.0), Landmark::new(2, 0, 1.0, 1.0)]);
        let pose = RobotPose::new(0.0, 0.0, 0.0);
        let empty = w
            .joint_measurement_likelihood(&ObservationSet::empty(), &AssociationVector::default(), &pose)
            .unwrap();
        assert_eq!(empty, 1.0);

        let peak = 1.0 / (2.0 * PI * 0.01);
        let z1 = ObservationSet::new(vec![Measurement {
            z: Vector2::new(3.0, 4.0),
            class: ClassId(0),
        }]);
        let beta1 = AssociationVector(vec![LandmarkId(1)]);
        assert_relative_eq!(w.joint_measurement_likelihood(&z1, &beta1, &pose).unwrap(), peak, max_relative = 1e-12);
        assert_relative_eq!(peak, 15.9155, epsilon = 1e-4);

        let z2 = ObservationSet::new(vec![
            Measurement {
                z: Vector2::new(3.0, 4.0),
                class: ClassId(0),
            },
            Measurement {
                z: Vector2::new(1.0, 1.0),
                class: ClassId(0),
            },
        ]);
        let beta2 = AssociationVector(vec![LandmarkId(1), LandmarkId(2)]);
        let joint = w.joint_measurement_likelihood(&z2, &beta2, &pose).unwrap();
        assert_relative_eq!(joint, 253.302_959, epsilon = 1e-4);

        let err = w.joint_measurement_likelihood(&z2, &beta1, &pose).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn joint_likelihood_is_zero_outside_fov() {
        let map = LandmarkMap::new(vec![Landmark::new(1, 0, 30.0, 0.0)]).unwrap();
        let w = WorldModel::new(map, motion(), observation(10.0, PI));
        let z = ObservationSet::new(vec![Measurement {
            z: Vector2::new(30.0, 0.0),
            class: ClassId(0),
        }]);
        let l = w
            .joint_measurement_likelihood(&z, &AssociationVector(vec![LandmarkId(1)]), &RobotPose::new(0.0, 0.0, 0.0))
            .unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn max_joint_likelihood_examples() {
        let o = observation(10.0, PI);
        assert_eq!(o.max_joint_likelihood(0), 1.0);
        assert_relative_eq!(o.max_joint_likelihood(1), 15.915_494, epsilon = 1e-5);
        assert_relative_eq!(o.max_joint_likelihood(2), o.max_joint_likelihood(1).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn max_joint_likelihood_dominates_a_grid_search() {
        let w = world(vec![Landmark::new(1, 0, 1.0, 0.5), Landmark::new(2, 0, -0.5, 1.0)]);
        let z = ObservationSet::new(vec![
            Measurement {
                z: Vector2::new(1.0, 0.5),
                class: ClassId(0),
            },
            Measurement {
                z: Vector2::new(-0.5, 1.0),
                class: ClassId(0),
            },
        ]);
        let beta = AssociationVector(vec![LandmarkId(1), LandmarkId(2)]);
        let mut best: f64 = 0.0;
        for i in -20..=20 {
            for k in -20..=20 {
                let pose = RobotPose::new(i as f64 * 0.01, k as f64 * 0.01, 0.0);
                best = best.max(w.joint_measurement_likelihood(&z, &beta, &pose).unwrap());
            }
        }
        let sigma = w.observation.max_joint_likelihood(2);
        assert!(best <= sigma * (1.0 + 1e-12));
        assert_relative_eq!(best, sigma, max_relative = 1e-9);
    }

    #[test]
    fn feasibility_bound_examples() {
        let w = world(vec![Landmark::new(1, 0, 1e6, 0.0), Landmark::new(2, 0, 2.0, 0.0)]);
        let region = ConfidenceRegion {
            center: Vector2::new(0.0, 0.0),
            radius: 10.0,
        };
        assert!(!w.association_feasibility_bound(&AssociationVector(vec![LandmarkId(1)]), &[region]));
        assert!(w.association_feasibility_bound(&AssociationVector::default(), &[region]));
        let point = ConfidenceRegion::point(&RobotPose::new(0.0, 0.0, 0.0));
        assert!(w.association_feasibility_bound(&AssociationVector(vec![LandmarkId(2)]), &[point]));
    }

    fn gaussian(x: f64, y: f64, var: f64) -> GaussianComponent {
        GaussianComponent::new(Vector3::new(x, y, 0.0), Matrix3::from_diagonal(&Vector3::new(var, var, 1e-6)))
            .unwrap()
    }

    #[test]
    fn enumerates_six_aliased_squares() {
        let mut lms: Vec<Landmark> = (0..6).map(|i| Landmark::new(10 + i, 0, 2.0, i as f64 * 0.1)).collect();
        lms.push(Landmark::new(99, 1, -3.0, 0.0));
        let w = world(lms);
        let z = ObservationSet::new(vec![Measurement {
            z: Vector2::new(2.0, 0.25),
            class: ClassId(0),
        }]);
        let out = w.enumerate_associations(&[gaussian(0.0, 0.0, 1.0)], &z).unwrap();
        assert_eq!(out.len(), 6);
        let ids: Vec<u32> = out.iter().map(|b| b.ids()[0].0).collect();
        assert_eq!(ids, vec![10, 11, 12, 13, 14, 15]);
    }

    #[test]
    fn no_landmark_of_observed_class_gives_no_realization() {
        let w = world(vec![Landmark::new(1, 0, 2.0, 0.0)]);
        let z = ObservationSet::new(vec![Measurement {
            z: Vector2::new(2.0, 0.0),
            class: ClassId(3),
        }]);
        assert!(w.enumerate_associations(&[gaussian(0.0, 0.0, 1.0)], &z).unwrap().is_empty());
    }

    #[test]
    fn two_measurement_cross_product_matches_brute_force() {
        let w = world(vec![
            Landmark::new(1, 0, 2.0, 0.0),
            Landmark::new(2, 0, 2.0, 0.3),
            Landmark::new(3, 1, 0.0, 2.0),
        ]);
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
        let out = w.enumerate_associations(&[gaussian(0.0, 0.0, 1.0)], &z).unwrap();
        // Exhaustive cross product of class-consistent candidates.
        let mut brute = Vec::new();
        for a in [1u32, 2] {
            for b in [3u32] {
                brute.push(AssociationVector(vec![LandmarkId(a), LandmarkId(b)]));
            }
        }
        assert_eq!(out, brute);
    }

    #[test]
    fn enumeration_respects_the_cap() {
        let lms: Vec<Landmark> = (0..5).map(|i| Landmark::new(i, 0, 2.0, i as f64 * 0.05)).collect();
        let w = world(lms).with_association_cap(3);
        let z = ObservationSet::new(vec![Measurement {
            z: Vector2::new(2.0, 0.1),
            class: ClassId(0),
        }]);
        let err = w.enumerate_associations(&[gaussian(0.0, 0.0, 1.0)], &z).unwrap_err();
        assert_eq!(err, ModelError::AssociationCapExceeded { cap: 3 });
        assert!(alloc::format!("{err}").contains("3"));
    }

    #[test]
    fn injective_assignments_only() {
        let w = world(vec![Landmark::new(1, 0, 2.0, 0.0), Landmark::new(2, 0, 2.0, 0.2)]);
        let m = Measurement {
            z: Vector2::new(2.0, 0.1),
            class: ClassId(0),
        };
        let z = ObservationSet::new(vec![m, m]);
        let out = w.enumerate_associations(&[gaussian(0.0, 0.0, 1.0)], &z).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|b| b.ids()[0] != b.ids()[1]));
    }

    #[test]
    fn association_prior_is_uniform_over_visible_permutations() {
        let w = world(vec![
            Landmark::new(1, 0, 2.0, 0.0),
            Landmark::new(2, 0, 3.0, 0.0),
            Landmark::new(3, 0, 4.0, 0.0),
        ]);
        let pose = RobotPose::new(0.0, 0.0, 0.0);
        let m = Measurement {
            z: Vector2::new(2.0, 0.0),
            class: ClassId(0),
        };
        let one = ObservationSet::new(vec![m]);
        let p = w.association_prior(&one, &AssociationVector(vec![LandmarkId(2)]), &pose).unwrap();
        assert_relative_eq!(p, 1.0 / 3.0);
        let two = ObservationSet::new(vec![m, m]);
        let p = w
            .association_prior(&two, &AssociationVector(vec![LandmarkId(2), LandmarkId(1)]), &pose)
            .unwrap();
        assert_relative_eq!(p, 1.0 / 6.0);
        let wrong_class = ObservationSet::new(vec![Measurement { class: ClassId(1), ..m }]);
        assert_eq!(
            w.association_prior(&wrong_class, &AssociationVector(vec![LandmarkId(2)]), &pose).unwrap(),
            0.0
        );
    }

    #[test]
    fn narrow_fov_rejects_points_behind() {
        let o = observation(5.0, PI / 4.0);
        let pose = RobotPose::new(0.0, 0.0, 0.0);
        assert!(o.in_fov(&pose, &Vector2::new(2.0, 0.5)));
        assert!(!o.in_fov(&pose, &Vector2::new(-2.0, 0.0)));
        assert!(!o.in_fov(&pose, &Vector2::new(6.0, 0.0)));
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(ObservationModel::new(Matrix2::identity(), 0.0, 1.0).is_err());
        assert!(ObservationModel::new(Matrix2::identity(), 1.0, 4.0).is_err());
        assert!(ObservationModel::new(Matrix2::new(1.0, 2.0, 2.0, 1.0), 1.0, 1.0).is_err());
        assert!(MotionModel::new(vec![], -Matrix3::identity()).is_err());
        assert_eq!(LandmarkMap::new(vec![]).unwrap_err(), ModelError::EmptyMap);
        assert_eq!(
            LandmarkMap::new(vec![Landmark::new(1, 0, 0.0, 0.0), Landmark::new(1, 0, 1.0, 0.0)]).unwrap_err(),
            ModelError::DuplicateLandmark(1)
        );
    }
}
