//! Simplified beliefs over a distilled hypothesis subset and the certified
//! bounds they give on the normalizer `eta` and on the posterior weight
//! entropy of the full belief.
//!
//! The bounds only need the zeta columns of the selected hypotheses. The
//! discarded ones enter through the prior mass they carry, the likelihood
//! cap `sigma` and a per-realization feasibility indicator `alpha`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use thiserror::Error;

use crate::belief::{weights_entropy, BeliefError, GaussianComponent, HypothesisComponent, MixtureBelief, ZetaTable};
use crate::sum::{compensated_sum, CompensatedSum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("selection is empty")]
    EmptySelection,
    #[error("hypothesis index {index} is out of range for {total} hypotheses")]
    IndexOutOfRange { index: usize, total: usize },
    #[error("hypothesis {0} is already selected")]
    AlreadySelected(usize),
    #[error("selected hypotheses carry zero prior mass")]
    ZeroMass,
    #[error("likelihood lower bound is zero; the selection is uninformative and must be refined")]
    UninformativeSelection,
    #[error("column has {got} entries, expected {expected}")]
    Misaligned { got: usize, expected: usize },
    #[error("bound inversion: lower {lb} exceeds upper {ub}")]
    Inverted { lb: f64, ub: f64 },
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Ordered subset of hypothesis indices with its prior mass `w^{m,s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistilledSelection {
    selected: Vec<usize>,
    total: usize,
    mass: f64,
}

impl DistilledSelection {
    pub fn new(selected: Vec<usize>, weights: &[f64]) -> Result<Self, BoundError> {
        if selected.is_empty() {
            return Err(BoundError::EmptySelection);
        }
        let total = weights.len();
        let mut seen = vec![false; total];
        for &j in &selected {
            if j >= total {
                return Err(BoundError::IndexOutOfRange { index: j, total });
            }
            if seen[j] {
                return Err(BoundError::AlreadySelected(j));
            }
            seen[j] = true;
        }
        let mass = compensated_sum(selected.iter().map(|&j| weights[j]));
        Ok(Self { selected, total, mass })
    }

    pub fn all(weights: &[f64]) -> Result<Self, BoundError> {
        Self::new((0..weights.len()).collect(), weights)
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn complement_size(&self) -> usize {
        self.total - self.selected.len()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.total).filter(|j| !self.selected.contains(j)).collect()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_full(&self) -> bool {
        self.selected.len() == self.total
    }
}

/// Certified enclosure `[lb, ub]` of a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInterval {
    pub lb: f64,
    pub ub: f64,
}

impl BoundInterval {
    pub fn new(lb: f64, ub: f64) -> Result<Self, BoundError> {
        if !(lb <= ub) {
            return Err(BoundError::Inverted { lb, ub });
        }
        Ok(Self { lb, ub })
    }

    pub fn point(v: f64) -> Self {
        Self { lb: v, ub: v }
    }

    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    /// Containment with a relative tolerance on the interval ends.
    pub fn contains(&self, v: f64, rel_tol: f64) -> bool {
        let slack = rel_tol * self.lb.abs().max(self.ub.abs()).max(v.abs()).max(1.0);
        v >= self.lb - slack && v <= self.ub + slack
    }

    pub fn overlaps(&self, other: &BoundInterval) -> bool {
        self.lb <= other.ub && other.lb <= self.ub
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodBounds {
    pub eta_s: f64,
    pub lb: f64,
    pub ub: f64,
    /// `sigma * sum_i alpha^i`.
    pub sigma_alpha_term: f64,
}

impl LikelihoodBounds {
    pub fn interval(&self) -> BoundInterval {
        BoundInterval { lb: self.lb, ub: self.ub }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBounds {
    pub h_s: f64,
    pub gamma: f64,
    pub lb: f64,
    pub ub: f64,
    /// The likelihood lower bound was zero and `[lb, ub]` is the trivial
    /// enclosure rather than the analytic bound.
    pub degenerate: bool,
}

impl EntropyBounds {
    pub fn interval(&self) -> BoundInterval {
        BoundInterval { lb: self.lb, ub: self.ub }
    }
}

/// `eta` and entropy bounds of one selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionBounds {
    pub likelihood: LikelihoodBounds,
    pub entropy: EntropyBounds,
}

/// Restricts `belief` to the selection and renormalizes its weights.
pub fn make_simplified(belief: &MixtureBelief, selection: &DistilledSelection) -> Result<MixtureBelief, BoundError> {
    if selection.total() != belief.len() {
        return Err(BoundError::Misaligned {
            got: selection.total(),
            expected: belief.len(),
        });
    }
    if !(selection.mass() > 0.0) {
        return Err(BoundError::ZeroMass);
    }
    let components: Vec<HypothesisComponent> = selection
        .selected()
        .iter()
        .map(|&j| {
            let c = &belief.components()[j];
            HypothesisComponent {
                weight: c.weight / selection.mass(),
                gaussian: GaussianComponent::clone(&c.gaussian),
                history: c.history.clone(),
            }
        })
        .collect();
    Ok(MixtureBelief::new(components, belief.step())?)
}

/// Renormalized weights `w^j / w^{m,s}` in selection order.
pub fn simplified_weights(selection: &DistilledSelection, weights: &[f64]) -> Result<Vec<f64>, BoundError> {
    if !(selection.mass() > 0.0) {
        return Err(BoundError::ZeroMass);
    }
    Ok(selection
        .selected()
        .iter()
        .map(|&j| weights[j] / selection.mass())
        .collect())
}

/// `eta^s = sum_i sum_{j in M_s} zeta^{ij} w^{s,j}` with `simplified` in
/// selection order.
pub fn eta_simplified(selection: &DistilledSelection, table: &ZetaTable, simplified: &[f64]) -> Result<f64, BoundError> {
    if simplified.len() != selection.len() {
        return Err(BoundError::Misaligned {
            got: simplified.len(),
            expected: selection.len(),
        });
    }
    if selection.total() != table.cols() {
        return Err(BoundError::Misaligned {
            got: table.cols(),
            expected: selection.total(),
        });
    }
    let mut acc = CompensatedSum::new();
    for i in 0..table.rows() {
        for (&j, w) in selection.selected().iter().zip(simplified) {
            acc.add(table.value(i, j) * w);
        }
    }
    Ok(acc.value())
}

/// Entropy of the simplified posterior, zero when `eta_s` is zero.
pub fn simplified_entropy(
    selection: &DistilledSelection,
    table: &ZetaTable,
    simplified: &[f64],
    eta_s: f64,
) -> Result<f64, BoundError> {
    if !(eta_s > 0.0) {
        return Ok(0.0);
    }
    let mut q = Vec::with_capacity(selection.len() * table.rows());
    for (&j, w) in selection.selected().iter().zip(simplified) {
        for i in 0..table.rows() {
            q.push(table.value(i, j) * w / eta_s);
        }
    }
    Ok(weights_entropy(&q)?)
}

/// Bounds on `eta` from the selection. `alphas` flags the realizations that
/// any discarded hypothesis could explain.
pub fn eta_bounds(eta_s: f64, w_ms: f64, sigma: f64, alphas: &[bool]) -> LikelihoodBounds {
    let active = alphas.iter().filter(|a| **a).count();
    eta_bounds_from_count(eta_s, w_ms, sigma, active)
}

fn eta_bounds_from_count(eta_s: f64, w_ms: f64, sigma: f64, active: usize) -> LikelihoodBounds {
    let sigma_alpha_term = sigma * active as f64;
    let lb = eta_s * w_ms;
    let rest = (1.0 - w_ms).max(0.0);
    let ub = if active == 0 || rest == 0.0 {
        lb
    } else {
        lb + rest * sigma_alpha_term
    };
    LikelihoodBounds {
        eta_s,
        lb,
        ub,
        sigma_alpha_term,
    }
}

/// Posterior weight entropy of the full belief written through the
/// simplified belief plus the contribution of the discarded hypotheses.
pub fn entropy_identity(
    selection: &DistilledSelection,
    table: &ZetaTable,
    weights: &[f64],
    eta: f64,
    eta_s: f64,
    h_s: f64,
) -> Result<f64, BoundError> {
    if !(eta > 0.0) {
        return Err(BoundError::Belief(BeliefError::ZeroLikelihood));
    }
    let w_ms = selection.mass();
    let mut acc = CompensatedSum::new();
    if eta_s > 0.0 {
        acc.add((w_ms / eta) * eta_s * (h_s - eta_s.ln()));
        acc.add(-(w_ms / eta) * eta_s * (w_ms / eta).ln());
    }
    for j in selection.complement() {
        for i in 0..table.rows() {
            let p = table.value(i, j) * weights[j] / eta;
            if p > 0.0 {
                acc.add(-p * p.ln());
            }
        }
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBoundInputs {
    pub eta_s: f64,
    pub h_s: f64,
    pub w_ms: f64,
    pub eta_lb: f64,
    pub eta_ub: f64,
    pub l_size: usize,
    pub complement_size: usize,
    /// `sum_{i, j in M_s} zeta^{ij} w^{s,j}`, equal to `eta_s`.
    pub zeta_selected_mass: f64,
    /// Number of (realization, discarded hypothesis) pairs that can carry
    /// posterior mass. Defaults to `l_size * complement_size`.
    pub complement_support: Option<usize>,
}

impl EntropyBoundInputs {
    fn support(&self) -> usize {
        self.complement_support
            .unwrap_or(self.l_size * self.complement_size)
    }
}

/// Lower and upper bound on the posterior weight entropy.
pub fn entropy_bounds(inputs: &EntropyBoundInputs) -> Result<EntropyBounds, BoundError> {
    let EntropyBoundInputs {
        eta_s,
        h_s,
        w_ms,
        eta_lb,
        eta_ub,
        zeta_selected_mass,
        ..
    } = *inputs;
    if !(eta_lb > 0.0) {
        return Err(BoundError::UninformativeSelection);
    }
    if !(eta_lb <= eta_ub) {
        return Err(BoundError::Inverted { lb: eta_lb, ub: eta_ub });
    }
    let head = eta_s * w_ms;
    let core = h_s - eta_s.ln();
    // Products before quotients and differences of logs: `eta_lb` may be
    // subnormal, and `w_ms / eta_lb` would overflow.
    let mass = w_ms * zeta_selected_mass;
    let lb = (head / eta_ub) * core - (mass / eta_ub) * (w_ms.ln() - eta_lb.ln());
    let mut ub = (head / eta_lb) * core - (mass / eta_lb) * (w_ms.ln() - eta_ub.ln());

    let gamma = (1.0 - head / eta_ub).clamp(0.0, 1.0);
    let support = inputs.support();
    if inputs.complement_size > 0 && support > 0 && gamma > 0.0 {
        ub -= gamma * (gamma / support as f64).ln();
    }
    let lb = lb.max(0.0);
    let ub = ub.max(lb);
    Ok(EntropyBounds {
        h_s,
        gamma,
        lb,
        ub,
        degenerate: false,
    })
}

/// Like [`entropy_bounds`], but a zero likelihood lower bound yields the
/// trivial enclosure `[0, ln support]` flagged as degenerate.
pub fn entropy_enclosure(inputs: &EntropyBoundInputs) -> Result<EntropyBounds, BoundError> {
    match entropy_bounds(inputs) {
        Err(BoundError::UninformativeSelection) => Ok(EntropyBounds {
            h_s: inputs.h_s,
            gamma: 1.0,
            lb: 0.0,
            ub: (inputs.support().max(1) as f64).ln(),
            degenerate: true,
        }),
        other => other,
    }
}

/// Whether each realization is reachable from some discarded hypothesis of
/// positive weight.
pub fn complement_alphas(selection: &DistilledSelection, table: &ZetaTable, weights: &[f64]) -> (Vec<bool>, usize) {
    let complement: Vec<usize> = selection
        .complement()
        .into_iter()
        .filter(|&j| weights[j] > 0.0)
        .collect();
    let mut support = 0;
    let alphas = (0..table.rows())
        .map(|i| {
            let n = complement.iter().filter(|&&j| table.is_feasible(i, j)).count();
            support += n;
            n > 0
        })
        .collect();
    (alphas, support)
}

/// Bounds of one selection computed directly from the table.
pub fn bounds_from_scratch(
    table: &ZetaTable,
    weights: &[f64],
    selection: &DistilledSelection,
    sigma: f64,
) -> Result<SelectionBounds, BoundError> {
    let simplified = simplified_weights(selection, weights)?;
    let eta_s = eta_simplified(selection, table, &simplified)?;
    let h_s = simplified_entropy(selection, table, &simplified, eta_s)?;
    let (alphas, support) = complement_alphas(selection, table, weights);
    let likelihood = eta_bounds(eta_s, selection.mass(), sigma, &alphas);
    let entropy = entropy_enclosure(&EntropyBoundInputs {
        eta_s,
        h_s,
        w_ms: selection.mass(),
        eta_lb: likelihood.lb,
        eta_ub: likelihood.ub,
        l_size: table.rows(),
        complement_size: selection.complement_size(),
        zeta_selected_mass: eta_s,
        complement_support: Some(support),
    })?;
    Ok(SelectionBounds { likelihood, entropy })
}

/// Running sums that let a selection grow one hypothesis at a time in
/// `O(|L|)` per step.
#[derive(Debug, Clone)]
pub struct BoundCache {
    weights: Vec<f64>,
    sigma: f64,
    rows: usize,
    selected: Vec<usize>,
    in_selection: Vec<bool>,
    mass: CompensatedSum,
    /// `sum zeta^{ij} w^j` over selected columns.
    weighted: CompensatedSum,
    /// `sum zeta^{ij} w^j ln(zeta^{ij} w^j)` over selected columns.
    weighted_log: CompensatedSum,
    /// Per row: discarded positive-weight hypotheses that can reach it.
    alpha_counts: Vec<usize>,
    alpha_active: usize,
    support: usize,
    /// Row-major feasibility, only read for discarded columns.
    feasible: Vec<bool>,
}

impl BoundCache {
    /// Empty selection over `rows` realizations. `feasible(i, j)` must be
    /// true wherever `zeta^{ij}` can be positive.
    pub fn new(weights: &[f64], sigma: f64, rows: usize, feasible: impl Fn(usize, usize) -> bool) -> Self {
        let m = weights.len();
        let mut flags = vec![false; rows * m];
        let mut alpha_counts = vec![0; rows];
        for i in 0..rows {
            for j in 0..m {
                let f = feasible(i, j);
                flags[i * m + j] = f;
                if f && weights[j] > 0.0 {
                    alpha_counts[i] += 1;
                }
            }
        }
        let alpha_active = alpha_counts.iter().filter(|c| **c > 0).count();
        let support = alpha_counts.iter().sum();
        Self {
            weights: weights.to_vec(),
            sigma,
            rows,
            selected: Vec::new(),
            in_selection: vec![false; m],
            mass: CompensatedSum::new(),
            weighted: CompensatedSum::new(),
            weighted_log: CompensatedSum::new(),
            alpha_counts,
            alpha_active,
            support,
            feasible: flags,
        }
    }

    pub fn from_table(table: &ZetaTable, weights: &[f64], sigma: f64) -> Self {
        Self::new(weights, sigma, table.rows(), |i, j| table.is_feasible(i, j))
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn is_full(&self) -> bool {
        self.selected.len() == self.weights.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn mass(&self) -> f64 {
        self.mass.value()
    }

    pub fn selection(&self) -> Result<DistilledSelection, BoundError> {
        DistilledSelection::new(self.selected.clone(), &self.weights)
    }

    /// Adds hypothesis `j` whose zeta column is `column` and returns the
    /// bounds of the enlarged selection.
    pub fn add(&mut self, j: usize, column: &[f64]) -> Result<SelectionBounds, BoundError> {
        let m = self.weights.len();
        if j >= m {
            return Err(BoundError::IndexOutOfRange { index: j, total: m });
        }
        if self.in_selection[j] {
            return Err(BoundError::AlreadySelected(j));
        }
        if column.len() != self.rows {
            return Err(BoundError::Misaligned {
                got: column.len(),
                expected: self.rows,
            });
        }
        let w = self.weights[j];
        self.in_selection[j] = true;
        self.selected.push(j);
        self.mass.add(w);
        for (i, &zeta) in column.iter().enumerate() {
            let p = zeta * w;
            if p > 0.0 {
                self.weighted.add(p);
                self.weighted_log.add(p * p.ln());
            }
            if w > 0.0 && self.feasible[i * m + j] {
                self.alpha_counts[i] -= 1;
                self.support -= 1;
                if self.alpha_counts[i] == 0 {
                    self.alpha_active -= 1;
                }
            }
        }
        self.bounds()
    }

    /// Bounds of the current selection.
    pub fn bounds(&self) -> Result<SelectionBounds, BoundError> {
        if self.selected.is_empty() {
            return Err(BoundError::EmptySelection);
        }
        let w_ms = self.mass.value();
        if !(w_ms > 0.0) {
            return Err(BoundError::ZeroMass);
        }
        let weighted = self.weighted.value();
        let eta_s = weighted / w_ms;
        let h_s = if weighted > 0.0 {
            (weighted.ln() - self.weighted_log.value() / weighted).max(0.0)
        } else {
            0.0
        };
        let likelihood = eta_bounds_from_count(eta_s, w_ms, self.sigma, self.alpha_active);
        let entropy = entropy_enclosure(&EntropyBoundInputs {
            eta_s,
            h_s,
            w_ms,
            eta_lb: likelihood.lb,
            eta_ub: likelihood.ub,
            l_size: self.rows,
            complement_size: self.weights.len() - self.selected.len(),
            zeta_selected_mass: eta_s,
            complement_support: Some(self.support),
        })?;
        Ok(SelectionBounds { likelihood, entropy })
    }
}

/// Adds one hypothesis to a cache; see [`BoundCache::add`].
pub fn refine(cache: &mut BoundCache, add: usize, column: &[f64]) -> Result<SelectionBounds, BoundError> {
    cache.add(add, column)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{marginal_likelihood, posterior_weights};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn shared() -> (ZetaTable, Vec<f64>) {
        (
            ZetaTable::from_rows(&[vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap(),
            vec![0.5, 0.5],
        )
    }

    fn belief(ws: &[f64]) -> MixtureBelief {
        MixtureBelief::from_modes(
            ws.iter()
                .map(|&w| (w, GaussianComponent::new(Vector3::zeros(), Matrix3::identity()).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn make_simplified_examples() {
        let b = belief(&[0.5, 0.5]);
        let all = DistilledSelection::all(&b.weights()).unwrap();
        assert_eq!(make_simplified(&b, &all).unwrap().weights(), vec![0.5, 0.5]);
        let one = DistilledSelection::new(vec![0], &b.weights()).unwrap();
        assert_eq!(make_simplified(&b, &one).unwrap().weights(), vec![1.0]);
        let b = belief(&[0.5, 0.3, 0.2]);
        let two = DistilledSelection::new(vec![0, 1], &b.weights()).unwrap();
        let w = make_simplified(&b, &two).unwrap().weights();
        assert_relative_eq!(w[0], 0.625, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.375, epsilon = 1e-15);
        assert_eq!(DistilledSelection::new(vec![], &[1.0]).unwrap_err(), BoundError::EmptySelection);
    }

    #[test]
    fn eta_simplified_examples() {
        let (t, w) = shared();
        let one = DistilledSelection::new(vec![0], &w).unwrap();
        let sw = simplified_weights(&one, &w).unwrap();
        assert_relative_eq!(eta_simplified(&one, &t, &sw).unwrap(), 0.6, epsilon = 1e-15);
        let all = DistilledSelection::all(&w).unwrap();
        let sw = simplified_weights(&all, &w).unwrap();
        assert_relative_eq!(eta_simplified(&all, &t, &sw).unwrap(), 0.5, epsilon = 1e-15);
        let z = ZetaTable::from_rows(&[vec![0.0, 0.4], vec![0.0, 0.2]]).unwrap();
        let sw = simplified_weights(&one, &w).unwrap();
        assert_eq!(eta_simplified(&one, &z, &sw).unwrap(), 0.0);
    }

    #[test]
    fn eta_bounds_examples() {
        let b = eta_bounds(0.6, 0.5, 1.0, &[true, true]);
        assert_relative_eq!(b.lb, 0.3, epsilon = 1e-15);
        assert_relative_eq!(b.ub, 1.3, epsilon = 1e-15);
        assert!(b.lb <= 0.5 && 0.5 <= b.ub);
        let full = eta_bounds(0.5, 1.0, 7.0, &[true]);
        assert_eq!(full.lb, full.ub);
        let none = eta_bounds(0.6, 0.5, 7.0, &[false, false]);
        assert_eq!(none.lb, none.ub);
    }

    #[test]
    fn entropy_identity_examples() {
        let (t, w) = shared();
        let one = DistilledSelection::new(vec![0], &w).unwrap();
        let sw = simplified_weights(&one, &w).unwrap();
        let eta_s = eta_simplified(&one, &t, &sw).unwrap();
        let h_s = simplified_entropy(&one, &t, &sw, eta_s).unwrap();
        assert_relative_eq!(h_s, 0.636_514_168_294_813, epsilon = 1e-12);
        let h = entropy_identity(&one, &t, &w, 0.5, eta_s, h_s).unwrap();
        assert_relative_eq!(h, 1.279_854_225_833_667, epsilon = 1e-12);

        let all = DistilledSelection::all(&w).unwrap();
        let sw = simplified_weights(&all, &w).unwrap();
        let eta_s = eta_simplified(&all, &t, &sw).unwrap();
        let h_s = simplified_entropy(&all, &t, &sw, eta_s).unwrap();
        let (post, eta) = posterior_weights(&w, &t).unwrap();
        let direct = weights_entropy(&post).unwrap();
        assert_relative_eq!(entropy_identity(&all, &t, &w, eta, eta_s, h_s).unwrap(), direct, epsilon = 1e-12);

        let single = ZetaTable::from_rows(&[vec![0.7]]).unwrap();
        let s = DistilledSelection::all(&[1.0]).unwrap();
        assert_relative_eq!(entropy_identity(&s, &single, &[1.0], 0.7, 0.7, 0.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_bounds_on_shared_example() {
        let b = entropy_bounds(&EntropyBoundInputs {
            eta_s: 0.6,
            h_s: 0.636_514_168_294_813,
            w_ms: 0.5,
            eta_lb: 0.3,
            eta_ub: 1.3,
            l_size: 2,
            complement_size: 1,
            zeta_selected_mass: 0.6,
            complement_support: None,
        })
        .unwrap();
        assert_relative_eq!(b.lb, 0.146_887_884_991_111, epsilon = 1e-12);
        assert_relative_eq!(b.ub, 2.837_860_040_955_499, epsilon = 1e-12);
        assert_relative_eq!(b.gamma, 1.0 - 0.3 / 1.3, epsilon = 1e-12);
        assert!(b.lb <= 1.279_854_2 && 1.279_854_2 <= b.ub);
    }

    #[test]
    fn entropy_bounds_collapse_for_full_selection() {
        let (t, w) = shared();
        let all = DistilledSelection::all(&w).unwrap();
        let b = bounds_from_scratch(&t, &w, &all, 10.0).unwrap();
        let (post, eta) = posterior_weights(&w, &t).unwrap();
        let h = weights_entropy(&post).unwrap();
        assert_relative_eq!(b.likelihood.lb, eta, epsilon = 1e-15);
        assert_relative_eq!(b.likelihood.ub, eta, epsilon = 1e-15);
        assert_relative_eq!(b.entropy.lb, h, epsilon = 1e-12);
        assert_relative_eq!(b.entropy.ub, h, epsilon = 1e-12);
    }

    #[test]
    fn subnormal_likelihood_bound_stays_finite() {
        let eta_s = 2e-322;
        let b = entropy_bounds(&EntropyBoundInputs {
            eta_s,
            h_s: 0.0,
            w_ms: 0.5,
            eta_lb: eta_s * 0.5,
            eta_ub: 8.7,
            l_size: 2,
            complement_size: 1,
            zeta_selected_mass: eta_s,
            complement_support: Some(1),
        })
        .unwrap();
        assert!(b.lb.is_finite() && b.ub.is_finite(), "{b:?}");
        assert!(b.ub > 700.0);
    }

    #[test]
    fn zero_gamma_drops_the_last_term() {
        let b = entropy_bounds(&EntropyBoundInputs {
            eta_s: 0.6,
            h_s: 0.5,
            w_ms: 0.5,
            eta_lb: 0.3,
            eta_ub: 0.3,
            l_size: 2,
            complement_size: 1,
            zeta_selected_mass: 0.6,
            complement_support: None,
        })
        .unwrap();
        assert_eq!(b.gamma, 0.0);
        assert_relative_eq!(b.ub, 0.5, epsilon = 1e-12);
        assert_relative_eq!(b.lb, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_lower_bound_is_uninformative() {
        let inputs = EntropyBoundInputs {
            eta_s: 0.0,
            h_s: 0.0,
            w_ms: 0.5,
            eta_lb: 0.0,
            eta_ub: 1.0,
            l_size: 3,
            complement_size: 2,
            zeta_selected_mass: 0.0,
            complement_support: None,
        };
        assert_eq!(entropy_bounds(&inputs).unwrap_err(), BoundError::UninformativeSelection);
        let e = entropy_enclosure(&inputs).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.lb, 0.0);
        assert_relative_eq!(e.ub, 6f64.ln());
    }

    #[test]
    fn refine_shared_example_to_full_set() {
        let (t, w) = shared();
        let mut cache = BoundCache::from_table(&t, &w, 1.0);
        let first = cache.add(0, &t.column(0).collect::<Vec<_>>()).unwrap();
        assert_relative_eq!(first.likelihood.lb, 0.3, epsilon = 1e-15);
        assert_relative_eq!(first.likelihood.ub, 1.3, epsilon = 1e-15);
        let full = refine(&mut cache, 1, &t.column(1).collect::<Vec<_>>()).unwrap();
        assert_relative_eq!(full.likelihood.lb, 0.5, epsilon = 1e-15);
        assert_relative_eq!(full.likelihood.ub, 0.5, epsilon = 1e-15);
        assert_relative_eq!(marginal_likelihood(&w, &t).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(cache.add(1, &[0.0, 0.0]).unwrap_err(), BoundError::AlreadySelected(1));
    }

    #[test]
    fn adding_a_zero_weight_component_changes_nothing() {
        let t = ZetaTable::from_rows(&[vec![0.4, 0.1, 0.9], vec![0.2, 0.3, 0.5]]).unwrap();
        let w = [0.5, 0.5, 0.0];
        let mut cache = BoundCache::from_table(&t, &w, 1.0);
        let before = cache.add(0, &t.column(0).collect::<Vec<_>>()).unwrap();
        let after = cache.add(2, &t.column(2).collect::<Vec<_>>()).unwrap();
        assert_eq!(before.likelihood, after.likelihood);
        assert_relative_eq!(before.entropy.lb, after.entropy.lb, epsilon = 1e-15);
        assert_relative_eq!(before.entropy.ub, after.entropy.ub, epsilon = 1e-15);
    }

    #[test]
    fn interval_helpers() {
        assert!(BoundInterval::new(1.0, 0.0).is_err());
        let a = BoundInterval::new(0.0, 1.0).unwrap();
        let b = BoundInterval::new(1.0, 2.0).unwrap();
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&BoundInterval::point(1.5)));
        assert!(a.contains(1.0 + 1e-12, 1e-9));
        assert!(!a.contains(1.1, 1e-9));
    }
}
