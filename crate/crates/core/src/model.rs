//! Domain types shared by every stage of the pipeline.
//!
//! Feature vectors carry a trailing constant `1` so that classifier biases live
//! inside the parameter vector: a classifier `theta` accepts `x` iff
//! `theta . x >= 0`. The bias coordinate is always immutable.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Absolute asymmetry tolerated in a covariance before it is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A point in covariate space with the constant bias coordinate appended.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vector);

impl FeatureVector {
    /// Wraps a full vector whose last coordinate must be exactly `1`.
    pub fn new(values: Vector) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidFeatureVector(format!(
                "dimension {} < 2 (need one feature plus the bias coordinate)",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeatureVector("non-finite entry".into()));
        }
        if values[values.len() - 1] != 1.0 {
            return Err(Error::InvalidFeatureVector(format!(
                "bias coordinate is {}, expected 1",
                values[values.len() - 1]
            )));
        }
        Ok(Self(values))
    }

    /// Builds a feature vector from raw features, appending the bias coordinate.
    pub fn from_features(features: &[f64]) -> Result<Self> {
        let mut v = Vec::with_capacity(features.len() + 1);
        v.extend_from_slice(features);
        v.push(1.0);
        Self::new(Vector::from_vec(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Index of the bias coordinate.
    pub fn bias_index(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn into_vector(self) -> Vector {
        self.0
    }

    /// The real features, without the bias coordinate.
    pub fn features(&self) -> &[f64] {
        &self.0.as_slice()[..self.0.len() - 1]
    }
}

/// Parameter vector `theta` of a linear classifier (bias internalised).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    theta: Vector,
}

impl LinearClassifier {
    pub fn new(theta: Vector) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidClassifier("non-finite parameter".into()));
        }
        if theta.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidClassifier("all-zero parameter".into()));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &Vector {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn score(&self, x: &Vector) -> f64 {
        self.theta.dot(x)
    }

    /// `true` iff the classifier outputs the favourable label (`theta . x >= 0`).
    pub fn accepts(&self, x: &Vector) -> bool {
        self.score(x) >= 0.0
    }
}

/// Nominal moments `(mean, covariance)` of one mixture component and the
/// radius of its moment ambiguity ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMoments {
    mean: Vector,
    covariance: Matrix,
    radius: f64,
}

impl ComponentMoments {
    /// Validates and stores a component. The covariance is replaced by its
    /// symmetric part after the asymmetry check.
    pub fn new(mean: Vector, covariance: Matrix, radius: f64) -> Result<Self> {
        Self::checked(mean, covariance, radius, 0)
    }

    fn checked(mean: Vector, covariance: Matrix, radius: f64, component: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: format!("covariance of component {component}"),
                expected: d,
                got: covariance.nrows().max(covariance.ncols()),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidClassifier(format!(
                "component {component} has non-finite moments"
            )));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::BadBudget(format!(
                "radius of component {component} must be finite and >= 0, got {radius}"
            )));
        }
        let asymmetry = (&covariance - covariance.transpose()).amax();
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { component, asymmetry });
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        let min_eigenvalue = SymmetricEigen::new(covariance.clone()).eigenvalues.min();
        if !(min_eigenvalue > 0.0) {
            return Err(Error::NotPositiveDefinite {
                component,
                min_eigenvalue,
            });
        }
        Ok(Self {
            mean,
            covariance,
            radius,
        })
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.mean.clone(), self.covariance.clone(), radius)
    }
}

/// `K` components with nominal mixture weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureBelief {
    components: Vec<ComponentMoments>,
    weights: Vec<f64>,
}

impl MixtureBelief {
    pub fn new(components: Vec<ComponentMoments>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidWeights("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                what: "mixture weights".into(),
                expected: components.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!(
                "negative or non-finite weight in {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, expected 1")));
        }
        let d = components[0].dim();
        let components = components
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                if c.dim() != d {
                    return Err(Error::DimensionMismatch {
                        what: format!("mean of component {k}"),
                        expected: d,
                        got: c.dim(),
                    });
                }
                ComponentMoments::checked(c.mean, c.covariance, c.radius, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components, weights })
    }

    /// Single component with unit weight.
    pub fn single(component: ComponentMoments) -> Self {
        Self {
            components: vec![component],
            weights: vec![1.0],
        }
    }

    pub fn components(&self) -> &[ComponentMoments] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Same belief with new per-component radii.
    pub fn with_radii(&self, radii: &[f64]) -> Result<Self> {
        if radii.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "radii".into(),
                expected: self.len(),
                got: radii.len(),
            });
        }
        let components = self
            .components
            .iter()
            .zip(radii)
            .map(|(c, &r)| c.with_radius(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components, self.weights.clone())
    }

    /// Same components with different mixture weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.components.clone(), weights)
    }

    /// Weighted mean of the component means, as a classifier.
    pub fn mean_classifier(&self) -> Result<LinearClassifier> {
        let mut theta = Vector::zeros(self.dim());
        for (c, w) in self.components.iter().zip(&self.weights) {
            theta += c.mean() * *w;
        }
        LinearClassifier::new(theta)
    }
}

/// Which coordinates of a recourse may move and how.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionabilitySpec {
    /// Coordinates pinned to their value in `x0`. The bias index is always added.
    #[serde(default)]
    pub immutable: BTreeSet<usize>,
    /// Coordinates that may only increase relative to `x0`.
    #[serde(default)]
    pub non_decreasing: BTreeSet<usize>,
    /// Optional per-coordinate `[lo, hi]` bounds.
    #[serde(default)]
    pub bounds: BTreeMap<usize, (f64, f64)>,
}

impl ActionabilitySpec {
    /// Per-coordinate admissible interval around `x0`, with the bias pinned.
    ///
    /// Immutable wins over non-decreasing when a coordinate is in both sets.
    pub fn intervals(&self, x0: &Vector) -> Result<Vec<(f64, f64)>> {
        let d = x0.len();
        for &i in self
            .immutable
            .iter()
            .chain(&self.non_decreasing)
            .chain(self.bounds.keys())
        {
            if i >= d {
                return Err(Error::InvalidActionability(format!("index {i} out of range 0..{d}")));
            }
        }
        let mut out = Vec::with_capacity(d);
        for i in 0..d {
            let (mut lo, mut hi) = self
                .bounds
                .get(&i)
                .copied()
                .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::InvalidActionability(format!("empty bounds [{lo}, {hi}] at {i}")));
            }
            if i == d - 1 || self.immutable.contains(&i) {
                if x0[i] < lo || x0[i] > hi {
                    return Err(Error::InvalidActionability(format!(
                        "immutable coordinate {i} = {} lies outside [{lo}, {hi}]",
                        x0[i]
                    )));
                }
                lo = x0[i];
                hi = x0[i];
            } else if self.non_decreasing.contains(&i) {
                lo = lo.max(x0[i]);
                if lo > hi {
                    return Err(Error::InvalidActionability(format!(
                        "non-decreasing coordinate {i} = {} exceeds upper bound {hi}",
                        x0[i]
                    )));
                }
            }
            out.push((lo, hi));
        }
        Ok(out)
    }
}

/// Cost function `c(x, x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    #[default]
    L1,
    L2,
}

impl CostKind {
    pub fn eval(self, x: &Vector, x0: &Vector) -> f64 {
        match self {
            CostKind::L1 => (x - x0).lp_norm(1),
            CostKind::L2 => (x - x0).norm(),
        }
    }
}

/// Ambiguity-set family used for the component worst-case probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Every distribution with moments inside the Gelbrich ball.
    Moment,
    /// Gaussian distributions with moments inside the Gelbrich ball.
    Gaussian,
}

/// Which robust objective the solver minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Nonparametric,
    Gaussian,
    WeightRobust,
    WorstComponent,
    GaussianWeightRobust,
    GaussianWorstComponent,
}

impl Mode {
    pub fn family(self) -> Family {
        match self {
            Mode::Nonparametric | Mode::WeightRobust | Mode::WorstComponent => Family::Moment,
            Mode::Gaussian | Mode::GaussianWeightRobust | Mode::GaussianWorstComponent => Family::Gaussian,
        }
    }
}

/// φ-divergence used for the mixture-weight uncertainty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    #[default]
    Kl,
    Chi2,
}

/// One recourse instance together with its belief and constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseProblem {
    pub x0: FeatureVector,
    pub belief: MixtureBelief,
    /// Cost budget.
    pub delta: f64,
    /// Strictness margin of the robust constraints.
    pub margin: f64,
    pub cost: CostKind,
    pub actionability: ActionabilitySpec,
    pub mode: Mode,
    /// Radius of the φ-divergence ball around the mixture weights.
    pub weight_budget: f64,
    pub divergence: Divergence,
}

pub const DEFAULT_MARGIN: f64 = 1e-3;

impl RecourseProblem {
    /// Problem with default margin, L1 cost, no actionability constraints and
    /// the nonparametric mode.
    pub fn new(x0: FeatureVector, belief: MixtureBelief, delta: f64) -> Self {
        Self {
            x0,
            belief,
            delta,
            margin: DEFAULT_MARGIN,
            cost: CostKind::L1,
            actionability: ActionabilitySpec::default(),
            mode: Mode::Nonparametric,
            weight_budget: 0.0,
            divergence: Divergence::Kl,
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }
}

/// Checks every invariant of a problem and returns it unchanged.
pub fn validate_problem(problem: RecourseProblem) -> Result<RecourseProblem> {
    let d = problem.x0.dim();
    if problem.belief.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "belief vs instance".into(),
            expected: d,
            got: problem.belief.dim(),
        });
    }
    // Re-run the component and weight checks so hand-assembled beliefs are covered.
    MixtureBelief::new(problem.belief.components.clone(), problem.belief.weights.clone())?;
    if !(problem.delta >= 0.0) || !problem.delta.is_finite() {
        return Err(Error::BadBudget(format!(
            "delta must be finite and >= 0, got {}",
            problem.delta
        )));
    }
    if !(problem.margin > 0.0) || !problem.margin.is_finite() {
        return Err(Error::BadBudget(format!("margin must be > 0, got {}", problem.margin)));
    }
    if !(problem.weight_budget >= 0.0) || !problem.weight_budget.is_finite() {
        return Err(Error::BadBudget(format!(
            "weight_budget must be finite and >= 0, got {}",
            problem.weight_budget
        )));
    }
    problem.actionability.intervals(problem.x0.as_vector())?;
    Ok(problem)
}

/// Output of a recourse solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseResult {
    pub action: FeatureVector,
    pub objective: f64,
    /// Worst-case probability of the unfavourable outcome per component.
    pub component_probs: Vec<f64>,
    pub iterations: usize,
    /// Projected-gradient stationarity measure at `action`.
    pub stationarity: f64,
    pub delta_min: f64,
    pub converged: bool,
}
