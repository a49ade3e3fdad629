//! The feasible action set: a cost ball around `x0`, one robust margin
//! constraint `rho_k |x| - theta_k . x <= -margin` per component, and the
//! actionability box.
//!
//! Projections are Euclidean and computed with Dykstra's algorithm cycling
//! over the cost ball, the margin constraints and the box (in that order, so
//! the returned point satisfies the box exactly). When Dykstra cannot certify
//! a result the same projection is solved as a second-order cone program.

mod ball;
mod cone;
mod conic;

pub use ball::project_cost_ball;
pub use cone::{cone_violation, project_cone};

use crate::error::{Error, Result};
use crate::model::{CostKind, RecourseProblem, Vector};

/// One robust margin constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginConstraint {
    pub theta: Vector,
    pub rho: f64,
}

/// Tuning of the Dykstra iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Retry with the conic solver when Dykstra fails.
    pub conic_fallback: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            conic_fallback: true,
        }
    }
}

impl ProjectionOptions {
    /// Dykstra only, no fallback.
    pub fn dykstra_only() -> Self {
        Self {
            conic_fallback: false,
            ..Self::default()
        }
    }
}

/// Bisection tolerance of [`delta_min`].
pub const DELTA_MIN_TOL: f64 = 1e-6;
/// Upper end of the bracket search in [`delta_min`].
pub const DELTA_MIN_CAP: f64 = 1024.0;

/// Violations above this after `max_iter` cycles are reported as an empty set.
const EMPTY_SET_VIOLATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    x0: Vector,
    delta: f64,
    cost: CostKind,
    margin: f64,
    constraints: Vec<MarginConstraint>,
    intervals: Vec<(f64, f64)>,
}

impl FeasibleSet {
    /// General constructor; `intervals` gives `[lo, hi]` for every coordinate.
    pub fn new(
        x0: Vector,
        delta: f64,
        cost: CostKind,
        margin: f64,
        constraints: Vec<MarginConstraint>,
        intervals: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let d = x0.len();
        if intervals.len() != d {
            return Err(Error::DimensionMismatch {
                what: "actionability intervals".into(),
                expected: d,
                got: intervals.len(),
            });
        }
        for (k, c) in constraints.iter().enumerate() {
            if c.theta.len() != d {
                return Err(Error::DimensionMismatch {
                    what: format!("margin constraint {k}"),
                    expected: d,
                    got: c.theta.len(),
                });
            }
            if c.theta.norm() == 0.0 {
                return Err(Error::DegenerateDirection(format!(
                    "constraint {k} has a zero direction"
                )));
            }
        }
        if !(margin > 0.0) {
            return Err(Error::BadBudget(format!("margin must be > 0, got {margin}")));
        }
        if !(delta >= 0.0) {
            return Err(Error::BadBudget(format!("delta must be >= 0, got {delta}")));
        }
        Ok(Self {
            x0,
            delta,
            cost,
            margin,
            constraints,
            intervals,
        })
    }

    /// Feasible set of a validated problem; the bias coordinate is pinned.
    pub fn from_problem(problem: &RecourseProblem) -> Result<Self> {
        let x0 = problem.x0.as_vector().clone();
        let intervals = problem.actionability.intervals(&x0)?;
        let constraints = problem
            .belief
            .components()
            .iter()
            .map(|c| MarginConstraint {
                theta: c.mean().clone(),
                rho: c.radius(),
            })
            .collect();
        Self::new(x0, problem.delta, problem.cost, problem.margin, constraints, intervals)
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn cost(&self) -> CostKind {
        self.cost
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn constraints(&self) -> &[MarginConstraint] {
        &self.constraints
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    /// Largest violation over the cost, margin and box constraints (0 if feasible).
    pub fn max_violation(&self, x: &Vector) -> f64 {
        let mut worst = (self.cost.eval(x, &self.x0) - self.delta).max(0.0);
        for c in &self.constraints {
            worst = worst.max(cone_violation(x, &c.theta, c.rho, self.margin));
        }
        for (xi, &(lo, hi)) in x.iter().zip(&self.intervals) {
            worst = worst.max(lo - xi).max(xi - hi);
        }
        worst.max(0.0)
    }

    pub fn is_feasible(&self, x: &Vector, tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    fn project_box(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter().zip(&self.intervals).map(|(&xi, &(lo, hi))| xi.clamp(lo, hi)),
        )
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, xp: &Vector, opts: ProjectionOptions) -> Result<Vector> {
        let err = match self.dykstra(xp, opts) {
            Ok(x) => return Ok(x),
            Err(e @ (Error::EmptyFeasibleSet { .. } | Error::MaxIterExceeded { .. })) if opts.conic_fallback => e,
            Err(e) => return Err(e),
        };
        match conic::project_conic(self, xp) {
            conic::ConicOutcome::Solved(x) => {
                let x = self.project_box(&x);
                if self.is_feasible(&x, 10.0 * opts.tol) {
                    Ok(x)
                } else {
                    Err(err)
                }
            }
            conic::ConicOutcome::Infeasible => Err(Error::EmptyFeasibleSet {
                violation: self.max_violation(xp).max(EMPTY_SET_VIOLATION),
            }),
            conic::ConicOutcome::Failed => Err(err),
        }
    }

    /// Dykstra's algorithm alone.
    pub fn dykstra(&self, xp: &Vector, opts: ProjectionOptions) -> Result<Vector> {
        let n_sets = self.constraints.len() + 2;
        let mut x = xp.clone();
        let mut increments = vec![Vector::zeros(x.len()); n_sets];
        for _ in 0..opts.max_iter {
            let prev = x.clone();
            for (i, inc) in increments.iter_mut().enumerate() {
                let shifted = &x + &*inc;
                let y = if i == 0 {
                    project_cost_ball(&shifted, &self.x0, self.delta, self.cost)
                } else if i <= self.constraints.len() {
                    let c = &self.constraints[i - 1];
                    project_cone(&shifted, &c.theta, c.rho, self.margin)?
                } else {
                    self.project_box(&shifted)
                };
                *inc = shifted - &y;
                x = y;
            }
            if (&x - &prev).norm() < opts.tol && self.is_feasible(&x, 10.0 * opts.tol) {
                return Ok(x);
            }
        }
        let violation = self.max_violation(&x);
        if violation > EMPTY_SET_VIOLATION {
            Err(Error::EmptyFeasibleSet { violation })
        } else {
            Err(Error::MaxIterExceeded {
                iterations: opts.max_iter,
                violation,
            })
        }
    }
}

/// Projection with default options.
pub fn project_feasible(xp: &Vector, set: &FeasibleSet) -> Result<Vector> {
    set.project(xp, ProjectionOptions::default())
}

/// Smallest budget for which the set is nonempty, by bisection on the budget:
/// a budget counts as feasible when projecting `x0` succeeds. The budget of
/// `set` itself is ignored. Returns the feasible end of the final bracket.
pub fn delta_min(set: &FeasibleSet) -> Result<f64> {
    delta_min_with(set, ProjectionOptions::default())
}

pub fn delta_min_with(set: &FeasibleSet, opts: ProjectionOptions) -> Result<f64> {
    if set.constraints.is_empty() {
        return Err(Error::InvalidConfig(
            "delta_min needs at least one margin constraint".into(),
        ));
    }
    if set.intervals.iter().any(|&(lo, hi)| lo > hi) {
        return Err(Error::Unattainable { cap: DELTA_MIN_CAP });
    }
    let feasible = |delta: f64| match set.with_delta(delta).project(&set.x0, opts) {
        Ok(_) => Ok(true),
        Err(Error::EmptyFeasibleSet { .. } | Error::MaxIterExceeded { .. }) => Ok(false),
        Err(e) => Err(e),
    };
    if feasible(0.0)? {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > DELTA_MIN_CAP {
            return Err(Error::Unattainable { cap: DELTA_MIN_CAP });
        }
    }
    while hi - lo > DELTA_MIN_TOL {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
