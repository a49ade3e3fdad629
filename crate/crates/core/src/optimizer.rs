//! Projected gradient descent with an Armijo-type backtracking line search on
//! the projected arc, and the projected-gradient stationarity measure
//! `|x - P(x - zeta grad f(x))| / zeta`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::feasibility::{delta_min, FeasibleSet, ProjectionOptions, DELTA_MIN_TOL};
use crate::model::{validate_problem, FeatureVector, RecourseProblem, RecourseResult, Vector};
use crate::objective::eval_problem;
use crate::worst_case;

/// Trial points whose robust margin slack is above this are rejected.
pub const MARGIN_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Analytic,
    /// Central differences with relative step `h`.
    FiniteDifference {
        h: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Line-search shrink factor in (0, 1).
    pub lambda_ls: f64,
    /// Initial step.
    pub zeta: f64,
    pub max_iter: usize,
    pub station_tol: f64,
    pub max_backtracks: usize,
    /// Number of starts; 1 runs from the projected instance only.
    pub restarts: usize,
    pub seed: u64,
    pub gradient: GradientMode,
    pub projection: ProjectionOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_ls: 0.7,
            zeta: 1.0,
            max_iter: 200,
            station_tol: 1e-4,
            max_backtracks: 50,
            restarts: 3,
            seed: 0,
            gradient: GradientMode::Analytic,
            projection: ProjectionOptions::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ls > 0.0 && self.lambda_ls < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda_ls must be in (0, 1), got {}",
                self.lambda_ls
            )));
        }
        if !(self.zeta > 0.0) || !self.zeta.is_finite() {
            return Err(Error::InvalidConfig(format!("zeta must be > 0, got {}", self.zeta)));
        }
        if !(self.station_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "station_tol must be >= 0, got {}",
                self.station_tol
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        if let GradientMode::FiniteDifference { h } = self.gradient {
            if !(h > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "finite-difference step must be > 0, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// A differentiable objective on the feasible set.
pub trait Objective {
    fn value_and_gradient(&self, x: &Vector) -> Result<(f64, Vector)>;

    fn value(&self, x: &Vector) -> Result<f64> {
        self.value_and_gradient(x).map(|(v, _)| v)
    }

    /// Extra acceptance test for line-search trial points.
    fn admissible(&self, _x: &Vector) -> bool {
        true
    }
}

/// Replaces the gradient of `inner` by central differences.
pub struct FiniteDifference<O> {
    pub inner: O,
    pub h: f64,
}

impl<O: Objective> Objective for FiniteDifference<O> {
    fn value_and_gradient(&self, x: &Vector) -> Result<(f64, Vector)> {
        let value = self.inner.value(x)?;
        let mut grad = Vector::zeros(x.len());
        let mut probe = x.clone();
        for i in 0..x.len() {
            let step = self.h * x[i].abs().max(1.0);
            probe[i] = x[i] + step;
            let up = self.inner.value(&probe)?;
            probe[i] = x[i] - step;
            let down = self.inner.value(&probe)?;
            probe[i] = x[i];
            grad[i] = (up - down) / (2.0 * step);
        }
        Ok((value, grad))
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        self.inner.value(x)
    }

    fn admissible(&self, x: &Vector) -> bool {
        self.inner.admissible(x)
    }
}

/// The robust objective of a recourse problem, dispatched on its mode.
pub struct ProblemObjective<'a>(pub &'a RecourseProblem);

impl Objective for ProblemObjective<'_> {
    fn value_and_gradient(&self, x: &Vector) -> Result<(f64, Vector)> {
        let e = eval_problem(x, self.0)?;
        Ok((e.value, e.gradient))
    }

    fn admissible(&self, x: &Vector) -> bool {
        self.0
            .belief
            .components()
            .iter()
            .all(|c| worst_case::abc(x, c).slack() <= -MARGIN_GUARD)
    }
}

/// One accepted iteration, reported to the observer.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub x: Vector,
    pub value: f64,
    /// Stationarity of the iterate the step was taken from.
    pub stationarity: f64,
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdOutcome {
    pub x: Vector,
    pub value: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
    /// The line search exhausted `max_backtracks`.
    pub stalled: bool,
}

/// `|x - P(x - zeta g)| / zeta`, together with the projected point.
fn stationarity_at(
    x: &Vector,
    g: &Vector,
    set: &FeasibleSet,
    zeta: f64,
    opts: ProjectionOptions,
) -> (f64, Option<Vector>) {
    match set.project(&(x - g * zeta), opts) {
        Ok(p) => ((x - &p).norm() / zeta, Some(p)),
        Err(_) => (f64::INFINITY, None),
    }
}

/// Runs the projected gradient method from `P(start)`.
pub fn projected_gradient<O: Objective>(
    objective: &O,
    set: &FeasibleSet,
    start: &Vector,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<PgdOutcome> {
    config.validate()?;
    let opts = config.projection;
    let mut x = set.project(start, opts)?;
    let (mut f, mut g) = objective.value_and_gradient(&x)?;
    let mut iterations = 0;
    let mut stalled = false;

    let (mut station, mut full_step) = stationarity_at(&x, &g, set, config.zeta, opts);
    while station > config.station_tol && iterations < config.max_iter {
        let mut accepted = None;
        let mut step = config.zeta;
        for i in 0..config.max_backtracks {
            let trial = if i == 0 {
                full_step.take()
            } else {
                set.project(&(&x - &g * step), opts).ok()
            };
            if let Some(y) = trial {
                if objective.admissible(&y) {
                    if let Ok(fy) = objective.value(&y) {
                        let decrease = (&x - &y).norm_squared() / (2.0 * step);
                        if fy <= f - decrease {
                            accepted = Some((y, fy, i));
                            break;
                        }
                    }
                }
            }
            step *= config.lambda_ls;
        }
        let Some((y, fy, backtracks)) = accepted else {
            stalled = true;
            log::debug!(
                "line search stalled after {} backtracks at iteration {iterations}",
                config.max_backtracks
            );
            break;
        };
        iterations += 1;
        observer(&IterationRecord {
            iteration: iterations,
            x: y.clone(),
            value: fy,
            stationarity: station,
            step,
            backtracks,
        });
        x = y;
        (f, g) = objective.value_and_gradient(&x)?;
        (station, full_step) = stationarity_at(&x, &g, set, config.zeta, opts);
    }
    Ok(PgdOutcome {
        converged: station <= config.station_tol,
        x,
        value: f,
        iterations,
        stationarity: station,
        stalled,
    })
}

fn run_pgd(
    objective: &dyn Objective,
    set: &FeasibleSet,
    start: &Vector,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<PgdOutcome> {
    struct Dyn<'a>(&'a dyn Objective);
    impl Objective for Dyn<'_> {
        fn value_and_gradient(&self, x: &Vector) -> Result<(f64, Vector)> {
            self.0.value_and_gradient(x)
        }
        fn value(&self, x: &Vector) -> Result<f64> {
            self.0.value(x)
        }
        fn admissible(&self, x: &Vector) -> bool {
            self.0.admissible(x)
        }
    }
    match config.gradient {
        GradientMode::Analytic => projected_gradient(&Dyn(objective), set, start, config, observer),
        GradientMode::FiniteDifference { h } => projected_gradient(
            &FiniteDifference {
                inner: Dyn(objective),
                h,
            },
            set,
            start,
            config,
            observer,
        ),
    }
}

/// Feasible set and its minimal budget; errors if the budget is too small.
pub fn prepare(problem: &RecourseProblem) -> Result<(FeasibleSet, f64)> {
    let set = FeasibleSet::from_problem(problem)?;
    let dm = delta_min(&set)?;
    if problem.delta < dm - DELTA_MIN_TOL {
        return Err(Error::BudgetTooSmall {
            delta: problem.delta,
            delta_min: dm,
        });
    }
    Ok((set, dm))
}

/// Solves a recourse problem.
pub fn solve(problem: &RecourseProblem, config: &SolverConfig) -> Result<RecourseResult> {
    solve_observed(problem, config, &mut |_| {})
}

/// [`solve`] with a per-iteration callback. Iteration numbers restart at 1 for
/// every start.
pub fn solve_observed(
    problem: &RecourseProblem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RecourseResult> {
    config.validate()?;
    let problem = validate_problem(problem.clone())?;
    let (set, dm) = prepare(&problem)?;
    solve_prepared(&problem, &set, dm, config, observer)
}

/// Solve with a precomputed feasible set and minimal budget.
pub fn solve_prepared(
    problem: &RecourseProblem,
    set: &FeasibleSet,
    delta_min: f64,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<RecourseResult> {
    let objective = ProblemObjective(problem);
    let x0 = problem.x0.as_vector();
    let mut best = run_pgd(&objective, set, x0, config, observer)?;

    if config.restarts > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = problem.delta.max(1e-3) / (x0.len() as f64).sqrt();
        for _ in 1..config.restarts {
            let noise = Vector::from_fn(x0.len(), |_, _| StandardNormal.sample(&mut rng));
            let start = &best.x + noise * scale;
            match run_pgd(&objective, set, &start, config, observer) {
                Ok(run) if run.value < best.value => best = run,
                Ok(_) => {}
                Err(e) => log::debug!("restart failed: {e}"),
            }
        }
    }
    if best.stalled {
        log::warn!("line search stalled; returning best iterate");
    }

    let eval = eval_problem(&best.x, problem)?;
    Ok(RecourseResult {
        action: FeatureVector::new(best.x)?,
        objective: eval.value,
        component_probs: eval.component_values,
        iterations: best.iterations,
        stationarity: best.stationarity,
        delta_min,
        converged: best.converged,
    })
}

/// Stationarity measure of a feasible `x` for the problem's objective.
pub fn stationarity(x: &Vector, problem: &RecourseProblem, config: &SolverConfig) -> Result<f64> {
    let set = FeasibleSet::from_problem(problem)?;
    let (_, g) = match config.gradient {
        GradientMode::Analytic => ProblemObjective(problem).value_and_gradient(x)?,
        GradientMode::FiniteDifference { h } => FiniteDifference {
            inner: ProblemObjective(problem),
            h,
        }
        .value_and_gradient(x)?,
    };
    let p = set.project(&(x - &g * config.zeta), config.projection)?;
    Ok((x - p).norm() / config.zeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::MarginConstraint;
    use crate::model::{ComponentMoments, CostKind, Matrix, MixtureBelief};

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    struct Quadratic(Vector);

    impl Objective for Quadratic {
        fn value_and_gradient(&self, x: &Vector) -> Result<(f64, Vector)> {
            let r = x - &self.0;
            Ok((r.norm_squared(), r * 2.0))
        }
    }

    fn free_set(x0: Vector, delta: f64) -> FeasibleSet {
        let d = x0.len();
        let c = MarginConstraint {
            theta: v(&[1.0, 0.0]),
            rho: 0.0,
        };
        FeasibleSet::new(
            x0,
            delta,
            CostKind::L2,
            0.1,
            vec![c],
            vec![(f64::NEG_INFINITY, f64::INFINITY); d],
        )
        .unwrap()
    }

    #[test]
    fn quadratic_with_interior_minimiser() {
        let target = v(&[1.0, 0.5]);
        let set = free_set(v(&[2.0, 0.0]), 3.0);
        let cfg = SolverConfig {
            restarts: 1,
            station_tol: 1e-10,
            ..SolverConfig::default()
        };
        let out = projected_gradient(&Quadratic(target.clone()), &set, &v(&[2.0, 0.0]), &cfg, &mut |_| {}).unwrap();
        assert!(out.converged);
        assert!((out.x - target).norm() < 1e-6);
    }

    #[test]
    fn quadratic_with_exterior_minimiser_stops_on_boundary() {
        // minimiser (-1, 0) violates x_1 >= 0.1, so the solution is (0.1, 0)
        let set = free_set(v(&[2.0, 0.0]), 5.0);
        let cfg = SolverConfig {
            station_tol: 1e-9,
            ..SolverConfig::default()
        };
        let out = projected_gradient(&Quadratic(v(&[-1.0, 0.0])), &set, &v(&[2.0, 0.0]), &cfg, &mut |_| {}).unwrap();
        assert!((out.x - v(&[0.1, 0.0])).norm() < 1e-6);
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let set = free_set(v(&[2.0, 0.0]), 1.0);
        let x = v(&[2.0, 0.0]);
        let (s, _) = stationarity_at(&x, &Vector::zeros(2), &set, 1.0, ProjectionOptions::default());
        assert_eq!(s, 0.0);
    }

    #[test]
    fn config_is_checked() {
        let bad = SolverConfig {
            lambda_ls: 1.0,
            ..SolverConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = SolverConfig {
            zeta: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn synthetic_problem(rho: f64) -> RecourseProblem {
        let comp = ComponentMoments::new(
            v(&[1.0, 0.5, -0.3]),
            Matrix::from_row_slice(3, 3, &[0.05, 0.01, 0.0, 0.01, 0.04, 0.0, 0.0, 0.0, 0.02]),
            rho,
        )
        .unwrap();
        let x0 = FeatureVector::from_features(&[-0.4, 0.1]).unwrap();
        RecourseProblem::new(x0, MixtureBelief::single(comp), 0.0)
    }

    #[test]
    fn solve_improves_on_the_projected_start() {
        let mut problem = synthetic_problem(0.1);
        let set = FeasibleSet::from_problem(&problem).unwrap();
        let dm = delta_min(&set).unwrap();
        problem.delta = dm + 1.0;
        let cfg = SolverConfig {
            restarts: 1,
            ..SolverConfig::default()
        };
        let mut values = Vec::new();
        let res = solve_observed(&problem, &cfg, &mut |r| values.push(r.value)).unwrap();
        let x = res.action.as_vector();
        let theta = problem.belief.components()[0].mean();
        assert!(-theta.dot(x) + 0.1 * x.norm() <= -problem.margin + 1e-7);
        let start = set
            .with_delta(problem.delta)
            .project(problem.x0.as_vector(), ProjectionOptions::default())
            .unwrap();
        let f0 = eval_problem(&start, &problem).unwrap().value;
        assert!(res.objective < f0);
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(x[2], 1.0);
    }

    #[test]
    fn budget_below_minimum_is_rejected() {
        let mut problem = synthetic_problem(0.1);
        let dm = delta_min(&FeasibleSet::from_problem(&problem).unwrap()).unwrap();
        problem.delta = dm - 0.05;
        assert!(matches!(
            solve(&problem, &SolverConfig::default()),
            Err(Error::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn solve_is_deterministic() {
        let mut problem = synthetic_problem(0.2);
        problem.delta = delta_min(&FeasibleSet::from_problem(&problem).unwrap()).unwrap() + 0.5;
        let cfg = SolverConfig {
            seed: 11,
            ..SolverConfig::default()
        };
        assert_eq!(solve(&problem, &cfg).unwrap(), solve(&problem, &cfg).unwrap());
    }

    #[test]
    fn finite_difference_mode_agrees_with_analytic() {
        let mut problem = synthetic_problem(0.1);
        problem.delta = delta_min(&FeasibleSet::from_problem(&problem).unwrap()).unwrap() + 1.0;
        let base = SolverConfig {
            restarts: 1,
            ..SolverConfig::default()
        };
        let fd = SolverConfig {
            gradient: GradientMode::FiniteDifference { h: 1e-6 },
            ..base
        };
        let a = solve(&problem, &base).unwrap();
        let b = solve(&problem, &fd).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-4);
    }
}
