//! Deterministic fixtures shared by the benchmarks.

use recourse_core::feasibility::{delta_min, FeasibleSet};
use recourse_core::model::{ComponentMoments, FeatureVector, Matrix, MixtureBelief, Mode, RecourseProblem, Vector};

/// `k` components in dimension `d` (bias last), spread around `theta = (1, ..., 1, -1)`.
pub fn belief(d: usize, k: usize, rho: f64) -> MixtureBelief {
    let comps = (0..k)
        .map(|c| {
            let mean = Vector::from_fn(d, |i, _| {
                if i + 1 == d {
                    -1.0
                } else {
                    1.0 + 0.2 * ((c * d + i) as f64).sin()
                }
            });
            let cov = Matrix::from_fn(d, d, |i, j| if i == j { 0.02 } else { 0.002 / (1 + i + j) as f64 });
            ComponentMoments::new(mean, cov, rho).expect("diagonally dominant")
        })
        .collect();
    let w: Vec<f64> = (1..=k).map(|c| c as f64).collect();
    let s: f64 = w.iter().sum();
    MixtureBelief::new(comps, w.into_iter().map(|v| v / s).collect()).expect("valid weights")
}

/// A rejected instance with budget `delta_min + delta_add`.
pub fn problem(d: usize, k: usize, mode: Mode, delta_add: f64) -> RecourseProblem {
    let x0 = FeatureVector::from_features(&vec![-1.0; d - 1]).expect("finite");
    let mut p = RecourseProblem::new(x0, belief(d, k, 0.1), 0.0);
    p.mode = mode;
    let dm = delta_min(&FeasibleSet::from_problem(&p).expect("valid")).expect("attainable");
    p.delta = dm + delta_add;
    p
}
