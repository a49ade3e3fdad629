//! Robust objectives and their gradients.
//!
//! Each variant combines the per-component worst-case probabilities from
//! [`crate::worst_case`]:
//!
//! * nominal mixture: `sum_k p_k f_k(x)`
//! * Gaussian mixture: `1 - sum_k p_k Phi(g_k(x))`
//! * weight-robust: `sup { sum_k q_k f_k(x) : D_phi(q || p) <= budget }`, evaluated
//!   through its two-variable convex dual
//! * worst component: `max_k f_k(x)`

use crate::error::{Error, Result};
use crate::model::{Divergence, Family, MixtureBelief, Mode, RecourseProblem, Vector};
use crate::normal;
use crate::worst_case::{self, Abc};

/// Objective value, gradient and per-component breakdown at one action.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vector,
    /// Worst-case probability of each component.
    pub component_values: Vec<f64>,
    /// Optimal `(lambda, eta)` of the weight dual, for weight-robust modes.
    pub inner_dual: Option<(f64, f64)>,
    /// Effective component weights that produced `gradient`.
    pub weights: Vec<f64>,
}

/// Per-component probability and its gradient in `x`.
#[derive(Debug, Clone)]
struct ComponentTerm {
    value: f64,
    gradient: Vector,
}

fn component_terms(x: &Vector, belief: &MixtureBelief, family: Family) -> Result<Vec<ComponentTerm>> {
    if x.len() != belief.dim() {
        return Err(Error::DimensionMismatch {
            what: "action vs belief".into(),
            expected: belief.dim(),
            got: x.len(),
        });
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::ZeroAction);
    }
    belief
        .components()
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            let t = worst_case::abc(x, comp);
            if t.slack() >= 0.0 {
                return Err(Error::InfeasibleMargin {
                    component: k,
                    slack: t.slack(),
                });
            }
            let (value, [da, db, dc]) = match family {
                Family::Moment => (
                    worst_case::prob_nonparametric_abc(&t),
                    worst_case::prob_nonparametric_partials(&t),
                ),
                Family::Gaussian => {
                    let g = worst_case::gaussian_margin_abc(&t);
                    let dg = worst_case::gaussian_margin_partials(&t);
                    let scale = -normal::pdf(g);
                    (normal::sf(g), [scale * dg[0], scale * dg[1], scale * dg[2]])
                }
            };
            Ok(ComponentTerm {
                value,
                gradient: chain_to_x(x, norm, &t, comp, da, db, dc),
            })
        })
        .collect()
}

/// `da * (-mean) + db * cov x / b + dc * radius x / |x|`.
fn chain_to_x(
    x: &Vector,
    norm: f64,
    t: &Abc,
    comp: &crate::model::ComponentMoments,
    da: f64,
    db: f64,
    dc: f64,
) -> Vector {
    let mut g = comp.mean() * (-da);
    if t.b > 0.0 {
        g += (comp.covariance() * x) * (db / t.b);
    }
    g += x * (dc * comp.radius() / norm);
    g
}

fn weighted(terms: &[ComponentTerm], weights: &[f64], d: usize) -> (f64, Vector) {
    let mut value = 0.0;
    let mut gradient = Vector::zeros(d);
    for (term, &w) in terms.iter().zip(weights) {
        value += w * term.value;
        gradient += &term.gradient * w;
    }
    (value, gradient)
}

/// `sum_k p_k f_k(x)` with the moment-ball probabilities.
pub fn eval_nonparametric(x: &Vector, belief: &MixtureBelief) -> Result<ObjectiveEval> {
    eval_nominal(x, belief, Family::Moment)
}

/// `1 - sum_k p_k Phi(g_k(x))` with the Gaussian-ball probabilities.
pub fn eval_gaussian(x: &Vector, belief: &MixtureBelief) -> Result<ObjectiveEval> {
    eval_nominal(x, belief, Family::Gaussian)
}

fn eval_nominal(x: &Vector, belief: &MixtureBelief, family: Family) -> Result<ObjectiveEval> {
    let terms = component_terms(x, belief, family)?;
    let (value, gradient) = weighted(&terms, belief.weights(), x.len());
    Ok(ObjectiveEval {
        value: value.clamp(0.0, 1.0),
        gradient,
        component_values: terms.iter().map(|t| t.value).collect(),
        inner_dual: None,
        weights: belief.weights().to_vec(),
    })
}

/// Worst mixture over a φ-divergence ball of radius `weight_budget` around
/// the nominal weights. The gradient follows the envelope theorem at the
/// recovered worst-case weights.
pub fn eval_weight_robust(
    x: &Vector,
    belief: &MixtureBelief,
    weight_budget: f64,
    divergence: Divergence,
    family: Family,
) -> Result<ObjectiveEval> {
    let terms = component_terms(x, belief, family)?;
    let f: Vec<f64> = terms.iter().map(|t| t.value).collect();
    let dual = solve_weight_dual(&f, belief.weights(), weight_budget, divergence)?;
    let (_, gradient) = weighted(&terms, &dual.weights, x.len());
    Ok(ObjectiveEval {
        value: dual.value.clamp(0.0, 1.0),
        gradient,
        component_values: f,
        inner_dual: Some((dual.lambda, dual.eta)),
        weights: dual.weights,
    })
}

/// `max_k f_k(x)`; ties go to the lowest index. Does not depend on the weights.
pub fn eval_worst_component(x: &Vector, belief: &MixtureBelief, family: Family) -> Result<ObjectiveEval> {
    let terms = component_terms(x, belief, family)?;
    let mut best = 0;
    for (k, t) in terms.iter().enumerate() {
        if t.value > terms[best].value {
            best = k;
        }
    }
    let mut weights = vec![0.0; terms.len()];
    weights[best] = 1.0;
    Ok(ObjectiveEval {
        value: terms[best].value,
        gradient: terms[best].gradient.clone(),
        component_values: terms.iter().map(|t| t.value).collect(),
        inner_dual: None,
        weights,
    })
}

/// Dispatches on `mode`.
pub fn eval_mode(
    x: &Vector,
    belief: &MixtureBelief,
    mode: Mode,
    weight_budget: f64,
    divergence: Divergence,
) -> Result<ObjectiveEval> {
    match mode {
        Mode::Nonparametric => eval_nonparametric(x, belief),
        Mode::Gaussian => eval_gaussian(x, belief),
        Mode::WeightRobust | Mode::GaussianWeightRobust => {
            eval_weight_robust(x, belief, weight_budget, divergence, mode.family())
        }
        Mode::WorstComponent | Mode::GaussianWorstComponent => eval_worst_component(x, belief, mode.family()),
    }
}

/// Objective of a problem at `x`.
pub fn eval_problem(x: &Vector, problem: &RecourseProblem) -> Result<ObjectiveEval> {
    eval_mode(
        x,
        &problem.belief,
        problem.mode,
        problem.weight_budget,
        problem.divergence,
    )
}

/// Convex conjugate `phi*(s) = sup_{t >= 0} (t s - phi(t))`.
///
/// KL uses `phi(t) = t log t - t + 1`, chi-square uses `phi(t) = (t - 1)^2`.
pub fn phi_conjugate(divergence: Divergence, s: f64) -> f64 {
    match divergence {
        Divergence::Kl => s.exp_m1(),
        Divergence::Chi2 => {
            if s >= -2.0 {
                s + 0.25 * s * s
            } else {
                -1.0
            }
        }
    }
}

/// Derivative of [`phi_conjugate`]; equals the maximising `t`.
fn phi_conjugate_prime(divergence: Divergence, s: f64) -> f64 {
    match divergence {
        Divergence::Kl => s.exp(),
        Divergence::Chi2 => (1.0 + 0.5 * s).max(0.0),
    }
}

fn phi_conjugate_second(divergence: Divergence, s: f64) -> f64 {
    match divergence {
        Divergence::Kl => s.exp(),
        Divergence::Chi2 => {
            if s > -2.0 {
                0.5
            } else {
                0.0
            }
        }
    }
}

/// Solution of the weight dual `min_{lambda >= 0, eta} eta + eps lambda + lambda sum p phi*((f - eta)/lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDual {
    pub value: f64,
    /// `0` when the optimum is the `lambda -> 0` limit, `inf` when the budget is zero.
    pub lambda: f64,
    pub eta: f64,
    /// Worst-case mixture weights.
    pub weights: Vec<f64>,
}

/// Starting point of the inner dual iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualStart {
    pub log10_lambda: f64,
    pub eta: Option<f64>,
}

impl Default for DualStart {
    fn default() -> Self {
        Self {
            log10_lambda: -2.0,
            eta: None,
        }
    }
}

const LOG10_LAMBDA_RANGE: (f64, f64) = (-8.0, 4.0);
const GOLDEN_TOL: f64 = 1e-10;

pub fn solve_weight_dual(f: &[f64], p_hat: &[f64], budget: f64, divergence: Divergence) -> Result<WeightDual> {
    solve_weight_dual_from(f, p_hat, budget, divergence, DualStart::default())
}

pub fn solve_weight_dual_from(
    f: &[f64],
    p_hat: &[f64],
    budget: f64,
    divergence: Divergence,
    start: DualStart,
) -> Result<WeightDual> {
    if f.len() != p_hat.len() || f.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "weight dual".into(),
            expected: p_hat.len(),
            got: f.len(),
        });
    }
    if !(budget >= 0.0) {
        return Err(Error::BadBudget(format!("weight_budget must be >= 0, got {budget}")));
    }
    if budget == 0.0 {
        let value = f.iter().zip(p_hat).map(|(a, b)| a * b).sum();
        return Ok(WeightDual {
            value,
            lambda: f64::INFINITY,
            eta: value,
            weights: p_hat.to_vec(),
        });
    }

    // Components without nominal mass cannot receive mass either.
    let support: Vec<usize> = (0..f.len()).filter(|&k| p_hat[k] > 0.0).collect();
    let fs: Vec<f64> = support.iter().map(|&k| f[k]).collect();
    let ps: Vec<f64> = support.iter().map(|&k| p_hat[k]).collect();

    // The lambda -> 0 limit is the largest supported value.
    let (mut top, mut top_val) = (support[0], f[support[0]]);
    for &k in &support {
        if f[k] > top_val {
            top = k;
            top_val = f[k];
        }
    }

    let inner = InnerProblem {
        f: &fs,
        p: &ps,
        budget,
        divergence,
    };
    let mut eta_guess = start.eta;
    let mut eval = |u: f64| -> (f64, f64) {
        let lambda = 10f64.powf(u);
        let eta = inner.argmin_eta(lambda, eta_guess);
        eta_guess = Some(eta);
        (inner.value(lambda, eta), eta)
    };

    let (lo, hi) = LOG10_LAMBDA_RANGE;
    let (mut a, mut b) = bracket(&mut eval, start.log10_lambda.clamp(lo, hi), lo, hi);
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = eval(c).0;
    let mut fd = eval(d).0;
    while (b - a).abs() > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = eval(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = eval(d).0;
        }
    }
    let u = 0.5 * (a + b);
    let (value, eta) = eval(u);
    if !value.is_finite() || !eta.is_finite() {
        return Err(Error::DualSolveFailed(format!(
            "non-finite dual value {value} at log10(lambda) = {u}"
        )));
    }

    let mut weights = vec![0.0; f.len()];
    if top_val <= value {
        weights[top] = 1.0;
        return Ok(WeightDual {
            value: top_val,
            lambda: 0.0,
            eta: top_val,
            weights,
        });
    }
    let lambda = 10f64.powf(u);
    let mut total = 0.0;
    for (&k, (&fk, &pk)) in support.iter().zip(fs.iter().zip(&ps)) {
        let w = pk * phi_conjugate_prime(divergence, (fk - eta) / lambda);
        weights[k] = w;
        total += w;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DualSolveFailed(format!(
            "could not recover weights (mass {total})"
        )));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(WeightDual {
        value,
        lambda,
        eta,
        weights,
    })
}

/// Expands from `u0` in the descending direction until the value rises
/// again or the range ends; returns an interval containing the minimiser.
fn bracket(eval: &mut impl FnMut(f64) -> (f64, f64), u0: f64, lo: f64, hi: f64) -> (f64, f64) {
    let step0 = 0.25;
    let f0 = eval(u0).0;
    let right = (u0 + step0).min(hi);
    let fr = eval(right).0;
    let dir = if fr < f0 { 1.0 } else { -1.0 };
    let (mut prev, mut cur, mut f_cur) = if dir > 0.0 { (u0, right, fr) } else { (right, u0, f0) };
    let mut step = step0;
    loop {
        let next = (cur + dir * step).clamp(lo, hi);
        if next == cur {
            return if dir > 0.0 {
                (prev.min(cur), hi)
            } else {
                (lo, prev.max(cur))
            };
        }
        let f_next = eval(next).0;
        if f_next > f_cur {
            return if dir > 0.0 { (prev, next) } else { (next, prev) };
        }
        prev = cur;
        cur = next;
        f_cur = f_next;
        step *= 1.6;
    }
}

struct InnerProblem<'a> {
    f: &'a [f64],
    p: &'a [f64],
    budget: f64,
    divergence: Divergence,
}

impl InnerProblem<'_> {
    fn value(&self, lambda: f64, eta: f64) -> f64 {
        let sum: f64 = self
            .f
            .iter()
            .zip(self.p)
            .map(|(&fk, &pk)| pk * phi_conjugate(self.divergence, (fk - eta) / lambda))
            .sum();
        eta + self.budget * lambda + lambda * sum
    }

    /// Safeguarded Newton on the convex 1-D problem in `eta`. The minimiser
    /// always lies in `[min f, max f]`.
    fn argmin_eta(&self, lambda: f64, guess: Option<f64>) -> f64 {
        let mut lo = self.f.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 {
            return lo;
        }
        if self.divergence == Divergence::Kl {
            // eta = lambda log sum p exp(f / lambda), shifted by max f
            let sum: f64 = self
                .f
                .iter()
                .zip(self.p)
                .map(|(&fk, &pk)| pk * ((fk - hi) / lambda).exp())
                .sum();
            return (hi + lambda * sum.ln()).clamp(lo, hi);
        }
        let mut eta = guess.unwrap_or(0.5 * (lo + hi)).clamp(lo, hi);
        for _ in 0..200 {
            let (mut d1, mut d2) = (1.0, 0.0);
            for (&fk, &pk) in self.f.iter().zip(self.p) {
                let s = (fk - eta) / lambda;
                d1 -= pk * phi_conjugate_prime(self.divergence, s);
                d2 += pk * phi_conjugate_second(self.divergence, s) / lambda;
            }
            if d1 == 0.0 {
                return eta;
            }
            if d1 < 0.0 {
                lo = eta;
            } else {
                hi = eta;
            }
            if hi - lo <= 1e-15 * (1.0 + eta.abs()) {
                break;
            }
            let newton = eta - d1 / d2;
            eta = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        eta
    }
}
