//! Closed-form worst-case probabilities and worst-case Value-at-Risk over
//! Gelbrich moment balls.
//!
//! Everything is expressed through the triple
//! `a = -mean . x`, `b = sqrt(x' cov x)`, `c = radius * |x|_2`.
//! All three are positively 1-homogeneous in `x`, so the probabilities are
//! invariant to rescaling the action.

use crate::error::{Error, Result};
use crate::model::{ComponentMoments, Vector};
use crate::normal;

/// The `(a, b, c)` constants of one component at a fixed action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abc {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Abc {
    /// `a + c`; the robust constraint holds strictly iff this is negative.
    pub fn slack(&self) -> f64 {
        self.a + self.c
    }

    /// `a^2 + b^2 - c^2` clamped at zero. Analytically positive when `a + c < 0`.
    fn radicand(&self) -> f64 {
        (self.a * self.a + self.b * self.b - self.c * self.c).max(0.0)
    }
}

pub fn abc(x: &Vector, comp: &ComponentMoments) -> Abc {
    let a = -comp.mean().dot(x);
    let b = x.dot(&(comp.covariance() * x)).max(0.0).sqrt();
    let c = comp.radius() * x.norm();
    Abc { a, b, c }
}

fn check_nonzero(x: &Vector) -> Result<()> {
    if x.iter().all(|v| *v == 0.0) {
        Err(Error::ZeroAction)
    } else {
        Ok(())
    }
}

/// Worst-case VaR of `-theta . x` at level `beta` over the moment ball.
pub fn var_nonparametric_abc(t: &Abc, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BetaOutOfRange { beta, range: "(0, 1)" });
    }
    Ok(t.a + ((1.0 - beta) / beta).sqrt() * t.b + t.c / beta.sqrt())
}

pub fn wc_var_nonparametric(x: &Vector, comp: &ComponentMoments, beta: f64) -> Result<f64> {
    var_nonparametric_abc(&abc(x, comp), beta)
}

/// Worst-case probability of `theta . x <= 0` over the moment ball.
pub fn prob_nonparametric_abc(t: &Abc) -> f64 {
    if t.slack() >= 0.0 {
        return 1.0;
    }
    let root = (-t.a * t.c + t.b * t.radicand().sqrt()) / (t.a * t.a + t.b * t.b);
    (root * root).clamp(0.0, 1.0)
}

pub fn wc_prob_nonparametric(x: &Vector, comp: &ComponentMoments) -> Result<f64> {
    check_nonzero(x)?;
    Ok(prob_nonparametric_abc(&abc(x, comp)))
}

/// Partial derivatives of the nonparametric probability w.r.t. `(a, b, c)`.
/// Only meaningful when `a + c < 0`.
pub fn prob_nonparametric_partials(t: &Abc) -> [f64; 3] {
    let Abc { a, b, c } = *t;
    let s = t.radicand().sqrt();
    let num = -a * c + b * s;
    let den = a * a + b * b;
    let r = num / den;
    let dnum = [-c + b * a / s, s + b * b / s, -a - b * c / s];
    let dden = [2.0 * a, 2.0 * b, 0.0];
    let mut out = [0.0; 3];
    for i in 0..3 {
        let dr = (dnum[i] * den - num * dden[i]) / (den * den);
        out[i] = 2.0 * r * dr;
    }
    out
}

/// Worst-case Gaussian VaR at level `beta in (0, 0.5]`.
pub fn var_gaussian_abc(t: &Abc, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::BetaOutOfRange {
            beta,
            range: "(0, 0.5]",
        });
    }
    let q = normal::quantile(1.0 - beta);
    Ok(t.a + q * t.b + t.c * (1.0 + q * q).sqrt())
}

pub fn wc_var_gaussian(x: &Vector, comp: &ComponentMoments, beta: f64) -> Result<f64> {
    var_gaussian_abc(&abc(x, comp), beta)
}

/// Gaussian worst-case probability. Values at or above one half are not
/// representable by the closed form and are reported as a sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaussianProb {
    Below(f64),
    AtOrAboveHalf,
}

impl GaussianProb {
    pub fn value(self) -> Option<f64> {
        match self {
            GaussianProb::Below(p) => Some(p),
            GaussianProb::AtOrAboveHalf => None,
        }
    }
}

/// The standardised margin `g` with worst-case probability `1 - Phi(g)`.
/// Requires `a + c < 0`.
pub fn gaussian_margin_abc(t: &Abc) -> f64 {
    let Abc { a, b, c } = *t;
    (a * a - c * c) / (-a * b + c * t.radicand().sqrt())
}

pub fn prob_gaussian_abc(t: &Abc) -> GaussianProb {
    if t.slack() >= 0.0 {
        return GaussianProb::AtOrAboveHalf;
    }
    GaussianProb::Below(normal::sf(gaussian_margin_abc(t)).clamp(0.0, 0.5))
}

pub fn wc_prob_gaussian(x: &Vector, comp: &ComponentMoments) -> Result<GaussianProb> {
    check_nonzero(x)?;
    Ok(prob_gaussian_abc(&abc(x, comp)))
}

/// Partial derivatives of `g` w.r.t. `(a, b, c)`; requires `a + c < 0`.
pub fn gaussian_margin_partials(t: &Abc) -> [f64; 3] {
    let Abc { a, b, c } = *t;
    let s = t.radicand().sqrt();
    let num = a * a - c * c;
    let den = -a * b + c * s;
    let dnum = [2.0 * a, 0.0, -2.0 * c];
    let dden = [-b + c * a / s, -a + c * b / s, s - c * c / s];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = (dnum[i] * den - num * dden[i]) / (den * den);
    }
    out
}
