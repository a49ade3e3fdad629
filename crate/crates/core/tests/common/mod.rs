//! Random instances and brute-force oracles shared by the integration suites.
//! The oracles deliberately avoid the library's own formulas: they bisect the
//! VaR equations, grid-search the feasible sets and scan the simplex.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use recourse_core::model::{ComponentMoments, CostKind, Divergence, Matrix, MixtureBelief, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// `scale * (A A' / d + 0.05 I)` for a Gaussian `A`.
pub fn random_pd(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Matrix {
    let a = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let m = (&a * a.transpose()) / d as f64 + Matrix::identity(d, d) * 0.05;
    (&m + m.transpose()) * (0.5 * scale)
}

/// A component and an action with `a + c < 0`, radius drawn from `[0, rho_max]`.
pub fn robust_pair(rng: &mut ChaCha8Rng, d: usize, rho_max: f64) -> (ComponentMoments, Vector) {
    loop {
        let rho = rng.random_range(0.0..=rho_max);
        let dir = normal_vec(rng, d).normalize();
        let mean = &dir * (rho + rng.random_range(0.2..3.0));
        let scale = rng.random_range(0.01..2.0);
        let cov = random_pd(rng, d, scale);
        let x = (&dir + normal_vec(rng, d) * rng.random_range(0.0..0.6)) * rng.random_range(0.1..10.0);
        let comp = ComponentMoments::new(mean, cov, rho).unwrap();
        if -comp.mean().dot(&x) + rho * x.norm() < -1e-9 {
            return (comp, x);
        }
    }
}

/// `(a, b, c)` computed from scratch.
pub fn triple(x: &Vector, comp: &ComponentMoments) -> (f64, f64, f64) {
    let a = -comp.mean().dot(x);
    let b = x.dot(&(comp.covariance() * x)).sqrt();
    (a, b, comp.radius() * x.norm())
}

/// Smallest `beta` with `a + sqrt((1-beta)/beta) b + c / sqrt(beta) <= 0`, by bisection.
pub fn var_root_moment(a: f64, b: f64, c: f64) -> f64 {
    if a + c >= 0.0 {
        return 1.0;
    }
    if b == 0.0 && c == 0.0 {
        return 0.0;
    }
    let g = |beta: f64| a + ((1.0 - beta) / beta).sqrt() * b + c / beta.sqrt();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn std_normal_sf(t: f64) -> f64 {
    0.5 * libm::erfc(t / std::f64::consts::SQRT_2)
}

/// `1 - Phi(t)` at the root `t >= 0` of `a + t b + c sqrt(1 + t^2) = 0`.
pub fn var_root_gaussian(a: f64, b: f64, c: f64) -> f64 {
    if a + c >= 0.0 {
        return 0.5;
    }
    if b == 0.0 && c == 0.0 {
        return 0.0;
    }
    let h = |t: f64| a + t * b + c * (1.0 + t * t).sqrt();
    let mut hi = 1.0;
    while h(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    std_normal_sf(0.5 * (lo + hi))
}

/// Three components in dimension `d` and a point at least `1e-3` inside
/// every robust margin.
pub fn mixture_instance(rng: &mut ChaCha8Rng, d: usize) -> (MixtureBelief, Vector) {
    loop {
        let dir = normal_vec(rng, d).normalize();
        let comps: Vec<ComponentMoments> = (0..3)
            .map(|_| {
                let mean = (&dir + normal_vec(rng, d) * 0.3) * rng.random_range(1.0..3.0);
                let scale = rng.random_range(0.05..1.0);
                let cov = random_pd(rng, d, scale);
                ComponentMoments::new(mean, cov, rng.random_range(0.0..0.5)).unwrap()
            })
            .collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        let belief = MixtureBelief::new(comps, w.iter().map(|v| v / s).collect()).unwrap();
        let x = (&dir + normal_vec(rng, d) * 0.4) * rng.random_range(0.5..3.0);
        let inside = belief.components().iter().all(|c| {
            let (a, _, cc) = triple(&x, c);
            a + cc <= -1e-3
        });
        if inside {
            return (belief, x);
        }
    }
}

/// One robust margin constraint `theta . x - rho |x| >= margin`.
#[derive(Debug, Clone)]
pub struct Cone {
    pub theta: Vector,
    pub rho: f64,
}

/// A two-feature instance (bias last) checked only by this module.
#[derive(Debug, Clone)]
pub struct Planar {
    pub x0: Vector,
    pub cones: Vec<Cone>,
    pub margin: f64,
    pub cost: CostKind,
}

impl Planar {
    pub fn point(&self, z: [f64; 2]) -> Vector {
        Vector::from_vec(vec![z[0], z[1], self.x0[2]])
    }

    pub fn cost_of(&self, x: &Vector) -> f64 {
        let d = x - &self.x0;
        match self.cost {
            CostKind::L1 => d.iter().map(|v| v.abs()).sum(),
            CostKind::L2 => d.norm(),
        }
    }

    pub fn cones_hold(&self, x: &Vector) -> bool {
        self.cones
            .iter()
            .all(|k| k.theta.dot(x) - k.rho * x.norm() >= self.margin)
    }

    /// Cone-constrained minimum of the cost.
    pub fn grid_delta_min(&self) -> f64 {
        zoom_min(
            [self.x0[0], self.x0[1]],
            64.0,
            |z| {
                let x = self.point(z);
                self.cones_hold(&x).then(|| self.cost_of(&x))
            },
            1e-8,
        )
        .0
    }

    pub fn feasible(&self, x: &Vector, delta: f64) -> bool {
        self.cones_hold(x) && self.cost_of(x) <= delta
    }

    /// Euclidean projection of `xp` onto `{cost <= delta} ∩ cones`, or `None`
    /// if no interior point is found.
    ///
    /// The set is convex, so it is star-shaped around any interior point `q`:
    /// its boundary is traced by bisecting the feasibility predicate along
    /// 8192 rays from `q`, and the nearest ray is refined by golden section.
    pub fn grid_projection(&self, xp: &Vector, delta: f64) -> Option<Vector> {
        if self.feasible(xp, delta) {
            return Some(xp.clone());
        }
        let slack = |z: [f64; 2]| {
            let x = self.point(z);
            let cones = self
                .cones
                .iter()
                .map(|k| k.theta.dot(&x) - k.rho * x.norm() - self.margin)
                .fold(f64::INFINITY, f64::min);
            Some(-cones.min(delta - self.cost_of(&x)))
        };
        let (neg, q) = zoom_min([self.x0[0], self.x0[1]], delta + 1e-9, slack, 1e-4);
        if !(neg < 0.0) {
            return None;
        }
        let reach = 2.0 * delta + 10.0;
        let boundary = |phi: f64| {
            let u = [phi.cos(), phi.sin()];
            let (mut lo, mut hi) = (0.0, reach);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if self.feasible(&self.point([q[0] + mid * u[0], q[1] + mid * u[1]]), delta) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            self.point([q[0] + lo * u[0], q[1] + lo * u[1]])
        };
        let dist = |phi: f64| (&boundary(phi) - xp).norm_squared();
        const RAYS: usize = 8192;
        let step = std::f64::consts::TAU / RAYS as f64;
        let best = (0..RAYS)
            .map(|i| i as f64 * step)
            .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
            .unwrap();
        let (mut a, mut b) = (best - 2.0 * step, best + 2.0 * step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let (c, d) = (b - g * (b - a), a + g * (b - a));
            if dist(c) < dist(d) {
                b = d;
            } else {
                a = c;
            }
        }
        Some(boundary(0.5 * (a + b)))
    }
}

/// Random planar instance with `k` cones, `x0` rejected by every mean.
pub fn planar(rng: &mut ChaCha8Rng, k: usize, cost: CostKind) -> Planar {
    loop {
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let cones: Vec<Cone> = (0..k)
            .map(|_| {
                let p = phi + rng.random_range(-0.5..0.5);
                let r = rng.random_range(1.0..3.0);
                Cone {
                    theta: Vector::from_vec(vec![r * p.cos(), r * p.sin(), rng.random_range(-1.0..1.0)]),
                    rho: rng.random_range(0.0..0.5),
                }
            })
            .collect();
        let x0 = Vector::from_vec(vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 1.0]);
        if cones.iter().all(|c| c.theta.dot(&x0) < 0.0) {
            return Planar {
                x0,
                cones,
                margin: 1e-3,
                cost,
            };
        }
    }
}

/// Minimum of `f` (None = infeasible) over the square `center ± half`, by
/// repeated 201x201 grids each zooming 4x around the incumbent. Returns
/// `(inf, center)` if no grid point is feasible.
pub fn zoom_min(center: [f64; 2], half: f64, f: impl Fn([f64; 2]) -> Option<f64>, resolution: f64) -> (f64, [f64; 2]) {
    const N: i32 = 100;
    let mut best = (f64::INFINITY, center);
    let mut c = center;
    let mut w = half;
    loop {
        let h = w / N as f64;
        for i in -N..=N {
            for j in -N..=N {
                let z = [c[0] + i as f64 * h, c[1] + j as f64 * h];
                if let Some(v) = f(z) {
                    if v < best.0 {
                        best = (v, z);
                    }
                }
            }
        }
        if !best.0.is_finite() || h < resolution {
            return best;
        }
        c = best.1;
        w = 25.0 * h;
    }
}

/// `D_phi(q || p)`.
pub fn divergence(div: Divergence, q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| match div {
            Divergence::Kl => {
                if qi > 0.0 {
                    qi * (qi / pi).ln()
                } else {
                    0.0
                }
            }
            Divergence::Chi2 => (qi - pi) * (qi - pi) / pi,
        })
        .sum()
}

/// `max { q . f : q in simplex, D(q || p) <= eps }` by zoomed simplex grids (K = 2 or 3).
pub fn simplex_max(f: &[f64], p: &[f64], eps: f64, div: Divergence) -> f64 {
    let value = |q: &[f64]| -> Option<f64> {
        if q.iter().any(|v| *v < 0.0) {
            return None;
        }
        (divergence(div, q, p) <= eps).then(|| -q.iter().zip(f).map(|(a, b)| a * b).sum::<f64>())
    };
    match f.len() {
        2 => {
            let (v, _) = zoom_min(
                [0.5, 0.0],
                0.5,
                |z| if z[1] == 0.0 { value(&[z[0], 1.0 - z[0]]) } else { None },
                1e-9,
            );
            -v
        }
        3 => {
            let (v, _) = zoom_min([0.5, 0.5], 0.5, |z| value(&[z[0], z[1], 1.0 - z[0] - z[1]]), 1e-9);
            -v
        }
        k => panic!("simplex oracle supports K = 2, 3; got {k}"),
    }
}
