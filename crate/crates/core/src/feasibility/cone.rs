use crate::error::{Error, Result};
use crate::model::Vector;

/// `rho |y| - theta . y + margin`; the robust margin constraint holds iff `<= 0`.
pub fn cone_violation(y: &Vector, theta: &Vector, rho: f64, margin: f64) -> f64 {
    rho * y.norm() - theta.dot(y) + margin
}

fn shrink(v: Vector, s: f64) -> Vector {
    let n = v.norm();
    if n <= s {
        Vector::zeros(v.len())
    } else {
        v * (1.0 - s / n)
    }
}

/// Euclidean projection onto `{y : rho |y| - theta . y <= -margin}`.
///
/// The minimiser has the form `y(mu) = shrink(xp + mu theta, mu rho)` for the
/// multiplier `mu >= 0`; the constraint value along this curve is
/// non-increasing in `mu`, so `mu` is found by bisection. The returned point
/// is always on the feasible side.
pub fn project_cone(xp: &Vector, theta: &Vector, rho: f64, margin: f64) -> Result<Vector> {
    let tn = theta.norm();
    if tn == 0.0 {
        return Err(Error::DegenerateDirection("theta is zero".into()));
    }
    if cone_violation(xp, theta, rho, margin) <= 0.0 {
        return Ok(xp.clone());
    }
    if rho == 0.0 {
        let step = (margin - theta.dot(xp)) / (tn * tn);
        let mut y = xp + theta * step;
        // rounding can leave the halfspace by an ulp
        let mut g = margin - theta.dot(&y);
        while g > 0.0 {
            y += theta * (g.max(f64::EPSILON * (1.0 + y.norm())) / (tn * tn));
            g = margin - theta.dot(&y);
        }
        return Ok(y);
    }
    if rho >= tn {
        return Err(Error::EmptyFeasibleSet {
            violation: cone_violation(xp, theta, rho, margin),
        });
    }

    let y_at = |mu: f64| shrink(xp + theta * mu, mu * rho);
    let g_at = |mu: f64| cone_violation(&y_at(mu), theta, rho, margin);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while g_at(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::DegenerateDirection("multiplier diverged".into()));
        }
    }
    let scale = 1.0 + margin + tn * xp.norm();
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = g_at(mid);
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            if g > -1e-13 * scale {
                break;
            }
        }
    }
    Ok(y_at(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn halfspace_projection() {
        let y = project_cone(&v(&[-1.0, 0.0]), &v(&[1.0, 0.0]), 0.0, 0.1).unwrap();
        assert!((y - v(&[0.1, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn feasible_point_is_unchanged() {
        let x = v(&[2.0, 0.3]);
        assert_eq!(project_cone(&x, &v(&[1.0, 0.0]), 0.0, 0.1).unwrap(), x);
        assert_eq!(project_cone(&x, &v(&[1.0, 0.0]), 0.5, 0.1).unwrap(), x);
    }

    #[test]
    fn zero_direction_is_rejected() {
        assert!(matches!(
            project_cone(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]), 0.1, 0.1),
            Err(Error::DegenerateDirection(_))
        ));
    }

    #[test]
    fn radius_at_least_norm_means_empty() {
        assert!(matches!(
            project_cone(&v(&[-1.0, 0.0]), &v(&[1.0, 0.0]), 1.0, 0.1),
            Err(Error::EmptyFeasibleSet { .. })
        ));
    }

    /// Brute force over a grid, refined around the best cell.
    fn grid_projection(xp: &Vector, theta: &Vector, rho: f64, margin: f64) -> Vector {
        let mut center = xp.clone();
        let mut half = 3.0;
        let mut step = 1e-3 * 3.0;
        for _ in 0..4 {
            let n = (2.0 * half / step) as i64;
            let mut best = (f64::INFINITY, center.clone());
            for i in 0..=n {
                for j in 0..=n {
                    let y = v(&[center[0] - half + i as f64 * step, center[1] - half + j as f64 * step]);
                    if cone_violation(&y, theta, rho, margin) <= 0.0 {
                        let dist = (&y - xp).norm_squared();
                        if dist < best.0 {
                            best = (dist, y);
                        }
                    }
                }
            }
            center = best.1;
            half = 10.0 * step;
            step /= 20.0;
        }
        center
    }

    #[test]
    fn matches_grid_oracle() {
        let xp = v(&[0.0, 1.0]);
        let theta = v(&[1.0, 0.0]);
        let y = project_cone(&xp, &theta, 0.5, 0.1).unwrap();
        let oracle = grid_projection(&xp, &theta, 0.5, 0.1);
        assert!((&y - &oracle).norm() < 1e-4, "{y} vs {oracle}");
        assert!(cone_violation(&project_cone(&xp, &theta, 0.5, 0.1).unwrap(), &theta, 0.5, 0.1) <= 0.0);
    }
}
