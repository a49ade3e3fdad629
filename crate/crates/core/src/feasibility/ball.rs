use crate::model::{CostKind, Vector};

/// Euclidean projection onto `{x : c(x, x0) <= delta}`.
pub fn project_cost_ball(xp: &Vector, x0: &Vector, delta: f64, cost: CostKind) -> Vector {
    let v = xp - x0;
    match cost {
        CostKind::L2 => {
            let n = v.norm();
            if n <= delta {
                xp.clone()
            } else {
                x0 + v * (delta / n)
            }
        }
        CostKind::L1 => {
            if v.lp_norm(1) <= delta {
                return xp.clone();
            }
            let shift = l1_threshold(&v, delta);
            x0 + v.map(|vi| vi.signum() * (vi.abs() - shift).max(0.0))
        }
    }
}

/// Soft-threshold level that maps `v` onto the l1 sphere of radius `radius`
/// (sort-based, exact). Assumes `|v|_1 > radius`.
fn l1_threshold(v: &Vector, radius: f64) -> f64 {
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - radius) / (j + 1) as f64;
        // the first term always qualifies (covers radius 0 with ties)
        if j == 0 || uj - t > 0.0 {
            shift = t;
        } else {
            break;
        }
    }
    shift.max(0.0)
}
