//! Second-order cone formulation of the projection, used when Dykstra's
//! iteration cannot certify a result (typically a budget ball that is nearly
//! tangent to a curved margin boundary, where alternating projections crawl).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::FeasibleSet;
use crate::model::{CostKind, Vector};

pub(super) enum ConicOutcome {
    Solved(Vector),
    Infeasible,
    Failed,
}

/// Rows of `A z + s = b` grouped by cone, in the order Clarabel expects.
#[derive(Default)]
struct Block {
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl Block {
    fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }
}

/// Solves `min |x - xp|^2` over the set. Constraints are tightened by a hair so
/// that solver round-off lands on the feasible side.
pub(super) fn project_conic(set: &FeasibleSet, xp: &Vector) -> ConicOutcome {
    let d = xp.len();
    let l1 = set.cost == CostKind::L1;
    let n = if l1 { 2 * d } else { d };
    let pad = 1e-10;

    let mut zero = Block::default();
    let mut nonneg = Block::default();
    let mut socs: Vec<Block> = Vec::new();

    for (i, &(lo, hi)) in set.intervals.iter().enumerate() {
        if lo == hi {
            zero.push(vec![(i, 1.0)], lo);
            continue;
        }
        if hi.is_finite() {
            nonneg.push(vec![(i, 1.0)], hi);
        }
        if lo.is_finite() {
            nonneg.push(vec![(i, -1.0)], -lo);
        }
    }

    let budget = (set.delta - pad * (1.0 + set.delta)).max(0.0);
    if l1 {
        // |x_i - x0_i| <= s_i, sum s_i <= delta
        for i in 0..d {
            nonneg.push(vec![(i, 1.0), (d + i, -1.0)], set.x0[i]);
            nonneg.push(vec![(i, -1.0), (d + i, -1.0)], -set.x0[i]);
        }
        nonneg.push((d..2 * d).map(|j| (j, 1.0)).collect(), budget);
    } else {
        let mut soc = Block::default();
        soc.push(Vec::new(), budget);
        for i in 0..d {
            soc.push(vec![(i, -1.0)], -set.x0[i]);
        }
        socs.push(soc);
    }

    let margin = set.margin + pad;
    for c in &set.constraints {
        let lin: Vec<(usize, f64)> = c.theta.iter().enumerate().map(|(i, &t)| (i, -t)).collect();
        if c.rho == 0.0 {
            nonneg.push(lin, -margin);
        } else {
            let mut soc = Block::default();
            soc.push(lin, -margin);
            for i in 0..d {
                soc.push(vec![(i, -c.rho)], 0.0);
            }
            socs.push(soc);
        }
    }

    let mut cones = Vec::new();
    let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let add = |block: &Block, ii: &mut Vec<usize>, jj: &mut Vec<usize>, vv: &mut Vec<f64>, b: &mut Vec<f64>| {
        for (row, &rhs) in block.rows.iter().zip(&block.rhs) {
            let r = b.len();
            for &(j, v) in row {
                ii.push(r);
                jj.push(j);
                vv.push(v);
            }
            b.push(rhs);
        }
    };
    if !zero.rows.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(zero.rows.len()));
        add(&zero, &mut ii, &mut jj, &mut vv, &mut b);
    }
    if !nonneg.rows.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(nonneg.rows.len()));
        add(&nonneg, &mut ii, &mut jj, &mut vv, &mut b);
    }
    for soc in &socs {
        cones.push(SupportedConeT::SecondOrderConeT(soc.rows.len()));
        add(soc, &mut ii, &mut jj, &mut vv, &mut b);
    }

    let a = CscMatrix::new_from_triplets(b.len(), n, ii, jj, vv);
    let p = CscMatrix::new_from_triplets(n, n, (0..d).collect(), (0..d).collect(), vec![1.0; d]);
    let mut q = vec![0.0; n];
    for i in 0..d {
        q[i] = -xp[i];
    }

    let settings = match DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .tol_gap_abs(1e-11)
        .tol_gap_rel(1e-11)
        .tol_feas(1e-11)
        .build()
    {
        Ok(s) => s,
        Err(_) => return ConicOutcome::Failed,
    };
    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(_) => return ConicOutcome::Failed,
    };
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            ConicOutcome::Solved(Vector::from_iterator(d, solver.solution.x[..d].iter().copied()))
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicOutcome::Infeasible,
        _ => ConicOutcome::Failed,
    }
}
