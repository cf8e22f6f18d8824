//! Dual-decomposition subgradient baseline.
//!
//! The formation penalty couples neighboring trajectories through their
//! positions, so the baseline dualizes position-copy consistency: agent i
//! keeps a copy p_ij of C x_jj, the copy constraint p_ij = C x_jj carries a
//! multiplier, and the copy is eliminated in closed form. Each outer
//! iteration solves one box-constrained equality QP per agent, followed by
//! two communication rounds (inner results out, updated multipliers back).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{offset_between, positions_of, stacked_bounds, stacked_dynamics, FormationProblem};
use crate::diagnostics::{ConvergenceTrace, TraceRecord};
use crate::error::{Result, TripdError};
use crate::qp::{solve_box_qp, BoxQp};

/// Stopping rules for the baseline; whichever fires first.
#[derive(Clone, Debug)]
pub struct BaselineBudget {
    pub max_outer: u64,
    pub max_transmissions: u64,
    pub target_dist: f64,
}

impl Default for BaselineBudget {
    fn default() -> Self {
        Self {
            max_outer: 100_000,
            max_transmissions: u64::MAX,
            target_dist: 0.0,
        }
    }
}

/// Runs the subgradient dual decomposition on the formation problem.
///
/// `stepsize(k)` gives the multiplier stepsize at outer iteration k >= 1.
/// The trace is keyed by cumulative transmissions, counting one message per
/// neighbor per communication round and two rounds per outer iteration; its
/// residual column holds the largest copy-consistency violation.
pub fn dual_decomposition_baseline(
    p: &FormationProblem,
    stepsize: &dyn Fn(u64) -> f64,
    budget: &BaselineBudget,
    reference_v: Option<&DVector<f64>>,
) -> Result<(ConvergenceTrace, DVector<f64>)> {
    let n = p.horizon;
    let pos_dim = 2 * n;
    // multipliers per ordered neighbor pair (i, j)
    let mut mu: BTreeMap<(usize, usize), DVector<f64>> = BTreeMap::new();
    for i in 0..p.m {
        for &j in &p.neighbors[i] {
            mu.insert((i, j), DVector::zeros(pos_dim));
        }
    }
    let degree_sum: u64 = p.neighbors.iter().map(|nb| nb.len() as u64).sum();

    // fixed QP pieces per agent
    let (lo, hi) = stacked_bounds(p);
    let templates: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> = (0..p.m)
        .map(|i| {
            let dynamics = stacked_dynamics(&p.model, n, &p.initial_states[i]);
            let mut e = DMatrix::zeros(4 * n, 6 * n);
            e.view_mut((0, 0), (4 * n, 4 * n)).copy_from(&dynamics.a);
            e.view_mut((0, 4 * n), (4 * n, 2 * n))
                .copy_from(&dynamics.b_mat);
            let mut h = DMatrix::zeros(6 * n, 6 * n);
            for k in 0..4 * n {
                h[(k, k)] = p.q_weight * p.q_weight;
            }
            for k in 0..2 * n {
                h[(4 * n + k, 4 * n + k)] = p.r_weight[i] * p.r_weight[i];
            }
            (h, e, dynamics.rhs)
        })
        .collect();

    let mut trace = ConvergenceTrace::new("v-euclid");
    let mut transmissions: u64 = 0;
    let mut v = DVector::zeros(6 * n * p.m);

    for outer in 1..=budget.max_outer {
        // inner minimizations
        let mut solutions: Vec<DVector<f64>> = Vec::with_capacity(p.m);
        for i in 0..p.m {
            let (h, e, d) = &templates[i];
            // linear term: C' sum_j (mu_ij - mu_ji) on the state block
            let mut coeff = DVector::zeros(pos_dim);
            for &j in &p.neighbors[i] {
                coeff += &mu[&(i, j)];
                coeff -= &mu[&(j, i)];
            }
            let mut c = DVector::zeros(6 * n);
            for k in 0..pos_dim {
                let step = k / 2;
                let coord = k % 2;
                c[4 * step + coord] = coeff[k];
            }
            let qp = BoxQp {
                h: h.clone(),
                c,
                e: e.clone(),
                d: d.clone(),
                lo: lo.clone(),
                hi: hi.clone(),
            };
            let z = solve_box_qp(&qp).map_err(|err| TripdError::InnerSolverFailure {
                iter: outer,
                message: format!("agent {i}: {err}"),
            })?;
            solutions.push(z);
        }
        // communication round 1: every agent sends its inner result summary
        // (the position trajectory image) to each neighbor
        transmissions += degree_sum;
        // multiplier updates with the eliminated-copy subgradient
        //   g_ij = C(x_ii - x_jj) - d_ij - mu_ij / lambda
        let alpha = stepsize(outer);
        let mut worst_violation = 0.0_f64;
        for i in 0..p.m {
            let own = positions_of(&solutions[i].rows(0, 4 * n).clone_owned(), n);
            for &j in &p.neighbors[i] {
                let nb = positions_of(&solutions[j].rows(0, 4 * n).clone_owned(), n);
                let g = &own - &nb - offset_between(p, i, j) - &mu[&(i, j)] / p.lambda;
                worst_violation = worst_violation.max(g.norm());
                let m = mu.get_mut(&(i, j)).expect("initialized");
                *m += &g * alpha;
            }
        }
        // communication round 2: updated multipliers travel back
        transmissions += degree_sum;

        // stacked observable (x_ii, u_ii) per agent
        let mut off = 0;
        for sol in &solutions {
            v.rows_mut(off, 6 * n).copy_from(sol);
            off += 6 * n;
        }
        let dist = reference_v.map(|r| (&v - r).norm());
        trace.push(TraceRecord {
            iter: outer,
            resid: worst_violation,
            dist_to_ref: dist,
            transmissions,
            elapsed_ns: 0,
        })?;
        if let Some(d) = dist {
            if d <= budget.target_dist {
                break;
            }
        }
        if transmissions >= budget.max_transmissions {
            break;
        }
    }
    Ok((trace, v))
}

/// Hard coupling constraint A_i x_i + A_j x_j = b between two QP agents.
#[derive(Clone, Debug)]
pub struct QpEdge {
    pub i: usize,
    pub j: usize,
    pub a_i: DMatrix<f64>,
    pub a_j: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Generic subgradient dual decomposition for QP agents coupled by hard
/// edge constraints. The inner problems must stay bounded (e.g. strongly
/// convex objectives).
#[derive(Clone, Debug)]
pub struct EdgeQpProblem {
    /// per-agent (H, c0, E, d, lo, hi)
    pub agents: Vec<BoxQp>,
    pub edges: Vec<QpEdge>,
}

/// Primal iterates and edge multipliers of a dual-ascent run.
pub type EdgeQpIterates = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Returns the final primal iterates and edge multipliers after `iters`
/// outer iterations with stepsize rule `stepsize(k)`.
pub fn dual_subgradient_edge_qp(
    problem: &EdgeQpProblem,
    stepsize: &dyn Fn(u64) -> f64,
    iters: u64,
) -> Result<EdgeQpIterates> {
    let mut mults: Vec<DVector<f64>> = problem
        .edges
        .iter()
        .map(|e| DVector::zeros(e.b.len()))
        .collect();
    let mut primal: Vec<DVector<f64>> = problem
        .agents
        .iter()
        .map(|a| DVector::zeros(a.c.len()))
        .collect();
    for k in 1..=iters {
        for (i, template) in problem.agents.iter().enumerate() {
            let mut c = template.c.clone();
            for (e, edge) in problem.edges.iter().enumerate() {
                if edge.i == i {
                    c += edge.a_i.transpose() * &mults[e];
                } else if edge.j == i {
                    c += edge.a_j.transpose() * &mults[e];
                }
            }
            let qp = BoxQp {
                c,
                ..template.clone()
            };
            primal[i] = solve_box_qp(&qp).map_err(|err| TripdError::InnerSolverFailure {
                iter: k,
                message: format!("agent {i}: {err}"),
            })?;
        }
        let alpha = stepsize(k);
        for (e, edge) in problem.edges.iter().enumerate() {
            let resid = &edge.a_i * &primal[edge.i] + &edge.a_j * &primal[edge.j] - &edge.b;
            mults[e] += resid * alpha;
        }
    }
    Ok((primal, mults))
}
