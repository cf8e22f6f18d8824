//! Formation-control benchmark: double-integrator-with-lag robots on a path
//! graph, horizon-stacked dynamics, box state/input constraints, and a
//! quadratic formation penalty between neighbors.

mod baseline;
mod bench;

pub use baseline::{
    dual_decomposition_baseline, dual_subgradient_edge_qp, BaselineBudget, EdgeQpIterates,
    EdgeQpProblem, QpEdge,
};
pub use bench::{
    centralized_reference, run_benchmark, run_benchmark_on, BenchMode, BenchmarkConfig,
    BenchmarkReport, MethodSummary,
};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::distributed::{AgentGraph, AgentSpec, EdgeConstraint};
use crate::error::{Result, TripdError};
use crate::linmap::LinearMap;
use crate::metric::Metric;
use crate::problem::SmoothTerm;
use crate::prox::{prox_box, prox_conjugate, AffineProjection};

/// Discrete-time robot model: position driven by velocity, velocity tracking
/// the input through a first-order lag with time constant `t_d`, discretized
/// exactly with step `dt`.
#[derive(Clone, Debug)]
pub struct RobotModel {
    pub t_d: f64,
    pub dt: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    /// 4x4 state transition
    pub phi: DMatrix<f64>,
    /// 4x2 input map
    pub delta: DMatrix<f64>,
}

/// Exact discretization of p' = v, v' = -v/t_d + u:
///   X1 = -t_d (e^{-dt/t_d} - 1),  X2 = e^{-dt/t_d},
///   X3 = t_d^2 (e^{-dt/t_d} - 1 + dt/t_d).
pub fn build_dynamics(t_d: f64, dt: f64) -> Result<RobotModel> {
    if t_d <= 0.0 || dt <= 0.0 {
        return Err(TripdError::InvalidArgument(
            "time constant and step must be positive".into(),
        ));
    }
    let e = (-dt / t_d).exp();
    let x1 = -t_d * (e - 1.0);
    let x2 = e;
    let x3 = t_d * t_d * (e - 1.0 + dt / t_d);
    let phi = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, x1, 0.0, //
            0.0, 1.0, 0.0, x1, //
            0.0, 0.0, x2, 0.0, //
            0.0, 0.0, 0.0, x2,
        ],
    );
    let delta = DMatrix::from_row_slice(
        4,
        2,
        &[
            x3, 0.0, //
            0.0, x3, //
            x1, 0.0, //
            0.0, x1,
        ],
    );
    Ok(RobotModel {
        t_d,
        dt,
        x1,
        x2,
        x3,
        phi,
        delta,
    })
}

/// Full formation instance: robots, horizon, costs, constraints, topology
/// and targets.
#[derive(Clone, Debug)]
pub struct FormationProblem {
    pub m: usize,
    /// horizon length N
    pub horizon: usize,
    pub model: RobotModel,
    /// state cost weight (Q_i = q_weight * I)
    pub q_weight: f64,
    /// input cost weight per agent (R_i = r_weight[i] * I)
    pub r_weight: Vec<f64>,
    /// formation penalty
    pub lambda: f64,
    /// position bounds (m)
    pub pos_box: (f64, f64),
    /// velocity bounds (m/s)
    pub vel_box: (f64, f64),
    /// input bounds (m/s)
    pub input_box: (f64, f64),
    /// initial state (p_x, p_y, v_x, v_y) per robot
    pub initial_states: Vec<DVector<f64>>,
    /// target planar positions defining the desired offsets
    pub targets: Vec<(f64, f64)>,
    /// neighbor lists (undirected, symmetric)
    pub neighbors: Vec<Vec<usize>>,
    /// Lipschitz bound per agent
    pub beta: Vec<f64>,
}

/// Paper-style defaults: t_d = 5 s, dt = 1 s, N = 3, state weight 0.1,
/// input weight 1 or 2 (alternating), penalty 10, positions in [0, 20],
/// velocities and inputs in [0, 15]. Robots start on a regular polygon of
/// radius 6 around (10, 10) with zero velocity; the target shape is a
/// chevron with 2 m spacing; the communication topology is the path along
/// the chevron.
pub fn benchmark_formation(m: usize, horizon: usize) -> Result<FormationProblem> {
    if m < 1 {
        return Err(TripdError::InvalidArgument(
            "need at least one robot".into(),
        ));
    }
    let model = build_dynamics(5.0, 1.0)?;
    let r_weight: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
    let initial_states: Vec<DVector<f64>> = (0..m)
        .map(|k| {
            let angle = std::f64::consts::TAU * (k as f64) / (m as f64);
            DVector::from_vec(vec![
                10.0 + 6.0 * angle.cos(),
                10.0 + 6.0 * angle.sin(),
                0.0,
                0.0,
            ])
        })
        .collect();
    let targets = chevron_targets(m);
    let neighbors = path_neighbors(m);
    let mut problem = FormationProblem {
        m,
        horizon,
        model,
        q_weight: 0.1,
        r_weight,
        lambda: 10.0,
        pos_box: (0.0, 20.0),
        vel_box: (0.0, 15.0),
        input_box: (0.0, 15.0),
        initial_states,
        targets,
        neighbors,
        beta: vec![],
    };
    problem.beta = lipschitz_bounds(&problem);
    Ok(problem)
}

/// Chevron (arrow) positions with 2 m spacing: the chain zig-zags so that
/// consecutive agents sit 2 m apart in each axis, forming repeated V shapes.
/// Only relative offsets matter for the formation penalty.
pub fn chevron_targets(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|k| {
            let x = -2.0 * (k as f64);
            let y = if k % 2 == 0 { 0.0 } else { 2.0 };
            (x, y)
        })
        .collect()
}

/// Path topology 0 - 1 - ... - m-1: two ends with one neighbor, everyone
/// else with two.
pub fn path_neighbors(m: usize) -> Vec<Vec<usize>> {
    (0..m)
        .map(|i| {
            let mut nb = Vec::new();
            if i > 0 {
                nb.push(i - 1);
            }
            if i + 1 < m {
                nb.push(i + 1);
            }
            nb
        })
        .collect()
}

/// beta_i = max(||Q_i'Q_i|| + lambda (|N_i| + 1), ||R_i'R_i||), the Lipschitz
/// bound of the local gradient.
pub fn lipschitz_bounds(p: &FormationProblem) -> Vec<f64> {
    (0..p.m)
        .map(|i| {
            let qq = p.q_weight * p.q_weight;
            let rr = p.r_weight[i] * p.r_weight[i];
            let deg = p.neighbors[i].len() as f64;
            (qq + p.lambda * (deg + 1.0)).max(rr)
        })
        .collect()
}

/// Node/edge stepsizes from the Lipschitz bounds: kappa = 1,
/// sigma_i = beta_i / 4, tau_i = 0.99 / (beta_i/2 + sigma_i + sum_j kappa).
pub fn default_stepsizes(p: &FormationProblem) -> Vec<(f64, f64)> {
    (0..p.m)
        .map(|i| {
            let beta = p.beta[i];
            let sigma = beta / 4.0;
            let kappa_sum = p.neighbors[i].len() as f64;
            let tau = 0.99 / (beta / 2.0 + sigma + kappa_sum);
            (sigma, tau)
        })
        .collect()
}

/// Index layout of one agent's stacked variable
/// z_i = ((x_ij)_{j in sorted(N_i + {i})}, u_ii).
#[derive(Clone, Debug)]
pub struct AgentLayout {
    /// members in ascending order (self included)
    pub members: Vec<usize>,
    /// offset of each member's 4N state block
    pub block_of: BTreeMap<usize, usize>,
    /// offset of the input block
    pub u_offset: usize,
    /// total dimension 4N(|N_i|+1) + 2N
    pub dim: usize,
}

impl AgentLayout {
    fn new(i: usize, neighbors: &[usize], horizon: usize) -> Self {
        let mut members: Vec<usize> = neighbors.to_vec();
        members.push(i);
        members.sort_unstable();
        let mut block_of = BTreeMap::new();
        for (pos, &j) in members.iter().enumerate() {
            block_of.insert(j, 4 * horizon * pos);
        }
        let u_offset = 4 * horizon * members.len();
        AgentLayout {
            members,
            block_of,
            u_offset,
            dim: u_offset + 2 * horizon,
        }
    }
}

/// The per-agent layouts of a formation problem.
pub fn agent_layouts(p: &FormationProblem) -> Vec<AgentLayout> {
    (0..p.m)
        .map(|i| AgentLayout::new(i, &p.neighbors[i], p.horizon))
        .collect()
}

/// Position-selection applied to a stacked state trajectory: picks
/// (p_x, p_y) of every step, mapping R^{4N} to R^{2N}.
pub fn positions_of(traj: &DVector<f64>, horizon: usize) -> DVector<f64> {
    DVector::from_fn(2 * horizon, |k, _| {
        let step = k / 2;
        let coord = k % 2;
        traj[4 * step + coord]
    })
}

fn positions_adjoint(p: &DVector<f64>, horizon: usize) -> DVector<f64> {
    let mut out = DVector::zeros(4 * horizon);
    for k in 0..2 * horizon {
        out[4 * (k / 2) + (k % 2)] = p[k];
    }
    out
}

/// Desired relative position offset d_ij, repeated over the horizon.
pub fn offset_between(p: &FormationProblem, i: usize, j: usize) -> DVector<f64> {
    let (ti, tj) = (p.targets[i], p.targets[j]);
    let dx = ti.0 - tj.0;
    let dy = ti.1 - tj.1;
    DVector::from_fn(2 * p.horizon, |k, _| if k % 2 == 0 { dx } else { dy })
}

/// Stacked dynamics E z = b restricted to one agent's (x_ii, u_ii) blocks:
/// E = [A at the self block, B at the input block], b = (Phi x0, 0, ..., 0).
pub struct StackedDynamics {
    pub a: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// A (4N x 4N): identity blocks on the diagonal, -Phi on the subdiagonal;
/// B (4N x 2N): -Delta blocks on the diagonal.
pub fn stacked_dynamics(model: &RobotModel, horizon: usize, x0: &DVector<f64>) -> StackedDynamics {
    let n4 = 4 * horizon;
    let mut a = DMatrix::zeros(n4, n4);
    let mut b_mat = DMatrix::zeros(n4, 2 * horizon);
    for k in 0..horizon {
        a.view_mut((4 * k, 4 * k), (4, 4))
            .copy_from(&DMatrix::identity(4, 4));
        if k > 0 {
            a.view_mut((4 * k, 4 * (k - 1)), (4, 4))
                .copy_from(&(-&model.phi));
        }
        b_mat
            .view_mut((4 * k, 2 * k), (4, 2))
            .copy_from(&(-&model.delta));
    }
    let mut rhs = DVector::zeros(n4);
    rhs.rows_mut(0, 4).copy_from(&(&model.phi * x0));
    StackedDynamics { a, b_mat, rhs }
}

/// Box bounds for the stacked (x_ii, u_ii) pair.
pub fn stacked_bounds(p: &FormationProblem) -> (DVector<f64>, DVector<f64>) {
    let n = p.horizon;
    let mut lo = DVector::zeros(6 * n);
    let mut hi = DVector::zeros(6 * n);
    for k in 0..n {
        for c in 0..2 {
            lo[4 * k + c] = p.pos_box.0;
            hi[4 * k + c] = p.pos_box.1;
            lo[4 * k + 2 + c] = p.vel_box.0;
            hi[4 * k + 2 + c] = p.vel_box.1;
            lo[4 * n + 2 * k + c] = p.input_box.0;
            hi[4 * n + 2 * k + c] = p.input_box.1;
        }
    }
    (lo, hi)
}

/// Builds the multi-agent graph whose lifted problem is the formation
/// program: separable smooth costs with neighbor estimates, dynamics as
/// affine indicators, state/input boxes through the selection map, and
/// estimate-consistency edge constraints.
pub fn build_formation_problem(p: &FormationProblem) -> Result<AgentGraph> {
    validate(p)?;
    let n_steps = p.horizon;
    let layouts = agent_layouts(p);
    let stepsizes = default_stepsizes(p);

    let mut agents = Vec::with_capacity(p.m);
    for i in 0..p.m {
        let layout = &layouts[i];
        let dim = layout.dim;
        let q_weight = p.q_weight;
        let r_weight = p.r_weight[i];
        let lambda = p.lambda;
        let self_off = layout.block_of[&i];
        let u_off = layout.u_offset;
        let neighbor_offsets: Vec<(usize, DVector<f64>)> = p.neighbors[i]
            .iter()
            .map(|&j| (layout.block_of[&j], offset_between(p, i, j)))
            .collect();

        // gradient of
        //   1/2 ||q_weight x_ii||^2 + 1/2 ||r_weight u||^2
        //   + lambda/2 sum_j ||C(x_ii - x_ij) - d_ij||^2
        let grad_offsets = neighbor_offsets.clone();
        let grad = move |z: &DVector<f64>| {
            let mut g = DVector::zeros(z.len());
            let x_self = z.rows(self_off, 4 * n_steps).clone_owned();
            let mut g_self = &x_self * (q_weight * q_weight);
            for (off, d) in &grad_offsets {
                let x_nb = z.rows(*off, 4 * n_steps).clone_owned();
                let resid = positions_of(&(&x_self - &x_nb), n_steps) - d;
                let pull = positions_adjoint(&resid, n_steps) * lambda;
                g_self += &pull;
                let mut g_nb = g.rows(*off, 4 * n_steps).clone_owned();
                g_nb -= &pull;
                g.rows_mut(*off, 4 * n_steps).copy_from(&g_nb);
            }
            g.rows_mut(self_off, 4 * n_steps).copy_from(&g_self);
            let u = z.rows(u_off, 2 * n_steps).clone_owned();
            g.rows_mut(u_off, 2 * n_steps)
                .copy_from(&(&u * (r_weight * r_weight)));
            g
        };
        let value_offsets = neighbor_offsets.clone();
        let value = move |z: &DVector<f64>| {
            let x_self = z.rows(self_off, 4 * n_steps).clone_owned();
            let u = z.rows(u_off, 2 * n_steps).clone_owned();
            let mut v = 0.5 * (q_weight * q_weight) * x_self.norm_squared()
                + 0.5 * (r_weight * r_weight) * u.norm_squared();
            for (off, d) in &value_offsets {
                let x_nb = z.rows(*off, 4 * n_steps).clone_owned();
                let resid = positions_of(&(&x_self - &x_nb), n_steps) - d;
                v += 0.5 * lambda * resid.norm_squared();
            }
            v
        };
        let f = SmoothTerm::new(dim, grad, Metric::identity(dim), p.beta[i]).with_value(value);

        // dynamics indicator on (x_ii, u_ii)
        let dyn_i = stacked_dynamics(&p.model, n_steps, &p.initial_states[i]);
        let mut e_rows = DMatrix::zeros(4 * n_steps, dim);
        e_rows
            .view_mut((0, self_off), (4 * n_steps, 4 * n_steps))
            .copy_from(&dyn_i.a);
        e_rows
            .view_mut((0, u_off), (4 * n_steps, 2 * n_steps))
            .copy_from(&dyn_i.b_mat);
        let g_prox = AffineProjection::new(&LinearMap::dense(e_rows), dyn_i.rhs)?.into_prox();

        // selection of (x_ii, u_ii) and the box indicator through it
        let mut select = Vec::with_capacity(6 * n_steps);
        for k in 0..4 * n_steps {
            select.push((self_off + k, 1.0));
        }
        for k in 0..2 * n_steps {
            select.push((u_off + k, 1.0));
        }
        let l = LinearMap::coeff_gather(dim, select);
        let (lo, hi) = stacked_bounds(p);
        let h_conj_prox = prox_conjugate(prox_box(lo, hi)?);

        let (sigma, tau) = stepsizes[i];
        agents.push(AgentSpec {
            id: i,
            n: dim,
            r: 6 * n_steps,
            f,
            g_prox,
            h_conj_prox,
            l,
            sigma,
            tau,
        });
    }

    // estimate-consistency edges: for i < j,
    //   A_ij z_i = (x_ii, -x_ij), A_ji z_j = (-x_ji, x_jj), b = 0
    let mut edges = Vec::new();
    for i in 0..p.m {
        for &j in &p.neighbors[i] {
            if j <= i {
                continue;
            }
            if !p.neighbors[j].contains(&i) {
                return Err(TripdError::InvalidGraph(format!(
                    "neighbor lists are not symmetric between {i} and {j}"
                )));
            }
            let li = &layouts[i];
            let lj = &layouts[j];
            let blk = 4 * n_steps;
            let mut entries_i = Vec::with_capacity(2 * blk);
            for k in 0..blk {
                entries_i.push((li.block_of[&i] + k, 1.0));
            }
            for k in 0..blk {
                entries_i.push((li.block_of[&j] + k, -1.0));
            }
            let mut entries_j = Vec::with_capacity(2 * blk);
            for k in 0..blk {
                entries_j.push((lj.block_of[&i] + k, -1.0));
            }
            for k in 0..blk {
                entries_j.push((lj.block_of[&j] + k, 1.0));
            }
            edges.push(EdgeConstraint {
                i,
                j,
                a_ij: LinearMap::coeff_gather(li.dim, entries_i),
                a_ji: LinearMap::coeff_gather(lj.dim, entries_j),
                b: DVector::zeros(2 * blk),
                kappa: 1.0,
            });
        }
    }
    AgentGraph::new(agents, edges)
}

fn validate(p: &FormationProblem) -> Result<()> {
    if p.m == 0 || p.horizon == 0 {
        return Err(TripdError::InvalidArgument(
            "formation needs at least one robot and one step".into(),
        ));
    }
    if p.r_weight.len() != p.m
        || p.initial_states.len() != p.m
        || p.targets.len() != p.m
        || p.neighbors.len() != p.m
        || p.beta.len() != p.m
    {
        return Err(TripdError::InvalidArgument(
            "formation field lengths do not match the number of robots".into(),
        ));
    }
    for x0 in &p.initial_states {
        if x0.len() != 4 {
            return Err(TripdError::InvalidArgument(
                "initial states must be (p_x, p_y, v_x, v_y)".into(),
            ));
        }
    }
    Ok(())
}

/// Stacked observable v = (x_11, u_11, ..., x_mm, u_mm) extracted from the
/// global lifted primal vector via the selection maps.
pub fn extract_v(
    graph: &AgentGraph,
    lifted: &crate::distributed::LiftedProblem,
    x: &DVector<f64>,
) -> DVector<f64> {
    let mut parts = Vec::new();
    for a in &graph.agents {
        let xi = lifted.maps.agent_x(a.id, x);
        parts.extend(a.l.apply(&xi).iter().copied());
    }
    DVector::from_vec(parts)
}
