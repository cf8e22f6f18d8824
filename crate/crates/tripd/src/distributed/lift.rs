//! Exact lifting of the multi-agent problem to the structured form.
//!
//! Global primal: x = (x_1, ..., x_m). Global dual: u = (y, w) with
//! y = (y_1, ..., y_m) and one pair w_e = (w_{(i,j),i}, w_{(i,j),j}) per
//! edge, in edge order. The coupling map sends x to (L_i x_i)_i stacked with
//! (A_ij x_i, A_ji x_j)_e; the edge constraint becomes the indicator of
//! {z_1 + z_2 = b} composed with that map.

use nalgebra::DVector;

use super::{AgentGraph, EdgeConstraint};
use crate::bc::BlockPartition;
use crate::error::Result;
use crate::linmap::LinearMap;
use crate::metric::Metric;
use crate::problem::{PrimalDualPoint, ProblemSpec, SmoothTerm};
use crate::prox::{project_pair_sum, ProxFunction};

/// Ownership of one global coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoordOwner {
    /// dual coordinate of agent `agent`'s local map
    Y { agent: usize, idx: usize },
    /// edge-dual coordinate; `side` 0 is the lower endpoint's copy
    W {
        edge: usize,
        side: usize,
        idx: usize,
    },
    /// primal coordinate of agent `agent`
    X { agent: usize, idx: usize },
}

/// Index translation between agent-local and global coordinates.
#[derive(Clone, Debug)]
pub struct LiftMaps {
    pub y_offset: Vec<usize>,
    pub w_offset: Vec<usize>,
    pub x_offset: Vec<usize>,
    /// total dual dimension (y block + both edge copies)
    pub r_total: usize,
    pub n_total: usize,
    edge_len: Vec<usize>,
    agent_r: Vec<usize>,
    agent_n: Vec<usize>,
}

impl LiftMaps {
    fn build(graph: &AgentGraph) -> Self {
        let mut y_offset = Vec::with_capacity(graph.num_agents());
        let mut off = 0;
        for a in &graph.agents {
            y_offset.push(off);
            off += a.r;
        }
        let mut w_offset = Vec::with_capacity(graph.edges.len());
        for e in &graph.edges {
            w_offset.push(off);
            off += 2 * e.len();
        }
        let r_total = off;
        let mut x_offset = Vec::with_capacity(graph.num_agents());
        let mut xoff = 0;
        for a in &graph.agents {
            x_offset.push(xoff);
            xoff += a.n;
        }
        Self {
            y_offset,
            w_offset,
            x_offset,
            r_total,
            n_total: xoff,
            edge_len: graph.edges.iter().map(EdgeConstraint::len).collect(),
            agent_r: graph.agents.iter().map(|a| a.r).collect(),
            agent_n: graph.agents.iter().map(|a| a.n).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.r_total + self.n_total
    }

    /// Global stacked-z index of an owned coordinate.
    pub fn global_of(&self, owner: CoordOwner) -> usize {
        match owner {
            CoordOwner::Y { agent, idx } => self.y_offset[agent] + idx,
            CoordOwner::W { edge, side, idx } => {
                self.w_offset[edge] + side * self.edge_len[edge] + idx
            }
            CoordOwner::X { agent, idx } => self.r_total + self.x_offset[agent] + idx,
        }
    }

    /// Inverse of [`global_of`].
    pub fn owner(&self, global: usize) -> CoordOwner {
        assert!(global < self.dim(), "coordinate {global} out of range");
        if global >= self.r_total {
            let rel = global - self.r_total;
            for agent in 0..self.x_offset.len() {
                if rel < self.x_offset[agent] + self.agent_n[agent] {
                    return CoordOwner::X {
                        agent,
                        idx: rel - self.x_offset[agent],
                    };
                }
            }
            unreachable!();
        }
        for agent in 0..self.y_offset.len() {
            if global < self.y_offset[agent] + self.agent_r[agent] {
                return CoordOwner::Y {
                    agent,
                    idx: global - self.y_offset[agent],
                };
            }
        }
        for edge in 0..self.w_offset.len() {
            let l = self.edge_len[edge];
            if global < self.w_offset[edge] + 2 * l {
                let rel = global - self.w_offset[edge];
                return CoordOwner::W {
                    edge,
                    side: rel / l,
                    idx: rel % l,
                };
            }
        }
        unreachable!();
    }

    pub fn agent_x(&self, agent: usize, x: &DVector<f64>) -> DVector<f64> {
        x.rows(self.x_offset[agent], self.agent_n[agent])
            .clone_owned()
    }

    pub fn agent_y(&self, agent: usize, u: &DVector<f64>) -> DVector<f64> {
        u.rows(self.y_offset[agent], self.agent_r[agent])
            .clone_owned()
    }

    pub fn edge_w(&self, edge: usize, side: usize, u: &DVector<f64>) -> DVector<f64> {
        let l = self.edge_len[edge];
        u.rows(self.w_offset[edge] + side * l, l).clone_owned()
    }
}

/// The lifted structured problem with its stepsize matrices and the
/// per-agent coordinate partition.
#[derive(Clone, Debug)]
pub struct LiftedProblem {
    pub problem: ProblemSpec,
    pub sigma: Metric,
    pub gamma: Metric,
    /// block i holds agent i's (y_i, w_(i,j),i for incident edges, x_i)
    pub partition: BlockPartition,
    pub maps: LiftMaps,
}

/// Builds the lifted problem. Separable pieces keep their per-agent oracles;
/// the edge indicator enters through the closed-form pair projection.
pub fn lift_to_global(graph: &AgentGraph) -> Result<LiftedProblem> {
    let maps = LiftMaps::build(graph);
    let m = graph.num_agents();

    // global smooth term: concatenated gradients, block-diagonal Lipschitz
    // metric beta_i Q_i with unit global constant
    let agents_f: Vec<SmoothTerm> = graph.agents.iter().map(|a| a.f.clone()).collect();
    let x_offsets = maps.x_offset.clone();
    let agent_ns = maps.agent_n.clone();
    let n_total = maps.n_total;
    let grads = agents_f.clone();
    let grad = move |x: &DVector<f64>| {
        let mut g = DVector::zeros(n_total);
        for (i, f) in grads.iter().enumerate() {
            let xi = x.rows(x_offsets[i], agent_ns[i]).clone_owned();
            g.rows_mut(x_offsets[i], agent_ns[i])
                .copy_from(&f.grad(&xi));
        }
        g
    };
    let q_blocks: Vec<(String, Metric)> = graph
        .agents
        .iter()
        .map(|a| {
            // beta_i = 0 means a constant gradient, for which any metric is a
            // valid (conservative) Lipschitz witness; keep Q_i unscaled then.
            let block = if a.f.beta > 0.0 {
                a.f.q.scaled(a.f.beta)
            } else {
                a.f.q.clone()
            };
            (format!("agent{}", a.id), block)
        })
        .collect();
    let values: Vec<SmoothTerm> = agents_f.clone();
    let x_offsets_v = maps.x_offset.clone();
    let agent_ns_v = maps.agent_n.clone();
    let f_global = SmoothTerm::new(n_total, grad, Metric::block_diag(q_blocks), 1.0).with_value(
        move |x: &DVector<f64>| {
            values
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let xi = x.rows(x_offsets_v[i], agent_ns_v[i]).clone_owned();
                    f.value(&xi).unwrap_or(f64::NAN)
                })
                .sum()
        },
    );

    // separable g
    let g_prox =
        ProxFunction::separable_concat(graph.agents.iter().map(|a| a.g_prox.clone()).collect());

    // conjugate prox of h-tilde: per-agent h_i^* on the y block, then the
    // Moreau form of the edge indicator on each w pair
    let h_parts: Vec<ProxFunction> = graph.agents.iter().map(|a| a.h_conj_prox.clone()).collect();
    let edge_bs: Vec<DVector<f64>> = graph.edges.iter().map(|e| e.b.clone()).collect();
    let y_dim: usize = maps.agent_r.iter().sum();
    let h_conj = {
        let h_y = ProxFunction::separable_concat(h_parts);
        let edge_lens: Vec<usize> = graph.edges.iter().map(EdgeConstraint::len).collect();
        ProxFunction::new(maps.r_total, "lifted-h-conj", move |v, weights| {
            let mut out = DVector::zeros(v.len());
            let vy = v.rows(0, y_dim).clone_owned();
            let wy = weights.rows(0, y_dim).clone_owned();
            out.rows_mut(0, y_dim).copy_from(&h_y.prox(&vy, &wy)?);
            let mut off = y_dim;
            for (e, l) in edge_lens.iter().enumerate() {
                // prox of the conjugate of the indicator of {z1 + z2 = b}
                // under weight 1/kappa: v - kappa P(v / kappa)
                let kappa = 1.0 / weights[off];
                let v1 = v.rows(off, *l).clone_owned();
                let v2 = v.rows(off + l, *l).clone_owned();
                let (p1, p2) = project_pair_sum(&edge_bs[e], &(&v1 / kappa), &(&v2 / kappa))?;
                out.rows_mut(off, *l).copy_from(&(v1 - p1 * kappa));
                out.rows_mut(off + l, *l).copy_from(&(v2 - p2 * kappa));
                off += 2 * l;
            }
            Ok(out)
        })
    };

    // global coupling map
    let agent_ls: Vec<LinearMap> = graph.agents.iter().map(|a| a.l.clone()).collect();
    let edge_maps: Vec<(usize, usize, LinearMap, LinearMap)> = graph
        .edges
        .iter()
        .map(|e| (e.i, e.j, e.a_ij.clone(), e.a_ji.clone()))
        .collect();
    let fwd_maps = maps.clone();
    let adj_maps = maps.clone();
    let agent_ls_adj = agent_ls.clone();
    let edge_maps_adj = edge_maps.clone();
    let l_global = LinearMap::from_oracles(
        maps.r_total,
        maps.n_total,
        move |x: &DVector<f64>| {
            let mut out = DVector::zeros(fwd_maps.r_total);
            for (i, l) in agent_ls.iter().enumerate() {
                let xi = x
                    .rows(fwd_maps.x_offset[i], fwd_maps.agent_n[i])
                    .clone_owned();
                out.rows_mut(fwd_maps.y_offset[i], fwd_maps.agent_r[i])
                    .copy_from(&l.apply(&xi));
            }
            for (e, (i, j, a_ij, a_ji)) in edge_maps.iter().enumerate() {
                let l = fwd_maps.edge_len[e];
                let xi = x
                    .rows(fwd_maps.x_offset[*i], fwd_maps.agent_n[*i])
                    .clone_owned();
                let xj = x
                    .rows(fwd_maps.x_offset[*j], fwd_maps.agent_n[*j])
                    .clone_owned();
                out.rows_mut(fwd_maps.w_offset[e], l)
                    .copy_from(&a_ij.apply(&xi));
                out.rows_mut(fwd_maps.w_offset[e] + l, l)
                    .copy_from(&a_ji.apply(&xj));
            }
            out
        },
        move |u: &DVector<f64>| {
            let mut out = DVector::zeros(adj_maps.n_total);
            for (i, l) in agent_ls_adj.iter().enumerate() {
                let yi = u
                    .rows(adj_maps.y_offset[i], adj_maps.agent_r[i])
                    .clone_owned();
                out.rows_mut(adj_maps.x_offset[i], adj_maps.agent_n[i])
                    .copy_from(&l.apply_adjoint(&yi));
            }
            for (e, (i, j, a_ij, a_ji)) in edge_maps_adj.iter().enumerate() {
                let l = adj_maps.edge_len[e];
                let wi = u.rows(adj_maps.w_offset[e], l).clone_owned();
                let wj = u.rows(adj_maps.w_offset[e] + l, l).clone_owned();
                let mut xi = out
                    .rows(adj_maps.x_offset[*i], adj_maps.agent_n[*i])
                    .clone_owned();
                xi += a_ij.apply_adjoint(&wi);
                out.rows_mut(adj_maps.x_offset[*i], adj_maps.agent_n[*i])
                    .copy_from(&xi);
                let mut xj = out
                    .rows(adj_maps.x_offset[*j], adj_maps.agent_n[*j])
                    .clone_owned();
                xj += a_ji.apply_adjoint(&wj);
                out.rows_mut(adj_maps.x_offset[*j], adj_maps.agent_n[*j])
                    .copy_from(&xj);
            }
            out
        },
    );

    let problem = ProblemSpec::new(f_global, g_prox, h_conj, l_global)?;

    // stepsize matrices: sigma_i on y blocks, kappa on both copies of each
    // edge, tau_i on x blocks
    let mut sigma_diag = DVector::zeros(maps.r_total);
    for (i, a) in graph.agents.iter().enumerate() {
        sigma_diag.rows_mut(maps.y_offset[i], a.r).fill(a.sigma);
    }
    for (e, edge) in graph.edges.iter().enumerate() {
        sigma_diag
            .rows_mut(maps.w_offset[e], 2 * edge.len())
            .fill(edge.kappa);
    }
    let mut gamma_diag = DVector::zeros(maps.n_total);
    for (i, a) in graph.agents.iter().enumerate() {
        gamma_diag.rows_mut(maps.x_offset[i], a.n).fill(a.tau);
    }

    // agent blocks: (y_i, incident w copies, x_i)
    let mut blocks = Vec::with_capacity(m);
    for a in &graph.agents {
        let i = a.id;
        let mut ids: Vec<usize> = (0..a.r)
            .map(|k| maps.global_of(CoordOwner::Y { agent: i, idx: k }))
            .collect();
        for &e in graph.edges_at(i) {
            let side = usize::from(graph.edges[e].i != i);
            for k in 0..graph.edges[e].len() {
                ids.push(maps.global_of(CoordOwner::W {
                    edge: e,
                    side,
                    idx: k,
                }));
            }
        }
        for k in 0..a.n {
            ids.push(maps.global_of(CoordOwner::X { agent: i, idx: k }));
        }
        blocks.push(ids);
    }
    let partition = BlockPartition::new(blocks, maps.dim())?;

    Ok(LiftedProblem {
        problem,
        sigma: Metric::from_diagonal(sigma_diag),
        gamma: Metric::from_diagonal(gamma_diag),
        partition,
        maps,
    })
}

impl LiftedProblem {
    /// Largest edge-constraint violation max_e ||A_ij x_i + A_ji x_j - b||.
    pub fn max_edge_violation(&self, graph: &AgentGraph, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for edge in &graph.edges {
            let xi = self.maps.agent_x(edge.i, x);
            let xj = self.maps.agent_x(edge.j, x);
            let resid = edge.a_ij.apply(&xi) + edge.a_ji.apply(&xj) - &edge.b;
            worst = worst.max(resid.norm());
        }
        worst
    }

    /// Stacks per-agent states into the global primal-dual point.
    pub fn state_to_global(&self, graph: &AgentGraph, state: &super::SimState) -> PrimalDualPoint {
        let mut u = DVector::zeros(self.maps.r_total);
        let mut x = DVector::zeros(self.maps.n_total);
        for a in &graph.agents {
            let st = &state.agents[a.id];
            u.rows_mut(self.maps.y_offset[a.id], a.r).copy_from(&st.y);
            x.rows_mut(self.maps.x_offset[a.id], a.n).copy_from(&st.x);
        }
        for (e, edge) in graph.edges.iter().enumerate() {
            let l = edge.len();
            u.rows_mut(self.maps.w_offset[e], l)
                .copy_from(&state.agents[edge.i].w[&e]);
            u.rows_mut(self.maps.w_offset[e] + l, l)
                .copy_from(&state.agents[edge.j].w[&e]);
        }
        PrimalDualPoint::new(u, x)
    }
}
