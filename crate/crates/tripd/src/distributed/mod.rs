//! Multi-agent problem model over an undirected graph, the exact lifting to
//! the structured form, and a deterministic message-passing simulator for
//! the synchronous/asynchronous distributed algorithm.

mod lift;
mod sim;

pub use lift::{lift_to_global, CoordOwner, LiftMaps, LiftedProblem};
pub use sim::{
    async_round, init_state, run_distributed, sync_round, AgentState, DistBudget, DistMode,
    DistReport, DistRow, Mail, SimState, TransmissionLedger,
};

use nalgebra::DVector;

use crate::error::{Result, TripdError};
use crate::linmap::{operator_norm, LinearMap};
use crate::problem::SmoothTerm;
use crate::prox::ProxFunction;

/// One agent: local cost pieces, local coupling map, and node stepsizes.
#[derive(Clone, Debug)]
pub struct AgentSpec {
    pub id: usize,
    /// local primal dimension
    pub n: usize,
    /// local dual dimension (codomain of `l`)
    pub r: usize,
    pub f: SmoothTerm,
    pub g_prox: ProxFunction,
    /// prox of h_i^* evaluated under the sigma_i metric
    pub h_conj_prox: ProxFunction,
    pub l: LinearMap,
    pub sigma: f64,
    pub tau: f64,
}

/// Shared constraint A_ij x_i + A_ji x_j = b on the unordered pair (i, j),
/// stored with i < j, together with the shared edge stepsize kappa.
#[derive(Clone, Debug)]
pub struct EdgeConstraint {
    pub i: usize,
    pub j: usize,
    pub a_ij: LinearMap,
    pub a_ji: LinearMap,
    pub b: DVector<f64>,
    pub kappa: f64,
}

impl EdgeConstraint {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// The map owned by `agent` on this edge.
    pub fn map_of(&self, agent: usize) -> &LinearMap {
        if agent == self.i {
            &self.a_ij
        } else {
            &self.a_ji
        }
    }

    pub fn other(&self, agent: usize) -> usize {
        if agent == self.i {
            self.j
        } else {
            self.i
        }
    }
}

/// Connected undirected multi-agent graph.
#[derive(Clone, Debug)]
pub struct AgentGraph {
    pub agents: Vec<AgentSpec>,
    pub edges: Vec<EdgeConstraint>,
    /// per-agent sorted list of incident edge indices
    adjacency: Vec<Vec<usize>>,
}

impl AgentGraph {
    pub fn new(agents: Vec<AgentSpec>, edges: Vec<EdgeConstraint>) -> Result<Self> {
        let m = agents.len();
        if m == 0 {
            return Err(TripdError::InvalidGraph("graph has no agents".into()));
        }
        for (i, a) in agents.iter().enumerate() {
            if a.id != i {
                return Err(TripdError::InvalidGraph(format!(
                    "agent ids must be 0..m in order (found {} at position {i})",
                    a.id
                )));
            }
            if a.sigma <= 0.0 || a.tau <= 0.0 {
                return Err(TripdError::InvalidGraph(format!(
                    "agent {i} has nonpositive stepsizes"
                )));
            }
            if a.l.in_dim() != a.n || a.l.out_dim() != a.r {
                return Err(TripdError::InvalidGraph(format!(
                    "agent {i}: local map dims do not match (n, r)"
                )));
            }
            if a.f.dim() != a.n || a.g_prox.dim() != a.n || a.h_conj_prox.dim() != a.r {
                return Err(TripdError::InvalidGraph(format!(
                    "agent {i}: cost piece dimensions do not match"
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); m];
        let mut seen_pairs = std::collections::HashSet::new();
        for (e, edge) in edges.iter().enumerate() {
            if edge.i >= edge.j {
                return Err(TripdError::InvalidGraph(format!(
                    "edge {e}: endpoints must satisfy i < j (self-loops excluded)"
                )));
            }
            if edge.j >= m {
                return Err(TripdError::InvalidGraph(format!(
                    "edge {e}: endpoint {} out of range",
                    edge.j
                )));
            }
            if !seen_pairs.insert((edge.i, edge.j)) {
                return Err(TripdError::InvalidGraph(format!(
                    "duplicate edge between {} and {}",
                    edge.i, edge.j
                )));
            }
            if edge.kappa <= 0.0 {
                return Err(TripdError::InvalidGraph(format!(
                    "edge {e}: kappa must be positive"
                )));
            }
            let l = edge.len();
            if edge.a_ij.in_dim() != agents[edge.i].n
                || edge.a_ji.in_dim() != agents[edge.j].n
                || edge.a_ij.out_dim() != l
                || edge.a_ji.out_dim() != l
            {
                return Err(TripdError::InvalidGraph(format!(
                    "edge {e}: map dimensions inconsistent across the edge"
                )));
            }
            adjacency[edge.i].push(e);
            adjacency[edge.j].push(e);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let graph = Self {
            agents,
            edges,
            adjacency,
        };
        if graph.agents.len() > 1 && !graph.is_connected() {
            return Err(TripdError::InvalidGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Incident edge indices, sorted.
    pub fn edges_at(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.adjacency[agent].len()
    }

    /// Sum of degrees = 2 |E|, the per-round transmission count of the
    /// synchronous protocol.
    pub fn total_degree(&self) -> u64 {
        self.adjacency.iter().map(|a| a.len() as u64).sum()
    }

    fn is_connected(&self) -> bool {
        let m = self.num_agents();
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &e in &self.adjacency[i] {
                let j = self.edges[e].other(i);
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Per-agent verdict of the local stepsize condition
/// tau_i < 1 / (beta_i ||Q_i|| / 2 + || sigma_i L_i'L_i + sum_j kappa_ij A_ij'A_ij ||).
#[derive(Clone, Debug)]
pub struct LocalStepsizeReport {
    pub agent: usize,
    pub tau: f64,
    /// right-hand side of the strict inequality
    pub bound: f64,
    pub ok: bool,
}

/// Evaluates the local bound for every agent using only agent-local data.
pub fn check_local_stepsizes(graph: &AgentGraph) -> Result<Vec<LocalStepsizeReport>> {
    let mut out = Vec::with_capacity(graph.num_agents());
    for agent in &graph.agents {
        let i = agent.id;
        let incident: Vec<&EdgeConstraint> =
            graph.edges_at(i).iter().map(|&e| &graph.edges[e]).collect();
        let l_map = agent.l.clone();
        let sigma = agent.sigma;
        let maps: Vec<(f64, LinearMap)> = incident
            .iter()
            .map(|e| (e.kappa, e.map_of(i).clone()))
            .collect();
        let n = agent.n;
        let combined = LinearMap::from_oracles(
            n,
            n,
            {
                let l = l_map.clone();
                let maps = maps.clone();
                move |v: &DVector<f64>| {
                    let mut out = l.apply_adjoint(&l.apply(v)) * sigma;
                    for (kappa, a) in &maps {
                        out += a.apply_adjoint(&a.apply(v)) * *kappa;
                    }
                    out
                }
            },
            {
                let l = l_map.clone();
                let maps = maps.clone();
                move |v: &DVector<f64>| {
                    let mut out = l.apply_adjoint(&l.apply(v)) * sigma;
                    for (kappa, a) in &maps {
                        out += a.apply_adjoint(&a.apply(v)) * *kappa;
                    }
                    out
                }
            },
        );
        let coupling_norm = match operator_norm(&combined, 1e-10) {
            Ok(v) => v,
            Err(TripdError::PowerIterationNoConvergence { best, .. }) => best,
            Err(e) => return Err(e),
        };
        let q_norm = agent.f.q.operator_norm();
        let denom = agent.f.beta * q_norm / 2.0 + coupling_norm;
        let bound = if denom > 0.0 {
            1.0 / denom
        } else {
            f64::INFINITY
        };
        out.push(LocalStepsizeReport {
            agent: i,
            tau: agent.tau,
            bound,
            ok: agent.tau < bound,
        });
    }
    Ok(out)
}
