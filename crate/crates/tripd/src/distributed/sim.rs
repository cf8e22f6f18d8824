//! Deterministic discrete-round message-passing simulator.
//!
//! A round reads pre-round snapshots only: every agent computes from its own
//! state and mailbox, then all messages are delivered at once. Activation,
//! computation, transmission and delivery complete within the round, which
//! makes the synchronous mode coincide with the full operator on the lifted
//! problem and the asynchronous mode with the block-coordinate operator
//! under the per-agent partition.

use std::collections::BTreeMap;

use nalgebra::DVector;

use super::{AgentGraph, AgentSpec, EdgeConstraint, LiftedProblem};
use crate::bc::{sample_activation, ActivationScheme};
use crate::diagnostics::{ConvergenceTrace, TraceRecord};
use crate::error::{Result, TripdError};
use crate::problem::PrimalDualPoint;

/// Message on one edge: the sender's constraint-map image of its primal
/// iterate and the sender's copy of the edge dual. The raw local iterate is
/// never transmitted.
#[derive(Clone, Debug)]
pub struct Mail {
    pub a_x: DVector<f64>,
    pub w: DVector<f64>,
}

/// Local memory of one agent. `w` and `mailbox` are keyed by edge index.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub w: BTreeMap<usize, DVector<f64>>,
    pub mailbox: BTreeMap<usize, Mail>,
}

/// Message accounting. One transmission = one neighbor-directed message.
#[derive(Clone, Debug, Default)]
pub struct TransmissionLedger {
    /// messages of the initial mailbox broadcast
    pub setup: u64,
    /// per-agent messages sent during rounds, monotone nondecreasing
    pub per_agent: Vec<u64>,
}

impl TransmissionLedger {
    fn new(m: usize) -> Self {
        Self {
            setup: 0,
            per_agent: vec![0; m],
        }
    }

    /// Round messages only (excludes the setup broadcast).
    pub fn round_total(&self) -> u64 {
        self.per_agent.iter().sum()
    }

    /// Every message sent so far, setup included.
    pub fn total(&self) -> u64 {
        self.setup + self.round_total()
    }
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub agents: Vec<AgentState>,
    pub ledger: TransmissionLedger,
    pub round: u64,
}

/// Initial state: given primal iterates, zero y and w duals, and mailboxes
/// populated by a counted round-0 broadcast.
pub fn init_state(graph: &AgentGraph, x0: Option<&[DVector<f64>]>) -> Result<SimState> {
    let m = graph.num_agents();
    if let Some(xs) = x0 {
        if xs.len() != m {
            return Err(TripdError::DimensionMismatch {
                expected: m,
                got: xs.len(),
                context: "initial primal iterates",
            });
        }
        for (a, x) in graph.agents.iter().zip(xs) {
            if x.len() != a.n {
                return Err(TripdError::DimensionMismatch {
                    expected: a.n,
                    got: x.len(),
                    context: "initial primal iterate",
                });
            }
        }
    }
    let mut agents: Vec<AgentState> = graph
        .agents
        .iter()
        .map(|a| AgentState {
            x: x0.map_or_else(|| DVector::zeros(a.n), |xs| xs[a.id].clone()),
            y: DVector::zeros(a.r),
            w: graph
                .edges_at(a.id)
                .iter()
                .map(|&e| (e, DVector::zeros(graph.edges[e].len())))
                .collect(),
            mailbox: BTreeMap::new(),
        })
        .collect();
    let mut ledger = TransmissionLedger::new(m);
    // round-0 broadcast of (A x^0, w^0) along every directed edge
    for (e, edge) in graph.edges.iter().enumerate() {
        for (from, to) in [(edge.i, edge.j), (edge.j, edge.i)] {
            let mail = Mail {
                a_x: edge.map_of(from).apply(&agents[from].x),
                w: agents[from].w[&e].clone(),
            };
            agents[to].mailbox.insert(e, mail);
            ledger.setup += 1;
        }
    }
    Ok(SimState {
        agents,
        ledger,
        round: 0,
    })
}

/// The local update of one agent, reading nothing but its spec, incident
/// edges and its own state (mailbox included). Returns the new state and the
/// outgoing message per incident edge.
fn agent_update(
    spec: &AgentSpec,
    edges: &[(usize, &EdgeConstraint)],
    state: &AgentState,
) -> Result<(AgentState, Vec<(usize, Mail)>)> {
    let i = spec.id;
    // edge-dual half step
    let mut w_bar: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    for (e, edge) in edges {
        let mail = state.mailbox.get(e).ok_or_else(|| {
            TripdError::InvalidGraph(format!("agent {i}: empty mailbox on edge {e}"))
        })?;
        let own = &state.w[e];
        let ax_own = edge.map_of(i).apply(&state.x);
        let bar = (own + &mail.w) * 0.5 + (&ax_own + &mail.a_x - &edge.b) * (edge.kappa / 2.0);
        w_bar.insert(*e, bar);
    }
    // node-dual half step
    let sigma_w = DVector::from_element(spec.r, 1.0 / spec.sigma);
    let y_arg = &state.y + spec.l.apply(&state.x) * spec.sigma;
    let y_bar = spec.h_conj_prox.prox(&y_arg, &sigma_w)?;
    // primal step: x - tau L'y_bar - tau sum_j A'w_bar - tau grad f(x)
    let mut x_arg = &state.x - spec.l.apply_adjoint(&y_bar) * spec.tau;
    for (e, edge) in edges {
        x_arg -= edge.map_of(i).apply_adjoint(&w_bar[e]) * spec.tau;
    }
    x_arg -= spec.f.grad(&state.x) * spec.tau;
    let tau_w = DVector::from_element(spec.n, 1.0 / spec.tau);
    let x_next = spec.g_prox.prox(&x_arg, &tau_w)?;
    // correction steps
    let dx = &x_next - &state.x;
    let y_next = &y_bar + spec.l.apply(&dx) * spec.sigma;
    let mut w_next: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
    let mut outgoing = Vec::with_capacity(edges.len());
    for (e, edge) in edges {
        let w_new = &w_bar[e] + edge.map_of(i).apply(&dx) * edge.kappa;
        outgoing.push((
            *e,
            Mail {
                a_x: edge.map_of(i).apply(&x_next),
                w: w_new.clone(),
            },
        ));
        w_next.insert(*e, w_new);
    }
    Ok((
        AgentState {
            x: x_next,
            y: y_next,
            w: w_next,
            mailbox: state.mailbox.clone(),
        },
        outgoing,
    ))
}

/// One round with the given activation pattern: active agents update and
/// transmit; everyone else idles. All reads use the pre-round snapshot.
pub fn async_round(graph: &AgentGraph, state: &SimState, active: &[bool]) -> Result<SimState> {
    if active.len() != graph.num_agents() {
        return Err(TripdError::DimensionMismatch {
            expected: graph.num_agents(),
            got: active.len(),
            context: "activation vector",
        });
    }
    let mut next = state.clone();
    let mut deliveries: Vec<(usize, usize, Mail)> = Vec::new();
    for agent in &graph.agents {
        let i = agent.id;
        if !active[i] {
            continue;
        }
        let edges: Vec<(usize, &EdgeConstraint)> = graph
            .edges_at(i)
            .iter()
            .map(|&e| (e, &graph.edges[e]))
            .collect();
        let (new_state, outgoing) =
            agent_update(agent, &edges, &state.agents[i]).map_err(|err| match err {
                TripdError::InvalidArgument(m) => TripdError::ProxFailure {
                    iter: state.round + 1,
                    message: format!("agent {i}: {m}"),
                },
                other => other,
            })?;
        next.agents[i] = new_state;
        for (e, mail) in outgoing {
            deliveries.push((graph.edges[e].other(i), e, mail));
            next.ledger.per_agent[i] += 1;
        }
    }
    for (to, e, mail) in deliveries {
        next.agents[to].mailbox.insert(e, mail);
    }
    next.round += 1;
    Ok(next)
}

/// One synchronous round: every agent is active.
pub fn sync_round(graph: &AgentGraph, state: &SimState) -> Result<SimState> {
    let all = vec![true; graph.num_agents()];
    async_round(graph, state, &all)
}

/// Execution mode of the distributed run.
#[derive(Clone, Debug)]
pub enum DistMode {
    Sync,
    /// independent activation with probability `p` per agent
    Async {
        p: f64,
        seed: u64,
    },
}

/// Stopping rules for [`run_distributed`]; whichever fires first.
#[derive(Clone, Debug)]
pub struct DistBudget {
    pub max_rounds: u64,
    pub max_transmissions: u64,
    /// stop when the Euclidean distance to the reference drops below this
    pub target_dist: f64,
}

impl Default for DistBudget {
    fn default() -> Self {
        Self {
            max_rounds: 100_000,
            max_transmissions: u64::MAX,
            target_dist: 0.0,
        }
    }
}

/// One recorded round.
#[derive(Clone, Debug)]
pub struct DistRow {
    pub round: u64,
    pub transmissions: u64,
    pub dist_euclid: Option<f64>,
    pub dist_s: Option<f64>,
    pub dist_pi_inv_s: Option<f64>,
    pub max_edge_violation: f64,
}

#[derive(Clone, Debug)]
pub struct DistReport {
    pub state: SimState,
    pub rows: Vec<DistRow>,
    /// Euclidean-distance trace keyed by transmissions
    pub trace: ConvergenceTrace,
}

impl DistReport {
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(
            w,
            "round,transmissions,dist_euclid,dist_s,dist_piinvs,max_edge_violation"
        )?;
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(crate::csvfmt::float).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.round,
                r.transmissions,
                fmt(r.dist_euclid),
                fmt(r.dist_s),
                fmt(r.dist_pi_inv_s),
                crate::csvfmt::float(r.max_edge_violation)
            )?;
        }
        Ok(())
    }
}

/// Runs rounds until the reference distance target, the round budget or the
/// transmission budget fires. The trace is keyed by cumulative transmissions
/// (setup broadcast included).
pub fn run_distributed(
    graph: &AgentGraph,
    lifted: &LiftedProblem,
    mode: &DistMode,
    budget: &DistBudget,
    reference: Option<&PrimalDualPoint>,
    x0: Option<&[DVector<f64>]>,
) -> Result<DistReport> {
    let checks = super::check_local_stepsizes(graph)?;
    if let Some(bad) = checks.iter().find(|c| !c.ok) {
        return Err(TripdError::StepsizeViolated {
            curvature: bad.bound - bad.tau,
        });
    }
    let dm = crate::problem::assemble_metrics(&lifted.problem, &lifted.sigma, &lifted.gamma)?;
    let s_diag = crate::bc::s_diagonal(&dm)?;
    let pi_diag: DVector<f64> = match mode {
        DistMode::Sync => DVector::from_element(lifted.maps.dim(), 1.0),
        DistMode::Async { p, .. } => {
            let scheme = ActivationScheme::independent_uniform(graph.num_agents(), *p, 0)?;
            crate::bc::ProbabilityMatrix::from_scheme(&lifted.partition, &scheme)?
                .diag()
                .clone()
        }
    };
    let scheme = match mode {
        DistMode::Sync => None,
        DistMode::Async { p, seed } => Some(ActivationScheme::independent_uniform(
            graph.num_agents(),
            *p,
            *seed,
        )?),
    };

    let mut state = init_state(graph, x0)?;
    let mut rows = Vec::new();
    let mut trace = ConvergenceTrace::new("euclid");
    let measure =
        |state: &SimState, rows: &mut Vec<DistRow>, trace: &mut ConvergenceTrace| -> Result<f64> {
            let z = lifted.state_to_global(graph, state);
            if !z.is_finite() || z.norm() > crate::solver::DIVERGENCE_NORM {
                return Err(TripdError::Diverged {
                    iter: state.round,
                    norm: z.norm(),
                });
            }
            let viol = lifted.max_edge_violation(graph, &z.x);
            let (de, ds, dpi) = match reference {
                Some(zr) => {
                    let d = &z - zr;
                    let v = d.to_vector();
                    let euclid = v.norm();
                    let s = v
                        .iter()
                        .zip(s_diag.iter())
                        .map(|(a, w)| a * a * w)
                        .sum::<f64>()
                        .max(0.0)
                        .sqrt();
                    let pis = v
                        .iter()
                        .zip(s_diag.iter().zip(pi_diag.iter()))
                        .map(|(a, (w, p))| a * a * w / p)
                        .sum::<f64>()
                        .max(0.0)
                        .sqrt();
                    (Some(euclid), Some(s), Some(pis))
                }
                None => (None, None, None),
            };
            rows.push(DistRow {
                round: state.round,
                transmissions: state.ledger.total(),
                dist_euclid: de,
                dist_s: ds,
                dist_pi_inv_s: dpi,
                max_edge_violation: viol,
            });
            trace.push(TraceRecord {
                iter: state.round,
                resid: viol,
                dist_to_ref: de,
                transmissions: state.ledger.total(),
                elapsed_ns: 0,
            })?;
            Ok(de.unwrap_or(f64::INFINITY))
        };

    // round-0 row covers the initial broadcast
    let mut dist = measure(&state, &mut rows, &mut trace)?;
    while state.round < budget.max_rounds
        && state.ledger.total() < budget.max_transmissions
        && dist > budget.target_dist
    {
        state = match &scheme {
            None => sync_round(graph, &state)?,
            Some(s) => {
                let active = sample_activation(s, state.round + 1);
                async_round(graph, &state, &active)?
            }
        };
        dist = measure(&state, &mut rows, &mut trace)?;
    }
    Ok(DistReport { state, rows, trace })
}
