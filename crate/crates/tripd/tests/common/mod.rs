//! Shared builders for the integration suites: random multi-agent graphs
//! and the two-agent consensus toy with a known solution.
//!
//! Each integration binary uses a subset of these helpers.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use tripd::distributed::{AgentGraph, AgentSpec, EdgeConstraint};
use tripd::linmap::LinearMap;
use tripd::metric::Metric;
use tripd::problem::SmoothTerm;
use tripd::prox::{prox_box, prox_conjugate, prox_l1, ProxFunction};
use tripd::rng::Xoshiro256pp;

/// Two quadratic agents coupled by the consensus constraint x1 = x2;
/// minimizer x1 = x2 = (a1 + a2) / 2.
pub fn two_agent_consensus(a1: f64, a2: f64) -> AgentGraph {
    let agent = |id: usize, a: f64| {
        let f = SmoothTerm::new(
            1,
            move |x: &DVector<f64>| DVector::from_vec(vec![x[0] - a]),
            Metric::identity(1),
            1.0,
        )
        .with_value(move |x: &DVector<f64>| 0.5 * (x[0] - a) * (x[0] - a));
        AgentSpec {
            id,
            n: 1,
            r: 1,
            f,
            g_prox: ProxFunction::zero(1),
            h_conj_prox: ProxFunction::point_indicator(1),
            l: LinearMap::zero(1, 1),
            sigma: 0.5,
            // local bound: 1 / (1/2 + ||kappa A'A||) = 1 / 1.5
            tau: 0.6,
        }
    };
    let edge = EdgeConstraint {
        i: 0,
        j: 1,
        a_ij: LinearMap::dense(DMatrix::from_row_slice(1, 1, &[1.0])),
        a_ji: LinearMap::dense(DMatrix::from_row_slice(1, 1, &[-1.0])),
        b: DVector::zeros(1),
        kappa: 1.0,
    };
    AgentGraph::new(vec![agent(0, a1), agent(1, a2)], vec![edge]).unwrap()
}

/// Random connected graph with 2..=m_max agents, quadratic-plus-nonsmooth
/// local costs and random edge constraints. Stepsizes are chosen to pass the
/// local verification with a 0.99 margin.
pub fn random_agent_graph(m_max: usize, seed: u64) -> AgentGraph {
    let mut rng = Xoshiro256pp::from_seed(seed);
    let m = 2 + rng.next_index(m_max.saturating_sub(1));
    let dims: Vec<(usize, usize)> = (0..m)
        .map(|_| (1 + rng.next_index(3), 1 + rng.next_index(2)))
        .collect();

    // spanning tree plus a few extra edges
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for j in 1..m {
        let i = rng.next_index(j);
        pairs.push((i, j));
    }
    for _ in 0..rng.next_index(m) {
        let i = rng.next_index(m);
        let j = rng.next_index(m);
        let (i, j) = (i.min(j), i.max(j));
        if i != j && !pairs.contains(&(i, j)) {
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();

    let mut edges = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let l = 1 + rng.next_index(2);
        let a_ij = DMatrix::from_fn(l, dims[i].0, |_, _| rng.next_normal());
        let a_ji = DMatrix::from_fn(l, dims[j].0, |_, _| rng.next_normal());
        edges.push(EdgeConstraint {
            i,
            j,
            a_ij: LinearMap::dense(a_ij),
            a_ji: LinearMap::dense(a_ji),
            b: DVector::from_fn(l, |_, _| 0.3 * rng.next_normal()),
            kappa: 0.5 + rng.next_f64(),
        });
    }

    let mut agents = Vec::with_capacity(m);
    for (id, &(n, r)) in dims.iter().enumerate() {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.next_normal());
        let hess = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.2;
        let lin = DVector::from_fn(n, |_, _| rng.next_normal());
        let beta = nalgebra::SymmetricEigen::new(hess.clone())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |a, &v| a.max(v));
        let h2 = hess.clone();
        let l2 = lin.clone();
        let f = SmoothTerm::new(
            n,
            move |x: &DVector<f64>| &hess * x + &lin,
            Metric::identity(n),
            beta,
        )
        .with_value(move |x: &DVector<f64>| 0.5 * x.dot(&(&h2 * x)) + l2.dot(x));
        let g_prox = match rng.next_index(3) {
            0 => ProxFunction::zero(n),
            1 => prox_l1(n, 0.05 + 0.2 * rng.next_f64()),
            _ => prox_box(
                DVector::from_element(n, -3.0),
                DVector::from_element(n, 3.0),
            )
            .unwrap(),
        };
        let h_conj_prox = match rng.next_index(3) {
            // h = w ||.||_1 so h* clamps to [-w, w]
            0 => {
                let w = 0.2 + rng.next_f64();
                prox_box(DVector::from_element(r, -w), DVector::from_element(r, w)).unwrap()
            }
            // h = indicator of a box via the Moreau identity
            1 => prox_conjugate(
                prox_box(
                    DVector::from_element(r, -1.0),
                    DVector::from_element(r, 1.0),
                )
                .unwrap(),
            ),
            // h == 0
            _ => ProxFunction::point_indicator(r),
        };
        let l_map = LinearMap::dense(DMatrix::from_fn(r, n, |_, _| rng.next_normal()));
        let sigma = 0.1 + 0.9 * rng.next_f64();

        // conservative local bound via the triangle inequality
        let norm_l = tripd::linmap::operator_norm(&l_map, 1e-10).unwrap();
        let mut coupling = sigma * norm_l * norm_l;
        for e in &edges {
            if e.i == id || e.j == id {
                let a = e.map_of(id);
                let na = tripd::linmap::operator_norm(a, 1e-10).unwrap();
                coupling += e.kappa * na * na;
            }
        }
        let tau = 0.99 / (beta / 2.0 + coupling);
        agents.push(AgentSpec {
            id,
            n,
            r,
            f,
            g_prox,
            h_conj_prox,
            l: l_map,
            sigma,
            tau,
        });
    }
    AgentGraph::new(agents, edges).unwrap()
}

/// Random starting iterates for every agent.
pub fn random_x0(graph: &AgentGraph, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = Xoshiro256pp::from_seed(seed);
    graph
        .agents
        .iter()
        .map(|a| DVector::from_fn(a.n, |_, _| rng.next_normal()))
        .collect()
}
