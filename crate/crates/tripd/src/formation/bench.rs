//! Benchmark orchestration: reference solution, per-method traces of
//! ||v - v*|| against total transmissions, trajectory dump and summaries.

use nalgebra::DVector;

use super::baseline::{dual_decomposition_baseline, BaselineBudget};
use super::{agent_layouts, benchmark_formation, extract_v, positions_of, FormationProblem};
use crate::bc::{sample_activation, ActivationScheme};
use crate::diagnostics::{fit_linear_rate, ConvergenceTrace, TraceRecord};
use crate::distributed::{
    async_round, init_state, lift_to_global, sync_round, AgentGraph, LiftedProblem,
};
use crate::error::Result;
use crate::problem::PrimalDualPoint;
use crate::solver::{solve_prepared, SolverConfig, StopReason};

#[derive(Clone, Debug, PartialEq)]
pub enum BenchMode {
    Sync,
    Async { p: f64 },
    Baseline,
}

impl BenchMode {
    pub fn name(&self) -> String {
        match self {
            BenchMode::Sync => "tripd-dist-sync".into(),
            BenchMode::Async { p } => format!("tripd-dist-async-p{p}"),
            BenchMode::Baseline => "dual-decomp".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub m: usize,
    pub horizon: usize,
    pub seed: u64,
    pub modes: Vec<BenchMode>,
    /// transmission budget per method
    pub max_transmissions: u64,
    /// stop a method once ||v - v*|| falls below this
    pub target_dist: f64,
    /// residual tolerance of the centralized reference run
    pub reference_eps: f64,
    /// subgradient stepsize scale: alpha_k = scale / k
    pub baseline_stepsize_scale: f64,
}

impl BenchmarkConfig {
    /// Desk-scale defaults: five robots,
    /// horizon three, both distributed modes (async activation one half) and
    /// the subgradient baseline with stepsize 10/k.
    pub fn desk_scale() -> Self {
        Self {
            m: 5,
            horizon: 3,
            seed: 1,
            modes: vec![
                BenchMode::Sync,
                BenchMode::Async { p: 0.5 },
                BenchMode::Baseline,
            ],
            max_transmissions: 50_000,
            target_dist: 1e-6,
            reference_eps: 1e-12,
            baseline_stepsize_scale: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MethodSummary {
    pub name: String,
    /// transmissions at which the target distance was first reached
    pub transmissions_to_target: Option<u64>,
    pub final_dist: f64,
    /// tail log-distance fit quality, when enough points exist
    pub rate_r_squared: Option<f64>,
    pub rate_q_factor: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub m: usize,
    pub horizon: usize,
    pub reference_certified: bool,
    pub reference_residual: f64,
    pub v_star: DVector<f64>,
    pub traces: Vec<(String, ConvergenceTrace)>,
    pub summaries: Vec<MethodSummary>,
    /// optimal position trajectory rows (agent, step, p_x, p_y); step 0 is
    /// the initial state
    pub positions: Vec<(usize, usize, f64, f64)>,
}

impl BenchmarkReport {
    pub fn write_positions_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "agent,step,p_x,p_y")?;
        for (agent, step, px, py) in &self.positions {
            writeln!(
                w,
                "{agent},{step},{},{}",
                crate::csvfmt::float(*px),
                crate::csvfmt::float(*py)
            )?;
        }
        Ok(())
    }

    pub fn write_summary(&self, w: &mut impl std::io::Write) -> Result<()> {
        let mut pairs: Vec<(&str, String)> = vec![
            ("agents", self.m.to_string()),
            ("horizon", self.horizon.to_string()),
            (
                "units",
                "transmissions=messages dist=euclidean(v-v*) positions=m elapsed=ns".into(),
            ),
            ("reference_certified", self.reference_certified.to_string()),
            (
                "reference_residual",
                crate::csvfmt::float(self.reference_residual),
            ),
        ];
        let mut extra: Vec<(String, String)> = Vec::new();
        for s in &self.summaries {
            extra.push((
                format!("{}.transmissions_to_target", s.name),
                s.transmissions_to_target
                    .map(|t| t.to_string())
                    .unwrap_or_else(|| "not-reached".into()),
            ));
            extra.push((
                format!("{}.final_dist", s.name),
                crate::csvfmt::float(s.final_dist),
            ));
            if let Some(r2) = s.rate_r_squared {
                extra.push((
                    format!("{}.rate_r_squared", s.name),
                    crate::csvfmt::float(r2),
                ));
            }
            if let Some(q) = s.rate_q_factor {
                extra.push((format!("{}.rate_q_factor", s.name), crate::csvfmt::float(q)));
            }
        }
        for (k, v) in extra.iter() {
            pairs.push((k.as_str(), v.clone()));
        }
        crate::diagnostics::write_summary(w, &pairs)
    }
}

/// Centralized reference on the lifted problem using the graph's own
/// stepsizes. Returns the point, its residual, and certification.
pub fn centralized_reference(
    lifted: &LiftedProblem,
    eps: f64,
) -> Result<(PrimalDualPoint, f64, bool)> {
    let dm = crate::problem::assemble_metrics(&lifted.problem, &lifted.sigma, &lifted.gamma)?;
    let cfg = SolverConfig::new(lifted.sigma.clone(), lifted.gamma.clone())
        .with_tolerance(eps)
        .with_max_iters(crate::diagnostics::REFERENCE_MAX_ITERS);
    let report = solve_prepared(
        &lifted.problem,
        &dm,
        &cfg,
        PrimalDualPoint::zeros(lifted.problem.r, lifted.problem.n),
        None,
    )?;
    let certified = !matches!(report.stop, StopReason::MaxIters);
    Ok((report.point, report.final_residual, certified))
}

/// Distributed run recording ||v - v*|| against cumulative transmissions.
fn run_simulator_mode(
    graph: &AgentGraph,
    lifted: &LiftedProblem,
    v_star: &DVector<f64>,
    scheme: Option<&ActivationScheme>,
    max_transmissions: u64,
    target: f64,
) -> Result<ConvergenceTrace> {
    let mut trace = ConvergenceTrace::new("v-euclid");
    let mut state = init_state(graph, None)?;
    // generous round cap in case activation keeps skipping everyone
    let per_round = graph.total_degree().max(1);
    let max_rounds = 10 * (max_transmissions / per_round + 1000);
    loop {
        let z = lifted.state_to_global(graph, &state);
        let v = extract_v(graph, lifted, &z.x);
        let dist = (&v - v_star).norm();
        let viol = lifted.max_edge_violation(graph, &z.x);
        trace.push(TraceRecord {
            iter: state.round,
            resid: viol,
            dist_to_ref: Some(dist),
            transmissions: state.ledger.total(),
            elapsed_ns: 0,
        })?;
        if dist <= target || state.ledger.total() >= max_transmissions || state.round >= max_rounds
        {
            return Ok(trace);
        }
        state = match scheme {
            None => sync_round(graph, &state)?,
            Some(s) => {
                let active = sample_activation(s, state.round + 1);
                async_round(graph, &state, &active)?
            }
        };
    }
}

/// Builds the default benchmark formation instance and runs every configured
/// method against the shared centralized reference.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let problem = benchmark_formation(cfg.m, cfg.horizon)?;
    run_benchmark_on(cfg, &problem)
}

/// Same as [`run_benchmark`] for a caller-supplied formation instance.
pub fn run_benchmark_on(
    cfg: &BenchmarkConfig,
    problem: &FormationProblem,
) -> Result<BenchmarkReport> {
    let graph = super::build_formation_problem(problem)?;
    let lifted = lift_to_global(&graph)?;
    let (z_star, reference_residual, reference_certified) =
        centralized_reference(&lifted, cfg.reference_eps)?;
    let v_star = extract_v(&graph, &lifted, &z_star.x);

    // methods are independent given the shared reference; fan out across the
    // worker pool and keep the configured order for the outputs
    use rayon::prelude::*;
    let runs: Vec<crate::error::Result<ConvergenceTrace>> = cfg
        .modes
        .par_iter()
        .map(|mode| match mode {
            BenchMode::Sync => run_simulator_mode(
                &graph,
                &lifted,
                &v_star,
                None,
                cfg.max_transmissions,
                cfg.target_dist,
            ),
            BenchMode::Async { p } => {
                let scheme =
                    ActivationScheme::independent_uniform(graph.num_agents(), *p, cfg.seed)?;
                run_simulator_mode(
                    &graph,
                    &lifted,
                    &v_star,
                    Some(&scheme),
                    cfg.max_transmissions,
                    cfg.target_dist,
                )
            }
            BenchMode::Baseline => {
                let scale = cfg.baseline_stepsize_scale;
                let budget = BaselineBudget {
                    max_outer: u64::MAX,
                    max_transmissions: cfg.max_transmissions,
                    target_dist: cfg.target_dist,
                };
                dual_decomposition_baseline(
                    problem,
                    &move |k| scale / k as f64,
                    &budget,
                    Some(&v_star),
                )
                .map(|(trace, _)| trace)
            }
        })
        .collect();
    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    for (mode, run) in cfg.modes.iter().zip(runs) {
        let trace = run?;
        let name = mode.name();
        let dists = trace.dist_by_transmissions();
        let reached = trace
            .records
            .iter()
            .find(|r| r.dist_to_ref.is_some_and(|d| d <= cfg.target_dist))
            .map(|r| r.transmissions);
        let final_dist = dists.last().map_or(f64::NAN, |&(_, d)| d);
        let fit = fit_linear_rate(&dists, 0.5).ok();
        summaries.push(MethodSummary {
            name: name.clone(),
            transmissions_to_target: reached,
            final_dist,
            rate_r_squared: fit.as_ref().map(|f| f.r_squared),
            rate_q_factor: fit.as_ref().and_then(|f| f.q_factor),
        });
        traces.push((name, trace));
    }

    // Fig-2 style dump: initial positions plus the optimal trajectory
    let layouts = agent_layouts(problem);
    let mut positions = Vec::new();
    for a in &graph.agents {
        let i = a.id;
        let x0 = &problem.initial_states[i];
        positions.push((i, 0usize, x0[0], x0[1]));
        let xi = lifted.maps.agent_x(i, &z_star.x);
        let own = xi
            .rows(layouts[i].block_of[&i], 4 * problem.horizon)
            .clone_owned();
        let pos = positions_of(&own, problem.horizon);
        for step in 0..problem.horizon {
            positions.push((i, step + 1, pos[2 * step], pos[2 * step + 1]));
        }
    }

    Ok(BenchmarkReport {
        m: cfg.m,
        horizon: cfg.horizon,
        reference_certified,
        reference_residual,
        v_star,
        traces,
        summaries,
        positions,
    })
}
