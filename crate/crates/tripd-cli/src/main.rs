//! Command-line front end: parse configs, run solvers / simulations /
//! benchmarks, emit traces and summaries.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 verification failure
//! (stepsize condition violated or divergence).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{FormationConfig, GraphConfig, ProblemConfig};
use tripd::bc::{ActivationScheme, BlockPartition};
use tripd::distributed::{lift_to_global, run_distributed, DistBudget, DistMode};
use tripd::formation::{BenchMode, BenchmarkConfig};
use tripd::solver::SolverConfig;
use tripd::TripdError;

#[derive(Parser)]
#[command(
    name = "tripd",
    about = "Primal-dual proximal splitting toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// problem/graph/benchmark description (JSON)
    #[arg(long)]
    config: PathBuf,
    /// seed for every random draw of the run
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// output directory for CSV traces (stdout summary only when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// residual tolerance override
    #[arg(long)]
    tol: Option<f64>,
    /// iteration budget override
    #[arg(long)]
    max_iters: Option<u64>,
    /// include wall-clock columns in CSVs (breaks byte reproducibility)
    #[arg(long, default_value_t = false)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full primal-dual solver on a structured problem
    Solve(CommonRunArgs),
    /// Run the randomized block-coordinate solver
    Bc {
        #[command(flatten)]
        common: CommonRunArgs,
        /// uniform activation probability override for all blocks
        #[arg(long)]
        p: Option<f64>,
    },
    /// Simulate the distributed algorithm on an agent graph
    Dist {
        #[command(flatten)]
        common: CommonRunArgs,
        /// execution mode
        #[arg(long, value_parser = ["sync", "async"], default_value = "sync")]
        mode: String,
        /// per-agent activation probability for async mode
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// transmission budget
        #[arg(long, default_value_t = 1_000_000)]
        max_transmissions: u64,
    },
    /// Run the formation-control benchmark
    Formation(CommonRunArgs),
    /// Verify the local stepsize condition of every agent
    CheckStepsizes {
        /// agent graph description (JSON)
        #[arg(long, conflicts_with = "formation")]
        config: Option<PathBuf>,
        /// check the default formation instance with this many robots
        #[arg(long)]
        formation: Option<usize>,
        /// horizon of the formation instance
        #[arg(long, default_value_t = 3)]
        horizon: usize,
    },
    /// Compare the two sufficient stepsize conditions for the relaxed
    /// primal-dual iteration
    VuCompare {
        #[arg(long, default_value_t = 1.5)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
}

fn main() -> ExitCode {
    // worker cap; all aggregation is order-independent
    if let Ok(threads) = std::env::var("TRIPD_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn from_tripd(e: TripdError) -> Self {
        let code = match &e {
            TripdError::StepsizeViolated { .. } | TripdError::Diverged { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(format!("io: {e}"))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bc { common, p } => cmd_bc(common, p),
        Command::Dist {
            common,
            mode,
            p,
            max_transmissions,
        } => cmd_dist(common, mode, p, max_transmissions),
        Command::Formation(args) => cmd_formation(args),
        Command::CheckStepsizes {
            config,
            formation,
            horizon,
        } => cmd_check_stepsizes(config.as_deref(), formation, horizon),
        Command::VuCompare { mu, lambda } => cmd_vu_compare(mu, lambda),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::usage(format!(
            "{} line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_solve(args: CommonRunArgs) -> Result<(), CliError> {
    let cfg: ProblemConfig = read_json(&args.config)?;
    let (problem, sigma, gamma) = cfg.build().map_err(CliError::usage)?;
    let mut solver_cfg = SolverConfig::new(sigma, gamma).recording();
    if let Some(tol) = args.tol {
        solver_cfg = solver_cfg.with_tolerance(tol);
    }
    if let Some(iters) = args.max_iters {
        solver_cfg = solver_cfg.with_max_iters(iters);
    }
    let z0 = cfg.initial_point().map_err(CliError::usage)?;
    let report =
        tripd::solver::solve(&problem, &solver_cfg, z0, None).map_err(CliError::from_tripd)?;
    println!("iterations: {}", report.iterations);
    println!("stop: {:?}", report.stop);
    println!(
        "residual_s: {}",
        tripd::csvfmt::float(report.final_residual)
    );
    println!("l_applies: {}", report.l_applies);
    let kkt =
        tripd::diagnostics::kkt_residual(&report.point, &problem).map_err(CliError::from_tripd)?;
    println!("kkt_residual: {}", tripd::csvfmt::float(kkt));
    if let Some(dir) = &args.out {
        ensure_out(dir)?;
        let mut buf = Vec::new();
        report
            .write_trace_csv(&mut buf, args.timing)
            .map_err(CliError::from_tripd)?;
        std::fs::write(dir.join("trace.csv"), buf)?;
        println!("trace: {}", dir.join("trace.csv").display());
    }
    Ok(())
}

fn cmd_bc(args: CommonRunArgs, p_override: Option<f64>) -> Result<(), CliError> {
    let cfg: ProblemConfig = read_json(&args.config)?;
    let (problem, sigma, gamma) = cfg.build().map_err(CliError::usage)?;
    let dim = cfg.n + cfg.r;
    let partition = match &cfg.blocks {
        Some(blocks) => BlockPartition::new(blocks.clone(), dim).map_err(CliError::from_tripd)?,
        None => BlockPartition::dual_primal(cfg.r, cfg.n),
    };
    let probs = match (p_override, &cfg.probabilities) {
        (Some(p), _) => vec![p; partition.num_blocks()],
        (None, Some(ps)) => ps.clone(),
        (None, None) => vec![0.5; partition.num_blocks()],
    };
    let scheme = ActivationScheme::new(tripd::bc::ActivationKind::Independent(probs), args.seed)
        .map_err(CliError::from_tripd)?;
    let mut solver_cfg = SolverConfig::new(sigma, gamma).recording();
    if let Some(tol) = args.tol {
        solver_cfg = solver_cfg.with_tolerance(tol);
    }
    if let Some(iters) = args.max_iters {
        solver_cfg = solver_cfg.with_max_iters(iters);
    }
    let z0 = cfg.initial_point().map_err(CliError::usage)?;
    let report = tripd::bc::run_bc(&problem, &solver_cfg, &partition, &scheme, z0, None)
        .map_err(CliError::from_tripd)?;
    println!("iterations: {}", report.iterations);
    println!("stop: {:?}", report.stop);
    println!(
        "residual_s: {}",
        tripd::csvfmt::float(report.final_residual)
    );
    println!("rng: {}", scheme.rng_id());
    if let Some(dir) = &args.out {
        ensure_out(dir)?;
        let mut buf = Vec::new();
        report
            .write_trace_csv(&mut buf, args.timing)
            .map_err(CliError::from_tripd)?;
        std::fs::write(dir.join("trace.csv"), buf)?;
        println!("trace: {}", dir.join("trace.csv").display());
    }
    Ok(())
}

fn cmd_dist(
    args: CommonRunArgs,
    mode: String,
    p: f64,
    max_transmissions: u64,
) -> Result<(), CliError> {
    let cfg: GraphConfig = read_json(&args.config)?;
    let graph = cfg.build().map_err(CliError::usage)?;
    let x0 = cfg.initial_x().map_err(CliError::usage)?;
    let lifted = lift_to_global(&graph).map_err(CliError::from_tripd)?;
    let dist_mode = match mode.as_str() {
        "sync" => DistMode::Sync,
        _ => DistMode::Async { p, seed: args.seed },
    };
    // reference for the distance columns, two orders finer than the target
    let target = args.tol.unwrap_or(1e-8);
    let reference =
        tripd::formation::centralized_reference(&lifted, (target * 1e-2).max(1e-13))
            .map_err(CliError::from_tripd)?;
    let budget = DistBudget {
        max_rounds: args.max_iters.unwrap_or(1_000_000),
        max_transmissions,
        target_dist: target,
    };
    let report = run_distributed(
        &graph,
        &lifted,
        &dist_mode,
        &budget,
        Some(&reference.0),
        x0.as_deref(),
    )
    .map_err(CliError::from_tripd)?;
    let last = report.rows.last().expect("at least the initial row");
    println!("rounds: {}", last.round);
    println!("transmissions: {}", last.transmissions);
    println!(
        "dist_euclid: {}",
        tripd::csvfmt::float(last.dist_euclid.unwrap_or(f64::NAN))
    );
    println!(
        "max_edge_violation: {}",
        tripd::csvfmt::float(last.max_edge_violation)
    );
    println!("reference_certified: {}", reference.2);
    if let Some(dir) = &args.out {
        ensure_out(dir)?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf).map_err(CliError::from_tripd)?;
        std::fs::write(dir.join("trace.csv"), buf)?;
        println!("trace: {}", dir.join("trace.csv").display());
    }
    Ok(())
}

fn cmd_formation(args: CommonRunArgs) -> Result<(), CliError> {
    let cfg: FormationConfig = read_json(&args.config)?;
    let mut modes = Vec::new();
    for m in &cfg.modes {
        match m.as_str() {
            "sync" => modes.push(BenchMode::Sync),
            "async" => modes.push(BenchMode::Async { p: cfg.p }),
            "baseline" => modes.push(BenchMode::Baseline),
            other => return Err(CliError::usage(format!("unknown mode '{other}'"))),
        }
    }
    let bench_cfg = BenchmarkConfig {
        m: cfg.m,
        horizon: cfg.horizon,
        seed: if args.seed != 0 { args.seed } else { cfg.seed },
        modes,
        max_transmissions: cfg.max_transmissions,
        target_dist: args.tol.unwrap_or(cfg.target_dist),
        reference_eps: cfg.reference_eps,
        baseline_stepsize_scale: cfg.baseline_stepsize_scale,
    };
    let report = tripd::formation::run_benchmark(&bench_cfg).map_err(CliError::from_tripd)?;
    let mut summary = Vec::new();
    report
        .write_summary(&mut summary)
        .map_err(CliError::from_tripd)?;
    print!("{}", String::from_utf8_lossy(&summary));
    if !report.reference_certified {
        eprintln!("warning: reference run exhausted its budget; report flagged uncertified");
    }
    if let Some(dir) = &args.out {
        ensure_out(dir)?;
        for (name, trace) in &report.traces {
            let mut buf = Vec::new();
            trace
                .write_csv(&mut buf, args.timing)
                .map_err(CliError::from_tripd)?;
            std::fs::write(dir.join(format!("{name}.csv")), buf)?;
        }
        let mut buf = Vec::new();
        report
            .write_positions_csv(&mut buf)
            .map_err(CliError::from_tripd)?;
        std::fs::write(dir.join("positions.csv"), buf)?;
        std::fs::write(dir.join("summary.txt"), summary)?;
        println!("outputs: {}", dir.display());
    }
    Ok(())
}

fn cmd_check_stepsizes(
    config: Option<&Path>,
    formation: Option<usize>,
    horizon: usize,
) -> Result<(), CliError> {
    let graph = match (config, formation) {
        (Some(path), None) => {
            let cfg: GraphConfig = read_json(path)?;
            cfg.build().map_err(CliError::usage)?
        }
        (None, Some(m)) => {
            let problem =
                tripd::formation::benchmark_formation(m, horizon).map_err(CliError::from_tripd)?;
            tripd::formation::build_formation_problem(&problem).map_err(CliError::from_tripd)?
        }
        _ => {
            return Err(CliError::usage(
                "pass exactly one of --config or --formation",
            ))
        }
    };
    let checks = tripd::distributed::check_local_stepsizes(&graph).map_err(CliError::from_tripd)?;
    println!("{:<8} {:<24} {:<24} verdict", "agent", "tau", "bound");
    for c in &checks {
        println!(
            "{:<8} {:<24} {:<24} {}",
            c.agent,
            format!("{:.12e}", c.tau),
            format!("{:.12e}", c.bound),
            if c.ok { "ok" } else { "violated" }
        );
    }
    if checks.iter().all(|c| c.ok) {
        Ok(())
    } else {
        Err(CliError {
            code: 2,
            message: "local stepsize condition violated".into(),
        })
    }
}

fn cmd_vu_compare(mu: f64, lambda: f64) -> Result<(), CliError> {
    let (ours, theirs) =
        tripd::solver::vu_comparison_thresholds(mu, lambda, 1e-9).map_err(CliError::from_tripd)?;
    println!("mu: {mu}");
    println!("lambda: {lambda}");
    println!("triangular_condition_nu_threshold: {ours:.9}");
    println!("competing_condition_nu_threshold: {theirs:.9}");
    Ok(())
}
