//! Primal-dual proximal splitting toolkit.
//!
//! Implements the TriPD fixed-point operator for problems of the form
//! `minimize f(x) + g(x) + h(Lx)`, a randomized block-coordinate variant,
//! stepsize verifiers, Fejér-monotonicity and KKT diagnostics, a
//! deterministic simulator for the synchronous/asynchronous distributed
//! multi-agent algorithm, and a formation-control benchmark with a
//! dual-decomposition baseline.

pub mod bc;
pub mod csvfmt;
pub mod diagnostics;
pub mod distributed;
pub mod error;
pub mod formation;
pub mod linmap;
pub mod metric;
pub mod plq;
pub mod problem;
pub mod prox;
pub mod qp;
pub mod rng;
pub mod solver;

pub use bc::{
    bc_step, bc_step_partial, run_bc, run_bc_prepared, sample_activation, ActivationKind,
    ActivationScheme, BcReport, BlockDiagonalStructure, BlockPartition, ProbabilityMatrix,
};
pub use diagnostics::{
    fejer_check, fit_linear_rate, kkt_residual, pd_weighted_distance, reference_solution,
    reference_solution_cached, weighted_distance, ConvergenceTrace, FejerOutcome, RateFit,
    ReferenceSolution, TraceRecord,
};
pub use error::{Result, TripdError};
pub use linmap::{adjoint_probe, operator_norm, LinearMap};
pub use metric::{is_spd, is_spd_dense, Metric};
pub use problem::{
    assemble_metrics, DerivedMetrics, PdQuadForm, PrimalDualPoint, ProblemSpec, SmoothTerm,
};
pub use prox::{
    project_affine, project_pair_sum, prox_box, prox_conjugate, prox_l1, AffineProjection,
    ProxFunction, QuadraticProx,
};
pub use solver::{
    relaxed_step, solve, solve_prepared, tripd_step, verify_stepsizes, verify_vu_condat_competing,
    verify_vu_condat_stepsizes, vu_comparison_thresholds, vu_condat_step, SolveReport,
    SolverConfig, StepsizeCheck, StopReason, TraceRow,
};
