//! The TriPD fixed-point operator, relaxed iterations, the Vu-Condat
//! operator for comparison, stepsize verifiers, and the driver loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TripdError};
use crate::linmap::LinearMap;
use crate::metric::{is_spd_dense, min_curvature_direction, Metric};
use crate::problem::{assemble_metrics, DerivedMetrics, PrimalDualPoint, ProblemSpec, SmoothTerm};

/// Norm growth beyond which an iterate is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Problems with `n + r` at most this size are verified densely; larger ones
/// fall back to the matrix-free Lanczos bound.
pub const DENSE_VERIFICATION_DIM: usize = 2000;

/// Verdict of a stepsize verification.
#[derive(Clone, Debug)]
pub enum StepsizeCheck {
    Ok,
    /// The assembled matrix has nonpositive curvature along `witness`.
    Violated {
        curvature: f64,
        witness: DVector<f64>,
    },
}

impl StepsizeCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, StepsizeCheck::Ok)
    }
}

/// Checks the stepsize condition Gamma^{-1} - (beta_f/2) Q - L' Sigma L > 0.
pub fn verify_stepsizes(
    problem: &ProblemSpec,
    sigma: &Metric,
    gamma: &Metric,
) -> Result<StepsizeCheck> {
    if sigma.dim() != problem.r || gamma.dim() != problem.n {
        return Err(TripdError::DimensionMismatch {
            expected: problem.r + problem.n,
            got: sigma.dim() + gamma.dim(),
            context: "stepsize matrices",
        });
    }
    let gamma_inv = gamma.inverse()?;
    if problem.n + problem.r <= DENSE_VERIFICATION_DIM {
        let ld = problem.l.to_dense();
        let m = gamma_inv.to_dense()
            - problem.f.q.to_dense() * (problem.f.beta / 2.0)
            - ld.transpose() * sigma.to_dense() * ld;
        if is_spd_dense(&m)? {
            Ok(StepsizeCheck::Ok)
        } else {
            let (curvature, witness) = min_curvature_direction(&m);
            Ok(StepsizeCheck::Violated { curvature, witness })
        }
    } else {
        verify_stepsizes_matrix_free(problem, sigma, &gamma_inv)
    }
}

/// Lanczos parameters for the oracle-only verification path.
const LANCZOS_ITERS: usize = 200;
const LANCZOS_TOL: f64 = 1e-8;
/// Safety factor applied to the Ritz residual bound before declaring the
/// smallest curvature positive.
const LANCZOS_MARGIN: f64 = 1.01;

/// Matrix-free check of the same condition: bounds the smallest eigenvalue
/// of v -> Gamma^{-1} v - (beta_f/2) Q v - L'(Sigma(Lv)) by Lanczos.
pub fn verify_stepsizes_matrix_free(
    problem: &ProblemSpec,
    sigma: &Metric,
    gamma_inv: &Metric,
) -> Result<StepsizeCheck> {
    let n = problem.n;
    let half_beta = problem.f.beta / 2.0;
    let op = |v: &DVector<f64>| -> DVector<f64> {
        let lv = problem.l.apply(v);
        gamma_inv.apply(v)
            - problem.f.q.apply(v) * half_beta
            - problem.l.apply_adjoint(&sigma.apply(&lv))
    };

    // Lanczos with full reorthogonalization.
    let m = LANCZOS_ITERS.min(n);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    let mut rng = crate::rng::Xoshiro256pp::from_seed(0x6c61_6e63);
    let mut q = DVector::from_fn(n, |_, _| rng.next_normal());
    q /= q.norm();
    let mut prev_theta = f64::INFINITY;
    for j in 0..m {
        let mut w = op(&q);
        let alpha = q.dot(&w);
        w -= &q * alpha;
        if j > 0 {
            w -= &basis[j - 1] * betas[j - 1];
        }
        for b in &basis {
            let c = b.dot(&w);
            w -= b * c;
        }
        let c = q.dot(&w);
        w -= &q * c;
        basis.push(q.clone());
        alphas.push(alpha);
        let beta = w.norm();

        // check the current Ritz approximation every few iterations
        if beta < 1e-14 || j + 1 == m || (j > 4 && j % 8 == 0) {
            let (theta, y) = tridiag_min_ritz(&alphas, &betas);
            let resid = beta * y[y.len() - 1].abs();
            let ritz_witness = |basis: &[DVector<f64>]| {
                let mut witness = DVector::zeros(n);
                for (k, b) in basis.iter().enumerate() {
                    witness += b * y[k];
                }
                let nw = witness.norm();
                if nw > 0.0 {
                    witness /= nw;
                }
                witness
            };
            if theta - LANCZOS_MARGIN * resid > 0.0 {
                return Ok(StepsizeCheck::Ok);
            }
            if theta <= 0.0 {
                return Ok(StepsizeCheck::Violated {
                    curvature: theta,
                    witness: ritz_witness(&basis),
                });
            }
            if beta < 1e-14 {
                // Krylov space exhausted with the smallest Ritz value pinned
                // at essentially zero: singular to working precision, so the
                // strict condition is reported violated, matching the dense
                // route's tolerance semantics
                return Ok(StepsizeCheck::Violated {
                    curvature: theta,
                    witness: ritz_witness(&basis),
                });
            }
            if (prev_theta - theta).abs() <= LANCZOS_TOL * theta.abs().max(1.0) {
                // converged estimate that is positive but within the safety
                // margin: treat as violated rather than overpromise
                return Ok(StepsizeCheck::Violated {
                    curvature: theta,
                    witness: ritz_witness(&basis),
                });
            }
            prev_theta = theta;
        }
        betas.push(beta);
        q = w / beta.max(f64::MIN_POSITIVE);
    }
    let (theta, y) = tridiag_min_ritz(&alphas, &betas);
    let ok =
        theta - LANCZOS_MARGIN * betas.last().copied().unwrap_or(0.0) * y[y.len() - 1].abs() > 0.0;
    if ok {
        Ok(StepsizeCheck::Ok)
    } else {
        Ok(StepsizeCheck::Violated {
            curvature: theta,
            witness: basis[0].clone(),
        })
    }
}

/// Smallest eigenpair of the symmetric tridiagonal (alphas, betas).
fn tridiag_min_ritz(alphas: &[f64], betas: &[f64]) -> (f64, DVector<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut min_i = 0;
    for i in 0..k {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    (
        eig.eigenvalues[min_i],
        eig.eigenvectors.column(min_i).clone_owned(),
    )
}

/// Result of one operator application: the candidate point and the cached
/// product L x_candidate.
pub(crate) struct StepOutput {
    pub candidate: PrimalDualPoint,
    pub lx_candidate: DVector<f64>,
}

/// One application of the TriPD operator given the cached product `lx = L x`:
///   u_bar  = prox_{h*}^{Sigma^{-1}}(u + Sigma L x)
///   x_next = prox_g^{Gamma^{-1}}(x - Gamma grad f(x) - Gamma L' u_bar)
///   u_next = u_bar + Sigma (L x_next - L x)
/// One forward and one adjoint product per call; the forward product for the
/// correction step reuses `lx`.
pub(crate) fn apply_tripd(
    problem: &ProblemSpec,
    dm: &DerivedMetrics,
    weights: &ProxWeights,
    z: &PrimalDualPoint,
    lx: &DVector<f64>,
) -> Result<StepOutput> {
    let u_arg = &z.u + dm.sigma.apply(lx);
    let u_bar = problem.h_conj_prox.prox(&u_arg, &weights.sigma_inv)?;
    let grad = problem.f.grad(&z.x);
    let lt_ubar = problem.l.apply_adjoint(&u_bar);
    let x_arg = &z.x - dm.gamma.apply(&grad) - dm.gamma.apply(&lt_ubar);
    let x_next = problem.g_prox.prox(&x_arg, &weights.gamma_inv)?;
    let lx_next = problem.l.apply(&x_next);
    let u_next = u_bar + dm.sigma.apply(&(&lx_next - lx));
    Ok(StepOutput {
        candidate: PrimalDualPoint::new(u_next, x_next),
        lx_candidate: lx_next,
    })
}

/// Diagonal weights of the prox metrics (Sigma^{-1} and Gamma^{-1}).
pub(crate) struct ProxWeights {
    pub sigma_inv: DVector<f64>,
    pub gamma_inv: DVector<f64>,
}

impl ProxWeights {
    pub fn from_metrics(sigma_inv: &Metric, gamma_inv: &Metric) -> Result<Self> {
        let si = sigma_inv.diagonal().ok_or_else(|| {
            TripdError::InvalidArgument(
                "proximal steps require a diagonal dual stepsize matrix".into(),
            )
        })?;
        let gi = gamma_inv.diagonal().ok_or_else(|| {
            TripdError::InvalidArgument(
                "proximal steps require a diagonal primal stepsize matrix".into(),
            )
        })?;
        Ok(Self {
            sigma_inv: si,
            gamma_inv: gi,
        })
    }
}

/// One TriPD step. Pure; recomputes the cached product internally.
pub fn tripd_step(
    z: &PrimalDualPoint,
    problem: &ProblemSpec,
    dm: &DerivedMetrics,
) -> Result<PrimalDualPoint> {
    let weights = ProxWeights::from_metrics(&dm.sigma_inv, &dm.gamma_inv)?;
    let lx = problem.l.apply(&z.x);
    Ok(apply_tripd(problem, dm, &weights, z, &lx)?.candidate)
}

/// Relaxed step z + Lambda (Tz - z) for a diagonal Lambda with entries in
/// (0, 2) over the stacked (u, x) coordinates. Lambda = identity takes the
/// plain path and is therefore bitwise identical to `tripd_step`.
pub fn relaxed_step(
    z: &PrimalDualPoint,
    problem: &ProblemSpec,
    dm: &DerivedMetrics,
    lambda: &DVector<f64>,
) -> Result<PrimalDualPoint> {
    validate_relaxation(lambda, z.dim())?;
    let candidate = tripd_step(z, problem, dm)?;
    Ok(apply_relaxation(z, &candidate, lambda))
}

fn validate_relaxation(lambda: &DVector<f64>, dim: usize) -> Result<()> {
    if lambda.len() != dim {
        return Err(TripdError::DimensionMismatch {
            expected: dim,
            got: lambda.len(),
            context: "relaxation matrix diagonal",
        });
    }
    if lambda.iter().any(|&v| v <= 0.0 || v >= 2.0) {
        return Err(TripdError::InvalidArgument(
            "relaxation diagonal must lie strictly inside (0, 2)".into(),
        ));
    }
    Ok(())
}

fn apply_relaxation(
    z: &PrimalDualPoint,
    candidate: &PrimalDualPoint,
    lambda: &DVector<f64>,
) -> PrimalDualPoint {
    if lambda.iter().all(|&v| v == 1.0) {
        return candidate.clone();
    }
    let r = z.u.len();
    let u = DVector::from_fn(r, |i, _| z.u[i] + lambda[i] * (candidate.u[i] - z.u[i]));
    let x = DVector::from_fn(z.x.len(), |i, _| {
        z.x[i] + lambda[r + i] * (candidate.x[i] - z.x[i])
    });
    PrimalDualPoint::new(u, x)
}

/// One relaxed Vu-Condat iteration for the infimal-convolution problem:
///   u_bar  = prox_{h*}^{Sigma^{-1}}(u - Sigma grad l*(u) + Sigma L x)
///   x_bar  = prox_g^{Gamma^{-1}}(x - Gamma grad f(x) - Gamma L'(2 u_bar - u))
///   z_next = z + lambda ((u_bar, x_bar) - z)
/// `l_term` carries grad l* on the dual space; omit it when l is the
/// indicator of the origin (beta_l = 0).
pub fn vu_condat_step(
    z: &PrimalDualPoint,
    problem: &ProblemSpec,
    l_term: Option<&SmoothTerm>,
    sigma: &Metric,
    gamma: &Metric,
    lambda: f64,
) -> Result<PrimalDualPoint> {
    if !(0.0 < lambda && lambda < 2.0) {
        return Err(TripdError::InvalidArgument(
            "relaxation parameter must lie in (0, 2)".into(),
        ));
    }
    let weights = ProxWeights::from_metrics(&sigma.inverse()?, &gamma.inverse()?)?;
    let mut u_arg = &z.u + sigma.apply(&problem.l.apply(&z.x));
    if let Some(lt) = l_term {
        u_arg -= sigma.apply(&lt.grad(&z.u));
    }
    let u_bar = problem.h_conj_prox.prox(&u_arg, &weights.sigma_inv)?;
    let reflected = &u_bar * 2.0 - &z.u;
    let x_arg = &z.x
        - gamma.apply(&problem.f.grad(&z.x))
        - gamma.apply(&problem.l.apply_adjoint(&reflected));
    let x_bar = problem.g_prox.prox(&x_arg, &weights.gamma_inv)?;
    let candidate = PrimalDualPoint::new(u_bar, x_bar);
    if lambda == 1.0 {
        return Ok(candidate);
    }
    let lam = DVector::from_element(z.dim(), lambda);
    Ok(apply_relaxation(z, &candidate, &lam))
}

/// Sufficient conditions for the relaxed Vu-Condat iteration:
///   Sigma^{-1} - beta_l/(2(2-lambda)) G > 0
///   Gamma^{-1} - beta_f/(2(2-lambda)) Q
///     - L' (Sigma^{-1} - beta_l/(2(2-lambda)) G)^{-1} L > 0
#[allow(clippy::too_many_arguments)]
pub fn verify_vu_condat_stepsizes(
    sigma: &Metric,
    gamma: &Metric,
    lambda: f64,
    beta_f: f64,
    q: &Metric,
    beta_l: f64,
    g: &Metric,
    l: &LinearMap,
) -> Result<StepsizeCheck> {
    if !(0.0 < lambda && lambda < 2.0) {
        return Err(TripdError::InvalidArgument(
            "relaxation parameter must lie in (0, 2)".into(),
        ));
    }
    let c = 1.0 / (2.0 * (2.0 - lambda));
    let a1 = sigma.inverse()?.to_dense() - g.to_dense() * (beta_l * c);
    if !is_spd_dense(&a1)? {
        let (curvature, witness) = min_curvature_direction(&a1);
        return Ok(StepsizeCheck::Violated { curvature, witness });
    }
    let a1_inv = nalgebra::Cholesky::new(a1)
        .expect("checked positive definite")
        .inverse();
    let ld = l.to_dense();
    let a2 =
        gamma.inverse()?.to_dense() - q.to_dense() * (beta_f * c) - ld.transpose() * a1_inv * ld;
    if is_spd_dense(&a2)? {
        Ok(StepsizeCheck::Ok)
    } else {
        let (curvature, witness) = min_curvature_direction(&a2);
        Ok(StepsizeCheck::Violated { curvature, witness })
    }
}

/// Competing sufficient condition used for the comparison benchmark, for
/// stepsizes Gamma = mu Q^{-1}, Sigma = nu G^{-1}:
/// requires lambda in (0, 1] and delta/(1+delta) > max(mu, nu)/2 with
/// delta = 1/(sqrt(nu mu) ||G^{-1/2} L Q^{-1/2}||) - 1.
pub fn verify_vu_condat_competing(mu: f64, nu: f64, lambda: f64, norm_glq: f64) -> bool {
    if !(0.0 < lambda && lambda <= 1.0) || mu <= 0.0 || nu <= 0.0 || norm_glq <= 0.0 {
        return false;
    }
    let delta = 1.0 / ((nu * mu).sqrt() * norm_glq) - 1.0;
    if delta <= -1.0 {
        return false;
    }
    delta / (1.0 + delta) > mu.max(nu) / 2.0
}

/// Largest admissible nu (up to `tol`) for both Vu-Condat stepsize
/// conditions, with G^{-1/2} L Q^{-1/2} = I, beta_f = beta_l = 1 and
/// Gamma = mu Q^{-1}, Sigma = nu G^{-1}. Returns (ours, competing).
pub fn vu_comparison_thresholds(mu: f64, lambda: f64, tol: f64) -> Result<(f64, f64)> {
    let dim = 2;
    let eye = Metric::identity(dim);
    let l = LinearMap::identity(dim);
    let ours = bisect_threshold(tol, |nu| {
        let sigma = Metric::scaled_identity(dim, nu);
        let gamma = Metric::scaled_identity(dim, mu);
        Ok(verify_vu_condat_stepsizes(&sigma, &gamma, lambda, 1.0, &eye, 1.0, &eye, &l)?.is_ok())
    })?;
    let theirs = bisect_threshold(tol, |nu| {
        Ok(verify_vu_condat_competing(mu, nu, lambda, 1.0))
    })?;
    Ok((ours, theirs))
}

fn bisect_threshold(tol: f64, ok: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    let mut lo = 1e-9;
    let mut hi = 4.0;
    if !ok(lo)? {
        return Ok(0.0);
    }
    while hi - lo > tol * 0.5 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solver configuration; `relaxation` holds the diagonal of Lambda over the
/// stacked (u, x) coordinates, entries in (0, 2).
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub sigma: Metric,
    pub gamma: Metric,
    pub relaxation: Option<DVector<f64>>,
    pub max_iters: u64,
    pub eps_res: f64,
    pub record_trace: bool,
}

impl SolverConfig {
    pub fn new(sigma: Metric, gamma: Metric) -> Self {
        Self {
            sigma,
            gamma,
            relaxation: None,
            max_iters: 100_000,
            eps_res: 1e-10,
            record_trace: false,
        }
    }

    pub fn with_tolerance(mut self, eps: f64) -> Self {
        assert!(eps > 0.0, "residual tolerance must be positive");
        self.eps_res = eps;
        self
    }

    pub fn with_max_iters(mut self, iters: u64) -> Self {
        self.max_iters = iters;
        self
    }

    pub fn with_relaxation(mut self, lambda: DVector<f64>) -> Self {
        self.relaxation = Some(lambda);
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_trace = true;
        self
    }
}

/// Why the driver loop stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// ||Tz - z||_S dropped to the tolerance.
    Tolerance,
    /// The iteration budget ran out.
    MaxIters,
    /// Both fired on the same pass.
    ToleranceAndMaxIters,
}

/// One recorded iteration.
#[derive(Clone, Debug)]
pub struct TraceRow {
    pub iter: u64,
    /// ||Tz - z||_S measured at the pre-step point.
    pub resid_s: f64,
    pub dist_s_to_ref: Option<f64>,
    /// cumulative forward products backing the accepted iterates
    pub l_applies: u64,
    pub elapsed_ns: u64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub point: PrimalDualPoint,
    pub iterations: u64,
    pub stop: StopReason,
    /// last measured operator residual ||Tz - z||_S
    pub final_residual: f64,
    pub l_applies: u64,
    pub trace: Option<Vec<TraceRow>>,
    /// iterate path including the starting point, recorded with the trace
    pub points: Option<Vec<PrimalDualPoint>>,
}

impl SolveReport {
    /// Writes the trace as CSV. Timing is opt-in because wall-clock values
    /// break byte-level reproducibility of otherwise deterministic runs.
    pub fn write_trace_csv(&self, w: &mut impl std::io::Write, include_timing: bool) -> Result<()> {
        if include_timing {
            writeln!(w, "iter,resid_s,dist_s_to_ref,l_applies,elapsed_ns")?;
        } else {
            writeln!(w, "iter,resid_s,dist_s_to_ref,l_applies")?;
        }
        for row in self.trace.as_deref().unwrap_or(&[]) {
            let dist = row
                .dist_s_to_ref
                .map(crate::csvfmt::float)
                .unwrap_or_default();
            if include_timing {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    row.iter,
                    crate::csvfmt::float(row.resid_s),
                    dist,
                    row.l_applies,
                    row.elapsed_ns
                )?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{}",
                    row.iter,
                    crate::csvfmt::float(row.resid_s),
                    dist,
                    row.l_applies
                )?;
            }
        }
        Ok(())
    }
}

/// Full solver: iterates the (optionally relaxed) operator until
/// ||Tz - z||_S <= eps_res or the iteration budget runs out.
///
/// The stepsize condition is verified once up front. A pass whose candidate
/// is bitwise identical to the current point is a stationary no-op: it is not
/// counted as an iteration and its forward product (identical to the cached
/// one) is not counted either, so an unrelaxed run always ends with
/// `l_applies == iterations + 1`.
pub fn solve(
    problem: &ProblemSpec,
    config: &SolverConfig,
    z0: PrimalDualPoint,
    reference: Option<&PrimalDualPoint>,
) -> Result<SolveReport> {
    match verify_stepsizes(problem, &config.sigma, &config.gamma)? {
        StepsizeCheck::Ok => {}
        StepsizeCheck::Violated { curvature, .. } => {
            return Err(TripdError::StepsizeViolated { curvature })
        }
    }
    let dm = assemble_metrics(problem, &config.sigma, &config.gamma)?;
    solve_prepared(problem, &dm, config, z0, reference)
}

/// Same as [`solve`] but reuses preassembled metrics (the verification is
/// the caller's responsibility).
pub fn solve_prepared(
    problem: &ProblemSpec,
    dm: &DerivedMetrics,
    config: &SolverConfig,
    z0: PrimalDualPoint,
    reference: Option<&PrimalDualPoint>,
) -> Result<SolveReport> {
    if let Some(lam) = &config.relaxation {
        validate_relaxation(lam, z0.dim())?;
    }
    let weights = ProxWeights::from_metrics(&dm.sigma_inv, &dm.gamma_inv)?;
    let start = std::time::Instant::now();

    let mut z = z0;
    let mut lx = problem.l.apply(&z.x);
    let mut l_applies: u64 = 1;
    let mut iterations: u64 = 0;
    let mut final_residual = f64::INFINITY;
    let mut trace = config.record_trace.then(Vec::new);
    let mut points = config.record_trace.then(|| vec![z.clone()]);
    let mut stop = StopReason::MaxIters;

    for pass in 1..=config.max_iters {
        let step =
            apply_tripd(problem, dm, &weights, &z, &lx).map_err(|e| contextualize(e, pass))?;
        let candidate = step.candidate;
        if !candidate.is_finite() || candidate.norm() > DIVERGENCE_NORM {
            return Err(TripdError::Diverged {
                iter: pass,
                norm: candidate.norm(),
            });
        }
        let delta = &candidate - &z;
        let resid = dm.s.norm(&delta);
        final_residual = resid;
        if candidate.u == z.u && candidate.x == z.x {
            // stationary point: nothing moved, nothing to count
            stop = StopReason::Tolerance;
            break;
        }
        let next = match &config.relaxation {
            Some(lam) => apply_relaxation(&z, &candidate, lam),
            None => candidate,
        };
        if config.relaxation.is_some() {
            // the cache must track the accepted point, not the candidate
            lx = problem.l.apply(&next.x);
            l_applies += 1;
        } else {
            lx = step.lx_candidate;
        }
        z = next;
        l_applies += 1;
        iterations = pass;
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                iter: pass,
                resid_s: resid,
                dist_s_to_ref: reference.map(|r| dm.s.norm(&(&z - r))),
                l_applies,
                elapsed_ns: start.elapsed().as_nanos() as u64,
            });
        }
        if let Some(p) = points.as_mut() {
            p.push(z.clone());
        }
        if resid <= config.eps_res {
            stop = if pass == config.max_iters {
                StopReason::ToleranceAndMaxIters
            } else {
                StopReason::Tolerance
            };
            break;
        }
    }
    if iterations == 0 && final_residual.is_infinite() {
        // zero-budget call: measure nothing, report the input
        final_residual = f64::NAN;
    }
    Ok(SolveReport {
        point: z,
        iterations,
        stop,
        final_residual,
        l_applies,
        trace,
        points,
    })
}

fn contextualize(e: TripdError, iter: u64) -> TripdError {
    match e {
        TripdError::ProxFailure { message, .. } => TripdError::ProxFailure { iter, message },
        TripdError::InvalidArgument(m) => TripdError::ProxFailure { iter, message: m },
        other => other,
    }
}
