//! Certificates and measurements: weighted distances, Fejér monitors,
//! prox-based KKT residuals, linear-rate estimation, and reference-solution
//! computation with an on-disk cache.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use sha2::{Digest, Sha256};

use crate::error::{Result, TripdError};
use crate::linmap::operator_norm;
use crate::metric::Metric;
use crate::problem::{assemble_metrics, PdQuadForm, PrimalDualPoint, ProblemSpec};
use crate::solver::{solve, SolverConfig, StopReason};

/// ||z - ref||_metric through the structured representation.
pub fn weighted_distance(
    z: &DVector<f64>,
    reference: &DVector<f64>,
    metric: &Metric,
) -> Result<f64> {
    if z.len() != reference.len() || z.len() != metric.dim() {
        return Err(TripdError::DimensionMismatch {
            expected: metric.dim(),
            got: z.len(),
            context: "weighted distance",
        });
    }
    Ok(metric.norm(&(z - reference)))
}

/// ||z - ref|| in a primal-dual quadratic form.
pub fn pd_weighted_distance(
    z: &PrimalDualPoint,
    reference: &PrimalDualPoint,
    form: &PdQuadForm,
) -> f64 {
    form.norm(&(z - reference))
}

/// Outcome of a Fejér monotonicity check over a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum FejerOutcome {
    Pass,
    /// First index k at which
    /// ||z^{k+1}-z*||_S^2 > ||z^k-z*||_S^2 - ||z^{k+1}-z^k||_W^2 + slack.
    FirstViolation {
        k: usize,
        excess: f64,
    },
}

/// Verifies the Fejér-type inequality along consecutive points of one run:
/// the squared S-distance to the reference must decrease by at least the
/// squared W-weighted step length (W = 2 Ptilde - S), up to `slack`.
/// A nonpositive `slack` defaults to 1e-9 relative to the initial squared
/// distance.
pub fn fejer_check(
    points: &[PrimalDualPoint],
    reference: &PrimalDualPoint,
    s: &PdQuadForm,
    w: &PdQuadForm,
    slack: f64,
) -> FejerOutcome {
    if points.len() < 2 {
        return FejerOutcome::Pass;
    }
    let d0 = s.quad_form(&(&points[0] - reference));
    let slack = if slack > 0.0 {
        slack
    } else {
        1e-9 * (1.0 + d0)
    };
    let mut prev = d0;
    for k in 0..points.len() - 1 {
        let next = s.quad_form(&(&points[k + 1] - reference));
        let step = w.quad_form(&(&points[k + 1] - &points[k]));
        let excess = next - (prev - step);
        if excess > slack {
            return FejerOutcome::FirstViolation { k, excess };
        }
        prev = next;
    }
    FejerOutcome::Pass
}

/// Prox-based fixed-point residual of the optimality system: applies one
/// unrelaxed triangular step with unit stepsizes and returns the Euclidean
/// norm of z - T_hat z. Zero exactly on primal-dual solutions.
pub fn kkt_residual(z: &PrimalDualPoint, problem: &ProblemSpec) -> Result<f64> {
    let dm = assemble_metrics(
        problem,
        &Metric::identity(problem.r),
        &Metric::identity(problem.n),
    )?;
    let t = crate::solver::tripd_step(z, problem, &dm)?;
    Ok((z - &t).norm())
}

/// Tail fit of log distance against iteration count.
#[derive(Clone, Debug)]
pub struct RateFit {
    /// fitted window as indices into the supplied points
    pub window: (usize, usize),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// exp(slope) when the slope is negative
    pub q_factor: Option<f64>,
    /// true when nonpositive/noise-floor distances forced a truncated window
    pub truncated: bool,
}

/// Distances below this are considered converged-below-noise and are
/// excluded from rate fits.
pub const RATE_NOISE_FLOOR: f64 = 1e-13;

/// Least-squares fit of log(dist) vs iteration over the trailing
/// `tail_fraction` of the trace. Needs at least 10 usable tail points.
pub fn fit_linear_rate(points: &[(f64, f64)], tail_fraction: f64) -> Result<RateFit> {
    if !(0.0 < tail_fraction && tail_fraction <= 1.0) {
        return Err(TripdError::InvalidArgument(
            "tail fraction must lie in (0, 1]".into(),
        ));
    }
    let tail_len = ((points.len() as f64) * tail_fraction).ceil() as usize;
    let start = points.len().saturating_sub(tail_len.max(1));
    let tail = &points[start..];
    let mut usable: Vec<(f64, f64)> = Vec::with_capacity(tail.len());
    let mut truncated = false;
    for &(k, d) in tail {
        if d > RATE_NOISE_FLOOR && d.is_finite() {
            usable.push((k, d.ln()));
        } else {
            truncated = true;
        }
    }
    if usable.len() < 10 {
        return Err(TripdError::InvalidArgument(format!(
            "rate fit needs at least 10 tail points above the noise floor (got {})",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mean_k = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let mut skk = 0.0;
    let mut sky = 0.0;
    for &(k, y) in &usable {
        skk += (k - mean_k) * (k - mean_k);
        sky += (k - mean_k) * (y - mean_y);
    }
    if skk == 0.0 {
        return Err(TripdError::InvalidArgument(
            "rate fit needs at least two distinct iteration indices".into(),
        ));
    }
    let slope = sky / skk;
    let intercept = mean_y - slope * mean_k;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(k, y) in &usable {
        let pred = intercept + slope * k;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot <= 1e-300 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        window: (start, points.len()),
        slope,
        intercept,
        r_squared,
        q_factor: (slope < 0.0).then(|| slope.exp()),
        truncated,
    })
}

/// A reference solution together with its certification status.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub point: PrimalDualPoint,
    /// achieved operator residual ||Tz - z||_S
    pub residual: f64,
    /// false when the iteration budget ran out before the tolerance
    pub certified: bool,
}

/// Iteration budget for reference computations.
pub const REFERENCE_MAX_ITERS: u64 = 10_000_000;

/// Admissible scalar stepsizes chosen from the problem data:
/// sigma = 1 / max(1, ||L||), gamma = 0.99 / (beta ||Q||/2 + sigma ||L||^2).
pub fn default_scalar_stepsizes(problem: &ProblemSpec) -> Result<(f64, f64)> {
    let norm_l = match operator_norm(&problem.l, 1e-10) {
        Ok(v) => v,
        Err(TripdError::PowerIterationNoConvergence { best, .. }) => best,
        Err(e) => return Err(e),
    };
    let norm_q = problem.f.q.operator_norm();
    let sigma = 1.0 / norm_l.max(1.0);
    let denom = problem.f.beta * norm_q / 2.0 + sigma * norm_l * norm_l;
    let gamma = 0.99 / denom.max(1e-12);
    Ok((sigma, gamma))
}

/// High-accuracy solution by running the full solver at tolerance `eps`
/// (default 1e-12 when nonpositive) with self-selected scalar stepsizes.
/// When the budget runs out the best point is returned, flagged uncertified.
pub fn reference_solution(problem: &ProblemSpec, eps: f64) -> Result<ReferenceSolution> {
    let eps = if eps > 0.0 { eps } else { 1e-12 };
    let (sigma, gamma) = default_scalar_stepsizes(problem)?;
    let config = SolverConfig::new(
        Metric::scaled_identity(problem.r, sigma),
        Metric::scaled_identity(problem.n, gamma),
    )
    .with_tolerance(eps)
    .with_max_iters(REFERENCE_MAX_ITERS);
    let report = solve(
        problem,
        &config,
        PrimalDualPoint::zeros(problem.r, problem.n),
        None,
    )?;
    Ok(ReferenceSolution {
        point: report.point,
        residual: report.final_residual,
        certified: !matches!(report.stop, StopReason::MaxIters),
    })
}

/// Hex digest used to key cached reference solutions by the problem
/// description that produced them.
pub fn content_key(description: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(description);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Disk-cached variant of [`reference_solution`]; `key` must identify the
/// problem content (see [`content_key`]).
pub fn reference_solution_cached(
    problem: &ProblemSpec,
    eps: f64,
    cache_dir: &Path,
    key: &str,
) -> Result<ReferenceSolution> {
    let path = cache_dir.join(format!("ref-{key}.txt"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Some(cached) = parse_cached(&text, problem.r, problem.n) {
            return Ok(cached);
        }
    }
    let sol = reference_solution(problem, eps)?;
    std::fs::create_dir_all(cache_dir)?;
    let mut buf = Vec::new();
    writeln!(buf, "r {} n {}", problem.r, problem.n)?;
    writeln!(
        buf,
        "residual {} certified {}",
        crate::csvfmt::float(sol.residual),
        sol.certified
    )?;
    for v in sol.point.u.iter().chain(sol.point.x.iter()) {
        writeln!(buf, "{}", crate::csvfmt::float(*v))?;
    }
    std::fs::write(&path, buf)?;
    Ok(sol)
}

fn parse_cached(text: &str, r: usize, n: usize) -> Option<ReferenceSolution> {
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next()?.split_whitespace().collect();
    if head.len() != 4 || head[1].parse::<usize>().ok()? != r || head[3].parse::<usize>().ok()? != n
    {
        return None;
    }
    let meta: Vec<&str> = lines.next()?.split_whitespace().collect();
    let residual: f64 = meta.get(1)?.parse().ok()?;
    let certified: bool = meta.get(3)?.parse().ok()?;
    let vals: Vec<f64> = lines
        .map(|l| l.trim().parse().ok())
        .collect::<Option<_>>()?;
    if vals.len() != r + n {
        return None;
    }
    Some(ReferenceSolution {
        point: PrimalDualPoint::new(
            DVector::from_vec(vals[..r].to_vec()),
            DVector::from_vec(vals[r..].to_vec()),
        ),
        residual,
        certified,
    })
}

/// Ordered convergence record; generic over what the iteration counter means
/// (solver iterations, simulator rounds keyed by transmissions, ...).
#[derive(Clone, Debug, Default)]
pub struct ConvergenceTrace {
    /// name of the distance metric recorded in `dist_to_ref`
    pub metric_name: String,
    pub records: Vec<TraceRecord>,
}

#[derive(Clone, Debug)]
pub struct TraceRecord {
    pub iter: u64,
    pub resid: f64,
    pub dist_to_ref: Option<f64>,
    pub transmissions: u64,
    pub elapsed_ns: u64,
}

impl ConvergenceTrace {
    pub fn new(metric_name: impl Into<String>) -> Self {
        Self {
            metric_name: metric_name.into(),
            records: Vec::new(),
        }
    }

    /// Appends a record, enforcing strictly increasing iteration indices and
    /// finite values.
    pub fn push(&mut self, rec: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.iter <= last.iter {
                return Err(TripdError::InvalidArgument(
                    "trace iterations must be strictly increasing".into(),
                ));
            }
        }
        if !rec.resid.is_finite() || rec.dist_to_ref.is_some_and(|d| !d.is_finite()) {
            return Err(TripdError::InvalidArgument(
                "trace values must be finite".into(),
            ));
        }
        self.records.push(rec);
        Ok(())
    }

    /// (transmissions, dist) pairs for rate fits keyed by communication cost.
    pub fn dist_by_transmissions(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.dist_to_ref.map(|d| (r.transmissions as f64, d)))
            .collect()
    }

    /// (iter, dist) pairs for rate fits keyed by iteration.
    pub fn dist_by_iteration(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.dist_to_ref.map(|d| (r.iter as f64, d)))
            .collect()
    }

    pub fn write_csv(&self, w: &mut impl Write, include_timing: bool) -> Result<()> {
        if include_timing {
            writeln!(w, "iter,resid,dist_to_ref,transmissions,elapsed_ns")?;
        } else {
            writeln!(w, "iter,resid,dist_to_ref,transmissions")?;
        }
        for r in &self.records {
            let dist = r.dist_to_ref.map(crate::csvfmt::float).unwrap_or_default();
            if include_timing {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.iter,
                    crate::csvfmt::float(r.resid),
                    dist,
                    r.transmissions,
                    r.elapsed_ns
                )?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{}",
                    r.iter,
                    crate::csvfmt::float(r.resid),
                    dist,
                    r.transmissions
                )?;
            }
        }
        Ok(())
    }
}

/// Writes a key: value summary block.
pub fn write_summary(w: &mut impl Write, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(w, "{k}: {v}")?;
    }
    Ok(())
}
