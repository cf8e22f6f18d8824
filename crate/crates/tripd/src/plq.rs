//! Randomized piecewise linear-quadratic test instances.
//!
//! Quadratics, l1 terms and box indicators are all piecewise
//! linear-quadratic, so these instances fall in the class for which the
//! fixed-point residual operator is globally metrically subregular and the
//! iteration converges linearly. They back the empirical rate and
//! monotonicity suites.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linmap::{operator_norm, LinearMap};
use crate::metric::Metric;
use crate::problem::{ProblemSpec, SmoothTerm};
use crate::prox::{prox_box, prox_conjugate, prox_l1, ProxFunction};
use crate::rng::Xoshiro256pp;

/// A generated instance together with admissible scalar stepsizes.
#[derive(Clone, Debug)]
pub struct PlqInstance {
    pub problem: ProblemSpec,
    pub sigma: Metric,
    pub gamma: Metric,
    pub sigma_scalar: f64,
    pub gamma_scalar: f64,
    pub norm_l: f64,
}

/// Draws a random instance with smooth quadratic f, a random nonsmooth g
/// (l1, box or zero), a random h (l1, box or zero, entering through the
/// prox of its conjugate) and a dense coupling map. The returned stepsizes
/// satisfy the verification condition by construction.
pub fn random_plq_instance(n: usize, r: usize, seed: u64) -> Result<PlqInstance> {
    let mut rng = Xoshiro256pp::from_seed(seed);
    // positive semidefinite Hessian with a controlled largest eigenvalue
    let raw = DMatrix::from_fn(n, n, |_, _| rng.next_normal() / (n as f64).sqrt());
    let hess = &raw * raw.transpose();
    let lin = DVector::from_fn(n, |_, _| rng.next_normal());
    let f = SmoothTerm::quadratic(hess, lin)?;

    let g_prox = match rng.next_index(3) {
        0 => prox_l1(n, 0.1 + rng.next_f64()),
        1 => {
            let lo = DVector::from_fn(n, |_, _| -1.0 - rng.next_f64());
            let hi = DVector::from_fn(n, |_, _| 1.0 + rng.next_f64());
            prox_box(lo, hi)?
        }
        _ => ProxFunction::zero(n),
    };
    let h_conj_prox = match rng.next_index(3) {
        // h = w ||.||_1: h* is the indicator of the w-ball, i.e. a clamp
        0 => {
            let w = 0.1 + rng.next_f64();
            prox_box(DVector::from_element(r, -w), DVector::from_element(r, w))?
        }
        // h = indicator of a box: h* through the Moreau identity
        1 => {
            let lo = DVector::from_fn(r, |_, _| -0.5 - rng.next_f64());
            let hi = DVector::from_fn(r, |_, _| 0.5 + rng.next_f64());
            prox_conjugate(prox_box(lo, hi)?)
        }
        // h == 0: h* is the indicator of the origin
        _ => ProxFunction::point_indicator(r),
    };
    let l = LinearMap::dense(DMatrix::from_fn(r, n, |_, _| {
        rng.next_normal() / (n as f64).sqrt()
    }));
    let norm_l = operator_norm(&l, 1e-10)?;
    let problem = ProblemSpec::new(f, g_prox, h_conj_prox, l)?;

    let sigma_scalar = (0.5 + rng.next_f64()) / norm_l.max(1e-6);
    let gamma_scalar = 0.95 / (problem.f.beta / 2.0 + sigma_scalar * norm_l * norm_l).max(1e-12);
    Ok(PlqInstance {
        sigma: Metric::scaled_identity(r, sigma_scalar),
        gamma: Metric::scaled_identity(n, gamma_scalar),
        sigma_scalar,
        gamma_scalar,
        norm_l,
        problem,
    })
}

/// Stepsizes that deliberately break the verification condition:
/// gamma is rescaled so that gamma * sigma * ||L||^2 = 4.
pub fn violated_stepsizes(inst: &PlqInstance) -> (Metric, Metric) {
    let norm2 = (inst.norm_l * inst.norm_l).max(1e-12);
    let gamma_bad = 4.0 / (inst.sigma_scalar * norm2);
    (
        Metric::scaled_identity(inst.problem.r, inst.sigma_scalar),
        Metric::scaled_identity(inst.problem.n, gamma_bad),
    )
}
