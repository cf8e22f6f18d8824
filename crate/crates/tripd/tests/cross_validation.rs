//! Cross-validation between independent solution routes: the primal-dual
//! operator iteration and the dense interior-point QP solver (itself checked
//! against an enumeration oracle) must agree on problems both can express.

use nalgebra::{DMatrix, DVector};
use tripd::linmap::LinearMap;
use tripd::metric::Metric;
use tripd::problem::{assemble_metrics, PrimalDualPoint, ProblemSpec, SmoothTerm};
use tripd::prox::{prox_box, prox_conjugate, ProxFunction};
use tripd::qp::{solve_box_qp, BoxQp};
use tripd::rng::Xoshiro256pp;
use tripd::solver::{solve_prepared, SolverConfig};

fn random_strongly_convex(n: usize, rng: &mut Xoshiro256pp) -> (DMatrix<f64>, DVector<f64>) {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.next_normal());
    let h = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.3;
    let c = DVector::from_fn(n, |_, _| 2.0 * rng.next_normal());
    (h, c)
}

/// Box-constrained QP solved two ways: the box as the g-term prox, and the
/// interior-point route.
#[test]
fn box_qp_matches_interior_point_via_g_term() {
    let mut rng = Xoshiro256pp::from_seed(90_001);
    for trial in 0..10 {
        let n = 5;
        let (h, c) = random_strongly_convex(n, &mut rng);
        let lo = DVector::from_element(n, -1.0);
        let hi = DVector::from_element(n, 1.5);

        let qp = BoxQp {
            h: h.clone(),
            c: c.clone(),
            e: DMatrix::zeros(0, n),
            d: DVector::zeros(0),
            lo: lo.clone(),
            hi: hi.clone(),
        };
        let want = solve_box_qp(&qp).unwrap();

        let f = SmoothTerm::quadratic(h, c).unwrap();
        let problem = ProblemSpec::new(
            f,
            prox_box(lo, hi).unwrap(),
            ProxFunction::point_indicator(1),
            LinearMap::zero(1, n),
        )
        .unwrap();
        let sigma = Metric::identity(1);
        let gamma = Metric::scaled_identity(n, 0.95 / (problem.f.beta / 2.0));
        let dm = assemble_metrics(&problem, &sigma, &gamma).unwrap();
        let cfg = SolverConfig::new(sigma.clone(), gamma.clone())
            .with_tolerance(1e-12)
            .with_max_iters(500_000);
        let report =
            solve_prepared(&problem, &dm, &cfg, PrimalDualPoint::zeros(1, n), None).unwrap();
        let dev = (&report.point.x - &want).amax();
        assert!(dev < 1e-6, "trial {trial}: routes disagree by {dev:.3e}");
    }
}

/// The same QP with the box moved into the h-term (through the conjugate
/// prox and an identity coupling map).
#[test]
fn box_qp_matches_interior_point_via_h_term() {
    let mut rng = Xoshiro256pp::from_seed(90_002);
    for trial in 0..10 {
        let n = 4;
        let (h, c) = random_strongly_convex(n, &mut rng);
        let lo = DVector::from_element(n, -0.8);
        let hi = DVector::from_element(n, 0.6);

        let qp = BoxQp {
            h: h.clone(),
            c: c.clone(),
            e: DMatrix::zeros(0, n),
            d: DVector::zeros(0),
            lo: lo.clone(),
            hi: hi.clone(),
        };
        let want = solve_box_qp(&qp).unwrap();

        let f = SmoothTerm::quadratic(h, c).unwrap();
        let problem = ProblemSpec::new(
            f,
            ProxFunction::zero(n),
            prox_conjugate(prox_box(lo, hi).unwrap()),
            LinearMap::identity(n),
        )
        .unwrap();
        // gamma (beta/2 + sigma ||L||^2) < 1 with ||L|| = 1
        let sigma = Metric::scaled_identity(n, 1.0);
        let gamma = Metric::scaled_identity(n, 0.95 / (problem.f.beta / 2.0 + 1.0));
        let dm = assemble_metrics(&problem, &sigma, &gamma).unwrap();
        let cfg = SolverConfig::new(sigma.clone(), gamma.clone())
            .with_tolerance(1e-12)
            .with_max_iters(500_000);
        let report =
            solve_prepared(&problem, &dm, &cfg, PrimalDualPoint::zeros(n, n), None).unwrap();
        let dev = (&report.point.x - &want).amax();
        assert!(dev < 1e-6, "trial {trial}: routes disagree by {dev:.3e}");
    }
}

/// Equality plus box constraints: dynamics-style affine indicator as the
/// g-term, the box through the h-term, against the interior-point route.
#[test]
fn equality_and_box_qp_matches_interior_point() {
    let mut rng = Xoshiro256pp::from_seed(90_003);
    for trial in 0..10 {
        let n = 6;
        let m = 2;
        let (h, c) = random_strongly_convex(n, &mut rng);
        let e = DMatrix::from_fn(m, n, |_, _| rng.next_normal());
        let interior = DVector::from_fn(n, |_, _| 0.2 * rng.next_normal());
        let d = &e * &interior;
        let lo = DVector::from_element(n, -2.0);
        let hi = DVector::from_element(n, 2.0);

        let qp = BoxQp {
            h: h.clone(),
            c: c.clone(),
            e: e.clone(),
            d: d.clone(),
            lo: lo.clone(),
            hi: hi.clone(),
        };
        let want = solve_box_qp(&qp).unwrap();

        let f = SmoothTerm::quadratic(h, c).unwrap();
        let problem = ProblemSpec::new(
            f,
            tripd::prox::project_affine(&LinearMap::dense(e), d).unwrap(),
            prox_conjugate(prox_box(lo, hi).unwrap()),
            LinearMap::identity(n),
        )
        .unwrap();
        let sigma = Metric::scaled_identity(n, 1.0);
        let gamma = Metric::scaled_identity(n, 0.95 / (problem.f.beta / 2.0 + 1.0));
        let dm = assemble_metrics(&problem, &sigma, &gamma).unwrap();
        let cfg = SolverConfig::new(sigma.clone(), gamma.clone())
            .with_tolerance(1e-12)
            .with_max_iters(1_000_000);
        let report =
            solve_prepared(&problem, &dm, &cfg, PrimalDualPoint::zeros(n, n), None).unwrap();
        let dev = (&report.point.x - &want).amax();
        assert!(dev < 1e-5, "trial {trial}: routes disagree by {dev:.3e}");
    }
}
