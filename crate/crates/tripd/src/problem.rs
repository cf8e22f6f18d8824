//! Problem data: smooth terms, prox oracles, coupling maps, and the derived
//! matrices consumed by the solvers and the convergence monitors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TripdError};
use crate::linmap::LinearMap;
use crate::metric::{is_spd, is_spd_dense, Metric};
use crate::prox::ProxFunction;
use crate::rng::Xoshiro256pp;

type GradOracle = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type ValueOracle = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Convex smooth term with a gradient that is `beta`-Lipschitz with respect
/// to the metric `q`:  ||grad f(x) - grad f(y)||_{Q^{-1}} <= beta ||x - y||_Q.
/// `beta = 0` encodes a constant gradient.
#[derive(Clone)]
pub struct SmoothTerm {
    dim: usize,
    grad: Arc<GradOracle>,
    value: Option<Arc<ValueOracle>>,
    pub q: Metric,
    pub beta: f64,
}

impl std::fmt::Debug for SmoothTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SmoothTerm[dim {}, beta {}]", self.dim, self.beta)
    }
}

impl SmoothTerm {
    pub fn new<G>(dim: usize, grad: G, q: Metric, beta: f64) -> Self
    where
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(beta >= 0.0, "Lipschitz constant must be nonnegative");
        assert_eq!(q.dim(), dim, "Lipschitz metric dimension mismatch");
        Self {
            dim,
            grad: Arc::new(grad),
            value: None,
            q,
            beta,
        }
    }

    pub fn with_value<F>(mut self, value: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.value = Some(Arc::new(value));
        self
    }

    /// f == 0.
    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |x| DVector::zeros(x.len()), Metric::identity(dim), 0.0).with_value(|_| 0.0)
    }

    /// f(x) = 1/2 x'Ax + b'x for symmetric positive semidefinite A;
    /// beta is taken as the largest eigenvalue of A (with Q = I).
    pub fn quadratic(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let dim = b.len();
        if a.nrows() != dim || a.ncols() != dim {
            return Err(TripdError::DimensionMismatch {
                expected: dim,
                got: a.nrows(),
                context: "quadratic smooth term",
            });
        }
        let eig = nalgebra::SymmetricEigen::new(a.clone());
        let beta = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v));
        let a2 = a.clone();
        let b2 = b.clone();
        Ok(
            Self::new(dim, move |x| &a * x + &b, Metric::identity(dim), beta)
                .with_value(move |x| 0.5 * x.dot(&(&a2 * x)) + b2.dot(x)),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (self.grad)(x)
    }

    pub fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.value.as_ref().map(|f| f(x))
    }

    /// Checks the metric Lipschitz bound on random probe pairs.
    pub fn lipschitz_probe(&self, pairs: usize, seed: u64) -> Result<()> {
        let q_dense = self.q.to_dense();
        let q_inv = self
            .q
            .inverse()
            .map_err(|_| TripdError::NotPositiveDefinite {
                context: "Lipschitz metric",
            })?;
        let mut rng = Xoshiro256pp::from_seed(seed);
        for _ in 0..pairs {
            let x = DVector::from_fn(self.dim, |_, _| 3.0 * rng.next_normal());
            let y = DVector::from_fn(self.dim, |_, _| 3.0 * rng.next_normal());
            let dg = self.grad(&x) - self.grad(&y);
            let lhs = q_inv.quad_form(&dg).max(0.0).sqrt();
            let dxy = &x - &y;
            let rhs = dxy.dot(&(&q_dense * &dxy)).max(0.0).sqrt();
            if lhs > self.beta * rhs + 1e-9 * (1.0 + rhs) {
                return Err(TripdError::InvalidArgument(format!(
                    "gradient Lipschitz probe failed: {lhs:.6e} > {:.6e}",
                    self.beta * rhs
                )));
            }
            if self.beta == 0.0 && dg.norm() > 1e-12 * (1.0 + rhs) {
                return Err(TripdError::InvalidArgument(
                    "beta = 0 requires a constant gradient".into(),
                ));
            }
        }
        Ok(())
    }

    /// Central finite-difference check of the gradient against the value
    /// oracle; relative error bound 1e-6 on random probes.
    pub fn gradient_finite_difference_probe(&self, probes: usize, seed: u64) -> Result<()> {
        let value = self.value.as_ref().ok_or_else(|| {
            TripdError::InvalidArgument("finite-difference probe needs a value oracle".into())
        })?;
        let mut rng = Xoshiro256pp::from_seed(seed);
        let h = 1e-5;
        for _ in 0..probes {
            let x = DVector::from_fn(self.dim, |_, _| 2.0 * rng.next_normal());
            let g = self.grad(&x);
            let mut fd = DVector::zeros(self.dim);
            let mut xp = x.clone();
            for i in 0..self.dim {
                let xi = x[i];
                xp[i] = xi + h;
                let fp = value(&xp);
                xp[i] = xi - h;
                let fm = value(&xp);
                xp[i] = xi;
                fd[i] = (fp - fm) / (2.0 * h);
            }
            let err = (&g - &fd).norm();
            if err > 1e-6 * (1.0 + g.norm()) {
                return Err(TripdError::InvalidArgument(format!(
                    "gradient/finite-difference mismatch: {err:.3e} relative to {:.3e}",
                    g.norm()
                )));
            }
        }
        Ok(())
    }
}

/// The structured problem: minimize f(x) + g(x) + h(Lx).
///
/// `h` enters through the prox of its conjugate evaluated under the dual
/// stepsize metric.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub f: SmoothTerm,
    pub g_prox: ProxFunction,
    pub h_conj_prox: ProxFunction,
    pub l: LinearMap,
    pub n: usize,
    pub r: usize,
}

impl ProblemSpec {
    pub fn new(
        f: SmoothTerm,
        g_prox: ProxFunction,
        h_conj_prox: ProxFunction,
        l: LinearMap,
    ) -> Result<Self> {
        let n = l.in_dim();
        let r = l.out_dim();
        if f.dim() != n {
            return Err(TripdError::DimensionMismatch {
                expected: n,
                got: f.dim(),
                context: "smooth term dimension",
            });
        }
        if g_prox.dim() != n {
            return Err(TripdError::DimensionMismatch {
                expected: n,
                got: g_prox.dim(),
                context: "g prox dimension",
            });
        }
        if h_conj_prox.dim() != r {
            return Err(TripdError::DimensionMismatch {
                expected: r,
                got: h_conj_prox.dim(),
                context: "h* prox dimension",
            });
        }
        Ok(Self {
            f,
            g_prox,
            h_conj_prox,
            l,
            n,
            r,
        })
    }
}

/// Primal-dual iterate z = (u, x); the dual block comes first in the stacked
/// coordinate ordering used by partitions and weighted norms.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualPoint {
    pub u: DVector<f64>,
    pub x: DVector<f64>,
}

impl PrimalDualPoint {
    pub fn new(u: DVector<f64>, x: DVector<f64>) -> Self {
        Self { u, x }
    }

    pub fn zeros(r: usize, n: usize) -> Self {
        Self {
            u: DVector::zeros(r),
            x: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len() + self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v.is_finite()) && self.x.iter().all(|v| v.is_finite())
    }

    /// Stacked vector (u, x).
    pub fn to_vector(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, self.u.len()).copy_from(&self.u);
        out.rows_mut(self.u.len(), self.x.len()).copy_from(&self.x);
        out
    }

    pub fn from_vector(z: &DVector<f64>, r: usize) -> Self {
        Self {
            u: z.rows(0, r).clone_owned(),
            x: z.rows(r, z.len() - r).clone_owned(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.u.norm_squared() + self.x.norm_squared()).sqrt()
    }
}

impl std::ops::Sub for &PrimalDualPoint {
    type Output = PrimalDualPoint;
    fn sub(self, rhs: &PrimalDualPoint) -> PrimalDualPoint {
        PrimalDualPoint {
            u: &self.u - &rhs.u,
            x: &self.x - &rhs.x,
        }
    }
}

/// Quadratic form on primal-dual space of the shape
/// [uu, c L; c L', xx], evaluated through the structured blocks.
#[derive(Clone, Debug)]
pub struct PdQuadForm {
    pub uu: Metric,
    pub xx: Metric,
    /// coefficient multiplying L in the off-diagonal block
    pub l_coeff: f64,
    l: LinearMap,
}

impl PdQuadForm {
    fn new(uu: Metric, xx: Metric, l_coeff: f64, l: LinearMap) -> Self {
        Self { uu, xx, l_coeff, l }
    }

    /// z' M z = u'(uu)u + 2c u'(Lx) + x'(xx)x.
    pub fn quad_form(&self, z: &PrimalDualPoint) -> f64 {
        let mut q = self.uu.quad_form(&z.u) + self.xx.quad_form(&z.x);
        if self.l_coeff != 0.0 {
            q += 2.0 * self.l_coeff * z.u.dot(&self.l.apply(&z.x));
        }
        q
    }

    /// ||z||_M, clamping small negative round-off.
    pub fn norm(&self, z: &PrimalDualPoint) -> f64 {
        self.quad_form(z).max(0.0).sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let r = self.uu.dim();
        let n = self.xx.dim();
        let mut out = DMatrix::zeros(r + n, r + n);
        out.view_mut((0, 0), (r, r)).copy_from(&self.uu.to_dense());
        out.view_mut((r, r), (n, n)).copy_from(&self.xx.to_dense());
        if self.l_coeff != 0.0 {
            let ld = self.l.to_dense() * self.l_coeff;
            out.view_mut((0, r), (r, n)).copy_from(&ld);
            out.view_mut((r, 0), (n, r)).copy_from(&ld.transpose());
        }
        out
    }
}

/// Stepsize matrices and every derived matrix the steps and monitors use.
///
/// With S = blkdiag(Sigma^{-1}, Gamma^{-1}):
///   P       = [Sigma^{-1},  L/2;  L'/2, Gamma^{-1}]
///   K       = [0, -L/2;  L'/2, 0]            (skew)
///   H       = P + K = [Sigma^{-1}, 0;  L', Gamma^{-1}]   (lower triangular)
///   Ptilde  = [Sigma^{-1}, -L/2; -L'/2, Gamma^{-1} - (beta_f/4) Q]
/// and 2 Ptilde - S is the certificate weight of the Fejér inequality.
#[derive(Clone, Debug)]
pub struct DerivedMetrics {
    pub sigma: Metric,
    pub gamma: Metric,
    pub sigma_inv: Metric,
    pub gamma_inv: Metric,
    pub s: PdQuadForm,
    pub p: PdQuadForm,
    pub p_tilde: PdQuadForm,
    pub two_p_tilde_minus_s: PdQuadForm,
    l: LinearMap,
    beta_f: f64,
    q: Metric,
}

impl DerivedMetrics {
    pub fn l(&self) -> &LinearMap {
        &self.l
    }

    pub fn beta_f(&self) -> f64 {
        self.beta_f
    }

    pub fn q(&self) -> &Metric {
        &self.q
    }

    /// K = [0, -L/2; L'/2, 0] materialized (skew-symmetric by construction;
    /// kept dense because it is only used by verification code).
    pub fn k_dense(&self) -> DMatrix<f64> {
        let r = self.sigma.dim();
        let n = self.gamma.dim();
        let mut out = DMatrix::zeros(r + n, r + n);
        let half_l = self.l.to_dense() * 0.5;
        out.view_mut((0, r), (r, n)).copy_from(&(-&half_l));
        out.view_mut((r, 0), (n, r)).copy_from(&half_l.transpose());
        out
    }

    /// H = P + K, lower block-triangular.
    pub fn h_dense(&self) -> DMatrix<f64> {
        self.p.to_dense() + self.k_dense()
    }
}

/// Assembles S, P, K, H, Ptilde and 2 Ptilde - S from the stepsizes.
/// Structure is preserved wherever the inputs are (block-)diagonal.
pub fn assemble_metrics(
    problem: &ProblemSpec,
    sigma: &Metric,
    gamma: &Metric,
) -> Result<DerivedMetrics> {
    if sigma.dim() != problem.r {
        return Err(TripdError::DimensionMismatch {
            expected: problem.r,
            got: sigma.dim(),
            context: "dual stepsize matrix",
        });
    }
    if gamma.dim() != problem.n {
        return Err(TripdError::DimensionMismatch {
            expected: problem.n,
            got: gamma.dim(),
            context: "primal stepsize matrix",
        });
    }
    if !is_spd(sigma)? {
        return Err(TripdError::NotPositiveDefinite {
            context: "dual stepsize matrix",
        });
    }
    if !is_spd(gamma)? {
        return Err(TripdError::NotPositiveDefinite {
            context: "primal stepsize matrix",
        });
    }
    let sigma_inv = sigma.inverse()?;
    let gamma_inv = gamma.inverse()?;
    let beta_f = problem.f.beta;
    let q = problem.f.q.clone();
    let l = problem.l.clone();

    // Gamma^{-1} - (beta_f/4) Q and Gamma^{-1} - (beta_f/2) Q, structure kept
    // when both terms are diagonal.
    let xx_quarter = metric_axpy(&gamma_inv, -beta_f / 4.0, &q)?;
    let xx_half = metric_axpy(&gamma_inv, -beta_f / 2.0, &q)?;

    let s = PdQuadForm::new(sigma_inv.clone(), gamma_inv.clone(), 0.0, l.clone());
    let p = PdQuadForm::new(sigma_inv.clone(), gamma_inv.clone(), 0.5, l.clone());
    let p_tilde = PdQuadForm::new(sigma_inv.clone(), xx_quarter, -0.5, l.clone());
    let two_p_tilde_minus_s = PdQuadForm::new(sigma_inv.clone(), xx_half, -1.0, l.clone());

    Ok(DerivedMetrics {
        sigma: sigma.clone(),
        gamma: gamma.clone(),
        sigma_inv,
        gamma_inv,
        s,
        p,
        p_tilde,
        two_p_tilde_minus_s,
        l,
        beta_f,
        q,
    })
}

/// a + coeff * b as a Metric, diagonal when both are diagonal.
fn metric_axpy(a: &Metric, coeff: f64, b: &Metric) -> Result<Metric> {
    if a.dim() != b.dim() {
        return Err(TripdError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
            context: "metric sum",
        });
    }
    if coeff == 0.0 {
        return Ok(a.clone());
    }
    match (a.diagonal(), b.diagonal()) {
        (Some(da), Some(db)) => Ok(Metric::from_diagonal(da + db * coeff)),
        _ => Metric::from_dense(a.to_dense() + b.to_dense() * coeff),
    }
}

/// Checks whether the assembled certificate weight 2 Ptilde - S is positive
/// definite (dense route; used by tests and small problems).
pub fn certificate_weight_is_spd(dm: &DerivedMetrics) -> Result<bool> {
    is_spd_dense(&dm.two_p_tilde_minus_s.to_dense())
}
