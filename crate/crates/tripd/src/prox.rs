//! Proximal operators and projections.
//!
//! The prox of `f` relative to a diagonal metric `V = diag(v)` is
//! `argmin_z f(z) + 1/2 ||x - z||_V^2`. Every oracle in the catalog takes the
//! point and the diagonal weights `v`; only diagonal metrics are supported,
//! which covers the block-coordinate assumptions and the multi-agent lifting.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, TripdError};
use crate::linmap::LinearMap;

type ProxOracle = dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync;
type ValueOracle = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// A proximable function: dimension, prox oracle, optional value oracle.
#[derive(Clone)]
pub struct ProxFunction {
    dim: usize,
    label: String,
    prox: Arc<ProxOracle>,
    value: Option<Arc<ValueOracle>>,
}

impl std::fmt::Debug for ProxFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ProxFunction[{}, dim {}]", self.label, self.dim)
    }
}

impl ProxFunction {
    pub fn new<F>(dim: usize, label: impl Into<String>, prox: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static,
    {
        Self {
            dim,
            label: label.into(),
            prox: Arc::new(prox),
            value: None,
        }
    }

    pub fn with_value<F>(mut self, value: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.value = Some(Arc::new(value));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Evaluates prox_f^{diag(v)}(x).
    pub fn prox(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(TripdError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
                context: "prox input point",
            });
        }
        if v.len() != self.dim {
            return Err(TripdError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
                context: "prox metric weights",
            });
        }
        (self.prox)(x, v)
    }

    pub fn value(&self, x: &DVector<f64>) -> Option<f64> {
        self.value.as_ref().map(|f| f(x))
    }

    /// f == 0, whose prox is the identity.
    pub fn zero(dim: usize) -> Self {
        Self::new(dim, "zero", |x, _| Ok(x.clone())).with_value(|_| 0.0)
    }

    /// Separable sum of parts laid out consecutively: each part's prox is
    /// applied to its slice with the matching weight slice.
    pub fn separable_concat(parts: Vec<ProxFunction>) -> Self {
        let dim = parts.iter().map(|p| p.dim()).sum();
        ProxFunction::new(dim, "separable", move |x, v| {
            let mut out = DVector::zeros(x.len());
            let mut off = 0;
            for p in &parts {
                let d = p.dim();
                let seg = p.prox(&x.rows(off, d).clone_owned(), &v.rows(off, d).clone_owned())?;
                out.rows_mut(off, d).copy_from(&seg);
                off += d;
            }
            Ok(out)
        })
    }

    /// Indicator of the origin; its prox maps everything to 0.
    pub fn point_indicator(dim: usize) -> Self {
        Self::new(dim, "indicator{0}", |x, _| Ok(DVector::zeros(x.len())))
    }
}

/// Clamp-to-box prox for the indicator of [lo, hi]; separable, hence
/// independent of the diagonal metric weights. Infinite bounds leave the
/// coordinate free.
pub fn prox_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<ProxFunction> {
    if lo.len() != hi.len() {
        return Err(TripdError::DimensionMismatch {
            expected: lo.len(),
            got: hi.len(),
            context: "box bounds",
        });
    }
    for i in 0..lo.len() {
        if lo[i] > hi[i] {
            return Err(TripdError::InvalidArgument(format!(
                "box bound crossing at coordinate {i}: lo {} > hi {}",
                lo[i], hi[i]
            )));
        }
    }
    let dim = lo.len();
    let (lo_c, hi_c) = (lo.clone(), hi.clone());
    Ok(ProxFunction::new(dim, "box", move |x, _| {
        Ok(DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i])))
    })
    .with_value(move |x| {
        let inside = (0..x.len()).all(|i| x[i] >= lo_c[i] - 1e-12 && x[i] <= hi_c[i] + 1e-12);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }))
}

/// l1 norm `weight * ||x||_1`; prox is the soft threshold. The tie at the
/// kink maps to exactly 0.
pub fn prox_l1(dim: usize, weight: f64) -> ProxFunction {
    assert!(weight >= 0.0);
    ProxFunction::new(dim, "l1", move |x, v| {
        Ok(DVector::from_fn(x.len(), |i, _| {
            let t = weight / v[i];
            if x[i] > t {
                x[i] - t
            } else if x[i] < -t {
                x[i] + t
            } else {
                0.0
            }
        }))
    })
    .with_value(move |x| weight * x.iter().map(|a| a.abs()).sum::<f64>())
}

/// Weighted projection onto the affine set {z | Ez = b}.
///
/// A Cholesky factor of E V^{-1} E' for the metric bound at construction is
/// cached; calls must use weights proportional to the bound ones (projection
/// onto an affine set is invariant under uniform scaling of the metric).
/// Rebuild with different weights by constructing a new instance.
pub struct AffineProjection {
    e: DMatrix<f64>,
    b: DVector<f64>,
    bound_weights: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl AffineProjection {
    /// Euclidean-metric projection (unit weights).
    pub fn new(e: &LinearMap, b: DVector<f64>) -> Result<Self> {
        Self::with_weights(e, b, DVector::from_element(e.in_dim(), 1.0))
    }

    /// V-weighted projection with V = diag(weights).
    pub fn with_weights(e: &LinearMap, b: DVector<f64>, weights: DVector<f64>) -> Result<Self> {
        if b.len() != e.out_dim() {
            return Err(TripdError::DimensionMismatch {
                expected: e.out_dim(),
                got: b.len(),
                context: "affine offset",
            });
        }
        if weights.len() != e.in_dim() {
            return Err(TripdError::DimensionMismatch {
                expected: e.in_dim(),
                got: weights.len(),
                context: "affine projection weights",
            });
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(TripdError::InvalidArgument(
                "projection metric weights must be positive".into(),
            ));
        }
        let ed = e.to_dense();
        // E V^{-1} E'
        let mut evi = ed.clone();
        for j in 0..evi.ncols() {
            let w = weights[j];
            for i in 0..evi.nrows() {
                evi[(i, j)] /= w;
            }
        }
        let gram = &evi * ed.transpose();
        let chol = Cholesky::new(gram).ok_or(TripdError::InvalidArgument(
            "affine system is rank deficient beyond tolerance".into(),
        ))?;
        Ok(Self {
            e: ed,
            b,
            bound_weights: weights,
            chol,
        })
    }

    /// Projects `z`; `weights` must be a positive multiple of the bound ones.
    pub fn project(&self, z: &DVector<f64>, weights: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_weights(weights)?;
        let resid = &self.e * z - &self.b;
        let nu = self.chol.solve(&resid);
        let mut corr = self.e.transpose() * nu;
        for i in 0..corr.len() {
            corr[i] /= self.bound_weights[i];
        }
        let out = z - corr;
        // contract: the result satisfies the constraint
        let post = (&self.e * &out - &self.b).norm();
        let tol = 1e-10 * (1.0 + self.b.norm());
        if post > tol {
            return Err(TripdError::InvalidArgument(format!(
                "affine projection residual {post:.3e} exceeds {tol:.3e}"
            )));
        }
        Ok(out)
    }

    fn check_weights(&self, weights: &DVector<f64>) -> Result<()> {
        if weights.len() != self.bound_weights.len() {
            return Err(TripdError::DimensionMismatch {
                expected: self.bound_weights.len(),
                got: weights.len(),
                context: "affine projection weights",
            });
        }
        let ratio = weights[0] / self.bound_weights[0];
        for i in 0..weights.len() {
            if (weights[i] - ratio * self.bound_weights[i]).abs() > 1e-12 * (1.0 + weights[i].abs())
            {
                return Err(TripdError::InvalidArgument(
                    "affine projection called with weights not proportional to the cached \
                     factorization; rebuild the projection explicitly"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// Wraps the projection as a catalog entry.
    pub fn into_prox(self) -> ProxFunction {
        let dim = self.e.ncols();
        let me = Arc::new(self);
        ProxFunction::new(dim, "affine", move |x, v| me.project(x, v))
    }
}

/// Projects onto the affine set {z | Ez = b} (Euclidean metric) as a catalog
/// prox entry.
pub fn project_affine(e: &LinearMap, b: DVector<f64>) -> Result<ProxFunction> {
    Ok(AffineProjection::new(e, b)?.into_prox())
}

/// Conjugate prox via the Moreau identity:
/// prox_{f*}^{V}(x) = x - V^{-1} prox_f^{V^{-1}}(V x), V = diag(v).
pub fn prox_conjugate(p: ProxFunction) -> ProxFunction {
    let dim = p.dim();
    let label = format!("conjugate({})", p.label());
    ProxFunction::new(dim, label, move |x, v| {
        if v.iter().any(|&w| w <= 0.0) {
            return Err(TripdError::InvalidArgument(
                "conjugate prox weights must be positive".into(),
            ));
        }
        let vx = v.component_mul(x);
        let vinv = v.map(|w| 1.0 / w);
        let inner = p.prox(&vx, &vinv)?;
        Ok(x - vinv.component_mul(&inner))
    })
}

/// Euclidean projection onto {(z1, z2) | z1 + z2 = b}:
/// P(w1, w2) = 1/2 (w1 - w2 + b, -w1 + w2 + b).
pub fn project_pair_sum(
    b: &DVector<f64>,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if w1.len() != b.len() || w2.len() != b.len() {
        return Err(TripdError::DimensionMismatch {
            expected: b.len(),
            got: w1.len().max(w2.len()),
            context: "pair-sum projection",
        });
    }
    let p1 = 0.5 * (w1 - w2 + b);
    let p2 = 0.5 * (-w1 + w2 + b);
    Ok((p1, p2))
}

/// Prox of the separable quadratic 1/2 ||A z - q||^2 under the metric bound
/// at construction: solves (A'A + V) z = A'q + V x with a cached Cholesky
/// factor. Calls must pass exactly the bound weights.
pub struct QuadraticProx {
    at_q: DVector<f64>,
    bound_weights: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    dim: usize,
}

impl QuadraticProx {
    pub fn new(a: &LinearMap, q: DVector<f64>, weights: DVector<f64>) -> Result<Self> {
        if q.len() != a.out_dim() {
            return Err(TripdError::DimensionMismatch {
                expected: a.out_dim(),
                got: q.len(),
                context: "quadratic prox target",
            });
        }
        let ad = a.to_dense();
        let mut normal = ad.transpose() * &ad;
        for i in 0..weights.len() {
            normal[(i, i)] += weights[i];
        }
        let chol = Cholesky::new(normal).ok_or(TripdError::NotPositiveDefinite {
            context: "quadratic prox normal equations",
        })?;
        Ok(Self {
            at_q: ad.transpose() * q,
            bound_weights: weights,
            chol,
            dim: a.in_dim(),
        })
    }

    pub fn into_prox(self) -> ProxFunction {
        let dim = self.dim;
        let me = Arc::new(self);
        ProxFunction::new(dim, "quadratic", move |x, v| {
            for i in 0..v.len() {
                if (v[i] - me.bound_weights[i]).abs() > 1e-12 * (1.0 + v[i].abs()) {
                    return Err(TripdError::InvalidArgument(
                        "quadratic prox called with weights differing from the cached \
                         factorization; rebuild explicitly"
                            .into(),
                    ));
                }
            }
            let rhs = &me.at_q + v.component_mul(x);
            Ok(me.chol.solve(&rhs))
        })
    }
}
