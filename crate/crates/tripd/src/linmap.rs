//! Linear maps exposed through apply/adjoint oracles.
//!
//! Agents cannot materialize the global coupling map, so everything that
//! consumes a `LinearMap` goes through the two oracles; dense materialization
//! exists for verification and small problems.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TripdError};
use crate::rng::Xoshiro256pp;

type ApplyFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

#[derive(Clone)]
enum Repr {
    Dense(Arc<DMatrix<f64>>),
    Diagonal(Arc<DVector<f64>>),
    Zero,
    /// Sparse gather: out[k] = coeff_k * in[index_k]. Adjoint scatter-adds.
    CoeffGather(Arc<Vec<(usize, f64)>>),
    Custom {
        apply: Arc<ApplyFn>,
        adjoint: Arc<ApplyFn>,
    },
}

/// Linear map between real vector spaces with an adjoint oracle.
#[derive(Clone)]
pub struct LinearMap {
    in_dim: usize,
    out_dim: usize,
    repr: Repr,
}

impl std::fmt::Debug for LinearMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.repr {
            Repr::Dense(_) => "dense",
            Repr::Diagonal(_) => "diagonal",
            Repr::Zero => "zero",
            Repr::CoeffGather(_) => "coeff-gather",
            Repr::Custom { .. } => "custom",
        };
        write!(f, "LinearMap[{} -> {}, {kind}]", self.in_dim, self.out_dim)
    }
}

impl LinearMap {
    pub fn dense(m: DMatrix<f64>) -> Self {
        Self {
            in_dim: m.ncols(),
            out_dim: m.nrows(),
            repr: Repr::Dense(Arc::new(m)),
        }
    }

    pub fn diagonal(d: DVector<f64>) -> Self {
        Self {
            in_dim: d.len(),
            out_dim: d.len(),
            repr: Repr::Diagonal(Arc::new(d)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(DVector::from_element(dim, 1.0))
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        Self::diagonal(DVector::from_element(dim, value))
    }

    pub fn zero(out_dim: usize, in_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            repr: Repr::Zero,
        }
    }

    /// out[k] = entries[k].1 * in[entries[k].0]; used for selection maps and
    /// signed copies of coordinate blocks.
    pub fn coeff_gather(in_dim: usize, entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.iter().all(|&(i, _)| i < in_dim));
        Self {
            in_dim,
            out_dim: entries.len(),
            repr: Repr::CoeffGather(Arc::new(entries)),
        }
    }

    /// Oracle-only map; the caller is responsible for adjoint consistency
    /// (probe it with [`adjoint_probe`]).
    pub fn from_oracles<F, G>(out_dim: usize, in_dim: usize, apply: F, adjoint: G) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            in_dim,
            out_dim,
            repr: Repr::Custom {
                apply: Arc::new(apply),
                adjoint: Arc::new(adjoint),
            },
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        match &self.repr {
            Repr::Dense(m) => m.as_ref() * x,
            Repr::Diagonal(d) => d.component_mul(x),
            Repr::Zero => DVector::zeros(self.out_dim),
            Repr::CoeffGather(entries) => {
                DVector::from_iterator(entries.len(), entries.iter().map(|&(i, c)| c * x[i]))
            }
            Repr::Custom { apply, .. } => apply(x),
        }
    }

    pub fn apply_adjoint(&self, u: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(u.len(), self.out_dim);
        match &self.repr {
            Repr::Dense(m) => m.transpose() * u,
            Repr::Diagonal(d) => d.component_mul(u),
            Repr::Zero => DVector::zeros(self.in_dim),
            Repr::CoeffGather(entries) => {
                let mut out = DVector::zeros(self.in_dim);
                for (k, &(i, c)) in entries.iter().enumerate() {
                    out[i] += c * u[k];
                }
                out
            }
            Repr::Custom { adjoint, .. } => adjoint(u),
        }
    }

    /// Materializes the map column by column.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(m) => m.as_ref().clone(),
            _ => {
                let mut out = DMatrix::zeros(self.out_dim, self.in_dim);
                let mut e = DVector::zeros(self.in_dim);
                for j in 0..self.in_dim {
                    e[j] = 1.0;
                    out.set_column(j, &self.apply(&e));
                    e[j] = 0.0;
                }
                out
            }
        }
    }
}

/// Checks <Lx, u> = <x, L'u> on `probes` random pairs.
/// Tolerance per probe: 1e-12 * (1 + ||x|| ||u||).
pub fn adjoint_probe(l: &LinearMap, probes: usize, seed: u64) -> Result<()> {
    let mut rng = Xoshiro256pp::from_seed(seed);
    for _ in 0..probes {
        let x = DVector::from_fn(l.in_dim(), |_, _| rng.next_normal());
        let u = DVector::from_fn(l.out_dim(), |_, _| rng.next_normal());
        let lhs = l.apply(&x).dot(&u);
        let rhs = x.dot(&l.apply_adjoint(&u));
        let tol = 1e-12 * (1.0 + x.norm() * u.norm());
        if (lhs - rhs).abs() > tol {
            return Err(TripdError::InvalidArgument(format!(
                "adjoint inconsistency: |<Lx,u> - <x,L'u>| = {:.3e} exceeds {:.3e}",
                (lhs - rhs).abs(),
                tol
            )));
        }
    }
    Ok(())
}

/// Cap on power iterations; global maps cannot be materialized, so the
/// largest singular value is estimated iteratively.
pub const OPERATOR_NORM_MAX_ITERS: usize = 10_000;

/// Largest singular value by power iteration on L'L.
///
/// Returns an error carrying the best estimate if the relative change has
/// not dropped below `tol` within the iteration cap.
pub fn operator_norm(l: &LinearMap, tol: f64) -> Result<f64> {
    assert!(tol > 0.0, "tolerance must be positive");
    if l.in_dim == 0 || l.out_dim == 0 {
        return Ok(0.0);
    }
    // fixed seed: the estimate must be deterministic
    let mut rng = Xoshiro256pp::from_seed(0x6f70_6e6f_726d);
    let mut v = DVector::from_fn(l.in_dim, |_, _| rng.next_normal());
    let mut nv = v.norm();
    if nv == 0.0 {
        v[0] = 1.0;
        nv = 1.0;
    }
    v /= nv;
    let mut prev = 0.0_f64;
    for iter in 0..OPERATOR_NORM_MAX_ITERS {
        let w = l.apply_adjoint(&l.apply(&v));
        let lambda = w.norm();
        if lambda == 0.0 {
            return Ok(0.0); // v is in the null space and L'L v = 0 everywhere we can see
        }
        v = w / lambda;
        let sigma = lambda.sqrt();
        if iter > 0 && (sigma - prev).abs() <= tol * sigma.max(1.0) {
            return Ok(sigma);
        }
        prev = sigma;
    }
    Err(TripdError::PowerIterationNoConvergence {
        best: prev,
        iters: OPERATOR_NORM_MAX_ITERS,
    })
}
