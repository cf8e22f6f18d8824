//! Symmetric positive definite metrics with structure-preserving storage.
//!
//! Diagonal and block-diagonal representations are first-class because the
//! block-coordinate algorithm requires diagonal stepsize matrices and the
//! coordinate activation probability matrix is diagonal by construction.
//! Dense storage is the fallback used by verification code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TripdError};

/// Relative tolerance used by all positive-definiteness checks.
pub const SPD_TOL: f64 = 1e-12;

/// Symmetric positive (semi)definite matrix with one of three storages.
#[derive(Clone, Debug)]
pub enum Metric {
    /// Full symmetric matrix.
    Dense(DMatrix<f64>),
    /// Diagonal matrix stored as its diagonal.
    Diagonal(DVector<f64>),
    /// Block-diagonal matrix; each block carries a label (e.g. an agent id).
    BlockDiag(Vec<(String, Metric)>),
}

impl Metric {
    pub fn identity(dim: usize) -> Self {
        Metric::Diagonal(DVector::from_element(dim, 1.0))
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        Metric::Diagonal(DVector::from_element(dim, value))
    }

    pub fn from_diagonal(diag: DVector<f64>) -> Self {
        Metric::Diagonal(diag)
    }

    /// Builds a dense metric, rejecting asymmetric input.
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        Ok(Metric::Dense(m))
    }

    pub fn block_diag(blocks: Vec<(String, Metric)>) -> Self {
        Metric::BlockDiag(blocks)
    }

    pub fn dim(&self) -> usize {
        match self {
            Metric::Dense(m) => m.nrows(),
            Metric::Diagonal(d) => d.len(),
            Metric::BlockDiag(blocks) => blocks.iter().map(|(_, b)| b.dim()).sum(),
        }
    }

    /// Lossless materialization; block and diagonal storages round-trip
    /// exactly because entries are copied verbatim.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Metric::Dense(m) => m.clone(),
            Metric::Diagonal(d) => DMatrix::from_diagonal(d),
            Metric::BlockDiag(blocks) => {
                let n = self.dim();
                let mut out = DMatrix::zeros(n, n);
                let mut off = 0;
                for (_, b) in blocks {
                    let bd = b.to_dense();
                    out.view_mut((off, off), (bd.nrows(), bd.ncols()))
                        .copy_from(&bd);
                    off += bd.nrows();
                }
                out
            }
        }
    }

    /// Diagonal entries when the metric is (block-)diagonal; `None` for
    /// genuinely dense storage. Used to feed diagonal-metric prox oracles.
    pub fn diagonal(&self) -> Option<DVector<f64>> {
        match self {
            Metric::Dense(_) => None,
            Metric::Diagonal(d) => Some(d.clone()),
            Metric::BlockDiag(blocks) => {
                let mut out = Vec::with_capacity(self.dim());
                for (_, b) in blocks {
                    out.extend(b.diagonal()?.iter().copied());
                }
                Some(DVector::from_vec(out))
            }
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal().is_some()
    }

    /// Matrix-vector product using the structured storage.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Metric::Dense(m) => m * x,
            Metric::Diagonal(d) => d.component_mul(x),
            Metric::BlockDiag(blocks) => {
                let mut out = DVector::zeros(self.dim());
                let mut off = 0;
                for (_, b) in blocks {
                    let d = b.dim();
                    let seg = b.apply(&DVector::from(x.rows(off, d).clone_owned()));
                    out.rows_mut(off, d).copy_from(&seg);
                    off += d;
                }
                out
            }
        }
    }

    /// Quadratic form x' M x evaluated through the structured storage.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.apply(x))
    }

    /// Weighted norm ||x||_M = sqrt(x' M x); tiny negative round-off is
    /// clamped to zero.
    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.quad_form(x).max(0.0).sqrt()
    }

    /// Inverse metric, preserving structure where possible.
    pub fn inverse(&self) -> Result<Metric> {
        match self {
            Metric::Diagonal(d) => {
                if d.iter().any(|&v| v <= 0.0) {
                    return Err(TripdError::NotPositiveDefinite {
                        context: "diagonal metric inverse",
                    });
                }
                Ok(Metric::Diagonal(d.map(|v| 1.0 / v)))
            }
            Metric::Dense(m) => {
                let chol =
                    nalgebra::Cholesky::new(m.clone()).ok_or(TripdError::NotPositiveDefinite {
                        context: "dense metric inverse",
                    })?;
                Ok(Metric::Dense(chol.inverse()))
            }
            Metric::BlockDiag(blocks) => {
                let inv = blocks
                    .iter()
                    .map(|(name, b)| Ok((name.clone(), b.inverse()?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Metric::BlockDiag(inv))
            }
        }
    }

    /// The metric multiplied by a positive scalar, structure preserved.
    pub fn scaled(&self, c: f64) -> Metric {
        match self {
            Metric::Dense(m) => Metric::Dense(m * c),
            Metric::Diagonal(d) => Metric::Diagonal(d * c),
            Metric::BlockDiag(blocks) => Metric::BlockDiag(
                blocks
                    .iter()
                    .map(|(n, b)| (n.clone(), b.scaled(c)))
                    .collect(),
            ),
        }
    }

    /// Operator norm of the metric (largest eigenvalue magnitude).
    pub fn operator_norm(&self) -> f64 {
        match self {
            Metric::Diagonal(d) => d.amax(),
            Metric::Dense(m) => {
                let eig = nalgebra::SymmetricEigen::new(m.clone());
                eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
            }
            Metric::BlockDiag(blocks) => blocks
                .iter()
                .map(|(_, b)| b.operator_norm())
                .fold(0.0_f64, f64::max),
        }
    }

    /// Largest diagonal magnitude, a cheap scale estimate for tolerances.
    fn scale(&self) -> f64 {
        match self {
            Metric::Dense(m) => m.diagonal().amax(),
            Metric::Diagonal(d) => d.amax(),
            Metric::BlockDiag(blocks) => blocks
                .iter()
                .map(|(_, b)| b.scale())
                .fold(0.0_f64, f64::max),
        }
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(TripdError::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
            context: "symmetric matrix must be square",
        });
    }
    let scale = 1.0 + m.amax();
    let mut dev = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if dev > SPD_TOL * scale {
        return Err(TripdError::NotSymmetric { deviation: dev });
    }
    Ok(())
}

/// Positive definiteness via Cholesky with pivots checked against
/// `SPD_TOL * ||m||`. Asymmetric input (beyond tolerance) is an error.
pub fn is_spd(m: &Metric) -> Result<bool> {
    match m {
        Metric::Diagonal(d) => {
            let tol = SPD_TOL * m.scale().max(f64::MIN_POSITIVE);
            Ok(d.iter().all(|&v| v > tol))
        }
        Metric::BlockDiag(blocks) => {
            for (_, b) in blocks {
                if !is_spd(b)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Metric::Dense(d) => is_spd_dense(d),
    }
}

/// Dense positive-definiteness check used on assembled matrices.
pub fn is_spd_dense(m: &DMatrix<f64>) -> Result<bool> {
    check_symmetric(m)?;
    let scale = m.diagonal().amax().max(m.amax());
    let tol = SPD_TOL * scale.max(f64::MIN_POSITIVE);
    match nalgebra::Cholesky::new(m.clone()) {
        Some(chol) => Ok(chol.l().diagonal().iter().all(|&p| p * p > tol)),
        None => Ok(false),
    }
}

/// Direction of smallest curvature, used as a witness when a positive
/// definiteness requirement fails.
pub fn min_curvature_direction(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut min_i = 0;
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    (
        eig.eigenvalues[min_i],
        eig.eigenvectors.column(min_i).clone_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_is_spd() {
        assert!(is_spd(&Metric::identity(4)).unwrap());
    }

    #[test]
    fn indefinite_dense_is_rejected() {
        // eigenvalues 3 and -1
        let m = Metric::from_dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(!is_spd(&m).unwrap());
    }

    #[test]
    fn well_conditioned_dense_is_accepted() {
        // eigenvalues 3 and 1
        let m = Metric::from_dense(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!(is_spd(&m).unwrap());
    }

    #[test]
    fn asymmetric_input_is_an_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            is_spd_dense(&m),
            Err(TripdError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn structured_representations_round_trip_to_dense() {
        let diag = Metric::from_diagonal(DVector::from_vec(vec![1.0, 2.5, 0.25]));
        let dense = diag.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j {
                    diag.diagonal().unwrap()[i]
                } else {
                    0.0
                };
                assert_eq!(dense[(i, j)], want);
            }
        }

        let block = Metric::block_diag(vec![
            ("a".into(), Metric::scaled_identity(2, 3.0)),
            (
                "b".into(),
                Metric::from_dense(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap(),
            ),
        ]);
        let bd = block.to_dense();
        assert_eq!(bd[(0, 0)], 3.0);
        assert_eq!(bd[(2, 3)], 1.0);
        assert_eq!(bd[(0, 2)], 0.0);
        assert_eq!(block.dim(), 4);
        // mixed block storage is not globally diagonal
        assert!(block.diagonal().is_none());
    }

    #[test]
    fn structured_norm_matches_dense_norm() {
        let block = Metric::block_diag(vec![
            (
                "u".into(),
                Metric::from_diagonal(DVector::from_vec(vec![4.0, 0.5])),
            ),
            (
                "x".into(),
                Metric::from_dense(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap(),
            ),
        ]);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let dense = block.to_dense();
        let want = x.dot(&(&dense * &x));
        assert_abs_diff_eq!(block.quad_form(&x), want, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_metric_weighted_norm() {
        let m = Metric::from_diagonal(DVector::from_vec(vec![4.0]));
        let x = DVector::from_vec(vec![1.0]);
        assert_abs_diff_eq!(m.norm(&x), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_round_trips() {
        let m = Metric::from_dense(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let inv = m.inverse().unwrap();
        let prod = m.to_dense() * inv.to_dense();
        assert_abs_diff_eq!(prod[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prod[(0, 1)], 0.0, epsilon = 1e-12);
    }
}
