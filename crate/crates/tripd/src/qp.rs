//! Dense primal-dual interior-point solver for box-constrained equality QPs:
//!
//!   minimize  1/2 z'Hz + c'z
//!   subject to Ez = d,  lo <= z <= hi  (infinite bounds allowed)
//!
//! Small and dense on purpose: the baseline's inner minimizations are a few
//! dozen variables per agent. Mehrotra predictor-corrector with an
//! infeasible start.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TripdError};

pub const QP_TOL: f64 = 1e-8;
pub const QP_MAX_ITERS: usize = 200;

#[derive(Clone, Debug)]
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub e: DMatrix<f64>,
    pub d: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl BoxQp {
    pub fn dims_ok(&self) -> bool {
        let n = self.c.len();
        self.h.nrows() == n
            && self.h.ncols() == n
            && self.e.ncols() == n
            && self.e.nrows() == self.d.len()
            && self.lo.len() == n
            && self.hi.len() == n
    }

    /// Objective value at z.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.c.dot(z)
    }
}

/// Solves the QP to `QP_TOL` in stationarity, feasibility and duality gap.
pub fn solve_box_qp(qp: &BoxQp) -> Result<DVector<f64>> {
    if !qp.dims_ok() {
        return Err(TripdError::InvalidArgument(
            "box QP dimension mismatch".into(),
        ));
    }
    let n = qp.c.len();
    let m = qp.d.len();
    let lower: Vec<usize> = (0..n).filter(|&i| qp.lo[i].is_finite()).collect();
    let upper: Vec<usize> = (0..n).filter(|&i| qp.hi[i].is_finite()).collect();
    for i in 0..n {
        if qp.lo[i] > qp.hi[i] {
            return Err(TripdError::InvalidArgument(format!(
                "crossed bounds at coordinate {i}"
            )));
        }
    }

    // interior start
    let mut z = DVector::zeros(n);
    for i in 0..n {
        let (lo, hi) = (qp.lo[i], qp.hi[i]);
        z[i] = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        };
    }
    let mut nu = DVector::zeros(m);
    let mut mu_l = DVector::from_element(lower.len(), 1.0);
    let mut mu_u = DVector::from_element(upper.len(), 1.0);

    let scale = 1.0 + qp.c.amax().max(qp.d.amax());
    for _iter in 0..QP_MAX_ITERS {
        let s_l = DVector::from_fn(lower.len(), |k, _| {
            (z[lower[k]] - qp.lo[lower[k]]).max(1e-14)
        });
        let s_u = DVector::from_fn(upper.len(), |k, _| {
            (qp.hi[upper[k]] - z[upper[k]]).max(1e-14)
        });

        // residuals
        let mut mu_full = DVector::zeros(n);
        for (k, &i) in lower.iter().enumerate() {
            mu_full[i] -= mu_l[k];
        }
        for (k, &i) in upper.iter().enumerate() {
            mu_full[i] += mu_u[k];
        }
        let r_d = &qp.h * &z + &qp.c + qp.e.transpose() * &nu + &mu_full;
        let r_p = &qp.e * &z - &qp.d;
        let gap = mu_l.dot(&s_l) + mu_u.dot(&s_u);
        let nb = (lower.len() + upper.len()).max(1);
        let mu_avg = gap / nb as f64;
        if r_d.amax() <= QP_TOL * scale && r_p.amax() <= QP_TOL * scale && mu_avg <= QP_TOL {
            return Ok(z);
        }

        // condensed KKT matrix
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        for (k, &i) in lower.iter().enumerate() {
            kkt[(i, i)] += mu_l[k] / s_l[k];
        }
        for (k, &i) in upper.iter().enumerate() {
            kkt[(i, i)] += mu_u[k] / s_u[k];
        }
        kkt.view_mut((0, n), (n, m)).copy_from(&qp.e.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(&qp.e);
        let lu = kkt.lu();

        let solve_dir =
            |t_l: &DVector<f64>, t_u: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
                // rhs_z = -r_d + t_l/s_l - mu_l - (t_u/s_u - mu_u), expanded to n
                let mut rhs = DVector::zeros(n + m);
                for i in 0..n {
                    rhs[i] = -r_d[i];
                }
                for (k, &i) in lower.iter().enumerate() {
                    rhs[i] += t_l[k] / s_l[k] - mu_l[k];
                }
                for (k, &i) in upper.iter().enumerate() {
                    rhs[i] -= t_u[k] / s_u[k] - mu_u[k];
                }
                for j in 0..m {
                    rhs[n + j] = -r_p[j];
                }
                let sol = lu.solve(&rhs)?;
                Some((sol.rows(0, n).clone_owned(), sol.rows(n, m).clone_owned()))
            };
        let dmu = |dz: &DVector<f64>, t_l: &DVector<f64>, t_u: &DVector<f64>| {
            let dl = DVector::from_fn(lower.len(), |k, _| {
                t_l[k] / s_l[k] - mu_l[k] - mu_l[k] / s_l[k] * dz[lower[k]]
            });
            let du = DVector::from_fn(upper.len(), |k, _| {
                t_u[k] / s_u[k] - mu_u[k] + mu_u[k] / s_u[k] * dz[upper[k]]
            });
            (dl, du)
        };
        let step_len = |dz: &DVector<f64>, dl: &DVector<f64>, du: &DVector<f64>| -> (f64, f64) {
            let mut ap = 1.0_f64;
            let mut ad = 1.0_f64;
            for (k, &i) in lower.iter().enumerate() {
                if dz[i] < 0.0 {
                    ap = ap.min(-s_l[k] / dz[i]);
                }
                if dl[k] < 0.0 {
                    ad = ad.min(-mu_l[k] / dl[k]);
                }
            }
            for (k, &i) in upper.iter().enumerate() {
                if dz[i] > 0.0 {
                    ap = ap.min(s_u[k] / dz[i]);
                }
                if du[k] < 0.0 {
                    ad = ad.min(-mu_u[k] / du[k]);
                }
            }
            (ap, ad)
        };

        // predictor
        let zeros_l = DVector::zeros(lower.len());
        let zeros_u = DVector::zeros(upper.len());
        let (dz_aff, _) = solve_dir(&zeros_l, &zeros_u)
            .ok_or_else(|| TripdError::InvalidArgument("singular KKT system in box QP".into()))?;
        let (dl_aff, du_aff) = dmu(&dz_aff, &zeros_l, &zeros_u);
        let (ap_aff, ad_aff) = step_len(&dz_aff, &dl_aff, &du_aff);
        let a_aff = ap_aff.min(ad_aff);
        let mut gap_aff = 0.0;
        for (k, &i) in lower.iter().enumerate() {
            gap_aff += (s_l[k] + a_aff * dz_aff[i]) * (mu_l[k] + a_aff * dl_aff[k]);
        }
        for (k, &i) in upper.iter().enumerate() {
            gap_aff += (s_u[k] - a_aff * dz_aff[i]) * (mu_u[k] + a_aff * du_aff[k]);
        }
        let sigma = if gap > 1e-300 {
            (gap_aff / gap).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // corrector with centering
        let t_l = DVector::from_fn(lower.len(), |k, _| {
            (sigma * mu_avg - dz_aff[lower[k]] * dl_aff[k]).max(0.0)
        });
        let t_u = DVector::from_fn(upper.len(), |k, _| {
            (sigma * mu_avg + dz_aff[upper[k]] * du_aff[k]).max(0.0)
        });
        let (dz, dnu) = solve_dir(&t_l, &t_u)
            .ok_or_else(|| TripdError::InvalidArgument("singular KKT system in box QP".into()))?;
        let (dl, du) = dmu(&dz, &t_l, &t_u);
        let (ap, ad) = step_len(&dz, &dl, &du);
        let alpha_p = (0.995 * ap).min(1.0);
        let alpha_d = (0.995 * ad).min(1.0);
        z += &dz * alpha_p;
        nu += &dnu * alpha_d;
        mu_l += &dl * alpha_d;
        mu_u += &du * alpha_d;
        for v in mu_l.iter_mut().chain(mu_u.iter_mut()) {
            *v = v.max(1e-14);
        }
        // keep strictly inside the box
        for (k, &i) in lower.iter().enumerate() {
            let _ = k;
            if z[i] <= qp.lo[i] {
                z[i] = qp.lo[i] + 1e-14;
            }
        }
        for &i in &upper {
            if z[i] >= qp.hi[i] {
                z[i] = qp.hi[i] - 1e-14;
            }
        }
    }
    Err(TripdError::InnerSolverFailure {
        iter: QP_MAX_ITERS as u64,
        message: "interior-point iteration cap reached".into(),
    })
}

/// Max KKT violation at z. The equality multiplier is fitted by least
/// squares on the coordinates away from their bounds (where stationarity
/// must vanish exactly); active bounds then only need the right residual
/// sign.
pub fn kkt_violation(qp: &BoxQp, z: &DVector<f64>) -> f64 {
    let n = z.len();
    let m = qp.d.len();
    let grad = &qp.h * z + &qp.c;
    let act_tol = 1e-6;
    let free: Vec<usize> = (0..n)
        .filter(|&i| z[i] - qp.lo[i] > act_tol && qp.hi[i] - z[i] > act_tol)
        .collect();
    let nu = if m == 0 || free.is_empty() {
        DVector::zeros(m)
    } else {
        // argmin over nu of || grad_F + (E_F)' nu ||
        let mut ef = DMatrix::zeros(m, free.len());
        let mut gf = DVector::zeros(free.len());
        for (k, &i) in free.iter().enumerate() {
            ef.set_column(k, &qp.e.column(i));
            gf[k] = grad[i];
        }
        let gram = &ef * ef.transpose() + DMatrix::identity(m, m) * 1e-12;
        gram.lu()
            .solve(&(-(&ef * gf)))
            .unwrap_or_else(|| DVector::zeros(m))
    };
    let stat = grad + qp.e.transpose() * nu;
    let mut worst = if m > 0 {
        (&qp.e * z - &qp.d).amax()
    } else {
        0.0
    };
    for i in 0..n {
        let at_lo = z[i] - qp.lo[i] <= act_tol;
        let at_hi = qp.hi[i] - z[i] <= act_tol;
        let g = stat[i];
        let viol = match (at_lo, at_hi) {
            (false, false) => g.abs(),
            (true, false) => (-g).max(0.0),
            (false, true) => g.max(0.0),
            (true, true) => 0.0,
        };
        worst = worst.max(viol);
        // box feasibility
        worst = worst.max(qp.lo[i] - z[i]).max(z[i] - qp.hi[i]);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256pp;

    fn free_bounds(n: usize) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_element(n, f64::NEG_INFINITY),
            DVector::from_element(n, f64::INFINITY),
        )
    }

    #[test]
    fn equality_only_matches_kkt_solve() {
        // min 1/2 ||z||^2 s.t. z1 + z2 = 2 -> (1, 1)
        let (lo, hi) = free_bounds(2);
        let qp = BoxQp {
            h: DMatrix::identity(2, 2),
            c: DVector::zeros(2),
            e: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            d: DVector::from_vec(vec![2.0]),
            lo,
            hi,
        };
        let z = solve_box_qp(&qp).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-7);
        assert!((z[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn active_upper_bound() {
        // min 1/2 z^2 - 3 z s.t. z <= 1 -> z = 1
        let qp = BoxQp {
            h: DMatrix::identity(1, 1),
            c: DVector::from_vec(vec![-3.0]),
            e: DMatrix::zeros(0, 1),
            d: DVector::zeros(0),
            lo: DVector::from_element(1, f64::NEG_INFINITY),
            hi: DVector::from_vec(vec![1.0]),
        };
        let z = solve_box_qp(&qp).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-7);
    }

    /// Brute-force oracle: enumerates every active-set combination, solves
    /// the resulting equality-constrained system, and keeps the best point
    /// that is primal feasible. Exponential, test-only.
    fn enumerate_optimum(qp: &BoxQp) -> DVector<f64> {
        let n = qp.c.len();
        let m = qp.d.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        let bounded: Vec<usize> = (0..n)
            .filter(|&i| qp.lo[i].is_finite() || qp.hi[i].is_finite())
            .collect();
        let combos = 3usize.pow(bounded.len() as u32);
        'combo: for code in 0..combos {
            // decode: 0 = free, 1 = at lo, 2 = at hi
            let mut fixed = vec![None; n];
            let mut c = code;
            for &i in &bounded {
                let state = c % 3;
                c /= 3;
                match state {
                    1 if qp.lo[i].is_finite() => fixed[i] = Some(qp.lo[i]),
                    2 if qp.hi[i].is_finite() => fixed[i] = Some(qp.hi[i]),
                    1 | 2 => continue 'combo,
                    _ => {}
                }
            }
            let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
            if free.is_empty() && m > 0 {
                continue;
            }
            // solve the reduced KKT in the free variables
            let nf = free.len();
            let mut kkt = DMatrix::zeros(nf + m, nf + m);
            let mut rhs = DVector::zeros(nf + m);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    kkt[(a, b)] = qp.h[(i, j)];
                }
                let mut ci = qp.c[i];
                for (j, fx) in fixed.iter().enumerate() {
                    if let Some(v) = fx {
                        ci += qp.h[(i, j)] * v;
                    }
                }
                rhs[a] = -ci;
                for row in 0..m {
                    kkt[(a, nf + row)] = qp.e[(row, i)];
                    kkt[(nf + row, a)] = qp.e[(row, i)];
                }
            }
            for row in 0..m {
                let mut di = qp.d[row];
                for (j, fx) in fixed.iter().enumerate() {
                    if let Some(v) = fx {
                        di -= qp.e[(row, j)] * v;
                    }
                }
                rhs[nf + row] = di;
            }
            let Some(sol) = kkt.lu().solve(&rhs) else {
                continue;
            };
            let mut z = DVector::zeros(n);
            for (a, &i) in free.iter().enumerate() {
                z[i] = sol[a];
            }
            for (i, fx) in fixed.iter().enumerate() {
                if let Some(v) = fx {
                    z[i] = *v;
                }
            }
            // primal feasibility
            let feas = (0..n).all(|i| z[i] >= qp.lo[i] - 1e-9 && z[i] <= qp.hi[i] + 1e-9)
                && (m == 0 || (&qp.e * &z - &qp.d).amax() < 1e-7);
            if !feas {
                continue;
            }
            let obj = qp.objective(&z);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, z));
            }
        }
        best.expect("at least one feasible combination").1
    }

    #[test]
    fn random_qps_match_enumeration_oracle() {
        let mut rng = Xoshiro256pp::from_seed(61);
        for trial in 0..25 {
            let n = 6;
            let m = 2;
            let raw = DMatrix::from_fn(n, n, |_, _| rng.next_normal());
            let h = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.5;
            let c = DVector::from_fn(n, |_, _| 2.0 * rng.next_normal());
            let e = DMatrix::from_fn(m, n, |_, _| rng.next_normal());
            // make the equality system consistent with an interior point
            let z_feas = DVector::from_fn(n, |_, _| 0.5 * rng.next_normal());
            let d = &e * &z_feas;
            let lo = DVector::from_fn(n, |i, _| if i % 2 == 0 { -2.0 } else { f64::NEG_INFINITY });
            let hi = DVector::from_fn(n, |i, _| if i % 3 == 0 { 2.0 } else { f64::INFINITY });
            let qp = BoxQp { h, c, e, d, lo, hi };
            let z = solve_box_qp(&qp).unwrap();
            let viol = kkt_violation(&qp, &z);
            assert!(viol < 1e-5, "trial {trial}: kkt violation {viol:.3e}");
            let oracle = enumerate_optimum(&qp);
            let gap = qp.objective(&z) - qp.objective(&oracle);
            assert!(
                gap.abs() < 1e-6 * (1.0 + qp.objective(&oracle).abs()),
                "trial {trial}: objective gap {gap:.3e}"
            );
        }
    }

    #[test]
    fn infeasible_bounds_rejected() {
        let qp = BoxQp {
            h: DMatrix::identity(1, 1),
            c: DVector::zeros(1),
            e: DMatrix::zeros(0, 1),
            d: DVector::zeros(0),
            lo: DVector::from_vec(vec![1.0]),
            hi: DVector::from_vec(vec![0.0]),
        };
        assert!(solve_box_qp(&qp).is_err());
    }
}
