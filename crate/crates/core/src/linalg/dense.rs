//! Small dense solvers for the sensor-sized normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots at or below this fraction of the largest entry are treated as zero.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-300;

/// Default cutoff (relative to the largest singular value) for the numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Gaussian elimination with complete (row and column) pivoting.
pub fn lu_full_pivot_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    lu_full_pivot_solve_tol(a, rhs, DEFAULT_PIVOT_TOL)
}

pub fn lu_full_pivot_solve_tol(a: &DMatrix<f64>, rhs: &DVector<f64>, pivot_tol: f64) -> Result<DVector<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n || rhs.len() != n {
        return Err(Error::invalid(format!(
            "LU needs a square non-empty matrix and matching rhs, got {}x{} and {}",
            a.nrows(),
            a.ncols(),
            rhs.len()
        )));
    }
    let mut m = a.clone();
    let mut b = rhs.clone();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let scale = m.amax();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Singular { step: 0, pivot: scale });
    }

    for step in 0..n {
        let (mut pr, mut pc, mut best) = (step, step, -1.0);
        for j in step..n {
            for i in step..n {
                let v = m[(i, j)].abs();
                if v > best {
                    best = v;
                    pr = i;
                    pc = j;
                }
            }
        }
        if !(best > pivot_tol * scale) {
            return Err(Error::Singular { step, pivot: best });
        }
        if pr != step {
            m.swap_rows(pr, step);
            b.swap_rows(pr, step);
        }
        if pc != step {
            m.swap_columns(pc, step);
            col_perm.swap(pc, step);
        }
        let piv = m[(step, step)];
        for i in step + 1..n {
            let f = m[(i, step)] / piv;
            if f == 0.0 {
                continue;
            }
            m[(i, step)] = 0.0;
            for j in step + 1..n {
                let u = m[(step, j)];
                m[(i, j)] -= f * u;
            }
            b[i] -= f * b[step];
        }
    }

    let mut y = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= m[(i, j)] * y[j];
        }
        y[i] = s / m[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for (k, &orig) in col_perm.iter().enumerate() {
        x[orig] = y[k];
    }
    Ok(x)
}

/// Thin SVD of a symmetric positive semi-definite matrix, truncated to its numerical rank.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Descending, all above `rank_tol * sigma[0]`.
    pub sigma: Vec<f64>,
    /// All singular values before truncation, descending.
    pub full_sigma: Vec<f64>,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let r = self.rank();
        let mut s = DMatrix::zeros(r, r);
        for i in 0..r {
            s[(i, i)] = self.sigma[i];
        }
        &self.u * s * self.v.transpose()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd_decompose(a: &DMatrix<f64>, rank_tol: f64) -> Result<SvdResult> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::invalid("SVD input must be square and non-empty"));
    }
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    if !(rank_tol >= 0.0) {
        return Err(Error::invalid("rank tolerance must be non-negative"));
    }

    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let full_sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let sigma1 = full_sigma[0];
    let rank = full_sigma
        .iter()
        .take_while(|&&s| s > 0.0 && s > rank_tol * sigma1)
        .count();

    let mut u_out = DMatrix::zeros(n, rank);
    let mut v_out = DMatrix::zeros(n, rank);
    for (k, &j) in order.iter().take(rank).enumerate() {
        let s = norms[j];
        u_out.set_column(k, &(w.column(j) / s));
        v_out.set_column(k, &v.column(j));
    }
    Ok(SvdResult {
        u: u_out,
        v: v_out,
        sigma: full_sigma[..rank].to_vec(),
        full_sigma,
    })
}

/// Truncated-SVD solution keeping the `alpha` largest singular modes.
pub fn tsvd_solve(svd: &SvdResult, rhs: &DVector<f64>, alpha: usize) -> Result<DVector<f64>> {
    let r = svd.rank();
    if alpha == 0 || alpha > r {
        return Err(Error::invalid(format!("truncation index {alpha} outside 1..={r}")));
    }
    if rhs.len() != svd.u.nrows() {
        return Err(Error::invalid("rhs length does not match the decomposition"));
    }
    let mut x = DVector::zeros(svd.v.nrows());
    for i in 0..alpha {
        let coef = svd.u.column(i).dot(rhs) / svd.sigma[i];
        x.axpy(coef, &svd.v.column(i), 1.0);
    }
    Ok(x)
}

/// `sigma_max / sigma_min` over the retained singular values.
pub fn condition_number(svd: &SvdResult) -> f64 {
    match (svd.sigma.first(), svd.sigma.last()) {
        (Some(a), Some(b)) => a / b,
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hilbert(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64)
    }

    #[test]
    fn lu_identity_and_permutation() {
        let x = lu_full_pivot_solve(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0]);
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let x = lu_full_pivot_solve(&p, &DVector::from_vec(vec![2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn lu_hilbert_recovers_ones() {
        let h = hilbert(4);
        let rhs = &h * DVector::from_element(4, 1.0);
        let x = lu_full_pivot_solve(&h, &rhs).unwrap();
        for v in x.iter() {
            assert!((v - 1.0).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn lu_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            lu_full_pivot_solve(&a, &DVector::from_vec(vec![1.0, 1.0])),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn svd_diag() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let s = svd_decompose(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s.sigma, vec![4.0, 1.0]);
        assert_eq!(s.u.column(0).abs(), DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(s.v.column(1).abs(), DVector::from_vec(vec![0.0, 1.0]));
        assert_eq!(condition_number(&s), 4.0);
        assert_eq!(condition_number(&svd_decompose(&DMatrix::identity(3, 3), 1e-12).unwrap()), 1.0);
    }

    #[test]
    fn svd_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let a = &v * v.transpose();
        let s = svd_decompose(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s.rank(), 1);
        assert!((s.sigma[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn svd_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(svd_decompose(&a, 1e-12), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tsvd_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let s = svd_decompose(&a, DEFAULT_RANK_TOL).unwrap();
        let rhs = DVector::from_vec(vec![4.0, 1.0]);
        let x2 = tsvd_solve(&s, &rhs, 2).unwrap();
        assert!((x2[0] - 1.0).abs() < 1e-15 && (x2[1] - 1.0).abs() < 1e-15);
        let x1 = tsvd_solve(&s, &rhs, 1).unwrap();
        assert!((x1[0] - 1.0).abs() < 1e-15 && x1[1].abs() < 1e-15);
        assert!(tsvd_solve(&s, &rhs, 0).is_err());
        assert!(tsvd_solve(&s, &rhs, 3).is_err());
    }

    fn spd_from(entries: &[f64], n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_row_slice(n, n, entries);
        b.transpose() * &b + DMatrix::identity(n, n) * 0.5
    }

    proptest! {
        #[test]
        fn svd_matches_eigen_decomposition(entries in proptest::collection::vec(-1.0f64..1.0, 25)) {
            let a = spd_from(&entries, 5);
            let s = svd_decompose(&a, DEFAULT_RANK_TOL).unwrap();
            let rec = s.reconstruct();
            prop_assert!((&rec - &a).amax() <= 1e-10 * s.sigma[0]);
            let utu = s.u.transpose() * &s.u;
            let vtv = s.v.transpose() * &s.v;
            prop_assert!((utu - DMatrix::identity(5, 5)).amax() < 1e-10);
            prop_assert!((vtv - DMatrix::identity(5, 5)).amax() < 1e-10);
            let trace: f64 = a.trace();
            let sum: f64 = s.sigma.iter().sum();
            prop_assert!((trace - sum).abs() <= 1e-8 * trace);
            // independent oracle: nalgebra's symmetric eigensolver
            let mut eig: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(|x, y| y.total_cmp(x));
            for (e, s) in eig.iter().zip(&s.sigma) {
                prop_assert!((e - s).abs() <= 1e-10 * eig[0]);
            }
        }

        #[test]
        fn tsvd_full_rank_matches_lu(entries in proptest::collection::vec(-1.0f64..1.0, 25),
                                     rhs in proptest::collection::vec(-10.0f64..10.0, 5)) {
            let a = spd_from(&entries, 5);
            let rhs = DVector::from_vec(rhs);
            let s = svd_decompose(&a, DEFAULT_RANK_TOL).unwrap();
            let x_t = tsvd_solve(&s, &rhs, s.rank()).unwrap();
            let x_lu = lu_full_pivot_solve(&a, &rhs).unwrap();
            prop_assert!((&x_t - &x_lu).amax() <= 1e-8 * x_lu.amax().max(1.0));
        }

        #[test]
        fn tsvd_invariant_under_sign_flips(entries in proptest::collection::vec(-1.0f64..1.0, 16),
                                           flips in proptest::collection::vec(any::<bool>(), 4)) {
            let a = spd_from(&entries, 4);
            let rhs = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
            let s = svd_decompose(&a, DEFAULT_RANK_TOL).unwrap();
            let mut flipped = s.clone();
            for (i, f) in flips.iter().enumerate() {
                if *f {
                    flipped.u.column_mut(i).neg_mut();
                    flipped.v.column_mut(i).neg_mut();
                }
            }
            for alpha in 1..=s.rank() {
                let x1 = tsvd_solve(&s, &rhs, alpha).unwrap();
                let x2 = tsvd_solve(&flipped, &rhs, alpha).unwrap();
                prop_assert!((x1 - x2).amax() < 1e-12);
            }
        }
    }
}
