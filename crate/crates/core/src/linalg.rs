//! Dense kernels shared by the modules: sign-fixed thin SVD, orthonormal
//! bases, projections, eigen solvers and pseudo-inverse regression.

use crate::error::{DivasError, Result};
use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// d × m left singular vectors
    pub u: DMatrix<f64>,
    /// m singular values, descending
    pub s: DVector<f64>,
    /// n × m right singular vectors
    pub v: DMatrix<f64>,
}

pub fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DivasError::NonFinite(what.into()))
    }
}

/// Index of the largest-magnitude entry; ties go to the lowest index.
pub fn argmax_abs(col: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut val = -1.0;
    for (i, x) in col.enumerate() {
        if x.abs() > val {
            val = x.abs();
            best = i;
        }
    }
    best
}

/// Flip `v` so that its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let i = argmax_abs(v.iter().copied());
    if v[i] < 0.0 {
        v.neg_mut();
    }
}

/// Thin SVD with descending singular values; each left singular vector has
/// a positive largest-magnitude entry.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    check_finite(m, "matrix passed to SVD")?;
    let (d, n) = m.shape();
    let k = d.min(n);
    if k == 0 {
        return Ok(ThinSvd {
            u: DMatrix::zeros(d, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(n, 0),
        });
    }
    let svd = m.clone().svd(true, true);
    let (u0, vt0) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(DivasError::Numerical("SVD did not return vectors".into())),
    };
    let s0 = svd.singular_values;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s0[b].partial_cmp(&s0[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut u = DMatrix::zeros(d, k);
    let mut v = DMatrix::zeros(n, k);
    let mut s = DVector::zeros(k);
    for (j, &src) in order.iter().enumerate() {
        s[j] = s0[src].max(0.0);
        let mut uc = u0.column(src).clone_owned();
        let mut vc = vt0.row(src).transpose();
        let i = argmax_abs(uc.iter().copied());
        if uc[i] < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u.set_column(j, &uc);
        v.set_column(j, &vc);
    }
    Ok(ThinSvd { u, s, v })
}

/// Orthonormalize the columns of `m` by modified Gram-Schmidt with one
/// reorthogonalization pass. Fails on (numerically) dependent columns.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    let mut q = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let mut v = m.column(j).clone_owned();
        let start = v.norm();
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let c = qi.dot(&v);
                v.axpy(-c, &qi, 1.0);
            }
        }
        let nv = v.norm();
        if !(nv > 1e-12 * start.max(1e-300)) {
            return Err(DivasError::Numerical(format!("column {j} is linearly dependent")));
        }
        q.set_column(j, &(v / nv));
    }
    Ok(q)
}

/// Orthonormal basis of the column span of `m`, keeping directions whose
/// singular value is at least `tol`.
pub fn span_basis(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if m.ncols() == 0 {
        return Ok(DMatrix::zeros(m.nrows(), 0));
    }
    let svd = thin_svd(m)?;
    let keep = svd.s.iter().take_while(|&&x| x >= tol).count();
    Ok(svd.u.columns(0, keep).clone_owned())
}

/// `v - B Bᵀ v` for orthonormal `b`, applied twice for stability.
pub fn project_out(b: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut w = v.clone();
    if b.ncols() == 0 {
        return w;
    }
    for _ in 0..2 {
        let c = b.tr_mul(&w);
        w -= b * c;
    }
    w
}

/// Columnwise `project_out`.
pub fn project_out_columns(b: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    if b.ncols() == 0 {
        return m.clone();
    }
    let mut w = m.clone();
    for _ in 0..2 {
        let c = b.tr_mul(&w);
        w -= b * c;
    }
    w
}

/// Horizontal concatenation.
pub fn hcat(parts: &[&DMatrix<f64>], rows: usize) -> DMatrix<f64> {
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.columns_mut(at, p.ncols()).copy_from(p);
        at += p.ncols();
    }
    out
}

/// Number of singular values above `tol`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Ok(0);
    }
    let s = m.clone().singular_values();
    Ok(s.iter().filter(|&&x| x > tol).count())
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &src) in order.iter().enumerate() {
        vals[j] = eig.eigenvalues[src];
        vecs.set_column(j, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag`
/// and off-diagonal `off` (implicit QL). Returned ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = alloc::vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(DivasError::Numerical("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    Ok(d)
}

/// Minimum-norm least-squares solution `L` of `x ≈ L · basisᵀ`, plus a flag
/// set when `basis` is rank deficient at relative tolerance `rtol`.
pub fn min_norm_loadings(x: &DMatrix<f64>, basis: &DMatrix<f64>, rtol: f64) -> Result<(DMatrix<f64>, bool)> {
    if x.ncols() != basis.nrows() {
        return crate::error::mismatch("loadings: object counts differ");
    }
    let r = basis.ncols();
    if r == 0 {
        return Ok((DMatrix::zeros(x.nrows(), 0), false));
    }
    // basis = P S Qᵀ  =>  pinv(basisᵀ) = P S⁺ Qᵀ
    let svd = thin_svd(basis)?;
    let smax = svd.s[0];
    let mut deficient = false;
    let mut scaled = svd.u.clone();
    for j in 0..svd.s.len() {
        let sj = svd.s[j];
        let inv = if sj > rtol * smax && sj > 0.0 {
            1.0 / sj
        } else {
            deficient = true;
            0.0
        };
        scaled.column_mut(j).scale_mut(inv);
    }
    if svd.s.len() < r {
        deficient = true;
    }
    let pinv_t = scaled * svd.v.transpose();
    Ok((x * pinv_t, deficient))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, stream};

    #[test]
    fn svd_identity_and_rank_one() {
        let s = thin_svd(&DMatrix::identity(3, 3)).unwrap();
        assert!(s.s.iter().all(|&x| (x - 1.0).abs() < 1e-14));
        let a = DVector::from_vec(alloc::vec![1.0, -2.0, 2.0]);
        let b = DVector::from_vec(alloc::vec![3.0, 4.0]);
        let m = &a * b.transpose();
        let s = thin_svd(&m).unwrap();
        assert!((s.s[0] - 15.0).abs() < 1e-10);
        assert!(s.s[1].abs() < 1e-10);
    }

    #[test]
    fn svd_reconstruction_and_signs() {
        let mut rng = stream(3, 0);
        for (d, n) in [(50, 30), (30, 50)] {
            let m = gaussian_matrix(&mut rng, d, n);
            let s = thin_svd(&m).unwrap();
            let back = &s.u * DMatrix::from_diagonal(&s.s) * s.v.transpose();
            assert!((back - &m).norm() / m.norm() < 1e-10);
            for j in 0..s.s.len() {
                let col = s.u.column(j);
                let i = argmax_abs(col.iter().copied());
                assert!(col[i] > 0.0);
                if j > 0 {
                    assert!(s.s[j] <= s.s[j - 1]);
                }
            }
        }
        let mut bad = DMatrix::<f64>::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(thin_svd(&bad).is_err());
    }

    #[test]
    fn gram_schmidt_is_orthonormal() {
        let mut rng = stream(4, 0);
        let m = gaussian_matrix(&mut rng, 20, 5);
        let q = orthonormalize(&m).unwrap();
        assert!((q.tr_mul(&q) - DMatrix::<f64>::identity(5, 5)).norm() < 1e-13);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let diag = [2.0, 3.0, 1.0, 4.0, 0.5];
        let off = [0.3, -1.0, 0.7, 0.2];
        let mut t = DMatrix::<f64>::zeros(5, 5);
        for i in 0..5 {
            t[(i, i)] = diag[i];
            if i + 1 < 5 {
                t[(i, i + 1)] = off[i];
                t[(i + 1, i)] = off[i];
            }
        }
        let (dense, _) = sym_eigen_desc(&t);
        let ql = tridiagonal_eigenvalues(&diag, &off).unwrap();
        for i in 0..5 {
            assert!((ql[i] - dense[4 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn loadings_recover_consistent_system() {
        let mut rng = stream(5, 0);
        let v = gaussian_matrix(&mut rng, 12, 3);
        let l = gaussian_matrix(&mut rng, 7, 3);
        let x = &l * v.transpose();
        let (fit, deficient) = min_norm_loadings(&x, &v, 1e-10).unwrap();
        assert!(!deficient);
        assert!((fit - l).norm() < 1e-9);
    }
}
