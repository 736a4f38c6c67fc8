//! Small dense helpers on top of nalgebra used throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, mismatch, Error, Result};
use crate::scalar::{lit, Real};

/// `(M + Mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    DVector::from_vec(vals)
}

pub fn lambda_min<T: Real>(m: &DMatrix<T>) -> T {
    let v = sym_eigenvalues(m);
    if v.is_empty() {
        T::zero()
    } else {
        v[0]
    }
}

pub fn lambda_max<T: Real>(m: &DMatrix<T>) -> T {
    let v = sym_eigenvalues(m);
    if v.is_empty() {
        T::zero()
    } else {
        v[v.len() - 1]
    }
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(q: &DMatrix<T>) -> T {
    if q.is_empty() {
        return T::zero();
    }
    q.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |acc, s| if s > acc { s } else { acc })
}

/// Relative symmetry check: `max|Mᵢⱼ − Mⱼᵢ| ≤ tol · max(1, max|Mᵢⱼ|)`.
pub fn is_symmetric<T: Real>(m: &DMatrix<T>, rel_tol: T) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Symmetric square root of a PSD matrix; negative eigenvalues are clipped to zero.
pub fn psd_sqrt<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
    let q = &eig.eigenvectors;
    symmetrize(&(q * DMatrix::from_diagonal(&d) * q.transpose()))
}

/// Symmetric inverse square root of a PD matrix.
pub fn pd_inv_sqrt<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|v| *v <= T::zero()) {
        return Err(Error::Numerical("matrix is not positive definite".into()));
    }
    let d = eig.eigenvalues.map(|v| T::one() / v.sqrt());
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&d) * q.transpose())))
}

pub fn cholesky<T: Real>(m: &DMatrix<T>) -> Result<Cholesky<T, Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::Numerical("Cholesky factorisation failed".into()))
}

/// Solves `M X = B` for symmetric positive definite `M`.
pub fn spd_solve<T: Real>(m: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if m.nrows() != b.nrows() {
        return Err(mismatch("spd_solve", m.nrows(), b.nrows()));
    }
    Ok(cholesky(m)?.solve(b))
}

/// Inverse of an SPD matrix through its Cholesky factor, symmetrised.
pub fn spd_inverse<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    Ok(symmetrize(&spd_solve(m, &DMatrix::identity(n, n))?))
}

/// Quadratic form `xᵀ M x`.
pub fn quad_form<T: Real>(m: &DMatrix<T>, x: &DVector<T>) -> T {
    (x.transpose() * m * x)[(0, 0)]
}

pub(crate) fn require_square<T: Real>(m: &DMatrix<T>, name: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}

/// PSD test with an absolute eigenvalue tolerance.
pub fn is_psd<T: Real>(m: &DMatrix<T>, tol: T) -> bool {
    lambda_min(m) >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_rank_one() {
        let q = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        assert!((spectral_norm(&q) - 5.0_f64).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m);
        assert!((&r * &r - &m).norm() < 1e-12);
        let ri = pd_inv_sqrt(&m).unwrap();
        assert!((&ri * &m * &ri - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn spd_inverse_is_symmetric() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let inv = spd_inverse(&m).unwrap();
        assert!(is_symmetric(&inv, 0.0));
        assert!((&inv * &m - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn symmetry_check_is_relative() {
        let m = DMatrix::from_row_slice(2, 2, &[1e6, 1.0, 1.0 + 1e-7, 1e6]);
        assert!(is_symmetric(&m, 1e-12));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.1, 1.0]);
        assert!(!is_symmetric(&m, 1e-12));
    }
}
