//! Thin wrappers over faer's dense decompositions, returning plain vectors
//! and crate errors.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = Mat<Complex64>;

pub fn to_complex(a: &Mat<f64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| Complex64::new(a[(i, j)], 0.0))
}

pub fn col_vec(v: &[Complex64]) -> CMat {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn col_to_vec(m: &CMat, j: usize) -> Vec<Complex64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn identity(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::EigSolveFailure(format!("{e:?}")))
}

/// Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix.
pub fn sym_eig(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigSolveFailure(format!("{e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues(a: &Mat<f64>) -> Result<Vec<Complex64>> {
    a.eigenvalues()
        .map_err(|e| Error::EigSolveFailure(format!("{e:?}")))
}

/// Eigenvalues and eigenvectors of a general real matrix.
pub fn eig(a: &Mat<f64>) -> Result<(Vec<Complex64>, CMat)> {
    let evd = a
        .eigen()
        .map_err(|e| Error::EigSolveFailure(format!("{e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues and eigenvectors of a general complex matrix.
pub fn eig_complex(a: &CMat) -> Result<(Vec<Complex64>, CMat)> {
    let evd = a
        .eigen()
        .map_err(|e| Error::EigSolveFailure(format!("{e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

/// Singular values in nonincreasing order.
pub fn singular_values_c(a: &CMat) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::EigSolveFailure(format!("svd: {e:?}")))
}

pub fn singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::EigSolveFailure(format!("svd: {e:?}")))
}

/// Full SVD `A = U S Vᴴ`, singular values nonincreasing.
pub fn svd_c(a: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let svd = a
        .svd()
        .map_err(|e| Error::EigSolveFailure(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|v| v.re).collect();
    Ok((svd.U().to_owned(), s, svd.V().to_owned()))
}

pub fn spectral_norm_c(a: &CMat) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(singular_values_c(a)?[0])
}

pub fn spectral_norm(a: &Mat<f64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(singular_values(a)?[0])
}

/// Lower Cholesky factor, or `None` if the matrix is not positive definite.
pub fn cholesky(a: &Mat<f64>) -> Option<Mat<f64>> {
    let llt = a.llt(Side::Lower).ok()?;
    Some(llt.L().to_owned())
}

pub fn inverse(a: &Mat<f64>) -> Mat<f64> {
    a.partial_piv_lu().inverse()
}

pub fn inverse_c(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn solve_c(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn frobenius_c(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn norm_one(a: &Mat<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_one_c(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry of `a - aᵀ`.
pub fn asymmetry(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    let mut m: f64 = 0.0;
    for j in 0..n {
        for i in j + 1..n {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm_real(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `Σ x_i conj(y_i)`.
pub fn dot_c(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

/// Modified Gram–Schmidt in place; numerically dependent vectors are dropped.
pub fn orthonormalize(vs: &mut Vec<Vec<Complex64>>) {
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(vs.len());
    for mut v in vs.drain(..) {
        let n0 = vec_norm(&v);
        for q in &out {
            let c = dot_c(&v, q);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
        }
        let n = vec_norm(&v);
        if n > 1e-10 * n0 {
            v.iter_mut().for_each(|vi| *vi /= n);
            out.push(v);
        }
    }
    *vs = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_of_rotation_generator() {
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => -1.0,
            (1, 0) => 1.0,
            _ => 0.0,
        });
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.im.total_cmp(&y.im));
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = identity(2);
        a[(1, 1)] = -1.0;
        assert!(cholesky(&a).is_none());
        assert!(cholesky(&identity(3)).is_some());
    }
}
