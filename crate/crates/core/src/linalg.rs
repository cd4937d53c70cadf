//! Small dense helpers shared by the filter and the index computations.

use nalgebra::{Matrix4, SMatrix, SVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Returns `(P + Pᵀ) / 2`.
pub fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

/// True when every off-diagonal entry is exactly zero.
pub fn is_diagonal<const N: usize>(m: &SMatrix<f64, N, N>) -> bool {
    (0..N).all(|i| (0..N).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Matrix4<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Computes `vᵀ W⁻¹ v` for a symmetric positive definite weight `W`.
///
/// Diagonal weights use per-element reciprocals; anything else goes through
/// a Cholesky solve.
pub fn inverse_quadratic_form<const N: usize>(
    v: &SVector<f64, N>,
    weight: &SMatrix<f64, N, N>,
) -> Result<f64> {
    if is_diagonal(weight) {
        let mut acc = 0.0;
        for i in 0..N {
            let w = weight[(i, i)];
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Config(format!(
                    "noise covariance diagonal entry {i} must be positive and finite, got {w}"
                )));
            }
            acc += v[i] * v[i] / w;
        }
        return Ok(acc);
    }
    let asym = (weight - weight.transpose()).abs().max();
    if asym > 1e-12 * weight.abs().max().max(1.0) {
        return Err(Error::Config("noise covariance is not symmetric".into()));
    }
    let chol = weight
        .cholesky()
        .ok_or_else(|| Error::Config("noise covariance is not positive definite".into()))?;
    Ok(v.dot(&chol.solve(v)))
}

/// Central-difference Jacobian of `f` at `x`; the step for coordinate `j` is
/// `rel_step * max(1, |x_j|)`.
pub fn central_difference<const N: usize, const M: usize, F>(
    f: F,
    x: &SVector<f64, N>,
    rel_step: f64,
) -> SMatrix<f64, M, N>
where
    F: Fn(&SVector<f64, N>) -> SVector<f64, M>,
{
    let mut jac = SMatrix::<f64, M, N>::zeros();
    for j in 0..N {
        let h = rel_step * x[j].abs().max(1.0);
        let mut plus = *x;
        let mut minus = *x;
        plus[j] += h;
        minus[j] -= h;
        let col = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}
