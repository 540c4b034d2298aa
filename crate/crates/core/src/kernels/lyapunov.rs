//! Continuous Lyapunov equation `A C + C Aᵀ = Q`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{self, SpectralDecomposition};

/// Solves `A C + C Aᵀ = Q` for symmetric `A` in its eigenbasis:
/// `C = V [ (VᵀQV)_ij / (λ_i + λ_j) ] Vᵀ`.
pub fn lyapunov_symmetric(dec: &SpectralDecomposition, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let v = dec.basis();
    let lam = dec.eigenvalues();
    let scale = lam
        .iter()
        .fold(0.0_f64, |m, l| m.max(l.abs()))
        .max(f64::MIN_POSITIVE);
    let mut qm = v.transpose() * q * v;
    for i in 0..lam.len() {
        for j in 0..lam.len() {
            let d = lam[i] + lam[j];
            if d.abs() <= 1e-13 * scale {
                return Err(Error::SingularLyapunov);
            }
            qm[(i, j)] /= d;
        }
    }
    Ok(v * qm * v.transpose())
}

/// Solves `A C + C Aᵀ = Q` for a general square `A` through the Kronecker
/// form `(I ⊗ A + A ⊗ I) vec(C) = vec(Q)`. Dense, so intended for the
/// small graphs where directed kernels are used.
pub fn lyapunov_general(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch(
            "Lyapunov operands must be n×n".into(),
        ));
    }
    let nn = n * n;
    // column-major vec: index(i, j) = i + j n
    let mut big = DMatrix::<f64>::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for k in 0..n {
                // (A C)_ij = Σ_k A_ik C_kj
                big[(row, k + j * n)] += a[(i, k)];
                // (C Aᵀ)_ij = Σ_k C_ik A_jk
                big[(row, i + k * n)] += a[(j, k)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let lu = big.lu();
    let u = lu.u();
    let diag_max = (0..nn).fold(0.0_f64, |m, i| m.max(u[(i, i)].abs()));
    if (0..nn).any(|i| u[(i, i)].abs() <= 1e-13 * diag_max.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularLyapunov);
    }
    let sol = lu.solve(&rhs).ok_or(Error::SingularLyapunov)?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Stationary covariance `C*` of `du = −A u dt + Σ dW`, i.e. the solution of
/// `A C* + C* Aᵀ = ΣΣᵀ`. Requires the spectrum of `A` in the open right
/// half-plane for `C*` to be a covariance.
pub fn lyapunov_stationary(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = sigma * sigma.transpose();
    let c = if spectral::is_symmetric(a) {
        lyapunov_symmetric(&spectral::eigendecompose_symmetric(a)?, &q)?
    } else {
        lyapunov_general(a, &q)?
    };
    Ok((&c + c.transpose()) * 0.5)
}

pub fn lyapunov_residual(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a * c + c * a.transpose() - q).amax()
}
