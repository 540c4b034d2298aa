//! Heat semigroup and the stochastic heat equation kernel (SHEK).
//!
//! The process is `du = −c L̃ u dt + Σ dW` started from a deterministic
//! `u(0)`. With `Γ = c L̃` the cross-covariance is
//!
//! ```text
//! Cov[u(t), u(s)] = ∫₀^{min(t,s)} e^{−Γ(t−ξ)} ΣΣᵀ e^{−Γᵀ(s−ξ)} dξ
//! ```
//!
//! which for symmetric `L̃` and `Σ = σI` is
//! `σ²/(2c) (e^{−cL̃|t−s|} − e^{−cL̃(t+s)}) L̃⁻¹`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{FractionalLaplacian, LaplacianMatrix};
use crate::kernels::lyapunov;
use crate::spectral;

pub(crate) fn check_times(t: f64, s: f64) -> Result<()> {
    for v in [t, s] {
        if v.is_nan() || v < 0.0 {
            return Err(Error::NegativeTime(v));
        }
    }
    Ok(())
}

pub(crate) fn check_rate(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

pub(crate) fn check_scale(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be non-negative, got {v}"
        )))
    }
}

/// `e^{−c L t}`. Symmetric Laplacians use their spectrum, others (directed,
/// random-walk) the Padé matrix exponential.
pub fn heat_semigroup(l: &LaplacianMatrix, c: f64, t: f64) -> Result<DMatrix<f64>> {
    check_rate("c", c)?;
    check_times(t, 0.0)?;
    if l.symmetric {
        let dec = l.decompose()?;
        spectral::matrix_function(&dec, |lambda| (-c * lambda * t).exp())
    } else {
        spectral::expm(&(&l.matrix * (-c * t)))
    }
}

/// Truncated random-walk expansion `Σ_{k<K} tᵏe^{−t}/k! Pᵏ` of `e^{−L t}` for
/// `L = I − P`.
pub fn heat_random_walk_check(l_rw: &DMatrix<f64>, t: f64, k_terms: usize) -> Result<DMatrix<f64>> {
    check_times(t, 0.0)?;
    if k_terms == 0 {
        return Err(Error::InvalidParameter(
            "at least one series term is required".into(),
        ));
    }
    let n = l_rw.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let p = &id - l_rw;
    let mut power = id;
    let mut weight = (-t).exp();
    let mut sum = &power * weight;
    for k in 1..k_terms {
        power = &power * &p;
        weight *= t / k as f64;
        sum += &power * weight;
    }
    Ok(sum)
}

/// Per-eigenmode SHEK covariance for eigenvalue `mu` of `L̃`:
/// `σ²/(2cμ) · e^{−cμ|t−s|} (1 − e^{−2cμ min(t,s)})`.
#[inline]
pub(crate) fn shek_mode_cov(mu: f64, c: f64, sigma: f64, t: f64, s: f64) -> f64 {
    let rate = c * mu;
    let lo = t.min(s);
    let gap = (t - s).abs();
    sigma * sigma / (2.0 * rate) * (-rate * gap).exp() * -(-2.0 * rate * lo).exp_m1()
}

/// Scalar-noise SHEK cross-covariance on a symmetric fractional Laplacian.
pub fn shek_cov(
    lt: &FractionalLaplacian,
    c: f64,
    sigma: f64,
    t: f64,
    s: f64,
) -> Result<DMatrix<f64>> {
    check_rate("c", c)?;
    check_scale("sigma", sigma)?;
    check_times(t, s)?;
    let w: Vec<f64> = lt
        .eigenvalues()
        .iter()
        .map(|&mu| shek_mode_cov(mu, c, sigma, t, s))
        .collect();
    Ok(lt.synthesize(&w))
}

/// SHEK for an arbitrary (possibly asymmetric) `L̃`.
///
/// For `t ≥ s` the covariance is `e^{−Γ(t−s)} P(s)` with
/// `P(m) = C* − e^{−Γm} C* e^{−Γᵀm}` and `Γ C* + C* Γᵀ = σ²I`; for `t < s`
/// it is `P(t) e^{−Γᵀ(s−t)}`. For normal `Γ` this collapses to
/// `σ² e^{−Γt−Γᵀs}(e^{(Γ+Γᵀ)min(t,s)} − I)(Γ+Γᵀ)⁻¹`; for non-normal `Γ`
/// (directed graphs) the exponentials no longer commute and only this form
/// is exact.
#[derive(Debug, Clone)]
pub struct GeneralShek {
    gamma: DMatrix<f64>,
    stationary: DMatrix<f64>,
}

impl GeneralShek {
    pub fn new(lt: &DMatrix<f64>, c: f64, sigma: f64) -> Result<Self> {
        check_rate("c", c)?;
        check_scale("sigma", sigma)?;
        let n = lt.nrows();
        let gamma = lt * c;
        let q = DMatrix::<f64>::identity(n, n) * (sigma * sigma);
        let stationary = if spectral::is_symmetric(&gamma) {
            lyapunov::lyapunov_symmetric(&spectral::eigendecompose_symmetric(&gamma)?, &q)?
        } else {
            lyapunov::lyapunov_general(&gamma, &q)?
        };
        Ok(GeneralShek { gamma, stationary })
    }

    /// Stationary covariance `C*`.
    pub fn stationary(&self) -> &DMatrix<f64> {
        &self.stationary
    }

    fn propagator(&self, dt: f64) -> Result<DMatrix<f64>> {
        spectral::expm(&(&self.gamma * -dt))
    }

    /// Covariance of `u(m)` with itself.
    pub fn marginal(&self, m: f64) -> Result<DMatrix<f64>> {
        check_times(m, 0.0)?;
        let e = self.propagator(m)?;
        Ok(&self.stationary - &e * &self.stationary * e.transpose())
    }

    pub fn cov(&self, t: f64, s: f64) -> Result<DMatrix<f64>> {
        check_times(t, s)?;
        if t >= s {
            Ok(self.propagator(t - s)? * self.marginal(s)?)
        } else {
            Ok(self.marginal(t)? * self.propagator(s - t)?.transpose())
        }
    }
}

pub fn shek_cov_general(
    lt: &DMatrix<f64>,
    c: f64,
    sigma: f64,
    t: f64,
    s: f64,
) -> Result<DMatrix<f64>> {
    GeneralShek::new(lt, c, sigma)?.cov(t, s)
}

/// Mean `e^{−c L̃ t} u(0)` of the heat process.
pub fn shek_mean(
    lt: &FractionalLaplacian,
    c: f64,
    u0: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_rate("c", c)?;
    check_times(t, 0.0)?;
    if u0.len() != lt.dim() {
        return Err(Error::DimensionMismatch(format!(
            "u0 has {} entries, graph has {}",
            u0.len(),
            lt.dim()
        )));
    }
    let basis = lt.basis();
    let mut modes = basis.tr_mul(u0);
    for (m, mu) in modes.iter_mut().zip(lt.eigenvalues()) {
        *m *= (-c * mu * t).exp();
    }
    Ok(basis * modes)
}

/// SHEK driven by matrix-scaled noise `Σ dW`. In the eigenbasis `V` of `L̃`
/// with `M = Vᵀ ΣΣᵀ V`, for `t ≥ s`
///
/// ```text
/// C_ij = M_ij / (c(λ_i + λ_j)) · (e^{−cλ_i(t−s)} − e^{−c(λ_i t + λ_j s)})
/// ```
///
/// and `Cov = V C Vᵀ`; `t < s` is the transpose of the swapped call.
pub fn shek_matrix_noise_cov(
    lt: &FractionalLaplacian,
    c: f64,
    sigma: &DMatrix<f64>,
    t: f64,
    s: f64,
) -> Result<DMatrix<f64>> {
    check_rate("c", c)?;
    check_times(t, s)?;
    let n = lt.dim();
    if sigma.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "Σ has {} rows, graph has {n} vertices",
            sigma.nrows()
        )));
    }
    if t < s {
        return Ok(shek_matrix_noise_cov(lt, c, sigma, s, t)?.transpose());
    }
    let v = lt.basis();
    let lam = lt.eigenvalues();
    let vs = v.tr_mul(sigma);
    let mut m = &vs * vs.transpose();
    for i in 0..n {
        for j in 0..n {
            let total = c * (lam[i] + lam[j]);
            m[(i, j)] *= (-c * lam[i] * (t - s)).exp() * -(-total * s).exp_m1() / total;
        }
    }
    Ok(v * m * v.transpose())
}
