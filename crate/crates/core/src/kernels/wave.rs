//! Graph wave equation and the stochastic wave equation kernel (SWEK).
//!
//! The stochastic process is `ü = −c² L̃ u + σ Ẇ` with deterministic
//! `u(0), u̇(0)`. Per eigenmode of `L̃` with `θ = c√μ` the response to the
//! noise is `∫₀ᵗ sin(θ(t−ξ))/θ σ dW(ξ)`, and Itô's isometry gives
//!
//! ```text
//! Cov(t, s) = σ²/(2θ²) · (m cos(θ(t−s)) − cos(θM) sin(θm)/θ)
//! ```
//!
//! with `m = min(t, s)`, `M = max(t, s)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::{FractionalLaplacian, LaplacianMatrix};
use crate::kernels::heat::{check_rate, check_scale, check_times};
use crate::spectral::NULL_SPACE_REL_TOL;

/// Eight-point Gauss–Legendre rule on [−1, 1], symmetric half.
const GL_NODES: [f64; 4] = [
    0.1834346424956498,
    0.525_532_409_916_329,
    0.7966664774136267,
    0.9602898564975363,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

/// Below this `θ·max(t,s)` the closed form cancels catastrophically and the
/// defining integral is evaluated by quadrature instead.
const SMALL_PHASE: f64 = 0.05;

#[inline]
fn sinc_response(theta: f64, a: f64) -> f64 {
    // sin(θa)/θ without dividing by a vanishing θ
    let x = theta * a;
    if x.abs() < 1e-4 {
        a * (1.0 - x * x / 6.0)
    } else {
        x.sin() / theta
    }
}

/// Per-eigenmode SWEK covariance for eigenvalue `mu` of `L̃`.
#[inline]
pub(crate) fn swek_mode_cov(mu: f64, c: f64, sigma: f64, t: f64, s: f64) -> f64 {
    let theta = c * mu.sqrt();
    let lo = t.min(s);
    let hi = t.max(s);
    let s2 = sigma * sigma;
    if theta * hi < SMALL_PHASE {
        // ∫₀^m S(M−ξ) S(m−ξ) dξ, integrand smooth and nearly polynomial
        let half = 0.5 * lo;
        let mut acc = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            for xi in [half - half * x, half + half * x] {
                acc += w * sinc_response(theta, hi - xi) * sinc_response(theta, lo - xi);
            }
        }
        return s2 * half * acc;
    }
    s2 / (2.0 * theta * theta)
        * (lo * (theta * (hi - lo)).cos() - (theta * hi).cos() * (theta * lo).sin() / theta)
}

/// Scalar-noise SWEK cross-covariance on a symmetric fractional Laplacian.
pub fn swek_cov(
    lt: &FractionalLaplacian,
    c: f64,
    sigma: f64,
    t: f64,
    s: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    check_rate("c", c)?;
    check_scale("sigma", sigma)?;
    check_times(t, s)?;
    let w: Vec<f64> = lt
        .eigenvalues()
        .iter()
        .map(|&mu| swek_mode_cov(mu, c, sigma, t, s))
        .collect();
    Ok(lt.synthesize(&w))
}

fn mode_propagate(theta: f64, y0: f64, v0: f64, t: f64) -> f64 {
    (theta * t).cos() * y0 + sinc_response(theta, t) * v0
}

fn check_len(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} has {} entries, graph has {n}",
            v.len()
        )))
    }
}

/// Deterministic solution of `ü = −c² L u` with `u(0) = u0`, `u̇(0) = v0`.
/// Zero modes move freely: `y(t) = y(0) + ẏ(0) t`.
pub fn wave_solution(
    l: &LaplacianMatrix,
    c: f64,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_rate("c", c)?;
    check_times(t, 0.0)?;
    if !l.symmetric {
        return Err(Error::Unsupported {
            kernel: "wave".into(),
            reason: "the wave solution needs a symmetric Laplacian".into(),
        });
    }
    check_len(u0, l.dim(), "u0")?;
    check_len(v0, l.dim(), "v0")?;
    let dec = l.decompose()?;
    let scale = dec
        .eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let y0 = dec.to_modes(u0);
    let dy0 = dec.to_modes(v0);
    let modes = DVector::from_iterator(
        l.dim(),
        dec.eigenvalues().iter().enumerate().map(|(k, &lambda)| {
            if lambda <= NULL_SPACE_REL_TOL * scale {
                y0[k] + dy0[k] * t
            } else {
                mode_propagate(c * lambda.sqrt(), y0[k], dy0[k], t)
            }
        }),
    );
    Ok(dec.from_modes(&modes))
}

/// Mean of the stochastic wave process driven by `L̃` (which has no zero modes).
pub fn swek_mean(
    lt: &FractionalLaplacian,
    c: f64,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    check_rate("c", c)?;
    check_times(t, 0.0)?;
    check_len(u0, lt.dim(), "u0")?;
    check_len(v0, lt.dim(), "v0")?;
    let basis = lt.basis();
    let y0 = basis.tr_mul(u0);
    let dy0 = basis.tr_mul(v0);
    let modes = DVector::from_iterator(
        lt.dim(),
        lt.eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &mu)| mode_propagate(c * mu.sqrt(), y0[k], dy0[k], t)),
    );
    Ok(basis * modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, LaplacianVariant};
    use std::f64::consts::PI;

    fn lap(g: &Graph) -> LaplacianMatrix {
        g.laplacian(LaplacianVariant::Unnormalized).unwrap()
    }

    /// Single vertex with `L̃ = [1]` (ν = 1, κ = √2).
    fn unit_vertex() -> FractionalLaplacian {
        FractionalLaplacian::new(&lap(&Graph::path(1).unwrap()), 1.0, 2f64.sqrt()).unwrap()
    }

    fn simpson_mode_cov(theta: f64, sigma: f64, t: f64, s: f64) -> f64 {
        let (lo, hi) = (t.min(s), t.max(s));
        let n = 4000;
        let h = lo / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let xi = k as f64 * h;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * (theta * (hi - xi)).sin() * (theta * (lo - xi)).sin();
        }
        sigma * sigma * acc * h / 3.0 / (theta * theta)
    }

    #[test]
    fn mode_formula_matches_defining_integral() {
        for (theta, t, s) in [
            (1.0, PI, PI),
            (2.3, 1.7, 0.4),
            (0.4, 0.3, 2.9),
            (5.0, 2.0, 2.0),
        ] {
            let mu = theta * theta;
            assert_close!(
                swek_mode_cov(mu, 1.0, 1.3, t, s),
                simpson_mode_cov(theta, 1.3, t, s),
                1e-9
            );
        }
    }

    #[test]
    fn scalar_value_at_pi() {
        // σ²/(2θ²)(π cos 0 − cos π sin π) = π/2
        let f = unit_vertex();
        let k = swek_cov(&f, 1.0, 1.0, PI, PI).unwrap();
        assert_close!(k[(0, 0)], PI / 2.0, 1e-14);
    }

    #[test]
    fn quadrature_branch_is_continuous() {
        for mu in [1e-6f64, 1e-4, 2e-3] {
            for (t, s) in [(0.5, 0.3), (1.0, 1.0), (0.2, 0.9)] {
                let theta = mu.sqrt();
                let phase = theta * f64::max(t, s);
                let quad = swek_mode_cov(mu, 1.0, 1.0, t, s);
                // leading-order expansion m²(3M − m)/6 of the integral
                let (lo, hi) = (f64::min(t, s), f64::max(t, s));
                let series = lo * lo * (3.0 * hi - lo) / 6.0;
                assert!(phase < SMALL_PHASE);
                assert_close!(quad, series, 1e-3 * series + 1e-12 + phase * phase * series);
            }
        }
        // both sides of the switch agree
        let theta_hi = SMALL_PHASE * 1.0001;
        let theta_lo = SMALL_PHASE * 0.9999;
        let a = swek_mode_cov(theta_hi * theta_hi, 1.0, 1.0, 1.0, 0.7);
        let b = swek_mode_cov(theta_lo * theta_lo, 1.0, 1.0, 1.0, 0.7);
        assert_close!(a, b, 1e-6 * a.abs());
    }

    #[test]
    fn vanishes_at_origin() {
        let f = FractionalLaplacian::new(&lap(&Graph::path(3).unwrap()), 2.0, 1.0).unwrap();
        assert_eq!(swek_cov(&f, 1.0, 1.0, 0.0, 3.0).unwrap().amax(), 0.0);
        assert_eq!(swek_cov(&f, 1.0, 1.0, 2.0, 0.0).unwrap().amax(), 0.0);
        assert!(matches!(
            swek_cov(&f, 1.0, 1.0, -1.0, 0.0),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn variance_keeps_growing() {
        let f = FractionalLaplacian::new(&lap(&Graph::path(3).unwrap()), 2.0, 1.0).unwrap();
        for t in [1.0, 2.0, 4.0] {
            let a = swek_cov(&f, 1.0, 1.0, t, t).unwrap();
            let b = swek_cov(&f, 1.0, 1.0, 2.0 * t, 2.0 * t).unwrap();
            for i in 0..3 {
                assert!(b[(i, i)] > a[(i, i)]);
            }
        }
    }

    #[test]
    fn wave_solution_examples() {
        let g = Graph::path(4).unwrap();
        let u0 = DVector::from_element(4, 2.5);
        let zero = DVector::zeros(4);
        for t in [0.0, 1.3, 7.0] {
            let u = wave_solution(&lap(&g), 1.7, &u0, &zero, t).unwrap();
            assert!((u - &u0).amax() < 1e-12);
        }

        let single = Graph::path(1).unwrap();
        let u = wave_solution(
            &lap(&single),
            1.0,
            &DVector::from_vec(vec![1.0]),
            &DVector::from_vec(vec![2.0]),
            3.0,
        )
        .unwrap();
        assert_close!(u[0], 7.0, 1e-14);

        let pair = Graph::path(2).unwrap();
        let u0 = DVector::from_vec(vec![1.0, -1.0]);
        for t in [0.4, 2.0] {
            let u = wave_solution(&lap(&pair), 1.0, &u0, &DVector::zeros(2), t).unwrap();
            let want = &u0 * (2f64.sqrt() * t).cos();
            assert!((u - want).amax() < 1e-13);
        }
    }

    #[test]
    fn mean_examples() {
        let f = unit_vertex();
        let u0 = DVector::from_vec(vec![0.8]);
        let v0 = DVector::from_vec(vec![0.0]);
        assert_close!(swek_mean(&f, 1.0, &u0, &v0, 0.0).unwrap()[0], 0.8, 1e-15);
        for t in [0.5, 2.0, 9.0] {
            assert_close!(
                swek_mean(&f, 1.0, &u0, &v0, t).unwrap()[0],
                0.8 * t.cos(),
                1e-14
            );
            let m = swek_mean(
                &f,
                2.0,
                &DVector::zeros(1),
                &DVector::from_vec(vec![1.0]),
                t,
            )
            .unwrap();
            assert_close!(m[0], (2.0 * t).sin() / 2.0, 1e-14);
        }
        let f3 = FractionalLaplacian::new(&lap(&Graph::path(3).unwrap()), 2.0, 1.0).unwrap();
        let u0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = swek_mean(&f3, 0.7, &u0, &DVector::zeros(3), 0.0).unwrap();
        assert!((m - u0).amax() < 1e-14);
    }
}
