//! Purely spatial graph kernels.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::graph::{self, LaplacianMatrix};
use crate::spectral::{self, NULL_SPACE_REL_TOL};

/// Spectral weights of `(LᵀL)⁺` for a symmetric `L` with spectrum `eigs`.
pub(crate) fn laplacian_mode_weights(eigs: &[f64]) -> Vec<f64> {
    let cutoff = NULL_SPACE_REL_TOL * eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    eigs.iter()
        .map(|&v| {
            if v.abs() <= cutoff {
                0.0
            } else {
                1.0 / (v * v)
            }
        })
        .collect()
}

/// Spectral weights `(2ν/κ² + λ)^{−ν}` of the graph Matérn kernel.
pub(crate) fn matern_mode_weights(eigs: &[f64], nu: f64, kappa: f64) -> Vec<f64> {
    let shift = graph::matern_shift(nu, kappa);
    eigs.iter()
        .map(|&lambda| (shift + lambda.max(0.0)).powf(-nu))
        .collect()
}

/// `(LᵀL)⁺`, the covariance of the solution of `−L v = w`.
pub fn laplacian_kernel(l: &LaplacianMatrix) -> Result<DMatrix<f64>> {
    if l.symmetric {
        // Same null space as L; square the spectrum instead of forming LᵀL.
        let dec = l.decompose()?;
        return Ok(dec.synthesize(&laplacian_mode_weights(dec.eigenvalues())));
    }
    let ltl = l.matrix.transpose() * &l.matrix;
    spectral::pseudoinverse(&ltl, NULL_SPACE_REL_TOL)
}

/// Graph Matérn covariance `(2ν/κ² I + L)^{−ν}`.
///
/// For asymmetric Laplacians (integer `ν/2` only) this is `(L̃ᵀL̃)⁻¹` with
/// `L̃ = (2ν/κ² I + L)^{ν/2}`, which coincides with the power form whenever
/// `L` is symmetric.
pub fn matern_graph_kernel(l: &LaplacianMatrix, nu: f64, kappa: f64) -> Result<DMatrix<f64>> {
    if l.symmetric {
        let frac = graph::FractionalLaplacian::new(l, nu, kappa)?;
        return Ok(frac.synthesize(&matern_mode_weights(
            frac.laplacian_eigenvalues(),
            nu,
            kappa,
        )));
    }
    let lt = graph::shifted_laplacian_power(l, nu, kappa)?;
    let prec = lt.transpose() * &lt;
    let inv = prec.try_inverse().ok_or(crate::Error::Singular)?;
    Ok((&inv + inv.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FractionalLaplacian, Graph, LaplacianVariant};

    fn lap(g: &Graph) -> LaplacianMatrix {
        g.laplacian(LaplacianVariant::Unnormalized).unwrap()
    }

    #[test]
    fn laplacian_kernel_examples() {
        let single = Graph::path(1).unwrap();
        assert_eq!(laplacian_kernel(&lap(&single)).unwrap()[(0, 0)], 0.0);
        let pair = Graph::path(2).unwrap();
        let k = laplacian_kernel(&lap(&pair)).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.125, -0.125, -0.125, 0.125]);
        assert!((k - want).amax() < 1e-12);
    }

    #[test]
    fn laplacian_kernel_directed_matches_pinv() {
        let g = Graph::new(["a", "b", "c"], [("a", "b", 1.0), ("b", "c", 2.0)], true).unwrap();
        let l = lap(&g);
        let k = laplacian_kernel(&l).unwrap();
        // Moore–Penrose identity K (LᵀL) K = K
        let ltl = l.matrix.transpose() * &l.matrix;
        assert!((&k * &ltl * &k - &k).amax() < 1e-9);
    }

    #[test]
    fn matern_examples() {
        let single = Graph::path(1).unwrap();
        let k = matern_graph_kernel(&lap(&single), 1.0, 2f64.sqrt()).unwrap();
        assert_close!(k[(0, 0)], 1.0, 1e-14);

        let pair = Graph::path(2).unwrap();
        let k = matern_graph_kernel(&lap(&pair), 1.0, 1.0).unwrap();
        // 2I + L = [[3,-1],[-1,3]]
        let want = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 3.0])
            .try_inverse()
            .unwrap();
        assert!((&k - &want).amax() < 1e-14);
        assert_close!(k[(0, 0)], 3.0 / 8.0, 1e-14);
        assert_close!(k[(0, 1)], 1.0 / 8.0, 1e-14);
    }

    #[test]
    fn matern_equals_inverse_gram_of_fractional_laplacian() {
        let g = Graph::new(
            ["a", "b", "c", "d"],
            [
                ("a", "b", 1.0),
                ("b", "c", 0.5),
                ("c", "d", 2.0),
                ("a", "d", 1.0),
            ],
            false,
        )
        .unwrap();
        let l = lap(&g);
        for (nu, kappa) in [(0.5, 1.0), (1.5, 0.7), (3.0, 2.0)] {
            let lt = FractionalLaplacian::new(&l, nu, kappa).unwrap().matrix();
            let oracle = (lt.transpose() * &lt).try_inverse().unwrap();
            let k = matern_graph_kernel(&l, nu, kappa).unwrap();
            assert!((k - oracle).amax() < 1e-8);
        }
    }
}
