//! Gaussian-process kernels on graphs obtained from stochastic partial
//! differential equations.
//!
//! The crate covers spatial graph kernels (Laplacian, graph Matérn),
//! separable products with temporal kernels, and two non-separable
//! spatio-temporal kernels: the stochastic heat equation kernel (SHEK) and
//! the stochastic wave equation kernel (SWEK). Around them sit exact GP
//! regression, an Euler–Maruyama simulator that serves as an independent
//! Monte Carlo check of every closed-form covariance, and a sliding-window
//! backtesting harness.
//!
//! Matrices are dense [`nalgebra::DMatrix`] values; target graphs have at
//! most a few thousand vertices.
//!
//! ```
//! use std::sync::Arc;
//!
//! use spde_gp::gp::{GPModel, SpatioTemporalDataset, TrainedGp};
//! use spde_gp::kernels::KernelContext;
//! use spde_gp::{Graph, KernelSpec, LaplacianVariant, STPoint};
//!
//! # fn main() -> spde_gp::Result<()> {
//! let graph = Arc::new(Graph::path(5)?);
//! let ctx = KernelContext::new(&graph, LaplacianVariant::Unnormalized)?;
//! let mut kernel = KernelSpec::named("shek")?;
//! kernel.set("c", 0.5)?;
//! let model = GPModel::new(kernel).with_noise(1e-3);
//!
//! let times = [0.0, 1.0, 2.0];
//! let values: Vec<Vec<f64>> = times
//!     .iter()
//!     .map(|t| (0..5).map(|v| (-(v as f64 - 2.0).powi(2) / (1.0 + t)).exp()).collect())
//!     .collect();
//! let data = SpatioTemporalDataset::from_grid(graph.clone(), &times, &values)?;
//! let gp = TrainedGp::new(&model, &ctx, &data)?;
//! let pred = gp.predict(&[STPoint::new(2, 2.5)], false)?;
//! assert!(pred.mean[0].is_finite() && pred.variance[0] >= 0.0);
//! # Ok(())
//! # }
//! ```

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {:e})", a, b, tol);
    }};
}

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gp;
pub mod graph;
pub mod kernels;
pub mod sde;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{FractionalLaplacian, Graph, LaplacianMatrix, LaplacianVariant};
pub use kernels::{KernelSpec, STPoint};
pub use spectral::SpectralDecomposition;
