//! Exact Gaussian-process regression over `(vertex, time)` points.
//!
//! When the training data cover every vertex at each of their times and the
//! Laplacian is symmetric, the covariance is block-diagonal in the Laplacian
//! eigenbasis and everything reduces to one small `T×T` problem per mode.
//! Otherwise the full Gram matrix is factorized.

mod dataset;
mod fit;
mod model;

pub use dataset::{Observation, SpatioTemporalDataset};
pub use fit::{fit, lml_gradient, FitOptions, FitResult};
pub use model::{
    log_marginal_likelihood, predict, sample, GPModel, MeanPolicy, PosteriorPrediction,
    SolverChoice, TrainedGp, NOISE_FLOOR,
};
