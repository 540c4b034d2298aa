//! Hyperparameter recovery on data drawn from the model's own prior.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use spde_gp::gp::{
    fit, sample, FitOptions, GPModel, MeanPolicy, Observation, SpatioTemporalDataset,
};
use spde_gp::kernels::KernelContext;
use spde_gp::{Graph, KernelSpec, LaplacianVariant, STPoint};

const NOISE_SD: f64 = 0.05;

fn recovered_c(seed: u64) -> f64 {
    let g = Arc::new(Graph::path(3).unwrap());
    let ctx = KernelContext::new(&g, LaplacianVariant::Unnormalized).unwrap();
    let mut truth = KernelSpec::named("shek").unwrap();
    truth.set("c", 1.0).unwrap();
    truth.set("sigma", 1.0).unwrap();
    let model = GPModel::new(truth)
        .with_noise(NOISE_SD * NOISE_SD)
        .with_mean_policy(MeanPolicy::Zero);
    let points: Vec<STPoint> = (0..20)
        .flat_map(|t| (0..3).map(move |v| STPoint::new(v, t as f64 * 0.5)))
        .collect();
    let latent = sample(&model, &ctx, &points, 1, seed, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let noise = Normal::new(0.0, NOISE_SD).unwrap();
    let obs = points
        .iter()
        .enumerate()
        .map(|(i, &point)| Observation {
            point,
            y: latent[(0, i)] + noise.sample(&mut rng),
        })
        .collect();
    let data = SpatioTemporalDataset::new(g, obs).unwrap();

    let mut start = truth;
    start.set("c", 0.3).unwrap();
    start.set("sigma", 2.0).unwrap();
    let opts = FitOptions {
        seed,
        ..FitOptions::default()
    };
    let fitted = fit(
        &GPModel {
            kernel: start,
            ..model
        },
        &ctx,
        &data,
        &opts,
    )
    .unwrap();
    fitted.model.kernel.get("c").unwrap()
}

#[test]
fn shek_rate_is_recovered_within_factor_three() {
    let cs: Vec<f64> = (0..20u64).into_par_iter().map(recovered_c).collect();
    let hits = cs
        .iter()
        .filter(|&&c| (1.0 / 3.0..=3.0).contains(&c))
        .count();
    assert!(hits >= 16, "only {hits}/20 fits within ×/÷3: {cs:?}");
}
