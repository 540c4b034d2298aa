//! Marginal-likelihood maximization in log-space of the positive
//! hyperparameters: BFGS with a backtracking line search and central
//! finite-difference gradients.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::SpatioTemporalDataset;
use super::model::{GPModel, TrainedGp, NOISE_FLOOR};
use crate::error::{Error, Result};
use crate::kernels::KernelContext;

/// Log-parameters are kept in `[−LOG_BOUND, LOG_BOUND]`.
const LOG_BOUND: f64 = 20.0;
/// Longest log-space step proposed by one BFGS iteration.
const MAX_STEP: f64 = 3.0;
const ARMIJO: f64 = 1e-4;
const NOISE: &str = "noise_variance";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Iterates evaluated per start, the initial point included.
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Random starts tried in addition to the model's own hyperparameters.
    pub restarts: usize,
    pub seed: u64,
    /// Also optimize the fractional Laplacian's `ν` and `κ`.
    pub include_shape: bool,
    /// Central-difference step in log-space.
    pub fd_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 200,
            grad_tol: 1e-6,
            restarts: 3,
            seed: 0,
            include_shape: false,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: GPModel,
    pub lml: f64,
    pub initial_lml: f64,
    /// LML after each accepted iterate of the winning start.
    pub trace: Vec<f64>,
    pub failed_starts: usize,
    pub evaluations: usize,
}

struct Objective<'a> {
    base: GPModel,
    names: Vec<&'static str>,
    ctx: &'a KernelContext,
    data: &'a SpatioTemporalDataset,
    evaluations: usize,
}

impl Objective<'_> {
    fn model_at(&self, x: &DVector<f64>) -> Result<GPModel> {
        let mut m = self.base;
        for (name, v) in self.names.iter().zip(x.iter()) {
            let value = v.exp();
            if *name == NOISE {
                m.noise_variance = value.max(NOISE_FLOOR);
            } else {
                m.kernel.set(name, value)?;
            }
        }
        Ok(m)
    }

    fn point(&self, m: &GPModel) -> DVector<f64> {
        DVector::from_iterator(
            self.names.len(),
            self.names.iter().map(|n| {
                let v = if *n == NOISE {
                    m.effective_noise()
                } else {
                    m.kernel.get(n).unwrap_or(1.0)
                };
                v.ln().clamp(-LOG_BOUND, LOG_BOUND)
            }),
        )
    }

    /// Negative LML; numerical failures count as +∞.
    fn cost(&mut self, x: &DVector<f64>) -> f64 {
        self.evaluations += 1;
        self.model_at(x)
            .and_then(|m| TrainedGp::new(&m, self.ctx, self.data))
            .map(|gp| -gp.log_marginal_likelihood())
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    }

    fn gradient(&mut self, x: &DVector<f64>, h: f64) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for i in 0..x.len() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            g[i] = (self.cost(&up) - self.cost(&down)) / (2.0 * h);
        }
        g
    }
}

fn clamp(x: &mut DVector<f64>) {
    for v in x.iter_mut() {
        *v = v.clamp(-LOG_BOUND, LOG_BOUND);
    }
}

struct Run {
    x: DVector<f64>,
    cost: f64,
    trace: Vec<f64>,
}

fn bfgs(obj: &mut Objective, x0: DVector<f64>, opts: &FitOptions) -> Option<Run> {
    let mut x = x0;
    let mut fx = obj.cost(&x);
    if !fx.is_finite() {
        return None;
    }
    let dim = x.len();
    let mut trace = vec![-fx];
    let mut g = obj.gradient(&x, opts.fd_step);
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut fresh = true;
    while trace.len() < opts.max_iters {
        if !g.iter().all(|v| v.is_finite()) || g.amax() < opts.grad_tol {
            break;
        }
        let mut p = -(&h * &g);
        if p.dot(&g) >= 0.0 {
            h.fill_with_identity();
            p = -g.clone();
        }
        let longest = p.amax();
        if longest > MAX_STEP {
            p *= MAX_STEP / longest;
        }
        let slope = p.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = &x + &p * alpha;
            clamp(&mut trial);
            let ft = obj.cost(&trial);
            if ft <= fx + ARMIJO * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            // the curvature model went stale; retry along steepest descent
            h.fill_with_identity();
            fresh = true;
            continue;
        };
        let g_new = obj.gradient(&x_new, opts.fd_step);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(dim, dim);
            let left = &id - &s * y.transpose() * rho;
            let right = &id - &y * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
            fresh = false;
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(-fx);
        if improvement <= 1e-12 * (1.0 + fx.abs()) && s.amax() < 1e-9 {
            break;
        }
    }
    Some(Run { x, cost: fx, trace })
}

/// Maximizes the log marginal likelihood over the kernel's optimizable
/// hyperparameters and the noise variance. The model's own values are the
/// first start; `restarts` further starts draw every kernel hyperparameter
/// log-uniformly from `[0.1, 10]` and keep the starting noise level.
pub fn fit(
    model: &GPModel,
    ctx: &KernelContext,
    data: &SpatioTemporalDataset,
    opts: &FitOptions,
) -> Result<FitResult> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidParameter(
            "max_iters must be at least 1".into(),
        ));
    }
    let mut names = model.kernel.optimizable(opts.include_shape);
    names.push(NOISE);
    let mut obj = Objective {
        base: *model,
        names,
        ctx,
        data,
        evaluations: 0,
    };
    let initial_lml = TrainedGp::new(model, ctx, data)?.log_marginal_likelihood();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let first = obj.point(model);
    let mut starts = vec![first.clone()];
    for _ in 0..opts.restarts {
        let mut x = first.clone();
        for (i, name) in obj.names.iter().enumerate() {
            if *name != NOISE {
                x[i] = rng.random_range(0.1f64.ln()..10f64.ln());
            }
        }
        starts.push(x);
    }

    let mut best: Option<Run> = None;
    let mut failed = 0;
    for x0 in starts {
        match bfgs(&mut obj, x0, opts) {
            Some(run) if best.as_ref().is_none_or(|b| run.cost < b.cost) => best = Some(run),
            Some(_) => {}
            None => failed += 1,
        }
    }
    let best = best.ok_or_else(|| Error::Optimization("every start failed to evaluate".into()))?;
    // exp(ln v) need not round-trip; an unmoved start returns the input as is
    let fitted = if best.x == first {
        *model
    } else {
        obj.model_at(&best.x)?
    };
    Ok(FitResult {
        model: fitted,
        lml: -best.cost,
        initial_lml,
        trace: best.trace,
        failed_starts: failed,
        evaluations: obj.evaluations,
    })
}

/// Central finite-difference gradient of the LML with respect to the log of
/// each named hyperparameter (`noise_variance` included).
pub fn lml_gradient(
    model: &GPModel,
    ctx: &KernelContext,
    data: &SpatioTemporalDataset,
    names: &[&'static str],
    step: f64,
) -> Result<Vec<f64>> {
    let mut obj = Objective {
        base: *model,
        names: names.to_vec(),
        ctx,
        data,
        evaluations: 0,
    };
    let x = obj.point(model);
    let g = obj.gradient(&x, step);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimization("gradient is not finite".into()));
    }
    Ok(g.iter().map(|v| -v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Observation, SpatioTemporalDataset};
    use crate::graph::{Graph, LaplacianVariant};
    use crate::kernels::{KernelSpec, STPoint};
    use std::sync::Arc;

    fn setup(values: impl Fn(usize, f64) -> f64) -> (KernelContext, SpatioTemporalDataset) {
        let g = Arc::new(Graph::path(3).unwrap());
        let ctx = KernelContext::new(&g, LaplacianVariant::Unnormalized).unwrap();
        let obs = (0..12)
            .flat_map(|k| {
                let t = 0.5 * k as f64;
                (0..3).map(move |v| (v, t))
            })
            .map(|(v, t)| Observation {
                point: STPoint::new(v, t),
                y: values(v, t),
            })
            .collect();
        (ctx, SpatioTemporalDataset::new(g, obs).unwrap())
    }

    #[test]
    fn single_iteration_budget_returns_start() {
        let (ctx, d) = setup(|v, t| (t + v as f64).sin());
        let model = GPModel::new(KernelSpec::named("shek").unwrap());
        let opts = FitOptions {
            max_iters: 1,
            restarts: 0,
            ..Default::default()
        };
        let r = fit(&model, &ctx, &d, &opts).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.model, model);
        assert_close!(r.lml, r.initial_lml, 1e-12);
    }

    #[test]
    fn trace_is_monotone_and_improves() {
        let (ctx, d) = setup(|v, t| (0.7 * t).cos() * (v as f64 - 1.0) + 0.1 * t);
        for name in ["shek", "swek", "sep-matern-rbf"] {
            let model = GPModel::new(KernelSpec::named(name).unwrap());
            let r = fit(
                &model,
                &ctx,
                &d,
                &FitOptions {
                    restarts: 1,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(r.lml >= r.initial_lml - 1e-12);
            for w in r.trace.windows(2) {
                assert!(w[1] >= w[0], "{name}: {:?}", r.trace);
            }
        }
    }

    #[test]
    fn zero_signal_trace_is_non_decreasing() {
        let (ctx, d) = setup(|_, _| 0.0);
        let model = GPModel::new(KernelSpec::named("shek").unwrap());
        let r = fit(
            &model,
            &ctx,
            &d,
            &FitOptions {
                restarts: 0,
                max_iters: 30,
                ..Default::default()
            },
        )
        .unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn gradient_is_stable_under_step_halving() {
        let (ctx, d) = setup(|v, t| (t * (1.0 + v as f64)).sin());
        let model = GPModel::new(KernelSpec::named("shek").unwrap()).with_noise(0.05);
        let names = ["c", "sigma", "noise_variance"];
        let coarse = lml_gradient(&model, &ctx, &d, &names, 5e-5).unwrap();
        let fine = lml_gradient(&model, &ctx, &d, &names, 2.5e-5).unwrap();
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a - b).abs() < 0.1 * b.abs().max(1e-6), "{a} vs {b}");
        }
    }
}
