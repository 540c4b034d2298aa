use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::SpatioTemporalDataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelContext, KernelSpec, ModalKernel, PreparedKernel, STPoint};
use crate::spectral::{cholesky_jittered, JitteredCholesky};

/// Smallest observation-noise variance used in any factorization.
pub const NOISE_FLOOR: f64 = 1e-10;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanPolicy {
    Zero,
    /// Each vertex's training mean (the overall mean for unobserved vertices).
    #[default]
    PerNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPModel {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    #[serde(default)]
    pub mean_policy: MeanPolicy,
    /// Process time assigned to the earliest training time. SHEK and SWEK
    /// have zero variance at `t = 0`, so the default is 1.
    #[serde(default = "default_time_offset")]
    pub time_offset: f64,
}

fn default_time_offset() -> f64 {
    1.0
}

impl GPModel {
    pub fn new(kernel: KernelSpec) -> Self {
        GPModel {
            kernel,
            noise_variance: 1e-2,
            mean_policy: MeanPolicy::default(),
            time_offset: 1.0,
        }
    }

    pub fn with_noise(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    pub fn with_mean_policy(mut self, policy: MeanPolicy) -> Self {
        self.mean_policy = policy;
        self
    }

    pub fn with_time_offset(mut self, offset: f64) -> Self {
        self.time_offset = offset;
        self
    }

    pub fn effective_noise(&self) -> f64 {
        self.noise_variance.max(NOISE_FLOOR)
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        if !(self.time_offset >= 0.0 && self.time_offset.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time offset must be non-negative, got {}",
                self.time_offset
            )));
        }
        self.kernel.validate()
    }
}

/// How the training covariance is factorized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    /// Per-mode factorization when the data form a full grid, else dense.
    #[default]
    Auto,
    Dense,
}

#[derive(Debug, Clone)]
pub struct PosteriorPrediction {
    pub mean: Vec<f64>,
    /// Marginal variances of the latent function, clipped at 0.
    pub variance: Vec<f64>,
    pub covariance: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
struct ModeFactor {
    chol: JitteredCholesky,
    alpha: DVector<f64>,
}

#[derive(Debug, Clone)]
enum Solver {
    Grid {
        times: Vec<f64>,
        modes: Vec<ModeFactor>,
    },
    Dense {
        points: Vec<STPoint>,
        chol: JitteredCholesky,
        alpha: DVector<f64>,
    },
}

/// A model conditioned on training data.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    model: GPModel,
    kernel: PreparedKernel,
    anchor: f64,
    offsets: Vec<f64>,
    solver: Solver,
    lml: f64,
}

fn time_key(t: f64) -> u64 {
    (t + 0.0).to_bits()
}

fn mean_offsets(policy: MeanPolicy, n: usize, data: &SpatioTemporalDataset) -> Vec<f64> {
    match policy {
        MeanPolicy::Zero => vec![0.0; n],
        MeanPolicy::PerNode => {
            let mut sum = vec![0.0; n];
            let mut count = vec![0usize; n];
            for o in data.observations() {
                sum[o.point.vertex] += o.y;
                count[o.point.vertex] += 1;
            }
            let overall = sum.iter().sum::<f64>() / data.len() as f64;
            (0..n)
                .map(|v| {
                    if count[v] > 0 {
                        sum[v] / count[v] as f64
                    } else {
                        overall
                    }
                })
                .collect()
        }
    }
}

impl TrainedGp {
    pub fn new(model: &GPModel, ctx: &KernelContext, data: &SpatioTemporalDataset) -> Result<Self> {
        Self::with_solver(model, ctx, data, SolverChoice::Auto)
    }

    pub fn with_solver(
        model: &GPModel,
        ctx: &KernelContext,
        data: &SpatioTemporalDataset,
        choice: SolverChoice,
    ) -> Result<Self> {
        model.validate()?;
        let n = ctx.n_vertices();
        if data.graph().n_vertices() != n {
            return Err(Error::DimensionMismatch(format!(
                "dataset graph has {} vertices, kernel context has {n}",
                data.graph().n_vertices()
            )));
        }
        let kernel = PreparedKernel::new(&model.kernel, ctx)?;
        let anchor = data
            .observations()
            .iter()
            .map(|o| o.point.time)
            .fold(f64::INFINITY, f64::min);
        let offsets = mean_offsets(model.mean_policy, n, data);
        let mut gp = TrainedGp {
            model: *model,
            kernel,
            anchor,
            offsets,
            solver: Solver::Grid {
                times: Vec::new(),
                modes: Vec::new(),
            },
            lml: f64::NAN,
        };
        let times = data.times();
        let is_grid = data.len() == n * times.len();
        let (solver, lml) = match (choice, gp.kernel.as_modal(), is_grid) {
            (SolverChoice::Auto, Some(modal), true) => gp.factor_grid(modal, data, &times)?,
            _ => gp.factor_dense(data)?,
        };
        gp.solver = solver;
        gp.lml = lml;
        Ok(gp)
    }

    /// Maps a raw data time onto the process clock.
    pub fn model_time(&self, t: f64) -> f64 {
        t - self.anchor + self.model.time_offset
    }

    fn to_model_points(&self, points: &[STPoint]) -> Vec<STPoint> {
        points
            .iter()
            .map(|p| STPoint::new(p.vertex, self.model_time(p.time)))
            .collect()
    }

    fn factor_grid(
        &self,
        modal: &ModalKernel,
        data: &SpatioTemporalDataset,
        raw_times: &[f64],
    ) -> Result<(Solver, f64)> {
        let n = modal.n_modes();
        let t_count = raw_times.len();
        let times: Vec<f64> = raw_times.iter().map(|&t| self.model_time(t)).collect();
        self.kernel.check_points(
            &times
                .iter()
                .map(|&t| STPoint::new(0, t))
                .collect::<Vec<_>>(),
        )?;
        let index: HashMap<u64, usize> = raw_times
            .iter()
            .enumerate()
            .map(|(i, &t)| (time_key(t), i))
            .collect();
        let mut y = DMatrix::<f64>::zeros(n, t_count);
        for o in data.observations() {
            y[(o.point.vertex, index[&time_key(o.point.time)])] =
                o.y - self.offsets[o.point.vertex];
        }
        let z = modal.basis().tr_mul(&y);

        let mut grams = vec![DMatrix::<f64>::zeros(t_count, t_count); n];
        let mut w = vec![0.0; n];
        for a in 0..t_count {
            for b in 0..=a {
                modal.mode_weights_into(times[a], times[b], &mut w);
                for (g, wk) in grams.iter_mut().zip(&w) {
                    g[(a, b)] = *wk;
                    g[(b, a)] = *wk;
                }
            }
        }
        let noise = self.model.effective_noise();
        let mut lml = 0.0;
        let mut modes = Vec::with_capacity(n);
        for (k, mut g) in grams.into_iter().enumerate() {
            for a in 0..t_count {
                g[(a, a)] += noise;
            }
            let chol = cholesky_jittered(&g)?;
            let zk = z.row(k).transpose();
            let alpha = chol.solve_vec(&zk);
            lml += -0.5 * zk.dot(&alpha) - 0.5 * chol.log_det() - 0.5 * t_count as f64 * LN_2PI;
            modes.push(ModeFactor { chol, alpha });
        }
        Ok((Solver::Grid { times, modes }, lml))
    }

    fn factor_dense(&self, data: &SpatioTemporalDataset) -> Result<(Solver, f64)> {
        let points = self.to_model_points(&data.points());
        let mut k = self.kernel.gram(&points)?.matrix;
        let noise = self.model.effective_noise();
        for i in 0..k.nrows() {
            k[(i, i)] += noise;
        }
        let y = DVector::from_iterator(
            data.len(),
            data.observations()
                .iter()
                .map(|o| o.y - self.offsets[o.point.vertex]),
        );
        let chol = cholesky_jittered(&k)?;
        let alpha = chol.solve_vec(&y);
        let lml = -0.5 * y.dot(&alpha) - 0.5 * chol.log_det() - 0.5 * data.len() as f64 * LN_2PI;
        Ok((
            Solver::Dense {
                points,
                chol,
                alpha,
            },
            lml,
        ))
    }

    pub fn model(&self) -> &GPModel {
        &self.model
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// True when the per-mode factorization is in use.
    pub fn uses_grid_solver(&self) -> bool {
        matches!(self.solver, Solver::Grid { .. })
    }

    /// Posterior at raw-time query points.
    pub fn predict(&self, query: &[STPoint], full_covariance: bool) -> Result<PosteriorPrediction> {
        let q = self.to_model_points(query);
        self.kernel.check_points(&q)?;
        let (mean, mut variance, covariance) = match &self.solver {
            Solver::Grid { times, modes } => self.predict_grid(times, modes, &q, full_covariance),
            Solver::Dense {
                points,
                chol,
                alpha,
            } => {
                let ks = self.kernel.cross(points, &q)?;
                let mean: Vec<f64> = (ks.tr_mul(alpha)).iter().copied().collect();
                let v = chol.solve_lower(&ks);
                let prior = self.kernel.diag(&q)?;
                let variance = (0..q.len())
                    .map(|j| prior[j] - v.column(j).norm_squared())
                    .collect();
                let cov = if full_covariance {
                    let mut c = self.kernel.gram(&q)?.matrix - v.tr_mul(&v);
                    symmetrize(&mut c);
                    Some(c)
                } else {
                    None
                };
                (mean, variance, cov)
            }
        };
        let mean = mean
            .iter()
            .zip(query)
            .map(|(m, p)| m + self.offsets[p.vertex])
            .collect();
        for v in &mut variance {
            *v = v.max(0.0);
        }
        Ok(PosteriorPrediction {
            mean,
            variance,
            covariance,
        })
    }

    fn predict_grid(
        &self,
        times: &[f64],
        modes: &[ModeFactor],
        q: &[STPoint],
        full: bool,
    ) -> (Vec<f64>, Vec<f64>, Option<DMatrix<f64>>) {
        let modal = self
            .kernel
            .as_modal()
            .expect("grid solver implies a modal kernel");
        let n = modal.n_modes();
        let basis = modal.basis();
        let mut qtimes: Vec<f64> = Vec::new();
        let mut qindex: HashMap<u64, usize> = HashMap::new();
        let qidx: Vec<usize> = q
            .iter()
            .map(|p| {
                *qindex.entry(time_key(p.time)).or_insert_with(|| {
                    qtimes.push(p.time);
                    qtimes.len() - 1
                })
            })
            .collect();
        let (tn, qn) = (times.len(), qtimes.len());

        // cross[k] is T × Q, prior[k] is Q × Q (diagonal only unless `full`)
        let mut cross = vec![DMatrix::<f64>::zeros(tn, qn); n];
        let mut prior = vec![DMatrix::<f64>::zeros(qn, qn); n];
        let mut w = vec![0.0; n];
        for (j, &tq) in qtimes.iter().enumerate() {
            for (a, &ta) in times.iter().enumerate() {
                modal.mode_weights_into(ta, tq, &mut w);
                for k in 0..n {
                    cross[k][(a, j)] = w[k];
                }
            }
            let rows = if full { 0..qn } else { j..j + 1 };
            for i in rows {
                modal.mode_weights_into(qtimes[i], tq, &mut w);
                for k in 0..n {
                    prior[k][(i, j)] = w[k];
                }
            }
        }
        let mut mode_mean = DMatrix::<f64>::zeros(n, qn);
        let mut mode_var = DMatrix::<f64>::zeros(n, qn);
        let mut mode_cov = Vec::new();
        for k in 0..n {
            let u = modes[k].chol.solve_lower(&cross[k]);
            for j in 0..qn {
                mode_mean[(k, j)] = cross[k].column(j).dot(&modes[k].alpha);
                mode_var[(k, j)] = prior[k][(j, j)] - u.column(j).norm_squared();
            }
            if full {
                mode_cov.push(&prior[k] - u.tr_mul(&u));
            }
        }
        let mean = q
            .iter()
            .zip(&qidx)
            .map(|(p, &j)| basis.row(p.vertex).dot(&mode_mean.column(j).transpose()))
            .collect();
        let variance = q
            .iter()
            .zip(&qidx)
            .map(|(p, &j)| {
                (0..n)
                    .map(|k| basis[(p.vertex, k)].powi(2) * mode_var[(k, j)])
                    .sum()
            })
            .collect();
        let cov = full.then(|| {
            let mut c = DMatrix::from_fn(q.len(), q.len(), |a, b| {
                let (va, vb) = (q[a].vertex, q[b].vertex);
                (0..n)
                    .map(|k| basis[(va, k)] * basis[(vb, k)] * mode_cov[k][(qidx[a], qidx[b])])
                    .sum()
            });
            symmetrize(&mut c);
            c
        });
        (mean, variance, cov)
    }
}

fn symmetrize(c: &mut DMatrix<f64>) {
    for i in 0..c.nrows() {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
}

pub fn log_marginal_likelihood(
    model: &GPModel,
    ctx: &KernelContext,
    data: &SpatioTemporalDataset,
) -> Result<f64> {
    Ok(TrainedGp::new(model, ctx, data)?.log_marginal_likelihood())
}

pub fn predict(
    model: &GPModel,
    ctx: &KernelContext,
    train: &SpatioTemporalDataset,
    query: &[STPoint],
) -> Result<PosteriorPrediction> {
    TrainedGp::new(model, ctx, train)?.predict(query, false)
}

/// Draws `n_samples` joint samples of the latent function at `points`
/// (rows are samples). Without conditioning data the earliest requested
/// time is placed at the model's time offset and the prior mean is zero.
pub fn sample(
    model: &GPModel,
    ctx: &KernelContext,
    points: &[STPoint],
    n_samples: usize,
    seed: u64,
    condition_on: Option<&SpatioTemporalDataset>,
) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no sample points".into()));
    }
    let (mean, cov) = match condition_on {
        Some(data) => {
            let post = TrainedGp::new(model, ctx, data)?.predict(points, true)?;
            (
                post.mean,
                post.covariance.expect("requested full covariance"),
            )
        }
        None => {
            model.validate()?;
            let kernel = PreparedKernel::new(&model.kernel, ctx)?;
            let anchor = points.iter().map(|p| p.time).fold(f64::INFINITY, f64::min);
            let shifted: Vec<STPoint> = points
                .iter()
                .map(|p| STPoint::new(p.vertex, p.time - anchor + model.time_offset))
                .collect();
            (vec![0.0; points.len()], kernel.gram(&shifted)?.matrix)
        }
    };
    let chol = cholesky_jittered(&cov)?;
    let l = chol.factor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();
    let mut out = DMatrix::<f64>::zeros(n_samples, n);
    let mut xi = DVector::<f64>::zeros(n);
    for s in 0..n_samples {
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let draw = &l * &xi;
        for j in 0..n {
            out[(s, j)] = mean[j] + draw[j];
        }
    }
    Ok(out)
}

/// Multivariate normal log-density, used by tests as an independent oracle.
#[cfg(test)]
pub(crate) fn mvn_log_density(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let inv = cov.clone().try_inverse().unwrap();
    let det = cov.determinant();
    -0.5 * y.dot(&(&inv * y))
        - 0.5 * det.ln()
        - 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Observation;
    use crate::graph::{Graph, LaplacianVariant};
    use crate::kernels::{KernelKind, TemporalKernel};
    use rand::Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn ctx_for(g: &Graph) -> KernelContext {
        KernelContext::new(g, LaplacianVariant::Unnormalized).unwrap()
    }

    fn unit_matern() -> KernelSpec {
        KernelSpec::new(KernelKind::Matern {
            variance: 1.0,
            nu: 1.0,
            kappa: 2f64.sqrt(),
        })
    }

    fn single(y: f64) -> (Arc<Graph>, SpatioTemporalDataset) {
        let g = Arc::new(Graph::path(1).unwrap());
        let d = SpatioTemporalDataset::new(
            g.clone(),
            vec![Observation {
                point: STPoint::new(0, 0.0),
                y,
            }],
        )
        .unwrap();
        (g, d)
    }

    #[test]
    fn one_point_lml() {
        let model = GPModel::new(unit_matern())
            .with_noise(0.0)
            .with_mean_policy(MeanPolicy::Zero);
        let (g, d0) = single(0.0);
        let ctx = ctx_for(&g);
        assert_close!(
            log_marginal_likelihood(&model, &ctx, &d0).unwrap(),
            -0.5 * (2.0 * PI).ln(),
            1e-9
        );
        let (_, d1) = single(1.0);
        assert_close!(
            log_marginal_likelihood(&model, &ctx, &d1).unwrap(),
            -0.5 - 0.5 * (2.0 * PI).ln(),
            1e-9
        );
    }

    fn random_problem(seed: u64, n_points: usize) -> (Arc<Graph>, SpatioTemporalDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(
            Graph::new(
                ["a", "b", "c", "d"],
                [
                    ("a", "b", 1.0),
                    ("b", "c", 0.7),
                    ("c", "d", 1.3),
                    ("a", "c", 0.4),
                ],
                false,
            )
            .unwrap(),
        );
        let mut obs: Vec<Observation> = Vec::new();
        while obs.len() < n_points {
            let p = STPoint::new(
                rng.random_range(0..4),
                (rng.random_range(0..20) as f64) * 0.25,
            );
            if obs.iter().all(|o| o.point != p) {
                obs.push(Observation {
                    point: p,
                    y: rng.random_range(-2.0..2.0),
                });
            }
        }
        let d = SpatioTemporalDataset::new(g.clone(), obs).unwrap();
        (g, d)
    }

    #[test]
    fn lml_matches_brute_force_density() {
        for seed in 0..5 {
            let (g, d) = random_problem(seed, 5);
            let ctx = ctx_for(&g);
            for name in ["shek", "swek", "sep-matern-rbf"] {
                let model = GPModel::new(KernelSpec::named(name).unwrap()).with_noise(0.05);
                let gp = TrainedGp::new(&model, &ctx, &d).unwrap();
                let pts: Vec<STPoint> = d
                    .points()
                    .iter()
                    .map(|p| STPoint::new(p.vertex, gp.model_time(p.time)))
                    .collect();
                let prepared = PreparedKernel::new(&model.kernel, &ctx).unwrap();
                let cov =
                    prepared.gram(&pts).unwrap().matrix + DMatrix::<f64>::identity(5, 5) * 0.05;
                let offsets = mean_offsets(MeanPolicy::PerNode, 4, &d);
                let y = DVector::from_iterator(
                    5,
                    d.observations()
                        .iter()
                        .map(|o| o.y - offsets[o.point.vertex]),
                );
                assert_close!(
                    gp.log_marginal_likelihood(),
                    mvn_log_density(&y, &cov),
                    1e-8
                );
            }
        }
    }

    fn grid_problem() -> (Arc<Graph>, SpatioTemporalDataset) {
        let g = Arc::new(Graph::path(4).unwrap());
        let times = [0.0, 0.5, 1.0, 2.0, 2.5];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<Vec<f64>> = times
            .iter()
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..3.0)).collect())
            .collect();
        let d = SpatioTemporalDataset::from_grid(g.clone(), &times, &values).unwrap();
        (g, d)
    }

    #[test]
    fn grid_solver_agrees_with_dense() {
        let (g, d) = grid_problem();
        let ctx = ctx_for(&g);
        let query: Vec<STPoint> = [0.25, 2.5, 3.0]
            .iter()
            .flat_map(|&t| (0..4).map(move |v| STPoint::new(v, t)))
            .collect();
        for name in [
            "shek",
            "swek",
            "sep-matern-rbf",
            "sep-laplacian-rbf",
            "matern",
        ] {
            let model = GPModel::new(KernelSpec::named(name).unwrap()).with_noise(0.1);
            let fast = TrainedGp::new(&model, &ctx, &d).unwrap();
            let dense = TrainedGp::with_solver(&model, &ctx, &d, SolverChoice::Dense).unwrap();
            assert!(fast.uses_grid_solver() && !dense.uses_grid_solver());
            assert_close!(
                fast.log_marginal_likelihood(),
                dense.log_marginal_likelihood(),
                1e-8
            );
            let a = fast.predict(&query, true).unwrap();
            let b = dense.predict(&query, true).unwrap();
            for i in 0..query.len() {
                assert_close!(a.mean[i], b.mean[i], 1e-8);
                assert_close!(a.variance[i], b.variance[i], 1e-8);
            }
            assert!((a.covariance.unwrap() - b.covariance.unwrap()).amax() < 1e-8);
        }
    }

    #[test]
    fn noiseless_interpolation() {
        let (g, d) = grid_problem();
        let ctx = ctx_for(&g);
        for name in ["shek", "swek", "sep-matern-rbf"] {
            let model = GPModel::new(KernelSpec::named(name).unwrap()).with_noise(1e-10);
            for choice in [SolverChoice::Auto, SolverChoice::Dense] {
                let gp = TrainedGp::with_solver(&model, &ctx, &d, choice).unwrap();
                let post = gp.predict(&d.points(), false).unwrap();
                for (m, y) in post.mean.iter().zip(d.values()) {
                    assert!((m - y).abs() < 1e-4, "{name}: {m} vs {y}");
                }
            }
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let (g, d) = grid_problem();
        let ctx = ctx_for(&g);
        let spec = KernelSpec::new(KernelKind::Separable {
            spatial: crate::kernels::SpatialKernel::Matern {
                nu: 2.0,
                kappa: 1.0,
            },
            temporal: TemporalKernel::Rbf {
                variance: 1.3,
                lengthscale: 0.5,
            },
        });
        let model = GPModel::new(spec).with_noise(0.1);
        let gp = TrainedGp::new(&model, &ctx, &d).unwrap();
        let far: Vec<STPoint> = (0..4).map(|v| STPoint::new(v, 100.0)).collect();
        let post = gp.predict(&far, false).unwrap();
        let prior = PreparedKernel::new(&spec, &ctx)
            .unwrap()
            .diag(&far)
            .unwrap();
        let offsets = mean_offsets(MeanPolicy::PerNode, 4, &d);
        for v in 0..4 {
            assert_close!(post.mean[v], offsets[v], 1e-8);
            assert!((post.variance[v] - prior[v]).abs() <= 0.01 * prior[v]);
        }
    }

    #[test]
    fn posterior_variance_below_prior() {
        let (g, d) = random_problem(9, 7);
        let ctx = ctx_for(&g);
        let model = GPModel::new(KernelSpec::named("shek").unwrap()).with_noise(0.2);
        let gp = TrainedGp::new(&model, &ctx, &d).unwrap();
        let q: Vec<STPoint> = (0..4)
            .flat_map(|v| [0.3, 1.7, 6.0].map(|t| STPoint::new(v, t)))
            .collect();
        let post = gp.predict(&q, false).unwrap();
        let mq: Vec<STPoint> = q
            .iter()
            .map(|p| STPoint::new(p.vertex, gp.model_time(p.time)))
            .collect();
        let prior = PreparedKernel::new(&model.kernel, &ctx)
            .unwrap()
            .diag(&mq)
            .unwrap();
        for (a, b) in post.variance.iter().zip(prior) {
            assert!(*a <= b + 1e-8);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_consistent() {
        let g = Graph::path(3).unwrap();
        let ctx = ctx_for(&g);
        let model = GPModel::new(KernelSpec::new(KernelKind::Shek {
            c: 1.0,
            sigma: 1.0,
            nu: 2.0,
            kappa: 1.0,
        }));
        let pts: Vec<STPoint> = [0.0, 0.5, 1.5]
            .iter()
            .flat_map(|&t| (0..3).map(move |v| STPoint::new(v, t)))
            .collect();
        let a = sample(&model, &ctx, &pts, 10_000, 17, None).unwrap();
        let b = sample(&model, &ctx, &pts, 10_000, 17, None).unwrap();
        assert_eq!(a, b);
        let shifted: Vec<STPoint> = pts
            .iter()
            .map(|p| STPoint::new(p.vertex, p.time + 1.0))
            .collect();
        let gram = PreparedKernel::new(&model.kernel, &ctx)
            .unwrap()
            .gram(&shifted)
            .unwrap()
            .matrix;
        let mean = a.row_mean();
        let centered = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - mean[j]);
        let emp = centered.tr_mul(&centered) / (a.nrows() as f64 - 1.0);
        assert!((emp - &gram).norm() <= 0.05 * gram.norm());

        let quiet = GPModel::new(KernelSpec::new(KernelKind::Shek {
            c: 1.0,
            sigma: 1e-9,
            nu: 2.0,
            kappa: 1.0,
        }));
        let s = sample(&quiet, &ctx, &pts, 5, 1, None).unwrap();
        assert!(s.amax() < 1e-4);
    }
}
