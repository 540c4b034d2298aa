//! Euler–Maruyama simulation of the graph heat and wave SDEs.
//!
//! This is deliberately independent of the closed-form kernels: it only
//! multiplies by `L̃` and adds Gaussian increments, so agreement between the
//! two is evidence for both.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Paths simulated together so the drift is one matrix product per step.
const BLOCK: usize = 256;

/// Noise scale of the heat SDE: `σ dW` or `Σ dW`.
#[derive(Debug, Clone)]
pub enum Noise {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

/// Time grid and ensemble size shared by both simulators.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Keep every `record_every`-th step (always including `t = 0`).
    pub record_every: usize,
}

impl SimOptions {
    pub fn new(dt: f64, t_end: f64, n_paths: usize, seed: u64) -> Self {
        SimOptions {
            dt,
            t_end,
            n_paths,
            seed,
            record_every: 1,
        }
    }

    pub fn recording_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.n_paths == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "n_paths and record_every must be positive".into(),
            ));
        }
        let steps = (self.t_end / self.dt).round() as usize;
        if !steps.is_multiple_of(self.record_every) {
            return Err(Error::InvalidParameter(format!(
                "{steps} steps are not a multiple of record_every = {}",
                self.record_every
            )));
        }
        Ok(steps)
    }
}

/// Recorded sample paths, laid out path-major then time then vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    times: Vec<f64>,
    n_paths: usize,
    n_vertices: usize,
    data: Vec<f64>,
    seed: u64,
}

impl PathEnsemble {
    /// Builds an ensemble from explicit values `data[p][r][v]`.
    pub fn from_values(
        times: Vec<f64>,
        n_vertices: usize,
        data: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let per_path = times.len() * n_vertices;
        if per_path == 0 || !data.len().is_multiple_of(per_path) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not split into paths of {} times × {n_vertices} vertices",
                data.len(),
                times.len()
            )));
        }
        Ok(PathEnsemble {
            n_paths: data.len() / per_path,
            times,
            n_vertices,
            data,
            seed,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// State of path `p` at recorded time index `r`.
    pub fn state(&self, p: usize, r: usize) -> &[f64] {
        let n = self.n_vertices;
        let start = (p * self.times.len() + r) * n;
        &self.data[start..start + n]
    }

    /// Index of the recorded time closest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, z| m.max(z.norm()))
}

fn check_state(name: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} entries, graph has {n}",
            v.len()
        )));
    }
    Ok(())
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn fill_normals(rngs: &mut [ChaCha8Rng], xi: &mut DMatrix<f64>) {
    for (j, rng) in rngs.iter_mut().enumerate() {
        for v in xi.column_mut(j).iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    }
}

fn record(out: &mut [f64], u: &DMatrix<f64>, r: usize, n_rec: usize) {
    let n = u.nrows();
    for j in 0..u.ncols() {
        let dst = &mut out[(j * n_rec + r) * n..(j * n_rec + r + 1) * n];
        dst.copy_from_slice(u.column(j).as_slice());
    }
}

/// Runs `simulate_block` over blocks of paths in parallel; each path owns its RNG
/// stream, so the result does not depend on the blocking or thread count.
fn run_blocks<F>(opts: &SimOptions, n: usize, n_rec: usize, simulate_block: F) -> Vec<f64>
where
    F: Fn(&mut [ChaCha8Rng], &mut [f64]) + Sync,
{
    let mut data = vec![0.0; opts.n_paths * n_rec * n];
    data.par_chunks_mut(BLOCK * n_rec * n)
        .enumerate()
        .for_each(|(b, chunk)| {
            let first = b * BLOCK;
            let count = chunk.len() / (n_rec * n);
            let mut rngs: Vec<ChaCha8Rng> = (first..first + count)
                .map(|p| path_rng(opts.seed, p))
                .collect();
            simulate_block(&mut rngs, chunk);
        });
    data
}

/// Simulates `du = −c L̃ u dt + noise dW` from `u(0) = u0`.
///
/// Explicit Euler–Maruyama; requires `dt · c · ρ(L̃) < 0.5`.
pub fn simulate_heat(
    lt: &DMatrix<f64>,
    c: f64,
    noise: &Noise,
    u0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<PathEnsemble> {
    let n = lt.nrows();
    if !lt.is_square() {
        return Err(Error::DimensionMismatch("L̃ must be square".into()));
    }
    check_state("u0", u0, n)?;
    let steps = opts.n_steps()?;
    let rho = spectral_radius(lt);
    if opts.dt * c * rho >= 0.5 {
        return Err(Error::Stability(format!(
            "dt·c·λmax = {:.4} must stay below 0.5 for the explicit heat scheme",
            opts.dt * c * rho
        )));
    }
    let noise_mat = match noise {
        Noise::Scalar(s) => DMatrix::<f64>::identity(n, n) * *s,
        Noise::Matrix(m) => {
            if m.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "Σ has {} rows, graph has {n}",
                    m.nrows()
                )));
            }
            m.clone()
        }
    };
    let silent = noise_mat.iter().all(|v| *v == 0.0);
    let sqrt_dt = opts.dt.sqrt();
    let drift = lt * (-c * opts.dt);
    let n_rec = steps / opts.record_every + 1;

    let data = run_blocks(opts, n, n_rec, |rngs, out| {
        let b = rngs.len();
        let mut u = DMatrix::from_fn(n, b, |i, _| u0[i]);
        let mut du = DMatrix::<f64>::zeros(n, b);
        let mut xi = DMatrix::<f64>::zeros(noise_mat.ncols(), b);
        record(out, &u, 0, n_rec);
        for k in 1..=steps {
            du.gemm(1.0, &drift, &u, 0.0);
            if !silent {
                fill_normals(rngs, &mut xi);
                du.gemm(sqrt_dt, &noise_mat, &xi, 1.0);
            }
            u += &du;
            if k % opts.record_every == 0 {
                record(out, &u, k / opts.record_every, n_rec);
            }
        }
    });
    let times = (0..n_rec)
        .map(|r| (r * opts.record_every) as f64 * opts.dt)
        .collect();
    PathEnsemble::from_values(times, n, data, opts.seed)
}

/// Simulates `ü = −c² L̃ u + σ Ẇ` as the first-order system `(u, v)` with
/// noise entering the velocity. Semi-implicit (symplectic) Euler: the
/// velocity is updated first and the position uses the new velocity.
/// Requires `c² ρ(L̃) dt² < 0.1`.
pub fn simulate_wave(
    lt: &DMatrix<f64>,
    c: f64,
    sigma: f64,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<PathEnsemble> {
    let n = lt.nrows();
    if !lt.is_square() {
        return Err(Error::DimensionMismatch("L̃ must be square".into()));
    }
    check_state("u0", u0, n)?;
    check_state("v0", v0, n)?;
    let steps = opts.n_steps()?;
    let rho = spectral_radius(lt);
    let guard = c * c * rho * opts.dt * opts.dt;
    if guard >= 0.1 {
        return Err(Error::Stability(format!(
            "c²·λmax·dt² = {guard:.4} must stay below 0.1 for the wave scheme"
        )));
    }
    let scale = sigma * opts.dt.sqrt();
    let drift = lt * (-c * c * opts.dt);
    let n_rec = steps / opts.record_every + 1;

    let data = run_blocks(opts, n, n_rec, |rngs, out| {
        let b = rngs.len();
        let mut u = DMatrix::from_fn(n, b, |i, _| u0[i]);
        let mut v = DMatrix::from_fn(n, b, |i, _| v0[i]);
        let mut xi = DMatrix::<f64>::zeros(n, b);
        record(out, &u, 0, n_rec);
        for k in 1..=steps {
            v.gemm(1.0, &drift, &u, 1.0);
            if scale != 0.0 {
                fill_normals(rngs, &mut xi);
                v.zip_apply(&xi, |a, x| *a += scale * x);
            }
            u.zip_apply(&v, |a, x| *a += opts.dt * x);
            if k % opts.record_every == 0 {
                record(out, &u, k / opts.record_every, n_rec);
            }
        }
    });
    let times = (0..n_rec)
        .map(|r| (r * opts.record_every) as f64 * opts.dt)
        .collect();
    PathEnsemble::from_values(times, n, data, opts.seed)
}

/// Per-vertex ensemble mean at a recorded time and its standard error.
pub fn empirical_mean(ens: &PathEnsemble, t_index: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    if t_index >= ens.times.len() || ens.n_paths < 2 {
        return Err(Error::InvalidParameter(
            "time index out of range or fewer than 2 paths".into(),
        ));
    }
    let n = ens.n_vertices;
    let np = ens.n_paths as f64;
    let mut mean = DVector::zeros(n);
    for p in 0..ens.n_paths {
        for (m, x) in mean.iter_mut().zip(ens.state(p, t_index)) {
            *m += x;
        }
    }
    mean /= np;
    let mut var = DVector::<f64>::zeros(n);
    for p in 0..ens.n_paths {
        for (i, x) in ens.state(p, t_index).iter().enumerate() {
            var[i] += (x - mean[i]).powi(2);
        }
    }
    let se = var.map(|v| (v / (np - 1.0) / np).sqrt());
    Ok((mean, se))
}

/// Unbiased sample cross-covariance `Cov[u(t_r), u(t_q)]` across paths and
/// the standard error of each entry (spread of the path-wise products over
/// `√n_paths`).
pub fn empirical_cross_cov(
    ens: &PathEnsemble,
    t_index: usize,
    s_index: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (mx, _) = empirical_mean(ens, t_index)?;
    let (my, _) = empirical_mean(ens, s_index)?;
    let n = ens.n_vertices;
    let np = ens.n_paths as f64;
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut sum_sq = DMatrix::<f64>::zeros(n, n);
    for p in 0..ens.n_paths {
        let x = ens.state(p, t_index);
        let y = ens.state(p, s_index);
        for j in 0..n {
            let dy = y[j] - my[j];
            for i in 0..n {
                let z = (x[i] - mx[i]) * dy;
                sum[(i, j)] += z;
                sum_sq[(i, j)] += z * z;
            }
        }
    }
    let cov = &sum / (np - 1.0);
    let se = DMatrix::from_fn(n, n, |i, j| {
        let m = sum[(i, j)] / np;
        let var = (sum_sq[(i, j)] / np - m * m).max(0.0) * np / (np - 1.0);
        (var / np).sqrt()
    });
    Ok((cov, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FractionalLaplacian, Graph, LaplacianVariant};
    use crate::kernels::{heat_semigroup, shek_cov, swek_mean};

    fn path_lt(n: usize, nu: f64, kappa: f64) -> FractionalLaplacian {
        let l = Graph::path(n)
            .unwrap()
            .laplacian(LaplacianVariant::Unnormalized)
            .unwrap();
        FractionalLaplacian::new(&l, nu, kappa).unwrap()
    }

    #[test]
    fn noiseless_heat_matches_semigroup() {
        let g = Graph::path(3).unwrap();
        let l = g.laplacian(LaplacianVariant::Unnormalized).unwrap();
        let u0 = DVector::from_vec(vec![1.0, 0.0, -2.0]);
        let opts = SimOptions::new(1e-4, 1.0, 2, 1).recording_every(10_000);
        let ens = simulate_heat(&l.matrix, 1.0, &Noise::Scalar(0.0), &u0, &opts).unwrap();
        let exact = heat_semigroup(&l, 1.0, 1.0).unwrap() * &u0;
        for (a, b) in ens.state(0, 1).iter().zip(exact.iter()) {
            assert!((a - b).abs() < 1e-3);
        }
        assert_eq!(ens.state(0, 1), ens.state(1, 1));
    }

    #[test]
    fn heat_stability_guard() {
        let lt = path_lt(3, 2.0, 1.0).matrix();
        let opts = SimOptions::new(0.1, 1.0, 10, 1);
        let err =
            simulate_heat(&lt, 1.0, &Noise::Scalar(1.0), &DVector::zeros(3), &opts).unwrap_err();
        assert!(matches!(err, Error::Stability(_)));
    }

    #[test]
    fn zero_start_has_zero_mean() {
        let lt = path_lt(3, 2.0, 1.0).matrix();
        let opts = SimOptions::new(1e-3, 1.0, 4000, 11).recording_every(1000);
        let ens = simulate_heat(&lt, 1.0, &Noise::Scalar(1.0), &DVector::zeros(3), &opts).unwrap();
        let (mean, se) = empirical_mean(&ens, 1).unwrap();
        for i in 0..3 {
            assert!(mean[i].abs() < 3.0 * se[i], "{} vs {}", mean[i], se[i]);
        }
    }

    #[test]
    fn heat_cross_covariance_matches_shek() {
        let f = path_lt(3, 2.0, 1.0);
        let opts = SimOptions::new(1e-3, 1.0, 50_000, 3).recording_every(500);
        let ens = simulate_heat(
            &f.matrix(),
            1.0,
            &Noise::Scalar(1.0),
            &DVector::zeros(3),
            &opts,
        )
        .unwrap();
        let (cov, se) = empirical_cross_cov(&ens, 2, 1).unwrap();
        let exact = shek_cov(&f, 1.0, 1.0, 1.0, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((cov[(i, j)] - exact[(i, j)]).abs() <= 4.0 * se[(i, j)]);
            }
        }
    }

    #[test]
    fn noiseless_wave_is_harmonic() {
        let lt = DMatrix::from_element(1, 1, 1.0);
        let opts = SimOptions::new(1e-4, 2.0, 1, 0).recording_every(20_000);
        let ens = simulate_wave(
            &lt,
            1.0,
            0.0,
            &DVector::from_element(1, 1.0),
            &DVector::zeros(1),
            &opts,
        )
        .unwrap();
        assert!((ens.state(0, 1)[0] - 2f64.cos()).abs() < 1e-3);
        let bad = SimOptions::new(1.0, 2.0, 1, 0);
        assert!(matches!(
            simulate_wave(&lt, 1.0, 0.0, &DVector::zeros(1), &DVector::zeros(1), &bad),
            Err(Error::Stability(_))
        ));
    }

    #[test]
    fn wave_mean_matches_closed_form() {
        let f = path_lt(3, 2.0, 1.0);
        let u0 = DVector::from_vec(vec![1.0, 0.0, -0.5]);
        let v0 = DVector::from_vec(vec![0.0, 0.4, 0.0]);
        let opts = SimOptions::new(1e-3, 1.5, 4000, 9).recording_every(500);
        let ens = simulate_wave(&f.matrix(), 0.8, 0.5, &u0, &v0, &opts).unwrap();
        let (mean, se) = empirical_mean(&ens, 3).unwrap();
        let exact = swek_mean(&f, 0.8, &u0, &v0, 1.5).unwrap();
        for i in 0..3 {
            // the scheme's O(dt) drift bias is far below the MC error here
            assert!(
                (mean[i] - exact[i]).abs() < 3.0 * se[i] + 2e-3,
                "{} vs {}",
                mean[i],
                exact[i]
            );
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let lt = path_lt(2, 2.0, 1.0).matrix();
        let opts = SimOptions::new(1e-2, 0.5, 300, 42).recording_every(10);
        let a = simulate_heat(&lt, 1.0, &Noise::Scalar(1.0), &DVector::zeros(2), &opts).unwrap();
        let b = simulate_heat(&lt, 1.0, &Noise::Scalar(1.0), &DVector::zeros(2), &opts).unwrap();
        assert_eq!(a, b);
        // a path does not depend on how many siblings it has
        let few = simulate_heat(
            &lt,
            1.0,
            &Noise::Scalar(1.0),
            &DVector::zeros(2),
            &SimOptions { n_paths: 3, ..opts },
        )
        .unwrap();
        assert_eq!(few.state(2, 5), a.state(2, 5));
    }

    #[test]
    fn empirical_covariance_examples() {
        let times = vec![0.0, 1.0];
        let constant =
            PathEnsemble::from_values(times.clone(), 2, vec![1.0; 2 * 2 * 10], 0).unwrap();
        let (cov, _) = empirical_cross_cov(&constant, 0, 1).unwrap();
        assert_eq!(cov.amax(), 0.0);

        let mut rng = path_rng(5, 0);
        let n_paths = 20_000;
        let data: Vec<f64> = (0..n_paths * 2 * 3)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let ens = PathEnsemble::from_values(times, 3, data, 5).unwrap();
        let (cov, se) = empirical_cross_cov(&ens, 1, 1).unwrap();
        assert!(crate::spectral::max_asymmetry(&cov) < 1e-12);
        assert!(
            crate::spectral::eigendecompose_symmetric(&cov)
                .unwrap()
                .eigenvalues()[0]
                >= 0.0
        );
        let id = DMatrix::<f64>::identity(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!((cov[(i, j)] - id[(i, j)]).abs() <= 4.0 * se[(i, j)]);
            }
        }
    }
}
