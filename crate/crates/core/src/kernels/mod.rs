//! Kernel specifications and Gram-matrix assembly over (vertex, time) points.
//!
//! On symmetric Laplacians every kernel shares the eigenbasis `V` of `L`:
//!
//! ```text
//! K[(i,t), (j,s)] = Σ_k V_ik V_jk g_k(t, s)
//! ```
//!
//! so a kernel is a list of per-mode functions [`ModalKernel`]. Asymmetric
//! Laplacians (directed graphs, random-walk variant) fall back to dense
//! `n×n` blocks per time pair.

pub mod heat;
pub mod lyapunov;
pub mod spatial;
pub mod temporal;
pub mod wave;

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, FractionalLaplacian, Graph, LaplacianMatrix, LaplacianVariant};
use crate::spectral::SpectralDecomposition;

pub use heat::{
    heat_random_walk_check, heat_semigroup, shek_cov, shek_cov_general, shek_matrix_noise_cov,
    shek_mean, GeneralShek,
};
pub use lyapunov::{lyapunov_general, lyapunov_stationary, lyapunov_symmetric};
pub use spatial::{laplacian_kernel, matern_graph_kernel};
pub use temporal::{temporal_kernel, TemporalKernel};
pub use wave::{swek_cov, swek_mean, wave_solution};

/// A location in the spatio-temporal domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct STPoint {
    pub vertex: usize,
    pub time: f64,
}

impl STPoint {
    pub fn new(vertex: usize, time: f64) -> Self {
        STPoint { vertex, time }
    }
}

/// Spatial factor of a separable kernel. Its amplitude lives in the temporal factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialKernel {
    Laplacian,
    Matern { nu: f64, kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// `variance · (LᵀL)⁺`, constant in time.
    Laplacian { variance: f64 },
    /// `variance · (2ν/κ² I + L)^{−ν}`, constant in time.
    Matern { variance: f64, nu: f64, kappa: f64 },
    /// `k_x(i, j) · k_t(t, s)`.
    Separable {
        spatial: SpatialKernel,
        temporal: TemporalKernel,
    },
    /// Stochastic heat equation kernel.
    Shek {
        c: f64,
        sigma: f64,
        nu: f64,
        kappa: f64,
    },
    /// Stochastic wave equation kernel.
    Swek {
        c: f64,
        sigma: f64,
        nu: f64,
        kappa: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default)]
    pub laplacian: LaplacianVariant,
}

/// Kernel names accepted by [`KernelSpec::named`].
pub const KERNEL_NAMES: [&str; 6] = [
    "laplacian",
    "matern",
    "sep-matern-rbf",
    "sep-laplacian-rbf",
    "shek",
    "swek",
];

pub const DEFAULT_NU: f64 = 2.0;
pub const DEFAULT_KAPPA: f64 = 10.0;

fn param_ref<'a>(kind: &'a mut KernelKind, name: &str) -> Option<&'a mut f64> {
    match kind {
        KernelKind::Laplacian { variance } => (name == "variance").then_some(variance),
        KernelKind::Matern {
            variance,
            nu,
            kappa,
        } => match name {
            "variance" => Some(variance),
            "nu" => Some(nu),
            "kappa" => Some(kappa),
            _ => None,
        },
        KernelKind::Separable { spatial, temporal } => {
            if let SpatialKernel::Matern { nu, kappa } = spatial {
                match name {
                    "nu" => return Some(nu),
                    "kappa" => return Some(kappa),
                    _ => {}
                }
            }
            match (temporal, name) {
                (TemporalKernel::Rbf { variance, .. }, "variance")
                | (TemporalKernel::Exponential { variance, .. }, "variance")
                | (TemporalKernel::Brownian { variance }, "variance")
                | (TemporalKernel::Cosine { variance, .. }, "variance") => Some(variance),
                (TemporalKernel::Rbf { lengthscale, .. }, "time_lengthscale")
                | (TemporalKernel::Exponential { lengthscale, .. }, "time_lengthscale") => {
                    Some(lengthscale)
                }
                (TemporalKernel::Cosine { frequency, .. }, "frequency") => Some(frequency),
                _ => None,
            }
        }
        KernelKind::Shek {
            c,
            sigma,
            nu,
            kappa,
        }
        | KernelKind::Swek {
            c,
            sigma,
            nu,
            kappa,
        } => match name {
            "c" => Some(c),
            "sigma" => Some(sigma),
            "nu" => Some(nu),
            "kappa" => Some(kappa),
            _ => None,
        },
    }
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        KernelSpec {
            kind,
            laplacian: LaplacianVariant::default(),
        }
    }

    /// Default-parameterized kernel for a name in [`KERNEL_NAMES`].
    pub fn named(name: &str) -> Result<Self> {
        let rbf = TemporalKernel::Rbf {
            variance: 1.0,
            lengthscale: 1.0,
        };
        let kind = match name {
            "laplacian" => KernelKind::Laplacian { variance: 1.0 },
            "matern" => KernelKind::Matern {
                variance: 1.0,
                nu: DEFAULT_NU,
                kappa: DEFAULT_KAPPA,
            },
            "sep-matern-rbf" => KernelKind::Separable {
                spatial: SpatialKernel::Matern {
                    nu: DEFAULT_NU,
                    kappa: DEFAULT_KAPPA,
                },
                temporal: rbf,
            },
            "sep-laplacian-rbf" => KernelKind::Separable {
                spatial: SpatialKernel::Laplacian,
                temporal: rbf,
            },
            "shek" => KernelKind::Shek {
                c: 1.0,
                sigma: 1.0,
                nu: DEFAULT_NU,
                kappa: DEFAULT_KAPPA,
            },
            "swek" => KernelKind::Swek {
                c: 1.0,
                sigma: 1.0,
                nu: DEFAULT_NU,
                kappa: DEFAULT_KAPPA,
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown kernel `{other}`; valid names: {}",
                    KERNEL_NAMES.join(", ")
                )))
            }
        };
        Ok(KernelSpec::new(kind))
    }

    pub fn with_laplacian(mut self, variant: LaplacianVariant) -> Self {
        self.laplacian = variant;
        self
    }

    pub fn name(&self) -> String {
        match &self.kind {
            KernelKind::Laplacian { .. } => "laplacian".into(),
            KernelKind::Matern { .. } => "matern".into(),
            KernelKind::Separable { spatial, temporal } => {
                let s = match spatial {
                    SpatialKernel::Laplacian => "laplacian",
                    SpatialKernel::Matern { .. } => "matern",
                };
                format!("sep-{s}-{}", temporal.name())
            }
            KernelKind::Shek { .. } => "shek".into(),
            KernelKind::Swek { .. } => "swek".into(),
        }
    }

    /// True when the kernel describes a process started at `t = 0`.
    pub fn is_process(&self) -> bool {
        matches!(self.kind, KernelKind::Shek { .. } | KernelKind::Swek { .. })
    }

    /// All hyperparameters as `(name, value)` pairs.
    pub fn hyperparameters(&self) -> Vec<(&'static str, f64)> {
        [
            "variance",
            "time_lengthscale",
            "frequency",
            "c",
            "sigma",
            "nu",
            "kappa",
        ]
        .into_iter()
        .filter_map(|n| self.get(n).map(|v| (n, v)))
        .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let mut kind = self.kind;
        param_ref(&mut kind, name).map(|v| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {value}"
            )));
        }
        let kernel = self.name();
        let slot = param_ref(&mut self.kind, name).ok_or_else(|| {
            Error::InvalidParameter(format!("kernel `{kernel}` has no hyperparameter `{name}`"))
        })?;
        *slot = value;
        Ok(())
    }

    /// Hyperparameters tuned by marginal-likelihood fitting. The fractional
    /// Laplacian's `ν`, `κ` stay fixed unless `include_shape` is set.
    pub fn optimizable(&self, include_shape: bool) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = match &self.kind {
            KernelKind::Laplacian { .. } | KernelKind::Matern { .. } => vec!["variance"],
            KernelKind::Separable { temporal, .. } => match temporal {
                TemporalKernel::Rbf { .. } | TemporalKernel::Exponential { .. } => {
                    vec!["variance", "time_lengthscale"]
                }
                TemporalKernel::Brownian { .. } => vec!["variance"],
                TemporalKernel::Cosine { .. } => vec!["variance", "frequency"],
            },
            KernelKind::Shek { .. } | KernelKind::Swek { .. } => vec!["c", "sigma"],
        };
        if include_shape {
            names.extend(
                ["nu", "kappa"]
                    .into_iter()
                    .filter(|n| self.get(n).is_some()),
            );
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.hyperparameters() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A graph's Laplacian plus its eigendecomposition when symmetric. Built once
/// per graph and shared by every kernel evaluated on it.
#[derive(Debug, Clone)]
pub struct KernelContext {
    laplacian: LaplacianMatrix,
    decomposition: Option<Arc<SpectralDecomposition>>,
}

impl KernelContext {
    pub fn new(g: &Graph, variant: LaplacianVariant) -> Result<Self> {
        Self::from_laplacian(g.laplacian(variant)?)
    }

    pub fn from_laplacian(laplacian: LaplacianMatrix) -> Result<Self> {
        let decomposition = if laplacian.symmetric {
            Some(Arc::new(laplacian.decompose()?))
        } else {
            None
        };
        Ok(KernelContext {
            laplacian,
            decomposition,
        })
    }

    pub fn laplacian(&self) -> &LaplacianMatrix {
        &self.laplacian
    }

    pub fn decomposition(&self) -> Option<&Arc<SpectralDecomposition>> {
        self.decomposition.as_ref()
    }

    pub fn n_vertices(&self) -> usize {
        self.laplacian.dim()
    }

    pub fn fractional(&self, nu: f64, kappa: f64) -> Result<FractionalLaplacian> {
        match &self.decomposition {
            Some(dec) => FractionalLaplacian::from_decomposition(dec.clone(), nu, kappa),
            None => Err(Error::NotSymmetric {
                asymmetry: crate::spectral::max_asymmetry(&self.laplacian.matrix),
            }),
        }
    }
}

#[derive(Debug, Clone)]
enum ModeLaw {
    /// Time-independent spectral weights.
    Static(Vec<f64>),
    Separable(Vec<f64>, TemporalKernel),
    Shek {
        mu: Vec<f64>,
        c: f64,
        sigma: f64,
    },
    Swek {
        mu: Vec<f64>,
        c: f64,
        sigma: f64,
    },
}

/// A kernel diagonal in the Laplacian eigenbasis.
#[derive(Debug, Clone)]
pub struct ModalKernel {
    basis: Arc<SpectralDecomposition>,
    law: ModeLaw,
}

impl ModalKernel {
    pub fn basis(&self) -> &DMatrix<f64> {
        self.basis.basis()
    }

    pub fn n_modes(&self) -> usize {
        self.basis.dim()
    }

    /// Per-mode covariances `g_k(t, s)`.
    pub fn mode_weights_into(&self, t: f64, s: f64, out: &mut [f64]) {
        match &self.law {
            ModeLaw::Static(w) => out.copy_from_slice(w),
            ModeLaw::Separable(w, k) => {
                let kt = k.eval_unchecked(t, s);
                for (o, wk) in out.iter_mut().zip(w) {
                    *o = wk * kt;
                }
            }
            ModeLaw::Shek { mu, c, sigma } => {
                for (o, m) in out.iter_mut().zip(mu) {
                    *o = heat::shek_mode_cov(*m, *c, *sigma, t, s);
                }
            }
            ModeLaw::Swek { mu, c, sigma } => {
                for (o, m) in out.iter_mut().zip(mu) {
                    *o = wave::swek_mode_cov(*m, *c, *sigma, t, s);
                }
            }
        }
    }

    pub fn mode_weights(&self, t: f64, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_modes()];
        self.mode_weights_into(t, s, &mut out);
        out
    }
}

#[derive(Debug, Clone)]
enum DenseLaw {
    Static(DMatrix<f64>),
    Separable(DMatrix<f64>, TemporalKernel),
    Shek(GeneralShek),
}

/// A kernel ready for evaluation on a fixed graph.
#[derive(Debug, Clone)]
pub struct PreparedKernel {
    spec: KernelSpec,
    n: usize,
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    Modal(ModalKernel),
    Dense(DenseLaw),
}

fn check_variant(spec: &KernelSpec, ctx: &KernelContext) -> Result<()> {
    if spec.laplacian != ctx.laplacian.variant {
        return Err(Error::InvalidParameter(format!(
            "kernel expects a {:?} Laplacian but the context holds {:?}",
            spec.laplacian, ctx.laplacian.variant
        )));
    }
    Ok(())
}

impl PreparedKernel {
    pub fn new(spec: &KernelSpec, ctx: &KernelContext) -> Result<Self> {
        spec.validate()?;
        check_variant(spec, ctx)?;
        let n = ctx.n_vertices();
        let repr = match ctx.decomposition() {
            Some(dec) => Repr::Modal(Self::modal(spec, dec, ctx)?),
            None => Repr::Dense(Self::dense(spec, ctx)?),
        };
        Ok(PreparedKernel {
            spec: *spec,
            n,
            repr,
        })
    }

    fn modal(
        spec: &KernelSpec,
        dec: &Arc<SpectralDecomposition>,
        ctx: &KernelContext,
    ) -> Result<ModalKernel> {
        let eigs = dec.eigenvalues();
        let spatial_weights = |s: &SpatialKernel| match *s {
            SpatialKernel::Laplacian => spatial::laplacian_mode_weights(eigs),
            SpatialKernel::Matern { nu, kappa } => spatial::matern_mode_weights(eigs, nu, kappa),
        };
        let law = match spec.kind {
            KernelKind::Laplacian { variance } => ModeLaw::Static(
                spatial_weights(&SpatialKernel::Laplacian)
                    .iter()
                    .map(|w| w * variance)
                    .collect(),
            ),
            KernelKind::Matern {
                variance,
                nu,
                kappa,
            } => ModeLaw::Static(
                spatial_weights(&SpatialKernel::Matern { nu, kappa })
                    .iter()
                    .map(|w| w * variance)
                    .collect(),
            ),
            KernelKind::Separable { spatial, temporal } => {
                ModeLaw::Separable(spatial_weights(&spatial), temporal)
            }
            KernelKind::Shek {
                c,
                sigma,
                nu,
                kappa,
            } => ModeLaw::Shek {
                mu: ctx.fractional(nu, kappa)?.eigenvalues().to_vec(),
                c,
                sigma,
            },
            KernelKind::Swek {
                c,
                sigma,
                nu,
                kappa,
            } => ModeLaw::Swek {
                mu: ctx.fractional(nu, kappa)?.eigenvalues().to_vec(),
                c,
                sigma,
            },
        };
        Ok(ModalKernel {
            basis: dec.clone(),
            law,
        })
    }

    fn dense(spec: &KernelSpec, ctx: &KernelContext) -> Result<DenseLaw> {
        let l = ctx.laplacian();
        let spatial_matrix = |s: &SpatialKernel| match *s {
            SpatialKernel::Laplacian => laplacian_kernel(l),
            SpatialKernel::Matern { nu, kappa } => matern_graph_kernel(l, nu, kappa),
        };
        Ok(match spec.kind {
            KernelKind::Laplacian { variance } => {
                DenseLaw::Static(spatial_matrix(&SpatialKernel::Laplacian)? * variance)
            }
            KernelKind::Matern {
                variance,
                nu,
                kappa,
            } => DenseLaw::Static(spatial_matrix(&SpatialKernel::Matern { nu, kappa })? * variance),
            KernelKind::Separable { spatial, temporal } => {
                DenseLaw::Separable(spatial_matrix(&spatial)?, temporal)
            }
            KernelKind::Shek {
                c,
                sigma,
                nu,
                kappa,
            } => {
                let lt = graph::shifted_laplacian_power(l, nu, kappa)?;
                DenseLaw::Shek(GeneralShek::new(&lt, c, sigma)?)
            }
            KernelKind::Swek { .. } => {
                return Err(Error::Unsupported {
                    kernel: "swek".into(),
                    reason: "the wave kernel needs a symmetric Laplacian".into(),
                })
            }
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    /// The eigenbasis form, when the Laplacian is symmetric.
    pub fn as_modal(&self) -> Option<&ModalKernel> {
        match &self.repr {
            Repr::Modal(m) => Some(m),
            Repr::Dense(_) => None,
        }
    }

    fn needs_nonnegative_time(&self) -> bool {
        match self.spec.kind {
            KernelKind::Shek { .. } | KernelKind::Swek { .. } => true,
            KernelKind::Separable { temporal, .. } => temporal.requires_nonnegative_time(),
            _ => false,
        }
    }

    /// Rejects out-of-range vertices and, for processes started at `t = 0`,
    /// negative times.
    pub fn check_points(&self, points: &[STPoint]) -> Result<()> {
        let nonneg = self.needs_nonnegative_time();
        for p in points {
            if p.vertex >= self.n {
                return Err(Error::VertexOutOfRange {
                    index: p.vertex,
                    n: self.n,
                });
            }
            if !p.time.is_finite() || (nonneg && p.time < 0.0) {
                return Err(Error::NegativeTime(p.time));
            }
        }
        Ok(())
    }

    /// `n×n` block `Cov[u(t), u(s)]`.
    pub fn block(&self, t: f64, s: f64) -> Result<DMatrix<f64>> {
        self.check_points(&[STPoint::new(0, t), STPoint::new(0, s)])?;
        match &self.repr {
            Repr::Modal(m) => Ok(m.basis.synthesize(&m.mode_weights(t, s))),
            Repr::Dense(law) => dense_block(law, t, s),
        }
    }

    /// Kernel matrix between two point sets.
    pub fn cross(&self, rows: &[STPoint], cols: &[STPoint]) -> Result<DMatrix<f64>> {
        self.check_points(rows)?;
        self.check_points(cols)?;
        let (row_times, row_idx) = unique_times(rows);
        let (col_times, col_idx) = unique_times(cols);
        let mut out = DMatrix::<f64>::zeros(rows.len(), cols.len());
        match &self.repr {
            Repr::Modal(m) => {
                let n = m.n_modes();
                let v = m.basis();
                let mut w = vec![0.0; n];
                // per unique time pair, fill all entries sharing it
                let row_groups = group_by_time(&row_idx, row_times.len());
                let col_groups = group_by_time(&col_idx, col_times.len());
                for (a, ta) in row_times.iter().enumerate() {
                    for (b, tb) in col_times.iter().enumerate() {
                        m.mode_weights_into(*ta, *tb, &mut w);
                        for &p in &row_groups[a] {
                            let vi = v.row(rows[p].vertex);
                            for &q in &col_groups[b] {
                                let vj = v.row(cols[q].vertex);
                                let mut acc = 0.0;
                                for k in 0..n {
                                    acc += vi[k] * vj[k] * w[k];
                                }
                                out[(p, q)] = acc;
                            }
                        }
                    }
                }
            }
            Repr::Dense(law) => {
                let mut cache: HashMap<(usize, usize), DMatrix<f64>> = HashMap::new();
                for (p, rp) in rows.iter().enumerate() {
                    for (q, cq) in cols.iter().enumerate() {
                        let key = (row_idx[p], col_idx[q]);
                        let block = match cache.entry(key) {
                            Entry::Occupied(e) => e.into_mut(),
                            Entry::Vacant(e) => {
                                e.insert(dense_block(law, row_times[key.0], col_times[key.1])?)
                            }
                        };
                        out[(p, q)] = block[(rp.vertex, cq.vertex)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Symmetric Gram matrix over `points`.
    pub fn gram(&self, points: &[STPoint]) -> Result<GramMatrix> {
        let mut matrix = self.cross(points, points)?;
        // exact symmetry regardless of summation order
        for i in 0..matrix.nrows() {
            for j in 0..i {
                let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Ok(GramMatrix {
            matrix,
            points: points.to_vec(),
        })
    }

    /// Prior variances `k(p, p)`.
    pub fn diag(&self, points: &[STPoint]) -> Result<Vec<f64>> {
        self.check_points(points)?;
        match &self.repr {
            Repr::Modal(m) => {
                let v = m.basis();
                let mut w = vec![0.0; m.n_modes()];
                Ok(points
                    .iter()
                    .map(|p| {
                        m.mode_weights_into(p.time, p.time, &mut w);
                        v.row(p.vertex)
                            .iter()
                            .zip(&w)
                            .map(|(x, wk)| x * x * wk)
                            .sum()
                    })
                    .collect())
            }
            Repr::Dense(law) => points
                .iter()
                .map(|p| Ok(dense_block(law, p.time, p.time)?[(p.vertex, p.vertex)]))
                .collect(),
        }
    }
}

fn dense_block(law: &DenseLaw, t: f64, s: f64) -> Result<DMatrix<f64>> {
    match law {
        DenseLaw::Static(k) => Ok(k.clone()),
        DenseLaw::Separable(k, temporal) => Ok(k * temporal.eval(t, s)?),
        DenseLaw::Shek(g) => g.cov(t, s),
    }
}

/// Distinct times (in first-seen order) and each point's index into them.
fn unique_times(points: &[STPoint]) -> (Vec<f64>, Vec<usize>) {
    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut times = Vec::new();
    let idx = points
        .iter()
        .map(|p| {
            // +0.0 and −0.0 are the same instant
            let key = (p.time + 0.0).to_bits();
            *seen.entry(key).or_insert_with(|| {
                times.push(p.time);
                times.len() - 1
            })
        })
        .collect();
    (times, idx)
}

fn group_by_time(idx: &[usize], n_times: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); n_times];
    for (p, &t) in idx.iter().enumerate() {
        groups[t].push(p);
    }
    groups
}

/// Kernel matrix together with the points indexing its rows and columns.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub points: Vec<STPoint>,
}

pub fn assemble_gram(
    spec: &KernelSpec,
    ctx: &KernelContext,
    points: &[STPoint],
) -> Result<GramMatrix> {
    PreparedKernel::new(spec, ctx)?.gram(points)
}

pub fn cross_gram(
    spec: &KernelSpec,
    ctx: &KernelContext,
    rows: &[STPoint],
    cols: &[STPoint],
) -> Result<DMatrix<f64>> {
    PreparedKernel::new(spec, ctx)?.cross(rows, cols)
}
