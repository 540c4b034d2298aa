//! Weighted graphs, their Laplacians, and the fractional graph Laplacian
//! `L̃ = (2ν/κ² I + L)^{ν/2}`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// A weighted graph with vertices indexed in lexicographic label order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    directed: bool,
}

impl Graph {
    /// Builds a graph from vertex labels and `(source, target, weight)`
    /// edges given by label. Vertices are re-indexed by sorted label.
    pub fn new<L, S, T>(
        labels: L,
        edges: impl IntoIterator<Item = (S, T, f64)>,
        directed: bool,
    ) -> Result<Self>
    where
        L: IntoIterator,
        L::Item: Into<String>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut sorted: Vec<String> = labels.into_iter().map(Into::into).collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLabel(w[0].clone()));
        }
        if sorted.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let index: HashMap<String, usize> = sorted
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();

        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (src, dst, weight) in edges {
            let (src, dst) = (src.as_ref(), dst.as_ref());
            let s = *index
                .get(src)
                .ok_or_else(|| Error::UnknownVertex(src.to_string()))?;
            let t = *index
                .get(dst)
                .ok_or_else(|| Error::UnknownVertex(dst.to_string()))?;
            if s == t {
                return Err(Error::SelfLoop(src.to_string()));
            }
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::InvalidWeight {
                    src: src.to_string(),
                    dst: dst.to_string(),
                    weight,
                });
            }
            let key = if directed {
                (s, t)
            } else {
                (s.min(t), s.max(t))
            };
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(src.to_string(), dst.to_string()));
            }
            out.push(Edge {
                source: s,
                target: t,
                weight,
            });
        }
        Ok(Graph {
            labels: sorted,
            index,
            edges: out,
            directed,
        })
    }

    /// Undirected unit-weight path over `n` vertices labelled `v00, v01, …`
    /// (zero-padded so label order is path order).
    pub fn path(n: usize) -> Result<Self> {
        let labels = numbered_labels("v", n);
        let edges: Vec<_> = labels
            .windows(2)
            .map(|w| (w[0].clone(), w[1].clone(), 1.0))
            .collect();
        Graph::new(labels, edges, false)
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Dense weight matrix `W`; undirected edges fill both triangles.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let n = self.n_vertices();
        let mut w = DMatrix::zeros(n, n);
        for e in &self.edges {
            w[(e.source, e.target)] += e.weight;
            if !self.directed {
                w[(e.target, e.source)] += e.weight;
            }
        }
        w
    }

    /// Accumulated (out-)weights per vertex.
    pub fn degrees(&self) -> Vec<f64> {
        let w = self.weight_matrix();
        w.row_iter().map(|r| r.sum()).collect()
    }

    pub fn laplacian(&self, variant: LaplacianVariant) -> Result<LaplacianMatrix> {
        laplacian(self, variant)
    }

    /// Number of weakly connected components.
    pub fn n_components(&self) -> usize {
        let n = self.n_vertices();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.source), find(&mut parent, e.target));
            if a != b {
                parent[a] = b;
            }
        }
        (0..n)
            .map(|i| find(&mut parent, i))
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// `prefix00, prefix01, …` zero-padded to the width of `n - 1`.
pub fn numbered_labels(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianVariant {
    /// `D − W`
    #[default]
    Unnormalized,
    /// `D^{-1/2} (D − W) D^{-1/2}`
    SymNormalized,
    /// `I − D^{-1} W`
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    pub matrix: DMatrix<f64>,
    pub variant: LaplacianVariant,
    pub symmetric: bool,
}

impl LaplacianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigendecomposition, available only for symmetric Laplacians.
    pub fn decompose(&self) -> Result<SpectralDecomposition> {
        spectral::eigendecompose_symmetric(&self.matrix)
    }
}

pub fn laplacian(g: &Graph, variant: LaplacianVariant) -> Result<LaplacianMatrix> {
    let n = g.n_vertices();
    let w = g.weight_matrix();
    let deg = g.degrees();
    if variant != LaplacianVariant::Unnormalized {
        if let Some(i) = deg.iter().position(|d| *d <= 0.0) {
            return Err(Error::ZeroDegree(g.label(i).to_string()));
        }
    }
    let mut l = -w;
    for i in 0..n {
        l[(i, i)] += deg[i];
    }
    let matrix = match variant {
        LaplacianVariant::Unnormalized => l,
        LaplacianVariant::SymNormalized => {
            let s: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
            DMatrix::from_fn(n, n, |i, j| s[i] * l[(i, j)] * s[j])
        }
        LaplacianVariant::RandomWalk => DMatrix::from_fn(n, n, |i, j| l[(i, j)] / deg[i]),
    };
    let symmetric = spectral::is_symmetric(&matrix);
    Ok(LaplacianMatrix {
        matrix,
        variant,
        symmetric,
    })
}

/// The shift `2ν/κ²` that makes the fractional Laplacian positive definite.
pub fn matern_shift(nu: f64, kappa: f64) -> f64 {
    2.0 * nu / (kappa * kappa)
}

fn check_shape_params(nu: f64, kappa: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "nu must be positive, got {nu}"
        )));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    Ok(())
}

/// `L̃ = (2ν/κ² I + L)^{ν/2}` held in the eigenbasis of `L`.
///
/// `eigenvalues()[k]` pairs with column `k` of `basis()`; the order follows
/// the Laplacian's ascending spectrum, which the map keeps ascending.
#[derive(Debug, Clone)]
pub struct FractionalLaplacian {
    nu: f64,
    kappa: f64,
    base: Arc<SpectralDecomposition>,
    shifted: Vec<f64>,
}

impl FractionalLaplacian {
    pub fn new(l: &LaplacianMatrix, nu: f64, kappa: f64) -> Result<Self> {
        if !l.symmetric {
            return Err(Error::NotSymmetric {
                asymmetry: spectral::max_asymmetry(&l.matrix),
            });
        }
        Self::from_decomposition(Arc::new(l.decompose()?), nu, kappa)
    }

    /// Reuses an existing decomposition of a symmetric PSD Laplacian.
    pub fn from_decomposition(
        base: Arc<SpectralDecomposition>,
        nu: f64,
        kappa: f64,
    ) -> Result<Self> {
        check_shape_params(nu, kappa)?;
        let shift = matern_shift(nu, kappa);
        let shifted = base
            .eigenvalues()
            .iter()
            // Laplacians are PSD; clip round-off below zero.
            .map(|&lambda| (shift + lambda.max(0.0)).powf(0.5 * nu))
            .collect::<Vec<_>>();
        if let Some(bad) = shifted.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "fractional Laplacian eigenvalue {bad} is not positive; increase 2ν/κ²"
            )));
        }
        Ok(FractionalLaplacian {
            nu,
            kappa,
            base,
            shifted,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Spectrum of `L̃`, aligned with the columns of [`Self::basis`].
    pub fn eigenvalues(&self) -> &[f64] {
        &self.shifted
    }

    /// Spectrum of the underlying Laplacian.
    pub fn laplacian_eigenvalues(&self) -> &[f64] {
        self.base.eigenvalues()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        self.base.basis()
    }

    pub fn base(&self) -> &Arc<SpectralDecomposition> {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.shifted.len()
    }

    /// `basis · diag(weights) · basisᵀ` with one weight per eigenvalue of `L̃`.
    pub fn synthesize(&self, weights: &[f64]) -> DMatrix<f64> {
        self.base.synthesize(weights)
    }

    /// `f(L̃)`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        let values = self
            .shifted
            .iter()
            .map(|&mu| {
                let v = f(mu);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteFunction(mu))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.synthesize(&values))
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        self.synthesize(&self.shifted)
    }
}

/// `(2ν/κ² I + L)^{ν/2}` for any Laplacian. Symmetric Laplacians go through
/// the spectrum; asymmetric ones only admit integer exponents `ν/2`.
pub fn shifted_laplacian_power(l: &LaplacianMatrix, nu: f64, kappa: f64) -> Result<DMatrix<f64>> {
    check_shape_params(nu, kappa)?;
    if l.symmetric {
        return Ok(FractionalLaplacian::new(l, nu, kappa)?.matrix());
    }
    let half = 0.5 * nu;
    if (half - half.round()).abs() > 1e-12 || half.round() < 1.0 {
        return Err(Error::Unsupported {
            kernel: "fractional Laplacian".into(),
            reason: format!("asymmetric Laplacian needs an integer exponent ν/2, got {half}"),
        });
    }
    let n = l.dim();
    let shifted = &l.matrix + DMatrix::<f64>::identity(n, n) * matern_shift(nu, kappa);
    let mut out = shifted.clone();
    for _ in 1..(half.round() as usize) {
        out = &out * &shifted;
    }
    Ok(out)
}
