//! Dense symmetric eigendecomposition and the matrix functions built on it.
//!
//! Every kernel in this crate is a scalar function lifted through the
//! spectrum of a (shifted, fractionally powered) graph Laplacian, so the
//! decomposition here is the single engine behind heat semigroups, matrix
//! powers, square roots and the oscillatory wave factors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`eigendecompose_symmetric`].
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Default relative threshold below which an eigenvalue counts as zero.
pub const NULL_SPACE_REL_TOL: f64 = 1e-10;

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_symmetric(a: &DMatrix<f64>) -> bool {
    a.is_square() && max_asymmetry(a) <= SYMMETRY_TOL * max_abs(a).max(f64::MIN_POSITIVE)
}

fn ensure_square(a: &DMatrix<f64>) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Eigenvalues in ascending order with an orthonormal basis of eigenvectors
/// (one per column).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    basis: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `basis · diag(weights) · basisᵀ`.
    pub fn synthesize(&self, weights: &[f64]) -> DMatrix<f64> {
        assert_eq!(weights.len(), self.dim());
        let mut scaled = self.basis.clone();
        for (mut col, w) in scaled.column_iter_mut().zip(weights) {
            col *= *w;
        }
        let mut out = &scaled * self.basis.transpose();
        symmetrize_in_place(&mut out);
        out
    }

    /// Reconstructs the decomposed matrix.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.synthesize(&self.eigenvalues)
    }

    /// Coordinates of `v` in the eigenbasis.
    pub fn to_modes(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(v)
    }

    pub fn from_modes(&self, modes: &DVector<f64>) -> DVector<f64> {
        &self.basis * modes
    }

    /// Same basis with every eigenvalue passed through `f`. The result is
    /// the decomposition of `f(A)`, re-sorted ascending.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Result<SpectralDecomposition> {
        let mapped = self.eval(f)?;
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| mapped[a].total_cmp(&mapped[b]));
        let eigenvalues = order.iter().map(|&k| mapped[k]).collect();
        let basis = DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.basis[(i, order[j])]);
        Ok(SpectralDecomposition { eigenvalues, basis })
    }

    fn eval(&self, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        self.eigenvalues
            .iter()
            .map(|&lambda| {
                let v = f(lambda);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteFunction(lambda))
                }
            })
            .collect()
    }
}

fn symmetrize_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Full spectrum of a symmetric matrix. Inputs within [`SYMMETRY_TOL`] of
/// symmetric are symmetrized as `(A + Aᵀ)/2` first.
pub fn eigendecompose_symmetric(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    ensure_square(a)?;
    let scale = max_abs(a);
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut sym = a.clone();
    symmetrize_in_place(&mut sym);
    let n = sym.nrows();
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(SpectralDecomposition { eigenvalues, basis })
}

/// `basis · diag(f(λ)) · basisᵀ`, failing if `f` is not finite somewhere on
/// the spectrum.
pub fn matrix_function(
    dec: &SpectralDecomposition,
    f: impl Fn(f64) -> f64,
) -> Result<DMatrix<f64>> {
    let values = dec.eval(f)?;
    Ok(dec.synthesize(&values))
}

/// Moore–Penrose pseudoinverse of a symmetric matrix. Eigenvalues with
/// `|λ| < rel_tol · max|λ|` are treated as exact zeros.
pub fn pseudoinverse(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let dec = eigendecompose_symmetric(a)?;
    Ok(pseudoinverse_of(&dec, rel_tol))
}

pub fn pseudoinverse_of(dec: &SpectralDecomposition, rel_tol: f64) -> DMatrix<f64> {
    let cutoff = rel_tol * dec.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let inv: Vec<f64> = dec
        .eigenvalues
        .iter()
        .map(|&l| {
            if l.abs() <= cutoff || l == 0.0 {
                0.0
            } else {
                1.0 / l
            }
        })
        .collect();
    dec.synthesize(&inv)
}

/// Largest number of decades the jitter is escalated by.
pub const MAX_JITTER_DECADES: i32 = 8;

/// Lower Cholesky factor of `A + jitter·I`.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl JitteredCholesky {
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn factor_ref(&self) -> &DMatrix<f64> {
        self.chol.l_dirty()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b` (forward substitution only).
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Cholesky factorization that retries with an escalating diagonal jitter:
/// first none, then `1e-10 · mean(diag) · 10^k` for `k = 0..=8`.
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<JitteredCholesky> {
    ensure_square(a)?;
    let n = a.nrows();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    let mean_diag = a.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n as f64;
    let base = 1e-10 * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let max_diag = a.diagonal().iter().fold(0.0_f64, |m, d| m.max(*d));

    let mut last = 0.0;
    for k in -1..=MAX_JITTER_DECADES {
        let jitter = if k < 0 { 0.0 } else { base * 10f64.powi(k) };
        last = jitter;
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            // nalgebra accepts any positive pivot; reject pivots that are
            // round-off rather than signal.
            let l = chol.l_dirty();
            let floor = 1e-15 * (max_diag + jitter).max(f64::MIN_POSITIVE);
            if (0..n).all(|i| l[(i, i)] * l[(i, i)] > floor) {
                return Ok(JitteredCholesky { chol, jitter });
            }
        }
    }
    Err(Error::NotPositiveDefinite { jitter: last })
}

/// Matrix exponential of a general square matrix by scaling and squaring
/// with a degree-13 Padé approximant. Used where the argument is not
/// symmetric (directed graphs); symmetric arguments go through the
/// eigendecomposition instead.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(a)?;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    if !norm1.is_finite() {
        return Err(Error::InvalidParameter(
            "matrix exponential of a non-finite matrix".into(),
        ));
    }
    let squarings = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]);
    let u = &scaled * (u_inner + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1]);
    let v_inner = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]);
    let v = v_inner + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(Error::Singular)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn identity_spectrum() {
        let dec = eigendecompose_symmetric(&DMatrix::identity(3, 3)).unwrap();
        for l in dec.eigenvalues() {
            assert_close!(*l, 1.0, 1e-12);
        }
    }

    #[test]
    fn two_by_two_spectrum() {
        let dec = eigendecompose_symmetric(&m(&[&[2.0, -2.0], &[-2.0, 2.0]])).unwrap();
        assert_close!(dec.eigenvalues()[0], 0.0, 1e-12);
        assert_close!(dec.eigenvalues()[1], 4.0, 1e-12);
    }

    #[test]
    fn path_graph_spectrum() {
        // characteristic polynomial of the 3-path Laplacian: -λ(λ-1)(λ-3)
        let l = m(&[&[1.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 1.0]]);
        let dec = eigendecompose_symmetric(&l).unwrap();
        for (got, want) in dec.eigenvalues().iter().zip([0.0, 1.0, 3.0]) {
            assert_close!(*got, want, 1e-12);
        }
        let btb = dec.basis().transpose() * dec.basis();
        assert!((btb - DMatrix::identity(3, 3)).amax() < 1e-8);
        assert!((dec.reconstruct() - l).amax() < 1e-8);
    }

    #[test]
    fn rejects_asymmetric() {
        let err = eigendecompose_symmetric(&m(&[&[1.0, 2.0], &[0.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
    }

    #[test]
    fn function_examples() {
        let a = m(&[&[3.0, 1.0], &[1.0, 2.0]]);
        let dec = eigendecompose_symmetric(&a).unwrap();
        assert!((matrix_function(&dec, |l| l).unwrap() - &a).amax() < 1e-8);

        let zero = eigendecompose_symmetric(&m(&[&[0.0]])).unwrap();
        for t in [0.0, 0.5, 10.0] {
            assert_close!(
                matrix_function(&zero, |l| (-t * l).exp()).unwrap()[(0, 0)],
                1.0,
                0.0
            );
        }
        let err = matrix_function(&zero, |l| 1.0 / l).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFunction(_)));
    }

    #[test]
    fn reciprocal_of_shifted_triangle_spectrum() {
        // K3 Laplacian has spectrum {0,3,3}; shift 4 gives {4,7,7}.
        let l = m(&[&[2.0, -1.0, -1.0], &[-1.0, 2.0, -1.0], &[-1.0, -1.0, 2.0]]);
        let shifted = l + DMatrix::identity(3, 3) * 4.0;
        let dec = eigendecompose_symmetric(&shifted).unwrap();
        let inv = matrix_function(&dec, |l| 1.0 / l).unwrap();
        let inv_dec = eigendecompose_symmetric(&inv).unwrap();
        for (got, want) in inv_dec
            .eigenvalues()
            .iter()
            .zip([1.0 / 7.0, 1.0 / 7.0, 0.25])
        {
            assert_close!(*got, want, 1e-12);
        }
    }

    #[test]
    fn pseudoinverse_examples() {
        assert_eq!(
            pseudoinverse(&m(&[&[0.0]]), NULL_SPACE_REL_TOL).unwrap()[(0, 0)],
            0.0
        );
        let p = pseudoinverse(&m(&[&[2.0, -2.0], &[-2.0, 2.0]]), NULL_SPACE_REL_TOL).unwrap();
        let want = m(&[&[0.125, -0.125], &[-0.125, 0.125]]);
        assert!((p - want).amax() < 1e-12);
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((pseudoinverse(&id, NULL_SPACE_REL_TOL).unwrap() - &id).amax() < 1e-12);
    }

    #[test]
    fn pseudoinverse_matches_least_squares() {
        // minimum-norm least-squares solution x = A⁺ b, found independently by
        // solving the normal equations restricted to the range of A.
        let a = m(&[&[2.0, -2.0], &[-2.0, 2.0]]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        // range(A) = span{(1,-1)}: x = α(1,-1) minimising |A x - b|.
        let r = DVector::from_vec(vec![1.0, -1.0]);
        let ar = &a * &r;
        let alpha = ar.dot(&b) / ar.dot(&ar);
        let x_oracle = r * alpha;
        let x = pseudoinverse(&a, NULL_SPACE_REL_TOL).unwrap() * b;
        assert!((x - x_oracle).amax() < 1e-12);
    }

    #[test]
    fn cholesky_examples() {
        let c = cholesky_jittered(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(c.jitter(), 0.0);
        assert!((c.factor() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);

        let c = cholesky_jittered(&m(&[&[4.0, 2.0], &[2.0, 2.0]])).unwrap();
        assert_eq!(c.jitter(), 0.0);
        assert!((c.factor() - m(&[&[2.0, 0.0], &[1.0, 1.0]])).amax() < 1e-15);

        let singular = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let c = cholesky_jittered(&singular).unwrap();
        assert!(c.jitter() > 0.0 && c.jitter() <= 1e-2);
        let l = c.factor();
        assert!((&l * l.transpose() - &singular).amax() <= 1e-6 * max_abs(&singular));
    }

    #[test]
    fn cholesky_gives_up_on_indefinite() {
        let err = cholesky_jittered(&m(&[&[1.0, 0.0], &[0.0, -1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn expm_of_rotation_generator() {
        let a = m(&[&[0.0, -1.0], &[1.0, 0.0]]) * 0.7;
        let e = expm(&a).unwrap();
        let want = m(&[
            &[0.7f64.cos(), -0.7f64.sin()],
            &[0.7f64.sin(), 0.7f64.cos()],
        ]);
        assert!((e - want).amax() < 1e-13);
        let big = m(&[&[-30.0, 0.0], &[0.0, 2.0]]);
        let e = expm(&big).unwrap();
        assert!((e[(0, 0)] / (-30f64).exp() - 1.0).abs() < 1e-10);
        assert!((e[(1, 1)] / 2f64.exp() - 1.0).abs() < 1e-12);
    }
}
