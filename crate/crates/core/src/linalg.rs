//! Dense symmetric linear algebra on positive semi-definite matrices.
//!
//! Everything here works from the reduced eigendecomposition `A = O1 diag(l) O1ᵀ`
//! that keeps only the eigenpairs above a numeric rank tolerance. The
//! pseudoinverse, the support projector and all three loss functions are
//! computed from that factorization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_mismatch, Error, Result};

/// Relative asymmetry accepted before a matrix is rejected as non-symmetric.
const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Loss values are plain non-negative reals.
pub type LossValue = f64;

/// Reduced spectral decomposition `O1 diag(l) O1ᵀ` of a PSD matrix.
///
/// Eigenvalues are stored in non-increasing order and every one of them
/// exceeds `tolerance_used`. Columns of the basis are orthonormal and carry
/// a deterministic sign: the largest-magnitude entry of each column is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    tolerance_used: f64,
}

impl SpectralDecomposition {
    /// Decomposes `matrix`, discarding eigenvalues at or below `tol`.
    ///
    /// The default tolerance is `p · ε · λ_max`.
    pub fn new(matrix: &DMatrix<f64>, tol: Option<f64>) -> Result<Self> {
        let p = matrix.nrows();
        if p == 0 || matrix.ncols() != p {
            return Err(dim_mismatch(
                "non-empty square matrix",
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        let scale = matrix.amax();
        let asymmetry = max_asymmetry(matrix);
        if asymmetry > SYMMETRY_TOLERANCE * scale {
            return Err(Error::NotSymmetric {
                max_asymmetry: asymmetry,
            });
        }
        if let Some(t) = tol {
            if t.is_nan() || t < 0.0 || !t.is_finite() {
                return Err(Error::InvalidParameter(format!("rank tolerance {t}")));
            }
        }

        let symmetric = (matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(symmetric);
        let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tolerance_used = tol.unwrap_or(p as f64 * f64::EPSILON * lambda_max);

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > tolerance_used)
            .collect();
        if kept.is_empty() {
            return Err(Error::ZeroMatrix {
                tolerance: tolerance_used,
            });
        }

        let r = kept.len();
        let mut basis = DMatrix::zeros(p, r);
        let mut eigenvalues = DVector::zeros(r);
        for (k, &i) in kept.iter().enumerate() {
            eigenvalues[k] = eig.eigenvalues[i];
            let mut col = eig.eigenvectors.column(i).into_owned();
            orient(&mut col);
            basis.set_column(k, &col);
        }
        Ok(Self {
            basis,
            eigenvalues,
            tolerance_used,
        })
    }

    /// Assembles a decomposition from an orthonormal basis and its eigenvalues.
    ///
    /// Eigenvalues must be positive and non-increasing; the basis is
    /// re-oriented to the sign convention.
    pub fn from_parts(
        basis: DMatrix<f64>,
        eigenvalues: DVector<f64>,
        tolerance_used: f64,
    ) -> Result<Self> {
        if basis.ncols() != eigenvalues.len() || eigenvalues.is_empty() {
            return Err(dim_mismatch(
                format!("{} basis columns", eigenvalues.len()),
                basis.ncols(),
            ));
        }
        if basis.nrows() < basis.ncols() {
            return Err(Error::BadRank {
                rank: basis.ncols(),
                dim: basis.nrows(),
            });
        }
        let ordered = eigenvalues
            .as_slice()
            .windows(2)
            .all(|w| w[0] >= w[1]);
        if !ordered || eigenvalues.iter().any(|&l| l.is_nan() || l <= tolerance_used) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be non-increasing and above the tolerance".into(),
            ));
        }
        let mut basis = basis;
        for mut col in basis.column_iter_mut() {
            let mut owned = col.clone_owned();
            orient(&mut owned);
            col.copy_from(&owned);
        }
        Ok(Self {
            basis,
            eigenvalues,
            tolerance_used,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    /// The `p × r` semi-orthogonal basis `O1`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn tolerance_used(&self) -> f64 {
        self.tolerance_used
    }

    /// Keeps the `r` leading eigenpairs.
    pub fn truncate(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::BadRank {
                rank: r,
                dim: self.dim(),
            });
        }
        if r > self.rank() {
            return Err(Error::RankTooLarge {
                requested: r,
                available: self.rank(),
            });
        }
        Ok(Self {
            basis: self.basis.columns(0, r).into_owned(),
            eigenvalues: self.eigenvalues.rows(0, r).into_owned(),
            tolerance_used: self.tolerance_used,
        })
    }

    /// `O1 diag(f(l_k)) O1ᵀ`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.weighted_outer(&weights)
    }

    /// `O1 diag(w) O1ᵀ` for an arbitrary weight vector of length `r`.
    pub fn weighted_outer(&self, weights: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(weights.len(), self.rank());
        let mut scaled = self.basis.clone();
        for (mut col, &w) in scaled.column_iter_mut().zip(weights) {
            col *= w;
        }
        scaled * self.basis.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.spectral_map(|l| l)
    }

    /// Moore–Penrose pseudoinverse `O1 diag(1/l) O1ᵀ`.
    pub fn pseudoinverse(&self) -> DMatrix<f64> {
        self.spectral_map(|l| 1.0 / l)
    }

    /// Orthogonal projector `O1 O1ᵀ` onto the column space.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `tr(A) = Σ l_k`.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// `tr((A⁺)^power) = Σ l_k^(-power)`.
    pub fn pinv_power_trace(&self, power: i32) -> f64 {
        self.eigenvalues.iter().map(|l| l.powi(-power)).sum()
    }

    /// `tr(A) / λ_max(A)`, always in `[1, r]`.
    pub fn effective_rank(&self) -> f64 {
        self.trace() / self.eigenvalues[0]
    }
}

/// Free-function form of [`SpectralDecomposition::new`].
pub fn reduced_spectral_decomposition(
    matrix: &DMatrix<f64>,
    tol: Option<f64>,
) -> Result<SpectralDecomposition> {
    SpectralDecomposition::new(matrix, tol)
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..p {
        for i in (j + 1)..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn orient(col: &mut DVector<f64>) {
    let pivot = col.iamax();
    if col[pivot] < 0.0 {
        col.neg_mut();
    }
}

/// Invariant squared loss `tr[(Σ̂ Σ⁺ − I_p)²]`.
///
/// Evaluated in the `r`-dimensional coordinates of the truth:
/// with `M = O1ᵀ Σ̂ O1` the loss is `p − 2 Σ M_kk / l_k + Σ M_kj M_jk / (l_j l_k)`.
pub fn invariant_squared_loss(
    sigma_hat: &DMatrix<f64>,
    truth: &SpectralDecomposition,
) -> Result<LossValue> {
    let p = truth.dim();
    if sigma_hat.shape() != (p, p) {
        return Err(dim_mismatch(
            format!("{p}x{p}"),
            format!("{}x{}", sigma_hat.nrows(), sigma_hat.ncols()),
        ));
    }
    let basis = truth.basis();
    let m = basis.transpose() * sigma_hat * basis;
    let inv: Vec<f64> = truth.eigenvalues().iter().map(|l| 1.0 / l).collect();
    let r = truth.rank();
    let mut linear = 0.0;
    let mut quadratic = 0.0;
    for k in 0..r {
        linear += m[(k, k)] * inv[k];
        for j in 0..r {
            quadratic += m[(k, j)] * m[(j, k)] * inv[j] * inv[k];
        }
    }
    Ok((p as f64 - 2.0 * linear + quadratic).max(0.0))
}

/// Squared Frobenius norm of `a − b`.
pub fn frobenius_loss(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<LossValue> {
    if a.shape() != b.shape() {
        return Err(dim_mismatch(
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    Ok((a - b).norm_squared())
}

/// Squared Euclidean norm of `v − w`.
pub fn squared_loss(v: &DVector<f64>, w: &DVector<f64>) -> Result<LossValue> {
    if v.len() != w.len() {
        return Err(dim_mismatch(v.len(), w.len()));
    }
    Ok((v - w).norm_squared())
}

/// Entrywise max-norm of `a − b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
