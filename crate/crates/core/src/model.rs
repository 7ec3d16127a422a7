//! Singular population models, sampling, and sample statistics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{max_abs_diff, SpectralDecomposition};

/// Seedable generator used for every simulation in the crate.
pub type SimRng = ChaCha8Rng;

/// Independent, reproducible substream `stream` of the generator keyed by `master_seed`.
///
/// ChaCha's 64-bit stream id keeps substreams disjoint, so replications can
/// be drawn in any order or in parallel without changing results.
pub fn substream(master_seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Autoregressive covariance `Σ_ij = rho^|i−j|`.
pub fn ar_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// AR(`rho`) covariance with its `p − r` smallest eigenvalues set to zero.
pub fn ar_singular_covariance(p: usize, r: usize, rho: f64) -> Result<SpectralDecomposition> {
    if r == 0 || r > p {
        return Err(Error::BadRank { rank: r, dim: p });
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "AR coefficient {rho} must lie in (0, 1)"
        )));
    }
    singularize(&ar_covariance(p, rho), r)
}

/// Keeps the `r` largest eigenpairs of a PSD matrix.
pub fn singularize(sigma: &DMatrix<f64>, r: usize) -> Result<SpectralDecomposition> {
    let dec = SpectralDecomposition::new(sigma, None)?;
    dec.truncate(r)
}

/// Centering convention for the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// `(X − 1X̄ᵀ)ᵀ(X − 1X̄ᵀ)/n`.
    #[default]
    Centered,
    /// `XᵀX/n`.
    Uncentered,
}

/// `N_p(μ, Σ)` with `Σ` of rank `r`.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    mu: DVector<f64>,
    sigma: SpectralDecomposition,
    factor: DMatrix<f64>,
    label: String,
}

impl PopulationModel {
    pub fn new(
        mu: DVector<f64>,
        sigma: SpectralDecomposition,
        label: impl Into<String>,
    ) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(dim_mismatch(sigma.dim(), mu.len()));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("mean vector is not finite".into()));
        }
        let roots: Vec<f64> = sigma.eigenvalues().iter().map(|l| l.sqrt()).collect();
        let mut factor = sigma.basis().clone();
        for (mut col, s) in factor.column_iter_mut().zip(&roots) {
            col *= *s;
        }
        Ok(Self {
            mu,
            sigma,
            factor,
            label: label.into(),
        })
    }

    /// Mean `(1, …, 1)`.
    pub fn with_unit_mean(sigma: SpectralDecomposition, label: impl Into<String>) -> Self {
        let mu = DVector::from_element(sigma.dim(), 1.0);
        Self::new(mu, sigma, label).expect("unit mean matches dimension")
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &SpectralDecomposition {
        &self.sigma
    }

    /// `B = O1 diag(√l)`, so that `Σ = BBᵀ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn rank(&self) -> usize {
        self.sigma.rank()
    }
}

/// Draws `X = 1μᵀ + Z Bᵀ` with `Z` an `n × r` standard normal matrix.
///
/// Normals are consumed row by row, so the output is a pure function of the
/// generator state.
pub fn sample_singular_mvn<R: Rng + ?Sized>(
    model: &PopulationModel,
    n: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let r = model.rank();
    let mut z = DMatrix::zeros(n, r);
    for i in 0..n {
        for k in 0..r {
            z[(i, k)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut x = z * model.factor().transpose();
    for mut row in x.row_iter_mut() {
        row += model.mu().transpose();
    }
    x
}

/// Sample mean, sample covariance and its reduced decomposition.
#[derive(Debug, Clone)]
pub struct SampleStatistics {
    pub x_bar: DVector<f64>,
    pub s: DMatrix<f64>,
    pub s_dec: SpectralDecomposition,
    pub n: usize,
}

impl SampleStatistics {
    pub fn dim(&self) -> usize {
        self.x_bar.len()
    }

    /// Numeric rank of `S`.
    pub fn rank(&self) -> usize {
        self.s_dec.rank()
    }
}

/// Centered sample statistics with divisor `n`.
pub fn sample_statistics(x: &DMatrix<f64>) -> Result<SampleStatistics> {
    sample_statistics_with(x, Centering::Centered)
}

pub fn sample_statistics_with(x: &DMatrix<f64>, centering: Centering) -> Result<SampleStatistics> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    let x_bar = x.row_mean().transpose();
    let s = match centering {
        Centering::Centered => {
            let mut centered = x.clone();
            for mut row in centered.row_iter_mut() {
                row -= x_bar.transpose();
            }
            centered.tr_mul(&centered) / n as f64
        }
        Centering::Uncentered => x.tr_mul(x) / n as f64,
    };
    let s = (&s + s.transpose()) * 0.5;
    let s_dec = match SpectralDecomposition::new(&s, None) {
        Ok(dec) => dec,
        Err(Error::ZeroMatrix { .. }) => return Err(Error::DegenerateSample),
        Err(e) => return Err(e),
    };
    Ok(SampleStatistics { x_bar, s, s_dec, n })
}

/// Max-norm distance between the support projectors of `S` and `Σ`.
pub fn verify_support_identity(s: &SampleStatistics, model: &PopulationModel) -> f64 {
    max_abs_diff(&s.s_dec.projector(), &model.sigma().projector())
}
