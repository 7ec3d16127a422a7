//! Unbiased risk estimators for orthogonally invariant estimators.
//!
//! An orthogonally invariant estimator is described by its eigenvalue map
//! `ψ(l)`, a vector of `r` functions of the nonzero sample eigenvalues. The
//! risk identities below need `ψ`, the diagonal derivatives `∂ψ_k/∂l_k`, and
//! the divided-difference cross terms `Σ_{b≠k} (ψ_k − ψ_b)/(l_k − l_b)`.
//!
//! The two parametric families used by the estimators have analytic
//! derivatives. Arbitrary maps fall back to central finite differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{dim_mismatch, Error, Result};
use crate::estimators::Task;
use crate::linalg::SpectralDecomposition;

/// Relative eigenvalue gap below which a divided difference is replaced by
/// the mean of the two diagonal derivatives.
pub const TIE_TOLERANCE: f64 = 1e-8;

/// Custom eigenvalue map.
pub type PsiMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Eigenvalue map of an orthogonally invariant estimator.
#[derive(Clone)]
pub enum ShrinkageRule {
    /// `ψ_k = scale · (l_k + t / tr(S⁺))`.
    Linear { scale: f64, t: f64 },
    /// `ψ_k = scale · (1/l_k + t / tr(S))`.
    Reciprocal { scale: f64, t: f64 },
    /// Arbitrary map from the eigenvalue vector to `ψ`.
    Custom(PsiMap),
}

impl fmt::Debug for ShrinkageRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { scale, t } => write!(f, "Linear {{ scale: {scale}, t: {t} }}"),
            Self::Reciprocal { scale, t } => write!(f, "Reciprocal {{ scale: {scale}, t: {t} }}"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ShrinkageRule {
    pub fn custom(f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self, Self::Custom(_))
    }

    pub fn psi(&self, l: &[f64]) -> Vec<f64> {
        match *self {
            Self::Linear { scale, t } => {
                let shift = t / inv_sum(l);
                l.iter().map(|&lk| scale * (lk + shift)).collect()
            }
            Self::Reciprocal { scale, t } => {
                let shift = t / l.iter().sum::<f64>();
                l.iter().map(|&lk| scale * (1.0 / lk + shift)).collect()
            }
            Self::Custom(ref f) => {
                let psi = f(l);
                assert_eq!(psi.len(), l.len(), "custom rule returned wrong length");
                psi
            }
        }
    }

    /// Diagonal derivatives `∂ψ_k/∂l_k`, holding the other eigenvalues fixed.
    pub fn dpsi(&self, l: &[f64]) -> Vec<f64> {
        match *self {
            Self::Linear { scale, t } => {
                let tau = inv_sum(l);
                l.iter()
                    .map(|&lk| scale * (1.0 + t / (lk * lk * tau * tau)))
                    .collect()
            }
            Self::Reciprocal { scale, t } => {
                let total: f64 = l.iter().sum();
                l.iter()
                    .map(|&lk| scale * (-1.0 / (lk * lk) - t / (total * total)))
                    .collect()
            }
            Self::Custom(_) => central_difference(l, |x| self.psi(x)),
        }
    }

    pub fn profile(&self, l: &[f64]) -> PsiProfile {
        PsiProfile {
            psi: self.psi(l),
            dpsi: self.dpsi(l),
            source: if self.is_closed_form() {
                ProfileSource::ClosedForm
            } else {
                ProfileSource::NumericDerivative
            },
        }
    }

    /// `∂ψ*_k/∂l_k` for the covariance identity, analytic for [`Self::Linear`].
    fn dpsi_star_covariance(&self, l: &[f64], n: usize) -> Option<Vec<f64>> {
        let Self::Linear { scale: a, t } = *self else {
            return None;
        };
        let nf = n as f64;
        let r = l.len() as f64;
        let tau = inv_sum(l);
        let out = l
            .iter()
            .map(|&lk| {
                let u = 1.0 / (lk * tau);
                let w = u * u;
                let du = -1.0 / (lk * lk * tau) + 1.0 / (lk.powi(3) * tau * tau);
                let dw = -2.0 / (lk.powi(3) * tau * tau) + 2.0 / (lk.powi(4) * tau.powi(3));
                let psi = a * (lk + t / tau);
                let dpsi = a * (1.0 + t * w);
                let g = a * ((nf + r) / nf + t * ((nf - r - 2.0) * u + 4.0 * w) / nf) - 2.0;
                let dg = a * t * ((nf - r - 2.0) * du + 4.0 * dw) / nf;
                dg * psi + g * dpsi
            })
            .collect();
        Some(out)
    }
}

fn inv_sum(l: &[f64]) -> f64 {
    l.iter().map(|v| 1.0 / v).sum()
}

/// Central differences of `f_k` in `l_k` with step `max(l_k, 1) · ε^(1/3)`.
fn central_difference(l: &[f64], f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let step = f64::EPSILON.cbrt();
    let mut work = l.to_vec();
    (0..l.len())
        .map(|k| {
            let h = l[k].max(1.0) * step;
            work[k] = l[k] + h;
            let up = f(&work)[k];
            work[k] = l[k] - h;
            let down = f(&work)[k];
            work[k] = l[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Where the derivatives in a [`PsiProfile`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    ClosedForm,
    NumericDerivative,
}

/// `ψ` and `∂ψ_k/∂l_k` evaluated at a particular eigenvalue vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiProfile {
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub source: ProfileSource,
}

/// An unbiased risk estimate.
///
/// For precision and discriminant estimation the identity holds up to a
/// quantity that does not depend on the estimator; `constant_omitted` flags
/// those values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UreValue {
    pub value: f64,
    pub task: Task,
    pub constant_omitted: bool,
}

/// How to obtain `∂ψ*_k/∂l_k` when no closed form is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Differentiation {
    #[default]
    AllowNumeric,
    ClosedFormOnly,
}

/// Per-index cross terms `Σ_{b≠k} (ψ_k − ψ_b)/(l_k − l_b)`.
///
/// Near-tied eigenvalues use the analytic limit `(∂ψ_k + ∂ψ_b)/2`.
pub fn divided_differences(l: &[f64], psi: &[f64], dpsi: &[f64]) -> Vec<f64> {
    debug_assert!(l.len() == psi.len() && l.len() == dpsi.len());
    let scale = l.first().copied().unwrap_or(0.0).abs();
    (0..l.len())
        .map(|k| {
            (0..l.len())
                .filter(|&b| b != k)
                .map(|b| {
                    let gap = l[k] - l[b];
                    if gap.abs() < TIE_TOLERANCE * scale {
                        0.5 * (dpsi[k] + dpsi[b])
                    } else {
                        (psi[k] - psi[b]) / gap
                    }
                })
                .sum()
        })
        .collect()
}

/// `Σ_{k≠b} (ψ_k − ψ_b)/(l_k − l_b)`.
pub fn divided_difference_sum(l: &[f64], psi: &[f64], dpsi: &[f64]) -> f64 {
    divided_differences(l, psi, dpsi).iter().sum()
}

/// `ψ*_k` of the covariance identity:
/// `[ (n−r−2)/n · ψ_k/l_k + 4/n · ∂ψ_k + 2/n · Σ_{b≠k}(ψ_k−ψ_b)/(l_k−l_b) − 2 ] · ψ_k`.
pub fn psi_star_covariance(l: &[f64], profile: &PsiProfile, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let r = l.len() as f64;
    let cross = divided_differences(l, &profile.psi, &profile.dpsi);
    l.iter()
        .enumerate()
        .map(|(k, &lk)| {
            let psi = profile.psi[k];
            let bracket = (nf - r - 2.0) / nf * psi / lk + 4.0 / nf * profile.dpsi[k]
                + 2.0 / nf * cross[k]
                - 2.0;
            bracket * psi
        })
        .collect()
}

/// `ψ*_k` of the discriminant identity:
/// `(n−r−2)/n · ψ_k/l_k + 2/n · ∂ψ_k + 1/n · Σ_{b≠k}(ψ_k−ψ_b)/(l_k−l_b)`.
pub fn psi_star_discriminant(l: &[f64], profile: &PsiProfile, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let r = l.len() as f64;
    let cross = divided_differences(l, &profile.psi, &profile.dpsi);
    l.iter()
        .enumerate()
        .map(|(k, &lk)| {
            (nf - r - 2.0) / nf * profile.psi[k] / lk
                + 2.0 / nf * profile.dpsi[k]
                + cross[k] / nf
        })
        .collect()
}

fn check_sample_rank(r: usize, n: usize) -> Result<()> {
    if r < n {
        Ok(())
    } else {
        Err(Error::RankConditionViolated {
            estimator: "ure".into(),
            condition: "r <= n - 1",
            n,
            r,
        })
    }
}

/// Unbiased estimate of `E tr[(Σ̂Σ⁺ − I_p)²]`.
pub fn ure_covariance(
    dec: &SpectralDecomposition,
    rule: &ShrinkageRule,
    n: usize,
    differentiation: Differentiation,
) -> Result<UreValue> {
    let l = dec.eigenvalues();
    check_sample_rank(l.len(), n)?;
    let nf = n as f64;
    let r = l.len() as f64;

    let profile = rule.profile(l);
    let psi_star = psi_star_covariance(l, &profile, n);
    let dpsi_star = match rule.dpsi_star_covariance(l, n) {
        Some(d) => d,
        None if differentiation == Differentiation::AllowNumeric => {
            central_difference(l, |x| psi_star_covariance(x, &rule.profile(x), n))
        }
        None => {
            return Err(Error::UnsupportedFamily(
                "numeric differentiation is disabled for custom rules".into(),
            ))
        }
    };

    let ratio: f64 = psi_star.iter().zip(l).map(|(s, lk)| s / lk).sum();
    let value = dec.dim() as f64
        + (nf - r - 2.0) / nf * ratio
        + 2.0 / nf * dpsi_star.iter().sum::<f64>()
        + divided_difference_sum(l, &psi_star, &dpsi_star) / nf;
    Ok(UreValue {
        value,
        task: Task::Covariance,
        constant_omitted: false,
    })
}

/// Unbiased estimate of `E‖Σ̂⁺ − Σ⁺‖²_F − tr(Σ⁺²)`.
pub fn ure_precision(dec: &SpectralDecomposition, rule: &ShrinkageRule, n: usize) -> Result<UreValue> {
    let l = dec.eigenvalues();
    check_sample_rank(l.len(), n)?;
    let nf = n as f64;
    let r = l.len() as f64;
    let p = rule.profile(l);
    let squares: f64 = p.psi.iter().map(|v| v * v).sum();
    let ratio: f64 = p.psi.iter().zip(l).map(|(s, lk)| s / lk).sum();
    let value = squares
        - 2.0 * (nf - r - 2.0) / nf * ratio
        - 4.0 / nf * p.dpsi.iter().sum::<f64>()
        - 2.0 / nf * divided_difference_sum(l, &p.psi, &p.dpsi);
    Ok(UreValue {
        value,
        task: Task::Precision,
        constant_omitted: true,
    })
}

/// Unbiased estimate of `E‖Σ̂⁺X̄ − Σ⁺μ‖² + E[(X̄−μ)ᵀΣ⁺²(X̄+μ)]`.
pub fn ure_discriminant(
    dec: &SpectralDecomposition,
    rule: &ShrinkageRule,
    x_bar: &DVector<f64>,
    n: usize,
) -> Result<UreValue> {
    if x_bar.len() != dec.dim() {
        return Err(dim_mismatch(dec.dim(), x_bar.len()));
    }
    let l = dec.eigenvalues();
    check_sample_rank(l.len(), n)?;
    let p = rule.profile(l);
    let psi_star = psi_star_discriminant(l, &p, n);
    let coords = dec.basis().tr_mul(x_bar);
    let quadratic: f64 = (0..l.len())
        .map(|k| (p.psi[k] * p.psi[k] - 2.0 * psi_star[k]) * coords[k] * coords[k])
        .sum();
    let value = 2.0 / n as f64 * p.psi.iter().sum::<f64>() + quadratic;
    Ok(UreValue {
        value,
        task: Task::Discriminant,
        constant_omitted: true,
    })
}

/// Exact risk of `a·S` under the invariant squared loss:
/// `p − 2(n−1)ra/n + (n−1)(n+r)ra²/n²`.
pub fn scaled_covariance_risk(n: usize, p: usize, r: usize, a: f64) -> f64 {
    let (nf, pf, rf) = (n as f64, p as f64, r as f64);
    pf - 2.0 * (nf - 1.0) * rf * a / nf + (nf - 1.0) * (nf + rf) * rf * a * a / (nf * nf)
}

/// Exact risk `p − (n−1)r/(n+r)` of the optimal scaled covariance estimator.
pub fn exact_risk_hf1(n: usize, p: usize, r: usize) -> Result<f64> {
    if r == 0 || r + 1 > n {
        return Err(Error::RankConditionViolated {
            estimator: "hf1".into(),
            condition: "1 <= r <= n - 1",
            n,
            r,
        });
    }
    let (nf, rf) = (n as f64, r as f64);
    Ok(p as f64 - (nf - 1.0) * rf / (nf + rf))
}

/// Quadratic in `t` bounding the risk difference between the trace-corrected
/// estimator and its first-stage estimator, up to a positive expectation factor.
///
/// * covariance: `[(n−r)(n−r+2)t² − 2(n−r)(r−1)t] / (n+r)²`
/// * precision: `(n−r−4)t² − 4(r−1)t`
/// * discriminant: `(n−r−3)t² + 2(r+1)t`
pub fn risk_bound_gap(task: Task, n: usize, r: usize, t: f64) -> Result<f64> {
    let offset = match task {
        Task::Covariance => 4,
        Task::Precision | Task::Discriminant => 5,
    };
    if r == 0 || r + offset > n {
        return Err(Error::RankConditionViolated {
            estimator: format!("{task} bound"),
            condition: if offset == 4 { "r <= n - 4" } else { "r <= n - 5" },
            n,
            r,
        });
    }
    let (nf, rf) = (n as f64, r as f64);
    Ok(match task {
        Task::Covariance => {
            ((nf - rf) * (nf - rf + 2.0) * t * t - 2.0 * (nf - rf) * (rf - 1.0) * t)
                / ((nf + rf) * (nf + rf))
        }
        Task::Precision => (nf - rf - 4.0) * t * t - 4.0 * (rf - 1.0) * t,
        Task::Discriminant => 2.0 * (rf + 1.0) * t + (nf - rf - 3.0) * t * t,
    })
}
