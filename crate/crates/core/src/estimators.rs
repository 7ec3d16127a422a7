//! Covariance, precision and discriminant-coefficient estimators.
//!
//! Every non-diagonal estimator is orthogonally invariant: it keeps the
//! eigenbasis `O1` of `S` and only reshapes the eigenvalues. Two families are
//! supported, `a · base` and `a · [base + t · SS⁺ / trace]`, plus the
//! diagonal baselines. Named presets resolve to concrete `(a, t)` from the
//! sample size `n` and the numeric rank `r` of `S`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SampleStatistics;
use crate::ure::ShrinkageRule;

/// The three estimation problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    /// `Σ` under the invariant squared loss.
    Covariance,
    /// `Σ⁺` under the Frobenius loss.
    Precision,
    /// `η = Σ⁺μ` under the squared loss.
    Discriminant,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Covariance, Task::Precision, Task::Discriminant];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Covariance => "covariance",
            Task::Precision => "precision",
            Task::Discriminant => "discriminant",
        }
    }

    /// Preset the harness compares against by default.
    pub fn default_reference(self) -> Preset {
        match self {
            Task::Covariance => Preset::UnbiasedCov,
            Task::Precision => Preset::NaivePrec,
            Task::Discriminant => Preset::NaiveDisc,
        }
    }

    /// Presets the harness evaluates by default, reference excluded.
    pub fn default_estimators(self) -> [Preset; 4] {
        match self {
            Task::Covariance => [Preset::Sample, Preset::Hf1, Preset::Hf2, Preset::Diag],
            Task::Precision => [
                Preset::UnbiasedPrec,
                Preset::Em1,
                Preset::Em2,
                Preset::DiagInv,
            ],
            Task::Discriminant => [
                Preset::UnbiasedDisc,
                Preset::Tk1,
                Preset::Tk2,
                Preset::DiagDisc,
            ],
        }
    }

    /// Largest rank every default estimator of this task accepts.
    pub fn max_rank(self, n: usize) -> usize {
        match self {
            Task::Covariance => n.saturating_sub(4),
            Task::Precision | Task::Discriminant => n.saturating_sub(5),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "covariance" | "cov" => Ok(Task::Covariance),
            "precision" | "prec" => Ok(Task::Precision),
            "discriminant" | "disc" => Ok(Task::Discriminant),
            other => Err(Error::InvalidParameter(format!("unknown task `{other}`"))),
        }
    }
}

/// Named estimators with stable string ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Sample,
    UnbiasedCov,
    Hf1,
    Hf2,
    Diag,
    NaivePrec,
    UnbiasedPrec,
    Em1,
    Em2,
    DiagInv,
    NaiveDisc,
    UnbiasedDisc,
    Tk1,
    Tk2,
    DiagDisc,
}

impl Preset {
    pub const ALL: [Preset; 15] = [
        Preset::Sample,
        Preset::UnbiasedCov,
        Preset::Hf1,
        Preset::Hf2,
        Preset::Diag,
        Preset::NaivePrec,
        Preset::UnbiasedPrec,
        Preset::Em1,
        Preset::Em2,
        Preset::DiagInv,
        Preset::NaiveDisc,
        Preset::UnbiasedDisc,
        Preset::Tk1,
        Preset::Tk2,
        Preset::DiagDisc,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Preset::Sample => "sample",
            Preset::UnbiasedCov => "unbiased-cov",
            Preset::Hf1 => "hf1",
            Preset::Hf2 => "hf2",
            Preset::Diag => "diag",
            Preset::NaivePrec => "naive-prec",
            Preset::UnbiasedPrec => "unbiased-prec",
            Preset::Em1 => "em1",
            Preset::Em2 => "em2",
            Preset::DiagInv => "diag-inv",
            Preset::NaiveDisc => "naive-disc",
            Preset::UnbiasedDisc => "unbiased-disc",
            Preset::Tk1 => "tk1",
            Preset::Tk2 => "tk2",
            Preset::DiagDisc => "diag-disc",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        let id = id.trim();
        Preset::ALL
            .into_iter()
            .find(|p| p.id().eq_ignore_ascii_case(id))
            .ok_or_else(|| Error::UnknownEstimator(id.to_string()))
    }

    pub fn task(self) -> Task {
        use Preset::*;
        match self {
            Sample | UnbiasedCov | Hf1 | Hf2 | Diag => Task::Covariance,
            NaivePrec | UnbiasedPrec | Em1 | Em2 | DiagInv => Task::Precision,
            NaiveDisc | UnbiasedDisc | Tk1 | Tk2 | DiagDisc => Task::Discriminant,
        }
    }

    /// Concrete coefficients for sample size `n` and rank `r`, enforcing the
    /// rank conditions under which each preset's risk bound holds.
    pub fn resolve(self, n: usize, r: usize) -> Result<Resolved> {
        use Preset::*;
        let nf = n as f64;
        let rf = r as f64;
        let need = |offset: usize, condition: &'static str| -> Result<()> {
            if r >= 1 && r + offset <= n {
                Ok(())
            } else {
                Err(Error::RankConditionViolated {
                    estimator: self.id().to_string(),
                    condition,
                    n,
                    r,
                })
            }
        };
        Ok(match self {
            Sample | NaivePrec | NaiveDisc => Resolved::Scaled { a: 1.0 },
            UnbiasedCov => {
                need(1, "r <= n - 1")?;
                Resolved::Scaled { a: nf / (nf - 1.0) }
            }
            Hf1 => {
                need(1, "r <= n - 1")?;
                Resolved::Scaled { a: nf / (nf + rf) }
            }
            Hf2 => {
                need(4, "r <= n - 4")?;
                Resolved::ScaledPlusTrace {
                    a: nf / (nf + rf),
                    t: hf2_coefficient(n, r),
                }
            }
            UnbiasedPrec | UnbiasedDisc => {
                need(5, "r <= n - 5")?;
                Resolved::Scaled {
                    a: (nf - rf - 2.0) / nf,
                }
            }
            Em1 => {
                need(5, "r <= n - 5")?;
                Resolved::Scaled {
                    a: (nf - rf - 4.0) / nf,
                }
            }
            Em2 => {
                need(5, "r <= n - 5")?;
                Resolved::ScaledPlusTrace {
                    a: (nf - rf - 4.0) / nf,
                    t: em2_coefficient(n, r),
                }
            }
            Tk1 => {
                need(5, "r <= n - 5")?;
                Resolved::Scaled {
                    a: (nf - rf - 3.0) / nf,
                }
            }
            Tk2 => {
                need(5, "r <= n - 5")?;
                Resolved::ScaledPlusTrace {
                    a: (nf - rf - 3.0) / nf,
                    t: tk2_coefficient(n, r),
                }
            }
            Diag | DiagInv | DiagDisc => Resolved::Diagonal,
        })
    }
}

/// Trace coefficient minimizing the covariance risk bound: `(r−1)/(n−r+2)`.
pub fn hf2_coefficient(n: usize, r: usize) -> f64 {
    (r as f64 - 1.0) / (n as f64 - r as f64 + 2.0)
}

/// Trace coefficient minimizing the precision risk bound: `2(r−1)/(n−r−4)`.
pub fn em2_coefficient(n: usize, r: usize) -> f64 {
    2.0 * (r as f64 - 1.0) / (n as f64 - r as f64 - 4.0)
}

/// Trace coefficient minimizing the discriminant risk bound: `−(r+1)/(n−r−3)`.
pub fn tk2_coefficient(n: usize, r: usize) -> f64 {
    -(r as f64 + 1.0) / (n as f64 - r as f64 - 3.0)
}

/// Estimator family with either explicit or preset coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `a · base`.
    Scaled { a: f64 },
    /// `a · [base + t · SS⁺ / trace]`.
    ScaledPlusTrace { a: f64, t: f64 },
    /// `diag(S)`, `diag(S)⁻¹` or `diag(S)⁻¹ X̄`.
    Diagonal,
    Preset(Preset),
}

/// Family with coefficients fixed for a particular `(n, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Scaled { a: f64 },
    ScaledPlusTrace { a: f64, t: f64 },
    Diagonal,
}

impl Resolved {
    /// Eigenvalue map for orthogonally invariant estimators of `task`.
    pub fn rule(self, task: Task) -> Option<ShrinkageRule> {
        let (scale, t) = match self {
            Resolved::Scaled { a } => (a, 0.0),
            Resolved::ScaledPlusTrace { a, t } => (a, t),
            Resolved::Diagonal => return None,
        };
        Some(match task {
            Task::Covariance => ShrinkageRule::Linear { scale, t },
            Task::Precision | Task::Discriminant => ShrinkageRule::Reciprocal { scale, t },
        })
    }
}

/// A task together with an estimator family and an id used in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub id: String,
    pub task: Task,
    pub family: Family,
}

impl EstimatorSpec {
    pub fn preset(preset: Preset) -> Self {
        Self {
            id: preset.id().to_string(),
            task: preset.task(),
            family: Family::Preset(preset),
        }
    }

    pub fn custom(id: impl Into<String>, task: Task, family: Family) -> Self {
        Self {
            id: id.into(),
            task,
            family,
        }
    }

    /// Looks up a preset by its stable id.
    pub fn from_id(id: &str) -> Result<Self> {
        Preset::from_id(id).map(Self::preset)
    }

    pub fn resolve(&self, n: usize, r: usize) -> Result<Resolved> {
        match self.family {
            Family::Scaled { a } => Ok(Resolved::Scaled { a }),
            Family::ScaledPlusTrace { a, t } => Ok(Resolved::ScaledPlusTrace { a, t }),
            Family::Diagonal => Ok(Resolved::Diagonal),
            Family::Preset(p) => p.resolve(n, r),
        }
    }

    fn expect_task(&self, task: Task) -> Result<()> {
        if self.task == task {
            Ok(())
        } else {
            Err(Error::TaskMismatch {
                estimator: self.id.clone(),
                expected: task.to_string(),
                actual: self.task.to_string(),
            })
        }
    }
}

/// Output of [`estimate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Matrix(DMatrix<f64>),
    Vector(DVector<f64>),
}

/// Dispatches on the spec's task.
pub fn estimate(spec: &EstimatorSpec, stats: &SampleStatistics) -> Result<Estimate> {
    match spec.task {
        Task::Covariance => estimate_covariance(spec, stats).map(Estimate::Matrix),
        Task::Precision => estimate_precision(spec, stats).map(Estimate::Matrix),
        Task::Discriminant => estimate_discriminant(spec, stats).map(Estimate::Vector),
    }
}

pub fn estimate_covariance(spec: &EstimatorSpec, stats: &SampleStatistics) -> Result<DMatrix<f64>> {
    spec.expect_task(Task::Covariance)?;
    let resolved = spec.resolve(stats.n, stats.rank())?;
    match resolved.rule(Task::Covariance) {
        Some(rule) => {
            let psi = rule.psi(stats.s_dec.eigenvalues());
            Ok(stats.s_dec.weighted_outer(&psi))
        }
        None => Ok(DMatrix::from_diagonal(&stats.s.diagonal())),
    }
}

pub fn estimate_precision(spec: &EstimatorSpec, stats: &SampleStatistics) -> Result<DMatrix<f64>> {
    spec.expect_task(Task::Precision)?;
    let resolved = spec.resolve(stats.n, stats.rank())?;
    match resolved.rule(Task::Precision) {
        Some(rule) => {
            let psi = rule.psi(stats.s_dec.eigenvalues());
            Ok(stats.s_dec.weighted_outer(&psi))
        }
        None => Ok(DMatrix::from_diagonal(&inverse_diagonal(stats)?)),
    }
}

pub fn estimate_discriminant(
    spec: &EstimatorSpec,
    stats: &SampleStatistics,
) -> Result<DVector<f64>> {
    spec.expect_task(Task::Discriminant)?;
    let resolved = spec.resolve(stats.n, stats.rank())?;
    match resolved.rule(Task::Discriminant) {
        Some(rule) => {
            let psi = rule.psi(stats.s_dec.eigenvalues());
            let basis = stats.s_dec.basis();
            let mut coords = basis.tr_mul(&stats.x_bar);
            for (c, w) in coords.iter_mut().zip(&psi) {
                *c *= w;
            }
            Ok(basis * coords)
        }
        None => Ok(inverse_diagonal(stats)?.component_mul(&stats.x_bar)),
    }
}

fn inverse_diagonal(stats: &SampleStatistics) -> Result<DVector<f64>> {
    let tol = stats.s_dec.tolerance_used();
    let d = stats.s.diagonal();
    if let Some((index, &value)) = d.iter().enumerate().find(|(_, &v)| v <= tol) {
        return Err(Error::SingularDiagonal { index, value });
    }
    Ok(d.map(|v| 1.0 / v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_statistics;
    use approx::assert_abs_diff_eq;

    fn fixed_stats() -> SampleStatistics {
        // n = 10 rows in R^4 with rank-3 centered spread.
        let rows = [
            [1.0, 2.0, 0.5, 3.0],
            [0.2, -1.0, 1.5, 1.0],
            [2.0, 0.0, -0.5, 0.0],
            [-1.0, 1.0, 1.0, -1.5],
            [0.5, 0.5, 0.5, 0.5],
            [1.5, -0.5, 2.0, 1.0],
            [-0.5, 2.5, 0.0, 2.0],
            [0.0, 0.0, 1.0, 1.0],
            [3.0, 1.0, -1.0, 2.0],
            [-2.0, -1.0, 0.5, -3.0],
        ];
        let mut x = DMatrix::from_fn(10, 4, |i, j| rows[i][j]);
        // force the last column into the span of the first three
        for i in 0..10 {
            x[(i, 3)] = x[(i, 0)] - 0.5 * x[(i, 1)] + 2.0 * x[(i, 2)] + 1.0;
        }
        sample_statistics(&x).unwrap()
    }

    #[test]
    fn preset_ids_round_trip() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_id(p.id()).unwrap(), p);
        }
        assert!(matches!(
            Preset::from_id("ledoit-wolf"),
            Err(Error::UnknownEstimator(_))
        ));
    }

    #[test]
    fn hf1_scale() {
        assert_eq!(
            Preset::Hf1.resolve(150, 50).unwrap(),
            Resolved::Scaled { a: 0.75 }
        );
    }

    #[test]
    fn em1_scale_and_tk2_coefficient() {
        match Preset::Em1.resolve(20, 5).unwrap() {
            Resolved::Scaled { a } => assert_abs_diff_eq!(a, 0.55, epsilon = 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(tk2_coefficient(20, 5), -0.5);
        assert_eq!(hf2_coefficient(10, 4), 3.0 / 8.0);
        assert_eq!(em2_coefficient(20, 1), 0.0);
    }

    #[test]
    fn rank_conditions_are_enforced() {
        assert!(Preset::Hf2.resolve(10, 6).is_ok());
        let err = Preset::Hf2.resolve(10, 7).unwrap_err();
        assert!(err.to_string().contains("r <= n - 4"), "{err}");
        assert!(Preset::Em1.resolve(10, 6).is_err());
        assert!(Preset::Tk2.resolve(10, 5).is_ok());
        assert!(Preset::Sample.resolve(10, 9).is_ok());
    }

    #[test]
    fn hf2_with_rank_one_equals_hf1() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0, -1.0, -2.0, 3.0, 6.0, 0.5, 1.0]);
        let stats = sample_statistics(&x).unwrap();
        assert_eq!(stats.rank(), 1);
        let hf1 = estimate_covariance(&EstimatorSpec::preset(Preset::Hf1), &stats).unwrap();
        let hf2 = estimate_covariance(&EstimatorSpec::preset(Preset::Hf2), &stats).unwrap();
        assert_abs_diff_eq!(hf1, hf2, epsilon = 1e-15);
    }

    #[test]
    fn hf2_matches_direct_matrix_formula() {
        let stats = fixed_stats();
        assert_eq!(stats.rank(), 3);
        let (n, r) = (10.0, 3.0);
        let t = (r - 1.0) / (n - r + 2.0);
        let s_pinv = stats.s_dec.pseudoinverse();
        let proj = &stats.s * &s_pinv;
        let expected = (&stats.s + proj * (t / s_pinv.trace())) * (n / (n + r));
        let got = estimate_covariance(&EstimatorSpec::preset(Preset::Hf2), &stats).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn tk1_matches_composition() {
        let stats = fixed_stats();
        let got = estimate_discriminant(&EstimatorSpec::preset(Preset::Tk1), &stats).unwrap();
        let expected = stats.s_dec.pseudoinverse() * &stats.x_bar * ((10.0 - 3.0 - 3.0) / 10.0);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_mean_gives_zero_coefficients() {
        let mut stats = fixed_stats();
        stats.x_bar.fill(0.0);
        for p in Preset::ALL.into_iter().filter(|p| p.task() == Task::Discriminant) {
            let eta = estimate_discriminant(&EstimatorSpec::preset(p), &stats).unwrap();
            assert!(eta.iter().all(|&v| v == 0.0), "{}", p.id());
        }
    }

    #[test]
    fn diagonal_estimators() {
        let stats = fixed_stats();
        let d = estimate_covariance(&EstimatorSpec::preset(Preset::Diag), &stats).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(d[(i, j)], 0.0);
                } else {
                    assert_eq!(d[(i, i)], stats.s[(i, i)]);
                }
            }
        }
        let inv = estimate_precision(&EstimatorSpec::preset(Preset::DiagInv), &stats).unwrap();
        assert_abs_diff_eq!(inv[(1, 1)] * stats.s[(1, 1)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn diagonal_inverse_rejects_zero_variance() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 4.0, 5.0]);
        let stats = sample_statistics(&x).unwrap();
        assert!(matches!(
            estimate_precision(&EstimatorSpec::preset(Preset::DiagInv), &stats),
            Err(Error::SingularDiagonal { index: 1, .. })
        ));
    }

    #[test]
    fn task_mismatch_is_an_error() {
        let stats = fixed_stats();
        assert!(matches!(
            estimate_precision(&EstimatorSpec::preset(Preset::Hf1), &stats),
            Err(Error::TaskMismatch { .. })
        ));
    }
}
