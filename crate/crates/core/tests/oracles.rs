mod common;

use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankshrink::estimators::{em2_coefficient, hf2_coefficient, tk2_coefficient};
use rankshrink::ure::{
    divided_difference_sum, psi_star_covariance, psi_star_discriminant, scaled_covariance_risk,
    ure_covariance, ure_discriminant, ure_precision, Differentiation,
};
use rankshrink::ShrinkageRule;

use common::*;

/// `(l, n, p)` with `r ≤ n − 5` and `r < p`.
fn setting() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
    (2usize..12, 0usize..30, 1usize..6, any::<u64>()).prop_map(|(r, extra_n, extra_p, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_eigenvalues(&mut rng, r), r + 5 + extra_n, r + extra_p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divided_differences_match_double_loop((l, _, _) in setting(), k in 0.1f64..3.0) {
        let rule = ShrinkageRule::Reciprocal { scale: k, t: 0.7 };
        let p = rule.profile(&l);
        let fast = divided_difference_sum(&l, &p.psi, &p.dpsi);
        let slow = divided_difference_oracle(&l, &p.psi);
        prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
    }

    #[test]
    fn hf2_ure_matches_expansion((l, n, p) in setting(), scale in -1.0f64..3.0) {
        let r = l.len();
        let t = scale * hf2_coefficient(n, r);
        let a = n as f64 / (n + r) as f64;
        let rule = ShrinkageRule::Linear { scale: a, t };
        let dec = diagonal_decomposition(&l, p);
        let u = ure_covariance(&dec, &rule, n, Differentiation::ClosedFormOnly).unwrap().value;
        let oracle = hf2_ure_oracle(&l, n, p, t);
        prop_assert!((u - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{u} vs {oracle}");
    }

    #[test]
    fn scaled_covariance_ure_is_its_exact_risk((l, n, p) in setting(), a in 0.0f64..2.0) {
        let rule = ShrinkageRule::Linear { scale: a, t: 0.0 };
        let dec = diagonal_decomposition(&l, p);
        let u = ure_covariance(&dec, &rule, n, Differentiation::ClosedFormOnly).unwrap().value;
        let exact = scaled_covariance_risk(n, p, l.len(), a);
        prop_assert!((u - exact).abs() <= 1e-10 * exact.abs().max(1.0));
    }

    #[test]
    fn numeric_derivative_agrees_with_closed_form((l, n, p) in setting()) {
        let r = l.len();
        let (a, t) = (n as f64 / (n + r) as f64, hf2_coefficient(n, r));
        let closed = ShrinkageRule::Linear { scale: a, t };
        let numeric = ShrinkageRule::custom(move |l: &[f64]| {
            let tau: f64 = l.iter().map(|x| 1.0 / x).sum();
            l.iter().map(|x| a * (x + t / tau)).collect()
        });
        let dec = diagonal_decomposition(&l, p);
        let u1 = ure_covariance(&dec, &closed, n, Differentiation::ClosedFormOnly).unwrap().value;
        let u2 = ure_covariance(&dec, &numeric, n, Differentiation::AllowNumeric).unwrap().value;
        prop_assert!((u1 - u2).abs() <= 1e-5 * u1.abs().max(1.0), "{u1} vs {u2}");
    }

    #[test]
    fn em_ure_matches_expansion((l, n, p) in setting(), scale in -1.0f64..3.0) {
        let r = l.len();
        let a = (n - r - 4) as f64 / n as f64;
        let t = scale * em2_coefficient(n, r);
        let rule = ShrinkageRule::Reciprocal { scale: a, t };
        let dec = diagonal_decomposition(&l, p);
        let u = ure_precision(&dec, &rule, n).unwrap().value;
        let oracle = em_ure_oracle(&l, n, a, t);
        prop_assert!((u - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{u} vs {oracle}");
    }

    #[test]
    fn tk_psi_star_matches_expansion((l, n, _) in setting(), scale in -1.0f64..3.0) {
        let r = l.len();
        let a = (n - r - 3) as f64 / n as f64;
        let t = scale * tk2_coefficient(n, r);
        let rule = ShrinkageRule::Reciprocal { scale: a, t };
        let star = psi_star_discriminant(&l, &rule.profile(&l), n);
        let oracle = tk_psi_star_oracle(&l, n, a, t);
        for (x, y) in star.iter().zip(&oracle) {
            prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn discriminant_ure_matches_dense_assembly((l, n, p) in setting(), seed in any::<u64>()) {
        let r = l.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_bar = DVector::from_fn(p, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let rule = ShrinkageRule::Reciprocal {
            scale: (n - r - 3) as f64 / n as f64,
            t: tk2_coefficient(n, r),
        };
        let dec = diagonal_decomposition(&l, p);
        let profile = rule.profile(&l);
        let star = psi_star_discriminant(&l, &profile, n);
        let u = ure_discriminant(&dec, &rule, &x_bar, n).unwrap().value;
        let oracle = discriminant_ure_oracle(&dec, &profile.psi, &star, &x_bar, n);
        prop_assert!((u - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{u} vs {oracle}");
    }

    #[test]
    fn linear_psi_star_closed_form((l, n, _) in setting(), a in 0.0f64..2.0) {
        let r = l.len() as f64;
        let nf = n as f64;
        let rule = ShrinkageRule::Linear { scale: a, t: 0.0 };
        let star = psi_star_covariance(&l, &rule.profile(&l), n);
        for (s, lk) in star.iter().zip(&l) {
            let expect = ((nf + r) * a / nf - 2.0) * a * lk;
            prop_assert!((s - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }
}

#[test]
fn scaled_precision_ure_closed_form() {
    let l = [4.0, 2.5, 1.0, 0.5];
    let (n, a) = (20, 0.7);
    let dec = diagonal_decomposition(&l, 6);
    let rule = ShrinkageRule::Reciprocal { scale: a, t: 0.0 };
    let u = ure_precision(&dec, &rule, n).unwrap().value;
    let tau: f64 = l.iter().map(|x| 1.0 / x).sum();
    let tr2: f64 = l.iter().map(|x| x.powi(-2)).sum();
    let nf = n as f64;
    let expect = 2.0 * a / nf * tau * tau + (a * a - 2.0 * (nf - 4.0 - 3.0) * a / nf) * tr2;
    assert_relative_eq!(u, expect, max_relative = 1e-12);
}

#[test]
fn scaled_discriminant_psi_star_closed_form() {
    let l = [3.0, 1.5, 0.25];
    let (n, a) = (12, 0.6);
    let rule = ShrinkageRule::Reciprocal { scale: a, t: 0.0 };
    let star = psi_star_discriminant(&l, &rule.profile(&l), n);
    let tau: f64 = l.iter().map(|x| 1.0 / x).sum();
    let nf = n as f64;
    for (s, lk) in star.iter().zip(&l) {
        let expect = (nf - 3.0 - 3.0) / nf * a / (lk * lk) - a / nf * tau / lk;
        assert_relative_eq!(*s, expect, max_relative = 1e-12);
    }
}
