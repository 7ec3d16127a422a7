//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rankshrink::linalg::max_abs_diff;
use rankshrink::SpectralDecomposition;

/// Rank-`r` PSD matrix on a random `r`-dimensional subspace with a spread,
/// well separated spectrum.
pub fn random_psd<R: Rng>(rng: &mut R, p: usize, r: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let o = g.qr().q();
    let l = random_eigenvalues(rng, r);
    let ol = DMatrix::from_fn(p, r, |i, k| o[(i, k)] * l[k]);
    let a = ol * o.transpose();
    (&a + a.transpose()) * 0.5
}

/// Strictly descending positive values spread over a few orders of magnitude.
pub fn random_eigenvalues<R: Rng>(rng: &mut R, r: usize) -> Vec<f64> {
    let mut l: Vec<f64> = (0..r).map(|_| 10f64.powf(rng.random_range(-1.0..1.5))).collect();
    l.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gap = 1e-3 * l[r - 1];
    for k in 1..r {
        l[k] = l[k].max(l[k - 1] + gap);
    }
    l.reverse();
    l
}

/// Decomposition of `diag(l, 0, …, 0)` in dimension `p`.
pub fn diagonal_decomposition(l: &[f64], p: usize) -> SpectralDecomposition {
    let mut d = l.to_vec();
    d.resize(p, 0.0);
    SpectralDecomposition::new(&DMatrix::from_diagonal(&DVector::from_vec(d)), None).unwrap()
}

/// `Σ_{k≠b} (ψ_k − ψ_b)/(l_k − l_b)` by brute force.
pub fn divided_difference_oracle(l: &[f64], psi: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..l.len() {
        for b in 0..l.len() {
            if k != b {
                total += (psi[k] - psi[b]) / (l[k] - l[b]);
            }
        }
    }
    total
}

fn power_trace(l: &[f64], j: i32) -> f64 {
    l.iter().map(|x| x.powi(-j)).sum()
}

/// Covariance URE of `n/(n+r)·[S + t·SS⁺/tr(S⁺)]`, expanded term by term.
pub fn hf2_ure_oracle(l: &[f64], n: usize, p: usize, t: f64) -> f64 {
    let (nf, rf) = (n as f64, l.len() as f64);
    let tau = power_trace(l, 1);
    let s2 = power_trace(l, 2) / tau.powi(2);
    let s3 = power_trace(l, 3) / tau.powi(3);
    let s4 = power_trace(l, 4) / tau.powi(4);
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for k in 0..l.len() {
        for b in 0..l.len() {
            if k != b {
                d1 += (1.0 / l[k] - 1.0 / l[b]) / (l[k] - l[b]);
                d2 += (l[k].powi(-2) - l[b].powi(-2)) / (l[k] - l[b]);
            }
        }
    }
    let q = (nf + rf).powi(2);
    p as f64 - (nf - 1.0) * rf / (nf + rf)
        + (-2.0 * (nf - rf - 2.0) * (rf + 1.0) + 4.0 * (nf - 2.0 * rf - 5.0) * s2 + 16.0 * s3) * t / q
        + ((nf - rf - 2.0) * (nf - rf - 4.0) * s2 + 8.0 * (nf - rf - 4.0) * s3 + 24.0 * s4) * t * t / q
        + 4.0 * t * d1 / (q * tau * tau)
        + t * t * ((nf - rf - 2.0) * d1 / (tau * tau) + 4.0 * d2 / tau.powi(3)) / q
}

/// Precision URE of `a·[S⁺ + t·SS⁺/tr(S)]`.
pub fn em_ure_oracle(l: &[f64], n: usize, a: f64, t: f64) -> f64 {
    let (nf, rf) = (n as f64, l.len() as f64);
    let tau = power_trace(l, 1);
    let tr2 = power_trace(l, 2);
    let big_t: f64 = l.iter().sum();
    2.0 * a / nf * tau * tau
        + (a * a - 2.0 * (nf - rf - 3.0) * a / nf) * tr2
        + (2.0 * a * a * tau / big_t - 2.0 * (nf - rf - 2.0) * a * tau / (nf * big_t)
            + 4.0 * a * rf / (nf * big_t * big_t))
            * t
        + a * a * rf * t * t / (big_t * big_t)
}

/// `ψ*` of the discriminant URE for `a·[1/l + t/tr(S)]`.
pub fn tk_psi_star_oracle(l: &[f64], n: usize, a: f64, t: f64) -> Vec<f64> {
    let (nf, rf) = (n as f64, l.len() as f64);
    let tau = power_trace(l, 1);
    let big_t: f64 = l.iter().sum();
    l.iter()
        .map(|&lk| {
            a * ((nf - rf - 2.0) / nf * (1.0 / (lk * lk) + t / (lk * big_t))
                + 2.0 / nf * (-1.0 / (lk * lk) - t / (big_t * big_t))
                + 1.0 / nf * (1.0 / (lk * lk) - tau / lk))
        })
        .collect()
}

/// Discriminant URE assembled from dense matrices.
pub fn discriminant_ure_oracle(
    dec: &SpectralDecomposition,
    psi: &[f64],
    psi_star: &[f64],
    x_bar: &DVector<f64>,
    n: usize,
) -> f64 {
    let o1 = dec.basis();
    let estimate = o1 * DMatrix::from_diagonal(&DVector::from_column_slice(psi)) * o1.transpose();
    let quad: Vec<f64> = psi.iter().zip(psi_star).map(|(a, b)| a * a - 2.0 * b).collect();
    let middle = o1 * DMatrix::from_diagonal(&DVector::from_vec(quad)) * o1.transpose();
    2.0 / n as f64 * estimate.trace() + (x_bar.transpose() * middle * x_bar)[(0, 0)]
}

/// Largest violation of the four Penrose conditions, relative to `‖A‖` and `‖A⁺‖`.
pub fn penrose_residual(a: &DMatrix<f64>, dec: &SpectralDecomposition) -> f64 {
    let g = dec.pseudoinverse();
    let na = a.amax().max(f64::MIN_POSITIVE);
    let ng = g.amax().max(f64::MIN_POSITIVE);
    let ag = a * &g;
    let ga = &g * a;
    [
        max_abs_diff(&(&ag * a), a) / na,
        max_abs_diff(&(&ga * &g), &g) / ng,
        max_abs_diff(&ag, &ag.transpose()),
        max_abs_diff(&ga, &ga.transpose()),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// All structural checks on one decomposition; `Err` names the first failure.
pub fn check_decomposition(
    a: &DMatrix<f64>,
    dec: &SpectralDecomposition,
    rank: usize,
) -> Result<(), String> {
    let scale = a.amax();
    if dec.rank() != rank {
        return Err(format!("rank {} != {rank}", dec.rank()));
    }
    let l = dec.eigenvalues();
    if l.windows(2).any(|w| w[0] < w[1]) || l.iter().any(|&x| x <= 0.0) {
        return Err("eigenvalues not positive and descending".into());
    }
    let o = dec.basis();
    let gram = o.transpose() * o;
    let orth = max_abs_diff(&gram, &DMatrix::identity(rank, rank));
    if orth > 1e-10 {
        return Err(format!("basis not orthonormal: {orth:e}"));
    }
    let recon = max_abs_diff(&dec.reconstruct(), a) / scale;
    if recon > 1e-9 {
        return Err(format!("reconstruction error {recon:e}"));
    }
    let pen = penrose_residual(a, dec);
    if pen > 1e-10 {
        return Err(format!("Penrose residual {pen:e}"));
    }
    let proj = dec.projector();
    if max_abs_diff(&(&proj * &proj), &proj) > 1e-10 {
        return Err("projector not idempotent".into());
    }
    let g = dec.pseudoinverse();
    let back = SpectralDecomposition::new(&g, None)
        .map_err(|e| format!("pseudoinverse not decomposable: {e}"))?
        .pseudoinverse();
    let twice = max_abs_diff(&back, a) / scale;
    if twice > 1e-8 {
        return Err(format!("double pseudoinverse error {twice:e}"));
    }
    let loss = rankshrink::linalg::invariant_squared_loss(a, dec).map_err(|e| e.to_string())?;
    let expect = (a.nrows() - rank) as f64;
    if (loss - expect).abs() > 1e-10 * expect.max(1.0) {
        return Err(format!("self loss {loss} != p - r = {expect}"));
    }
    let eff = dec.effective_rank();
    if !(eff >= 1.0 - 1e-12 && eff <= rank as f64 + 1e-12) {
        return Err(format!("effective rank {eff} outside [1, {rank}]"));
    }
    let ratio = dec.pinv_power_trace(2) / dec.pinv_power_trace(1).powi(2);
    let rf = rank as f64;
    if ratio > 1.0 + 1e-12 || rf * ratio < 1.0 - 1e-12 {
        return Err(format!("tr(A⁺²)/tr²(A⁺) = {ratio} outside [1/r, 1]"));
    }
    for col in o.column_iter() {
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            return Err("sign convention violated".into());
        }
    }
    Ok(())
}
