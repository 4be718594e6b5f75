//! Shared test oracles: a truncated Fock-space reference for measurement
//! statistics and a seeded Gaussian sampler for Monte-Carlo checks.
//!
//! The Fock reference builds displacement-operator matrix elements from the
//! ladder recurrences
//!   c[n][0]   = e^{-|d|^2/2} d^n / sqrt(n!)
//!   c[n][k+1] = (sqrt(n) c[n-1][k] - conj(d) c[n][k]) / sqrt(k+1)
//! and sums them against thermal weights, so it shares no code or closed
//! form with the library implementation.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

/// Matrix elements `<n|D(d)|k>` for `n < dim`, `k <= k_max`.
pub fn displacement_coefficients(d: Complex64, dim: usize, k_max: usize) -> Vec<Vec<Complex64>> {
    let mut c = vec![vec![Complex64::new(0.0, 0.0); k_max + 1]; dim];
    c[0][0] = Complex64::new((-0.5 * d.norm_sqr()).exp(), 0.0);
    for n in 1..dim {
        c[n][0] = c[n - 1][0] * d / (n as f64).sqrt();
    }
    for k in 0..k_max {
        for n in 0..dim {
            let lower = if n == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                c[n - 1][k] * (n as f64).sqrt()
            };
            c[n][k + 1] = (lower - d.conj() * c[n][k]) / ((k + 1) as f64).sqrt();
        }
    }
    c
}

/// Photon-number probabilities `p(0) ..= p(n_keep)` of the displaced thermal
/// state with mean `mean`, occupation `nbar`, displaced by `-lambda` before
/// detection. Only low rows are computed: the displacement recurrence is
/// stable there, and the tail beyond `n_keep` follows from normalization
/// (the displacement columns have unit norm exactly).
pub fn fock_number_distribution(
    mean: Complex64,
    nbar: f64,
    lambda: Complex64,
    n_keep: usize,
) -> Vec<f64> {
    let d = mean - lambda;
    // geometric thermal weights truncated so the tail is below 1e-14
    let k_max = if nbar < 1e-12 {
        0
    } else {
        let ratio: f64 = nbar / (1.0 + nbar);
        ((-14.0 * std::f64::consts::LN_10) / ratio.ln()).ceil() as usize
    };
    let c = displacement_coefficients(d, n_keep + 1, k_max);
    let mut weights = Vec::with_capacity(k_max + 1);
    let mut w = 1.0 / (1.0 + nbar);
    for _ in 0..=k_max {
        weights.push(w);
        w *= nbar / (1.0 + nbar);
    }
    let mut p = vec![0.0f64; n_keep + 1];
    for (k, &wk) in weights.iter().enumerate() {
        for (n, pn) in p.iter_mut().enumerate() {
            *pn += wk * c[n][k].norm_sqr();
        }
    }
    p
}

/// Tail mass above `n_keep`, from normalization of the retained rows.
pub fn fock_tail_mass(p: &[f64]) -> f64 {
    (1.0 - p.iter().sum::<f64>()).max(0.0)
}

/// Standard normal pair via Box-Muller from a uniform RNG.
pub fn normal_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    (r * phi.cos(), r * phi.sin())
}
