//! Cross-validation of the closed-form channel and measurement statistics
//! against independent references.

mod common;

use adrate_core::gaussian::{apply_channel, ChannelParams, DisplacedThermal};
use adrate_core::measurement::{kennedy_off_probability, pnr_distribution};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The additive-noise channel `(1, 2)` equals the identity followed by a
/// complex Gaussian displacement of variance 1. Averaged on/off statistics
/// over that picture must match the closed form within Monte-Carlo error,
/// which validates the occupation formula `nbar = (mu1^2 + mu2 - 1)/2`.
#[test]
fn noise_composition_monte_carlo() {
    let params = ChannelParams::new(1.0, 2.0).unwrap();
    let beta = c(1.0, 0.0);
    let state = apply_channel(&params, beta);
    assert_eq!(state.mean, beta);
    assert!((state.nbar - 1.0).abs() < 1e-15);

    let mut rng = ChaCha12Rng::seed_from_u64(20240817);
    let n = 400_000usize;
    for lambda in [c(0.0, 0.0), c(0.5, 0.3)] {
        let closed = kennedy_off_probability(&state, lambda);
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for _ in 0..n {
            let (g_re, g_im) = common::normal_pair(&mut rng);
            // complex displacement with total variance 1
            let gamma = c(g_re * 0.5f64.sqrt(), g_im * 0.5f64.sqrt());
            let sample = (-(beta + gamma - lambda).norm_sqr()).exp();
            sum += sample;
            sum_sq += sample * sample;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let sigma = (var / n as f64).sqrt();
        assert!(
            (mean - closed).abs() < 3.0 * sigma,
            "lambda {lambda}: MC {mean} vs closed {closed} (3 sigma = {})",
            3.0 * sigma
        );
    }
}

#[test]
fn kennedy_unit_amplitude_matches_fock_truncation() {
    // |<0|beta=1>|^2 via a 64-level Fock reference
    let state = DisplacedThermal::coherent(c(1.0, 0.0));
    let reference = common::fock_number_distribution(c(1.0, 0.0), 0.0, c(0.0, 0.0), 63);
    let closed = kennedy_off_probability(&state, c(0.0, 0.0));
    assert!((closed - reference[0]).abs() < 1e-12);
    assert!((closed - (-1.0f64).exp()).abs() < 1e-12);
}

#[test]
fn pnr_matches_fock_reference_on_mixed_state() {
    let state = DisplacedThermal::new(c(1.2, -0.7), 0.8).unwrap();
    let lambda = c(0.4, 0.4);
    let closed = pnr_distribution(&state, lambda, 24);
    let reference = common::fock_number_distribution(state.mean, state.nbar, lambda, 24);
    for n in 0..=24 {
        assert!(
            (closed[n] - reference[n]).abs() < 1e-10,
            "n={n}: closed {} vs reference {}",
            closed[n],
            reference[n]
        );
    }
    let tail = common::fock_tail_mass(&reference);
    assert!((closed[25] - tail).abs() < 1e-10, "overflow bucket mismatch");
}
