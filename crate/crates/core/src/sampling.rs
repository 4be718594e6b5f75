//! Seeded generators for random instances: interferometers, codebooks, and
//! decoding policies. All sampling draws `f64` values from the supplied RNG
//! and embeds them, so a fixed seed reproduces instances bit-for-bit.

use num_complex::Complex;
use rand::Rng;

use crate::adaptive::{AdaptivePolicy, CodebookSequence};
use crate::error::Result;
use crate::gaussian::{compile_elements, Constellation, Element, PassiveUnitary};
use crate::measurement::Povm;
use crate::scalar::{Cplx, Scalar};

/// Random passive unitary built from two sweeps of beam splitters over all
/// adjacent mode pairs plus output phases.
pub fn random_unitary<S: Scalar, R: Rng>(rng: &mut R, dim: usize) -> Result<PassiveUnitary<S>> {
    if dim == 1 {
        let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        return compile_elements(1, &[Element::Phase { mode: 0, phi: S::of(phi) }]);
    }
    let mut elements: Vec<Element<S>> = Vec::new();
    for _ in 0..2 {
        for a in 0..dim - 1 {
            elements.push(Element::BeamSplitter {
                a,
                b: a + 1,
                theta: S::of(rng.random::<f64>() * std::f64::consts::FRAC_PI_2),
                phi: S::of(rng.random::<f64>() * 2.0 * std::f64::consts::PI),
            });
        }
    }
    for mode in 0..dim {
        elements.push(Element::Phase {
            mode,
            phi: S::of(rng.random::<f64>() * 2.0 * std::f64::consts::PI),
        });
    }
    compile_elements(dim, &elements)
}

/// Random codebook over `n_messages` sequences of `n_modes` amplitudes,
/// rescaled so the prior-averaged energy per mode lands exactly on `energy`.
pub fn random_codebook<S: Scalar, R: Rng>(
    rng: &mut R,
    n_modes: usize,
    n_messages: usize,
    energy: S,
) -> Result<CodebookSequence<S>> {
    let mut messages: Vec<Vec<Cplx<S>>> = Vec::with_capacity(n_messages);
    for _ in 0..n_messages {
        let mut word = Vec::with_capacity(n_modes);
        for _ in 0..n_modes {
            let re = rng.random::<f64>() * 2.0 - 1.0;
            let im = rng.random::<f64>() * 2.0 - 1.0;
            word.push(Complex::new(S::of(re), S::of(im)));
        }
        messages.push(word);
    }
    let mut priors: Vec<S> = (0..n_messages)
        .map(|_| S::of(rng.random::<f64>() * 0.95 + 0.05))
        .collect();
    let total: S = priors.iter().copied().sum();
    for p in priors.iter_mut() {
        *p /= total;
    }

    let mut raw = S::zero();
    for (word, &p) in messages.iter().zip(&priors) {
        let word_energy: S = word.iter().map(|a| a.norm_sqr()).sum();
        raw += p * word_energy;
    }
    raw /= S::of(n_modes as f64);
    if raw > S::zero() {
        let scale = (energy / raw).sqrt();
        for word in messages.iter_mut() {
            for a in word.iter_mut() {
                *a *= scale;
            }
        }
    }
    CodebookSequence::new(messages, priors, energy)
}

/// Random on/off-detection decoding policy with binary outcomes on every
/// step. Displacements are drawn from a disc of radius `lambda_scale`.
pub fn random_kennedy_policy<S: Scalar, R: Rng>(
    rng: &mut R,
    n_modes: usize,
    lambda_scale: S,
) -> Result<AdaptivePolicy<S>> {
    let counts = vec![2usize; n_modes];
    let mut draws: Vec<(PassiveUnitary<S>, Povm<S>)> = Vec::new();
    // pre-draw in canonical order so the policy is a pure function of the RNG
    let mut histories = 1usize;
    for j in 0..n_modes {
        for _ in 0..histories {
            let unitary = random_unitary(rng, n_modes - j)?;
            let r = S::of(rng.random::<f64>()).sqrt() * lambda_scale;
            let phi = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let lambda = Complex::new(r * S::of(phi.cos()), r * S::of(phi.sin()));
            draws.push((unitary, Povm::Kennedy { displacement: lambda }));
        }
        histories *= 2;
    }
    let mut next = 0usize;
    AdaptivePolicy::from_fn(n_modes, &counts, |_, _| {
        let pick = draws[next].clone();
        next += 1;
        pick
    })
}

/// Non-adaptive policy: identity interferometers and one fixed measurement
/// on every mode regardless of history.
pub fn nonadaptive_policy<S: Scalar>(n_modes: usize, povm: Povm<S>) -> Result<AdaptivePolicy<S>> {
    let counts = vec![povm.outcome_count(); n_modes];
    AdaptivePolicy::from_fn(n_modes, &counts, |j, _| {
        (PassiveUnitary::identity(n_modes - j), povm.clone())
    })
}

/// Product codebook: every `n_modes`-tuple of constellation points with the
/// product prior.
pub fn product_codebook<S: Scalar>(
    constellation: &Constellation<S>,
    n_modes: usize,
    energy_budget: S,
) -> Result<CodebookSequence<S>> {
    let base = constellation.len();
    let n_messages = base.pow(n_modes as u32);
    let mut messages = Vec::with_capacity(n_messages);
    let mut priors = Vec::with_capacity(n_messages);
    for idx in 0..n_messages {
        let mut word = Vec::with_capacity(n_modes);
        let mut prior = S::one();
        let mut rest = idx;
        for _ in 0..n_modes {
            let k = rest % base;
            rest /= base;
            word.push(constellation.points()[k]);
            prior *= constellation.priors()[k];
        }
        messages.push(word);
        priors.push(prior);
    }
    // renormalize against accumulated roundoff
    let total: S = priors.iter().copied().sum();
    for p in priors.iter_mut() {
        *p /= total;
    }
    CodebookSequence::new(messages, priors, energy_budget)
}
