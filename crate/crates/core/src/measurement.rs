//! Catalog of destructive single-mode measurements and their exact outcome
//! statistics on displaced thermal states.
//!
//! The catalog covers on/off detection after a displacement (Kennedy),
//! photon-number resolving detection, binned homodyne, and the optimal
//! two-outcome measurement for a pair of pure coherent hypotheses (the
//! statistics a Dolinar-style receiver attains). Every distribution sums to
//! one by construction: the final outcome is always assigned the remainder.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gaussian::{apply_channel, ChannelParams, DisplacedThermal};
use crate::math::normal_cdf;
use crate::scalar::{Cplx, Scalar};

/// Overlap `<a|b>` of two coherent states under the crate's displacement
/// convention.
pub fn coherent_overlap<S: Scalar>(a: Cplx<S>, b: Cplx<S>) -> Cplx<S> {
    let half = S::of(0.5);
    (a.conj() * b - Complex::new(half * (a.norm_sqr() + b.norm_sqr()), S::zero())).exp()
}

/// Probability that an on/off detector preceded by the displacement that
/// nulls amplitude `lambda` stays dark:
/// `P(off) = exp(-|mean - lambda|^2 / (1 + nbar)) / (1 + nbar)`.
pub fn kennedy_off_probability<S: Scalar>(state: &DisplacedThermal<S>, lambda: Cplx<S>) -> S {
    let one_plus = S::one() + state.nbar;
    let d2 = (state.mean - lambda).norm_sqr();
    (-d2 / one_plus).exp() / one_plus
}

/// Photon-number distribution of the state displaced by `-lambda`, truncated
/// at `n_max` with an overflow bucket collecting the tail.
///
/// The closed form is the displaced-thermal number distribution with a
/// Laguerre polynomial factor; it is evaluated through an upward recurrence
/// on the scaled quantity `nbar^n L_n / (1 + nbar)^(n+1)` so small `nbar`
/// never overflows. At `nbar = 0` the recurrence reduces to the Poisson law
/// with mean `|mean - lambda|^2`.
pub fn pnr_distribution<S: Scalar>(
    state: &DisplacedThermal<S>,
    lambda: Cplx<S>,
    n_max: usize,
) -> Vec<S> {
    let nbar = state.nbar;
    let one_plus = S::one() + nbar;
    let d2 = (state.mean - lambda).norm_sqr();
    let c = d2 / one_plus;
    let damp = (-c).exp();

    let mut probs = Vec::with_capacity(n_max + 2);
    let mut r_prev = one_plus.recip();
    probs.push(r_prev * damp);
    if n_max >= 1 {
        let mut r_curr = (nbar + c) / (one_plus * one_plus);
        probs.push(r_curr * damp);
        let ratio = nbar / one_plus;
        for n in 1..n_max {
            let nf = S::of(n as f64);
            let two_n_plus_1 = S::of((2 * n + 1) as f64);
            let r_next = ((two_n_plus_1 * nbar + c) / one_plus * r_curr
                - nf * ratio * ratio * r_prev)
                / (nf + S::one());
            probs.push(r_next * damp);
            r_prev = r_curr;
            r_curr = r_next;
        }
    }
    let mass: S = probs.iter().copied().sum();
    probs.push((S::one() - mass).max(S::zero()));
    probs
}

/// Integrates the quadrature density of `x_theta` over the given bins.
///
/// The quadrature has mean `sqrt(2) Re(mean e^{-i theta})` and variance
/// `(1 + 2 nbar) / 2`. Edges must be strictly increasing; the outer bins are
/// unbounded, so an empty edge list is the single bin covering the line.
pub fn homodyne_binned_distribution<S: Scalar>(
    state: &DisplacedThermal<S>,
    theta: S,
    edges: &[S],
) -> Result<Vec<S>> {
    for pair in edges.windows(2) {
        // NaN edges must fail this comparison as well
        if pair[0].partial_cmp(&pair[1]) != Some(std::cmp::Ordering::Less) {
            return Err(CoreError::Domain(format!(
                "bin edges must be strictly increasing (got {} then {})",
                pair[0], pair[1]
            )));
        }
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(CoreError::Domain("bin edges must be finite".into()));
    }
    let rotation = Complex::new(theta.cos(), -theta.sin());
    let mean_q = S::of(std::f64::consts::SQRT_2) * (state.mean * rotation).re;
    let sd = ((S::one() + S::of(2.0) * state.nbar) * S::of(0.5)).sqrt();

    let mut probs = Vec::with_capacity(edges.len() + 1);
    let mut prev_cdf = S::zero();
    for &edge in edges {
        let cdf = normal_cdf((edge - mean_q) / sd);
        probs.push((cdf - prev_cdf).max(S::zero()));
        prev_cdf = cdf;
    }
    probs.push((S::one() - prev_cdf).max(S::zero()));
    Ok(probs)
}

/// Uniform bin edges covering `count` interior bins over `[-half_width,
/// half_width]`; two unbounded tail bins are implied.
pub fn uniform_bin_edges<S: Scalar>(half_width: S, count: usize) -> Vec<S> {
    let n = count.max(1);
    (0..=n)
        .map(|i| {
            let t = S::of(i as f64) / S::of(n as f64);
            -half_width + (half_width + half_width) * t
        })
        .collect()
}

/// Default homodyne binning: 64 uniform bins across six standard deviations
/// of a state with the given occupation, plus the two tails.
pub fn default_homodyne_edges<S: Scalar>(nbar: S) -> Vec<S> {
    let sd = ((S::one() + S::of(2.0) * nbar) * S::of(0.5)).sqrt();
    uniform_bin_edges(S::of(6.0) * sd, 64)
}

/// The optimal two-outcome measurement for a pure coherent pair, resolved in
/// the two-dimensional span of the hypotheses.
#[derive(Clone, Debug)]
struct BinaryDiscriminator<S: Scalar> {
    gamma: [Cplx<S>; 2],
    overlap: Cplx<S>,
    ortho: S,
    /// Components of the decide-0 projector vector in the Gram basis.
    vector: [Cplx<S>; 2],
    /// `Some(i)` when the measurement degenerates to always deciding `i`.
    fixed: Option<usize>,
}

impl<S: Scalar> BinaryDiscriminator<S> {
    fn new(gamma: [Cplx<S>; 2], priors: [S; 2]) -> Result<Self> {
        let [q0, q1] = priors;
        if q0 < S::zero() || q1 < S::zero() || (q0 + q1 - S::one()).abs() > S::of(1e-12) {
            return Err(CoreError::InvalidDistribution(format!(
                "hypothesis priors must be nonnegative and sum to 1 (got {q0}, {q1})"
            )));
        }
        let overlap = coherent_overlap(gamma[0], gamma[1]);
        let c2 = overlap.norm_sqr().min(S::one());
        let s2 = S::one() - c2;
        if q1 <= S::of(1e-15) {
            return Ok(Self { gamma, overlap, ortho: s2.sqrt(), vector: [Complex::new(S::one(), S::zero()), Complex::new(S::zero(), S::zero())], fixed: Some(0) });
        }
        if q0 <= S::of(1e-15) {
            return Ok(Self { gamma, overlap, ortho: s2.sqrt(), vector: [Complex::new(S::zero(), S::zero()), Complex::new(S::one(), S::zero())], fixed: Some(1) });
        }
        if s2 < S::of(1e-24) {
            // indistinguishable hypotheses: guess the likelier one
            let fixed = if q0 >= q1 { 0 } else { 1 };
            return Ok(Self { gamma, overlap, ortho: S::zero(), vector: [Complex::new(S::one(), S::zero()), Complex::new(S::zero(), S::zero())], fixed: Some(fixed) });
        }
        let s = s2.sqrt();
        // positive eigenvector of q0 |g0><g0| - q1 |g1><g1| in the basis
        // {|g0>, (|g1> - c |g0>)/s}
        let gap = (S::one() - S::of(4.0) * q0 * q1 * c2).max(S::zero()).sqrt();
        let lambda_plus = (q0 - q1 + gap) * S::of(0.5);
        let cand_a = [
            overlap * (q1 * s),
            Complex::new(q0 - q1 * c2 - lambda_plus, S::zero()),
        ];
        let cand_b = [
            Complex::new(q1 * s2 + lambda_plus, S::zero()),
            -overlap.conj() * (q1 * s),
        ];
        let norm_a = cand_a[0].norm_sqr() + cand_a[1].norm_sqr();
        let norm_b = cand_b[0].norm_sqr() + cand_b[1].norm_sqr();
        let (raw, norm) = if norm_a >= norm_b {
            (cand_a, norm_a)
        } else {
            (cand_b, norm_b)
        };
        let inv = norm.sqrt().recip();
        Ok(Self {
            gamma,
            overlap,
            ortho: s,
            vector: [raw[0] * inv, raw[1] * inv],
            fixed: None,
        })
    }

    /// Probability of the decide-0 outcome on the pure state `|beta>`.
    fn decide0_probability(&self, beta: Cplx<S>) -> S {
        if let Some(fixed) = self.fixed {
            return if fixed == 0 { S::one() } else { S::zero() };
        }
        let b0 = coherent_overlap(beta, self.gamma[0]);
        let b1 = (coherent_overlap(beta, self.gamma[1]) - self.overlap * b0) / self.ortho;
        let amp = self.vector[0] * b0 + self.vector[1] * b1;
        amp.norm_sqr().min(S::one())
    }
}

/// Outcome distribution of the optimal binary measurement when hypothesis
/// `which_sent` (0 or 1) is true. Both hypotheses must be pure (`nbar = 0`).
pub fn helstrom_binary_distribution<S: Scalar>(
    state0: &DisplacedThermal<S>,
    state1: &DisplacedThermal<S>,
    priors: [S; 2],
    which_sent: usize,
) -> Result<[S; 2]> {
    if state0.nbar > S::zero() || state1.nbar > S::zero() {
        return Err(CoreError::UnsupportedHypothesis(
            "optimal binary discrimination is implemented for pure hypotheses only".into(),
        ));
    }
    if which_sent > 1 {
        return Err(CoreError::Domain(format!(
            "hypothesis index must be 0 or 1 (got {which_sent})"
        )));
    }
    let disc = BinaryDiscriminator::new([state0.mean, state1.mean], priors)?;
    let sent = if which_sent == 0 {
        state0.mean
    } else {
        state1.mean
    };
    let p0 = disc.decide0_probability(sent);
    Ok([p0, S::one() - p0])
}

/// Average error probability of the optimal binary measurement.
pub fn helstrom_error_probability<S: Scalar>(
    state0: &DisplacedThermal<S>,
    state1: &DisplacedThermal<S>,
    priors: [S; 2],
) -> Result<S> {
    let given0 = helstrom_binary_distribution(state0, state1, priors, 0)?;
    let given1 = helstrom_binary_distribution(state0, state1, priors, 1)?;
    Ok(priors[0] * given0[1] + priors[1] * given1[0])
}

/// A parametrized destructive single-mode measurement with a finite (or
/// binned) outcome set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Povm<S: Scalar> {
    Kennedy {
        displacement: Cplx<S>,
    },
    Pnr {
        displacement: Cplx<S>,
        n_max: usize,
    },
    Homodyne {
        phase: S,
        edges: Vec<S>,
    },
    HelstromBinary {
        candidates: [Cplx<S>; 2],
        priors: [S; 2],
    },
}

impl<S: Scalar> Povm<S> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Povm::Kennedy { displacement } | Povm::Pnr { displacement, .. } => {
                if !displacement.re.is_finite() || !displacement.im.is_finite() {
                    return Err(CoreError::Domain("displacement must be finite".into()));
                }
            }
            Povm::Homodyne { edges, .. } => {
                for pair in edges.windows(2) {
                    if pair[0].partial_cmp(&pair[1]) != Some(std::cmp::Ordering::Less) {
                        return Err(CoreError::Domain(
                            "homodyne bin edges must be strictly increasing".into(),
                        ));
                    }
                }
            }
            Povm::HelstromBinary { candidates, priors } => {
                BinaryDiscriminator::new(*candidates, *priors)?;
            }
        }
        Ok(())
    }

    pub fn outcome_count(&self) -> usize {
        match self {
            Povm::Kennedy { .. } => 2,
            Povm::Pnr { n_max, .. } => n_max + 2,
            Povm::Homodyne { edges, .. } => edges.len() + 1,
            Povm::HelstromBinary { .. } => 2,
        }
    }

    pub fn outcome_labels(&self) -> Vec<String> {
        match self {
            Povm::Kennedy { .. } => vec!["off".into(), "click".into()],
            Povm::Pnr { n_max, .. } => {
                let mut labels: Vec<String> = (0..=*n_max).map(|n| format!("n{n}")).collect();
                labels.push("overflow".into());
                labels
            }
            Povm::Homodyne { edges, .. } => {
                (0..=edges.len()).map(|i| format!("bin{i}")).collect()
            }
            Povm::HelstromBinary { .. } => vec!["h0".into(), "h1".into()],
        }
    }

    /// Exact outcome distribution on a displaced thermal input.
    pub fn outcome_distribution(&self, state: &DisplacedThermal<S>) -> Result<Vec<S>> {
        match self {
            Povm::Kennedy { displacement } => {
                let off = kennedy_off_probability(state, *displacement);
                Ok(vec![off, S::one() - off])
            }
            Povm::Pnr { displacement, n_max } => {
                Ok(pnr_distribution(state, *displacement, *n_max))
            }
            Povm::Homodyne { phase, edges } => homodyne_binned_distribution(state, *phase, edges),
            Povm::HelstromBinary { candidates, priors } => {
                if state.nbar > S::zero() {
                    return Err(CoreError::UnsupportedHypothesis(
                        "optimal binary measurement needs a pure input".into(),
                    ));
                }
                let disc = BinaryDiscriminator::new(*candidates, *priors)?;
                let p0 = disc.decide0_probability(state.mean);
                Ok(vec![p0, S::one() - p0])
            }
        }
    }
}

/// Conditional outcome law of the classical channel induced by sending
/// `beta`, applying the Gaussian channel, and measuring with `povm`.
pub fn programmable_channel_prob<S: Scalar>(
    beta: Cplx<S>,
    params: &ChannelParams<S>,
    povm: &Povm<S>,
) -> Result<Vec<S>> {
    povm.outcome_distribution(&apply_channel(params, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn coherent(re: f64, im: f64) -> DisplacedThermal<f64> {
        DisplacedThermal::coherent(c(re, im))
    }

    #[test]
    fn kennedy_reference_points() {
        // vacuum never clicks
        assert_eq!(kennedy_off_probability(&coherent(0.0, 0.0), c(0.0, 0.0)), 1.0);
        // exact nulling displacement
        let s = coherent(1.3, 0.4);
        assert!((kennedy_off_probability(&s, c(1.3, 0.4)) - 1.0).abs() < 1e-15);
        // unit amplitude against the vacuum projector
        let p = kennedy_off_probability(&coherent(1.0, 0.0), c(0.0, 0.0));
        assert!((p - (-1.0f64).exp()).abs() < 1e-15);
        // thermal state vacuum weight 1/(1+nbar)
        let th = DisplacedThermal::new(c(0.0, 0.0), 1.0).unwrap();
        assert!((kennedy_off_probability(&th, c(0.0, 0.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pnr_reference_points() {
        let vac = pnr_distribution(&coherent(0.0, 0.0), c(0.0, 0.0), 4);
        assert!((vac[0] - 1.0).abs() < 1e-15);
        assert!(vac[1..].iter().all(|&p| p.abs() < 1e-15));

        // Poisson limit with mean 2
        let p = pnr_distribution(&coherent(2.0f64.sqrt(), 0.0), c(0.0, 0.0), 8);
        assert!((p[2] - 2.0 * (-2.0f64).exp()).abs() < 1e-14);

        // geometric thermal law
        let th = DisplacedThermal::new(c(0.0, 0.0), 0.5).unwrap();
        let p = pnr_distribution(&th, c(0.0, 0.0), 8);
        assert!((p[1] - 0.5 / 2.25).abs() < 1e-15);

        // displacement folds into the mean
        let shifted = pnr_distribution(&coherent(1.0, 0.5), c(1.0, 0.5), 4);
        assert!((shifted[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pnr_normalizes_with_overflow() {
        let s = DisplacedThermal::new(c(2.0, -1.0), 0.7).unwrap();
        for n_max in [0usize, 1, 3, 17] {
            let p = pnr_distribution(&s, c(0.3, 0.2), n_max);
            assert_eq!(p.len(), n_max + 2);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "n_max={n_max} sum={sum}");
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn homodyne_reference_points() {
        let halves = homodyne_binned_distribution(&coherent(0.0, 0.0), 0.0, &[0.0]).unwrap();
        assert!((halves[0] - 0.5).abs() < 1e-14);
        assert!((halves[1] - 0.5).abs() < 1e-14);

        // displaced vacuum: left-bin mass is the lower normal tail at z = -2
        let p = homodyne_binned_distribution(&coherent(1.0, 0.0), 0.0, &[0.0]).unwrap();
        assert!((p[0] - 0.022_750_131_948_179_2).abs() < 1e-12);

        // single unbounded bin
        let one = homodyne_binned_distribution(&coherent(0.7, -0.3), 1.1, &[]).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn homodyne_rejects_bad_edges() {
        let s = coherent(0.0, 0.0);
        assert!(homodyne_binned_distribution(&s, 0.0, &[1.0, 1.0]).is_err());
        assert!(homodyne_binned_distribution(&s, 0.0, &[2.0, -1.0]).is_err());
    }

    #[test]
    fn helstrom_reference_points() {
        // indistinguishable hypotheses: error is the smaller prior
        let s = coherent(0.4, 0.0);
        let e = helstrom_error_probability(&s, &s, [0.7, 0.3]).unwrap();
        assert!((e - 0.3).abs() < 1e-15);

        // far-separated hypotheses are perfectly distinguishable
        let e = helstrom_error_probability(&coherent(-8.0, 0.0), &coherent(8.0, 0.0), [0.5, 0.5])
            .unwrap();
        assert!(e < 1e-15);

        // symmetric pair at |alpha|^2 = 0.25 against the closed form
        let a = 0.5;
        let e = helstrom_error_probability(&coherent(-a, 0.0), &coherent(a, 0.0), [0.5, 0.5])
            .unwrap();
        let closed = 0.5 * (1.0 - (1.0 - (-1.0f64).exp()).sqrt());
        assert!((e - closed).abs() < 1e-12, "e={e} closed={closed}");
    }

    #[test]
    fn helstrom_rejects_mixed_hypotheses() {
        let pure = coherent(0.3, 0.0);
        let mixed = DisplacedThermal::new(c(0.3, 0.0), 0.2).unwrap();
        assert!(matches!(
            helstrom_error_probability(&pure, &mixed, [0.5, 0.5]),
            Err(CoreError::UnsupportedHypothesis(_))
        ));
    }

    #[test]
    fn programmable_channel_composition() {
        // identity channel with a nulling displacement never clicks
        let id = ChannelParams::identity();
        let povm = Povm::Kennedy { displacement: c(0.8, -0.1) };
        let p = programmable_channel_prob(c(0.8, -0.1), &id, &povm).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);

        // pure loss attenuates the click rate to exp(-eta |beta|^2)
        let eta = 0.6;
        let loss = ChannelParams::pure_loss(eta).unwrap();
        let povm = Povm::Kennedy { displacement: c(0.0, 0.0) };
        let beta = c(1.1, 0.4);
        let p = programmable_channel_prob(beta, &loss, &povm).unwrap();
        assert!((p[0] - (-eta * beta.norm_sqr()).exp()).abs() < 1e-14);
    }

    #[test]
    fn povm_serde_round_trip() {
        let povm: Povm<f64> = Povm::Pnr { displacement: c(0.3, -0.2), n_max: 5 };
        let json = serde_json::to_string(&povm).unwrap();
        assert!(json.contains("\"family\":\"pnr\""));
        let back: Povm<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.outcome_count(), 7);
    }

    fn catalog(nbar_cap: f64) -> Vec<Povm<f64>> {
        vec![
            Povm::Kennedy { displacement: c(0.7, -1.2) },
            Povm::Pnr { displacement: c(-0.4, 0.9), n_max: 24 },
            Povm::Homodyne { phase: 0.6, edges: uniform_bin_edges(6.0 * ((1.0 + 2.0 * nbar_cap) / 2.0f64).sqrt(), 32) },
        ]
    }

    proptest! {
        #[test]
        fn prop_catalog_completeness(
            re in -10.0..10.0f64,
            im in -10.0..10.0f64,
            nbar in 0.0..10.0f64,
        ) {
            let state = DisplacedThermal::new(c(re, im), nbar).unwrap();
            for povm in catalog(10.0) {
                let p = povm.outcome_distribution(&state).unwrap();
                prop_assert_eq!(p.len(), povm.outcome_count());
                let sum: f64 = p.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12, "{:?} sums to {}", povm, sum);
                prop_assert!(p.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
            }
        }

        #[test]
        fn prop_helstrom_completeness_and_optimality(
            g0re in -3.0..3.0f64, g0im in -3.0..3.0f64,
            g1re in -3.0..3.0f64, g1im in -3.0..3.0f64,
            q in 0.05..0.95f64,
            bre in -3.0..3.0f64, bim in -3.0..3.0f64,
        ) {
            let povm = Povm::HelstromBinary {
                candidates: [c(g0re, g0im), c(g1re, g1im)],
                priors: [q, 1.0 - q],
            };
            let p = povm.outcome_distribution(&coherent(bre, bim)).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);

            // average error matches the closed form
            let s0 = coherent(g0re, g0im);
            let s1 = coherent(g1re, g1im);
            let err = helstrom_error_probability(&s0, &s1, [q, 1.0 - q]).unwrap();
            let overlap2 = (-(c(g0re, g0im) - c(g1re, g1im)).norm_sqr()).exp();
            let closed = 0.5 * (1.0 - (1.0 - 4.0 * q * (1.0 - q) * overlap2).sqrt());
            prop_assert!((err - closed).abs() < 1e-10, "err={} closed={}", err, closed);
        }

        #[test]
        fn prop_shift_equivalence(
            bre in -2.0..2.0f64, bim in -2.0..2.0f64,
            dre in -2.0..2.0f64, dim in -2.0..2.0f64,
            lre in -2.0..2.0f64, lim in -2.0..2.0f64,
            mu1 in 0.1..1.4f64,
            extra in 0.0..0.8f64,
        ) {
            let params = ChannelParams::new(mu1, (1.0 - mu1 * mu1).abs() + extra).unwrap();
            let beta = c(bre, bim);
            let delta = c(dre, dim);
            let lambda = c(lre, lim);
            for n_max in [0usize, 6] {
                let povm = Povm::Pnr { displacement: lambda, n_max };
                let shifted = Povm::Pnr { displacement: lambda + delta * mu1, n_max };
                let base = programmable_channel_prob(beta, &params, &povm).unwrap();
                let moved = programmable_channel_prob(beta + delta, &params, &shifted).unwrap();
                for (x, y) in base.iter().zip(&moved) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
