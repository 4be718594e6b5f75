//! Coherent amplitudes, phase-insensitive Gaussian channels, and passive
//! interferometers.
//!
//! Every state reachable in this simulator is a product of displaced thermal
//! modes sharing one occupation number, so evolution is tracked exactly on
//! the vector of complex means plus a single scalar occupation. This keeps
//! the cost linear in the number of modes instead of exponential.
//!
//! Phase-space convention: `D(a)` displaces so that
//! `<b|D(a)|b> = exp(a b* - a* b - |a|^2 / 2)`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::{Cplx, Scalar};

/// Tolerance used when validating the physicality constraint.
const PARAM_SLACK: f64 = 1e-12;

/// Single-mode phase-insensitive Gaussian channel, defined by the pair
/// `(mu1, mu2)`: amplitudes scale by `mu1` and the output picks up a thermal
/// occupation `nbar = (mu1^2 + mu2 - 1) / 2`.
///
/// Physical parameters satisfy `mu1, mu2 >= 0` and `mu2 >= |1 - mu1^2|`,
/// which makes `nbar` nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<S: Scalar> {
    mu1: S,
    mu2: S,
}

impl<S: Scalar> ChannelParams<S> {
    pub fn new(mu1: S, mu2: S) -> Result<Self> {
        if !mu1.is_finite() || !mu2.is_finite() {
            return Err(CoreError::InvalidChannel("parameters must be finite".into()));
        }
        if mu1 < S::zero() || mu2 < S::zero() {
            return Err(CoreError::InvalidChannel(format!(
                "mu1 and mu2 must be nonnegative (got mu1={mu1}, mu2={mu2})"
            )));
        }
        let bound = (S::one() - mu1 * mu1).abs();
        if mu2 < bound - S::of(PARAM_SLACK) {
            return Err(CoreError::InvalidChannel(format!(
                "mu2 must be >= |1 - mu1^2| (got mu1={mu1}, mu2={mu2}, bound={bound})"
            )));
        }
        Ok(Self { mu1, mu2 })
    }

    /// Lossy channel with transmissivity `eta` in `[0, 1]`: `mu1 = sqrt(eta)`,
    /// `mu2 = 1 - eta`, which sits on the `nbar = 0` boundary.
    pub fn pure_loss(eta: S) -> Result<Self> {
        if eta < S::zero() || eta > S::one() {
            return Err(CoreError::InvalidChannel(format!(
                "transmissivity must be in [0, 1] (got {eta})"
            )));
        }
        Self::new(eta.sqrt(), S::one() - eta)
    }

    /// The identity channel `(1, 0)`.
    pub fn identity() -> Self {
        Self {
            mu1: S::one(),
            mu2: S::zero(),
        }
    }

    pub fn mu1(&self) -> S {
        self.mu1
    }

    pub fn mu2(&self) -> S {
        self.mu2
    }

    /// Thermal occupation of the channel output, `(mu1^2 + mu2 - 1) / 2`,
    /// clamped at zero so the pure-loss boundary is exact.
    pub fn nbar(&self) -> S {
        let raw = (self.mu1 * self.mu1 + self.mu2 - S::one()) * S::of(0.5);
        raw.max(S::zero())
    }

    /// Amplifying channels (`mu1 > 1`) are supported but flagged in reports.
    pub fn is_amplifying(&self) -> bool {
        self.mu1 > S::one()
    }

    pub fn classification(&self) -> &'static str {
        let one = S::one();
        if self.mu1 == one && self.mu2 == S::zero() {
            "identity"
        } else if self.mu1 > one {
            "amplifier"
        } else if self.nbar() == S::zero() {
            "pure-loss"
        } else if self.mu1 == one {
            "additive-noise"
        } else {
            "thermal-loss"
        }
    }
}

/// Single-mode displaced thermal state: complex mean plus isotropic thermal
/// occupation. Mean photon number is `|mean|^2 + nbar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacedThermal<S: Scalar> {
    pub mean: Cplx<S>,
    pub nbar: S,
}

impl<S: Scalar> DisplacedThermal<S> {
    pub fn new(mean: Cplx<S>, nbar: S) -> Result<Self> {
        if !nbar.is_finite() || nbar < S::zero() {
            return Err(CoreError::InvalidState(format!(
                "thermal occupation must be finite and nonnegative (got {nbar})"
            )));
        }
        Ok(Self { mean, nbar })
    }

    pub fn coherent(mean: Cplx<S>) -> Self {
        Self {
            mean,
            nbar: S::zero(),
        }
    }

    /// Mean photon number, used by the energy audits.
    pub fn energy(&self) -> S {
        self.mean.norm_sqr() + self.nbar
    }
}

/// Sends a coherent amplitude through the channel. The output is the
/// displaced thermal state with mean `mu1 * beta` and the channel occupation.
pub fn apply_channel<S: Scalar>(params: &ChannelParams<S>, beta: Cplx<S>) -> DisplacedThermal<S> {
    DisplacedThermal {
        mean: beta * params.mu1(),
        nbar: params.nbar(),
    }
}

/// Per-mode channel action on a vector of amplitudes.
pub fn apply_channel_means<S: Scalar>(params: &ChannelParams<S>, means: &[Cplx<S>]) -> Vec<Cplx<S>> {
    means.iter().map(|m| *m * params.mu1()).collect()
}

/// Discrete input ensemble over coherent amplitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Constellation<S: Scalar> {
    points: Vec<Cplx<S>>,
    priors: Vec<S>,
}

impl<S: Scalar> Constellation<S> {
    pub fn new(points: Vec<Cplx<S>>, priors: Vec<S>) -> Result<Self> {
        if points.is_empty() {
            return Err(CoreError::InvalidDistribution(
                "constellation must contain at least one point".into(),
            ));
        }
        if points.len() != priors.len() {
            return Err(CoreError::DimensionMismatch {
                expected: points.len(),
                got: priors.len(),
            });
        }
        let mut total = S::zero();
        for &p in &priors {
            if !p.is_finite() || p < S::zero() {
                return Err(CoreError::InvalidDistribution(format!(
                    "priors must be finite and nonnegative (got {p})"
                )));
            }
            total += p;
        }
        if (total - S::one()).abs() > S::of(1e-12) {
            return Err(CoreError::InvalidDistribution(format!(
                "priors must sum to 1 within 1e-12 (got {total})"
            )));
        }
        Ok(Self { points, priors })
    }

    pub fn points(&self) -> &[Cplx<S>] {
        &self.points
    }

    pub fn priors(&self) -> &[S] {
        &self.priors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Average energy `sum_i p_i |a_i|^2`.
    pub fn energy(&self) -> S {
        self.points
            .iter()
            .zip(&self.priors)
            .map(|(a, &p)| p * a.norm_sqr())
            .sum()
    }

    /// Mean amplitude `sum_i p_i a_i`.
    pub fn mean(&self) -> Cplx<S> {
        let mut acc = Complex::new(S::zero(), S::zero());
        for (a, &p) in self.points.iter().zip(&self.priors) {
            acc += *a * p;
        }
        acc
    }

    /// Energy spread around the mean; nonnegative by construction.
    pub fn variance(&self) -> S {
        (self.energy() - self.mean().norm_sqr()).max(S::zero())
    }
}

/// Multi-mode passive Gaussian unitary represented by its phase-space matrix.
///
/// Passivity means the matrix is unitary on the amplitude vector, so total
/// energy `sum_j |a_j|^2` is conserved.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PassiveUnitary<S: Scalar> {
    dim: usize,
    /// Row-major `dim x dim` complex matrix.
    matrix: Vec<Cplx<S>>,
    tolerance: S,
}

impl<S: Scalar> PassiveUnitary<S> {
    pub fn new(dim: usize, matrix: Vec<Cplx<S>>) -> Result<Self> {
        Self::with_tolerance(dim, matrix, S::of(1e-10))
    }

    pub fn with_tolerance(dim: usize, matrix: Vec<Cplx<S>>, tolerance: S) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(CoreError::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        let u = Self {
            dim,
            matrix,
            tolerance,
        };
        let dev = u.unitarity_deviation();
        if dev > tolerance {
            return Err(CoreError::NotUnitary {
                deviation: dev.as_f64(),
            });
        }
        Ok(u)
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![Complex::new(S::zero(), S::zero()); dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = Complex::new(S::one(), S::zero());
        }
        Self {
            dim,
            matrix,
            tolerance: S::of(1e-10),
        }
    }

    /// Balanced two-mode mixer `[[1, 1], [1, -1]] / sqrt(2)`.
    pub fn balanced_mixer() -> Self {
        let r = S::of(std::f64::consts::FRAC_1_SQRT_2);
        let z = S::zero();
        Self {
            dim: 2,
            matrix: vec![
                Complex::new(r, z),
                Complex::new(r, z),
                Complex::new(r, z),
                Complex::new(-r, z),
            ],
            tolerance: S::of(1e-10),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> Cplx<S> {
        self.matrix[row * self.dim + col]
    }

    /// Max entrywise deviation of `U^dagger U` from the identity.
    pub fn unitarity_deviation(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut acc = Complex::new(S::zero(), S::zero());
                for k in 0..self.dim {
                    acc += self.entry(k, i).conj() * self.entry(k, j);
                }
                let target = if i == j { S::one() } else { S::zero() };
                let dev = (acc - Complex::new(target, S::zero())).norm();
                if dev > worst {
                    worst = dev;
                }
            }
        }
        worst
    }

    pub fn apply(&self, means: &[Cplx<S>]) -> Result<Vec<Cplx<S>>> {
        if means.len() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: means.len(),
            });
        }
        let mut out = Vec::with_capacity(self.dim);
        for row in 0..self.dim {
            let mut acc = Complex::new(S::zero(), S::zero());
            for (col, m) in means.iter().enumerate() {
                acc += self.entry(row, col) * *m;
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Elementary interferometer components, compiled in application order
/// (first element acts first).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum Element<S: Scalar> {
    /// Beam splitter on the mode pair `(a, b)` with mixing angle `theta` and
    /// phase `phi`: `[[cos t, -e^{i phi} sin t], [e^{-i phi} sin t, cos t]]`.
    BeamSplitter { a: usize, b: usize, theta: S, phi: S },
    /// Phase shift `e^{i phi}` on one mode.
    Phase { mode: usize, phi: S },
}

/// Compiles a left-to-right element list into a passive unitary on `dim` modes.
#[allow(clippy::needless_range_loop)]
pub fn compile_elements<S: Scalar>(dim: usize, elements: &[Element<S>]) -> Result<PassiveUnitary<S>> {
    let mut matrix = PassiveUnitary::<S>::identity(dim).matrix;
    for element in elements {
        match *element {
            Element::BeamSplitter { a, b, theta, phi } => {
                if a >= dim || b >= dim || a == b {
                    return Err(CoreError::Domain(format!(
                        "beam splitter modes ({a}, {b}) out of range for dim {dim}"
                    )));
                }
                let (c, s) = (theta.cos(), theta.sin());
                let e_plus = Complex::new(phi.cos(), phi.sin());
                let e_minus = e_plus.conj();
                // rows a and b of the running product are updated in place
                for col in 0..dim {
                    let ra = matrix[a * dim + col];
                    let rb = matrix[b * dim + col];
                    matrix[a * dim + col] = ra * c - rb * e_plus * s;
                    matrix[b * dim + col] = ra * e_minus * s + rb * c;
                }
            }
            Element::Phase { mode, phi } => {
                if mode >= dim {
                    return Err(CoreError::Domain(format!(
                        "phase mode {mode} out of range for dim {dim}"
                    )));
                }
                let e = Complex::new(phi.cos(), phi.sin());
                for col in 0..dim {
                    matrix[mode * dim + col] *= e;
                }
            }
        }
    }
    PassiveUnitary::new(dim, matrix)
}

/// Applies an interferometer to a vector of mode amplitudes.
pub fn apply_interferometer<S: Scalar>(
    u: &PassiveUnitary<S>,
    means: &[Cplx<S>],
) -> Result<Vec<Cplx<S>>> {
    u.apply(means)
}

/// Result of checking that per-mode channel action and a passive unitary
/// commute on mean vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutationReport<S: Scalar> {
    pub max_mean_deviation: S,
    pub nbar: S,
}

impl<S: Scalar> CommutationReport<S> {
    pub fn passes(&self, tol: S) -> bool {
        self.max_mean_deviation <= tol
    }
}

/// Verifies that "channel on every mode, then `u`" and "`u`, then channel on
/// every mode" produce the same displaced thermal list.
pub fn commute_channel_unitary_check<S: Scalar>(
    params: &ChannelParams<S>,
    u: &PassiveUnitary<S>,
    means: &[Cplx<S>],
) -> Result<CommutationReport<S>> {
    let channel_then_u = u.apply(&apply_channel_means(params, means))?;
    let u_then_channel = apply_channel_means(params, &u.apply(means)?);
    let mut worst = S::zero();
    for (a, b) in channel_then_u.iter().zip(&u_then_channel) {
        let dev = (*a - *b).norm();
        if dev > worst {
            worst = dev;
        }
    }
    Ok(CommutationReport {
        max_mean_deviation: worst,
        nbar: params.nbar(),
    })
}

/// Total amplitude energy `sum_j |a_j|^2` of a mode vector.
pub fn total_energy<S: Scalar>(means: &[Cplx<S>]) -> S {
    means.iter().map(|m| m.norm_sqr()).sum()
}
