//! Exact simulation and rate optimization for coherent-state optical links
//! decoded by adaptive receivers built from passive interferometers and
//! destructive single-mode measurements.
//!
//! The crate is organized around four layers:
//!
//! * [`gaussian`]: amplitudes, phase-insensitive channels, interferometers;
//! * [`measurement`]: the single-mode measurement catalog and its exact
//!   outcome statistics;
//! * [`adaptive`]: exact simulation of outcome-conditioned decoding trees and
//!   of the equivalent classical feedback picture;
//! * [`rate`]: constrained Blahut-Arimoto capacity optimization, single-mode
//!   and adaptive rate searches, and the verification harness that checks
//!   adaptive schemes against the single-mode optimum.
//!
//! All numerics are generic over the scalar type through [`Scalar`]; the
//! `f64` instantiation is the supported configuration and the one all quoted
//! tolerances refer to.

pub mod adaptive;
pub mod error;
pub mod gaussian;
pub mod math;
pub mod measurement;
pub mod rate;
pub mod sampling;
pub mod scalar;

pub use error::{CoreError, Result};
pub use scalar::{Cplx, Scalar};

/// Concrete `f64` aliases for the main domain types.
pub type C64 = num_complex::Complex<f64>;
pub type ChannelParams64 = gaussian::ChannelParams<f64>;
pub type DisplacedThermal64 = gaussian::DisplacedThermal<f64>;
pub type Constellation64 = gaussian::Constellation<f64>;
pub type PassiveUnitary64 = gaussian::PassiveUnitary<f64>;
pub type Povm64 = measurement::Povm<f64>;
pub type CodebookSequence64 = adaptive::CodebookSequence<f64>;
pub type AdaptivePolicy64 = adaptive::AdaptivePolicy<f64>;
pub type RateResult64 = rate::RateResult<f64>;
