use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the whole crate is generic over.
///
/// The default instantiations are `f32` and `f64`; the tolerances quoted in
/// the documentation assume `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Embeds an `f64` constant into the scalar type.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("constant must be representable")
    }

    /// Lossy view as `f64`, used for diagnostics and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex amplitude over the generic scalar.
pub type Cplx<S> = Complex<S>;
