//! Floating-point abstraction so every kernel can run at f32 or f64 precision.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type the whole engine is generic over.
///
/// The bound collects what the numerical kernels need: transcendentals,
/// π constants, compound assignment, summation, and thread safety for the
/// parallel site loops. Implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Default
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Brings an `f64` constant into the scalar type.
    fn lit(x: f64) -> Self;

    /// Widens to `f64` for reporting and serialization.
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Complex value over the engine scalar.
pub type Cplx<T> = Complex<T>;

/// `a + 0i` as a complex value.
#[inline]
pub fn cre<T: Real>(a: T) -> Cplx<T> {
    Cplx::new(a, T::zero())
}

/// `0 + bi` as a complex value.
#[inline]
pub fn cim<T: Real>(b: T) -> Cplx<T> {
    Cplx::new(T::zero(), b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lit_round_trips_through_both_widths() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25f32);
        assert_eq!(0.25f32.as_f64(), 0.25);
    }

    #[test]
    fn complex_helpers_place_components() {
        let z = cre(2.0f64) + cim(3.0);
        assert_eq!(z.re, 2.0);
        assert_eq!(z.im, 3.0);
    }
}
