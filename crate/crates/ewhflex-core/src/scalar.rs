//! Scalar abstraction used by every numeric module in the crate.
//!
//! The solver, plant and identifier are written against [`Scalar`] so the
//! whole stack can run in `f32` or `f64`. The alias block in `lib.rs` pins
//! `f64` for normal use; `f32` is mainly interesting for quick experiments
//! and for checking numerical robustness of the algorithms.

use rand::distributions::uniform::SampleUniform;

/// Floating-point scalar with everything the toolkit needs: arithmetic,
/// conversions from literals, sampling and (de)serialization.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + SampleUniform
    + serde::Serialize
    + serde::de::DeserializeOwned
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion back to `f64` for reporting and chart output.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Converts an `f64` literal into the working scalar type.
///
/// Panics if the value is not representable, which cannot happen for the
/// finite literals used throughout the crate.
#[inline]
pub fn c<T: Scalar>(value: f64) -> T {
    T::from_f64(value).expect("finite literal must convert")
}
