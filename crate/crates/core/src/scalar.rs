//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the measures, certificates and solvers are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// (e.g. `1e-12` mass identities) are meaningful for `f64`; `f32` runs are
/// useful for quick experiments only.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    /// Relative pivot/feasibility tolerance, never below `100 * epsilon`.
    #[inline]
    fn solver_tol() -> Self {
        let base = Self::lit(1e-9);
        let floor = Self::epsilon() * Self::lit(100.0);
        if base > floor {
            base
        } else {
            floor
        }
    }

    /// IEEE total order, exact for both implemented types.
    #[inline]
    fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_f64().total_cmp(&other.as_f64())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Inner product of two equally sized slices.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm2<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

#[inline]
pub fn all_finite<S: Scalar>(a: &[S]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Parses a scalar written with `Display`, mapping failures to a message.
pub fn parse_scalar<S: Scalar>(token: &str) -> Result<S, String> {
    token
        .trim()
        .parse::<S>()
        .map_err(|_| format!("invalid number `{token}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_round_trips_exactly() {
        for &x in &[0.1_f64, 1.0 / 3.0, -2.5e-300, 123456.789, f64::MIN_POSITIVE] {
            let s = format!("{x}");
            assert_eq!(parse_scalar::<f64>(&s).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn solver_tol_respects_precision() {
        assert_eq!(f64::solver_tol(), 1e-9);
        assert!(f32::solver_tol() >= f32::EPSILON * 100.0);
    }
}
