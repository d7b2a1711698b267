//! Floating-point scalar abstraction shared by every module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the toolkit computes in: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
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
    + 'static
{
    /// Converts a literal. Panics only if the literal is not representable,
    /// which cannot happen for the finite constants used in this crate.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in a float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `-x ln x` with the conventions `0 ln 0 = 0` and `1 ln 1 = 0`.
///
/// Values at or above one (which only arise through rounding of a unit mass)
/// are mapped to zero so the result never goes negative.
#[inline]
pub fn neg_x_ln_x<S: Scalar>(x: S) -> S {
    if x <= S::zero() || x >= S::one() {
        S::zero()
    } else {
        -x * x.ln()
    }
}

/// Tolerance for "sums to one" checks on vectors of length `n`.
pub(crate) fn unit_sum_tolerance<S: Scalar>(n: usize) -> S {
    let floor = S::lit(1e-12);
    let scaled = S::epsilon() * S::of_usize(n.max(1)) * S::lit(4.0);
    floor.max(scaled)
}
