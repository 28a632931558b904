//! Numeric abstraction shared by the steady-state code.

use std::fmt::{Debug, Display};

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// A totally-ordered-enough field used for flows, densities and speeds.
///
/// Floating-point implementations carry a small absolute tolerance used when
/// validating densities and on-diagram states; the rational implementation
/// is exact and uses zero tolerance.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Absolute tolerance for domain checks.
    fn tolerance() -> Self;

    /// `num / den`, exact where the type allows it.
    fn ratio(num: i64, den: i64) -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("value representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_count(n: u32) -> Self {
        Self::ratio(i64::from(n), 1)
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }

    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }

    fn ratio(num: i64, den: i64) -> Self {
        (num as f64 / den as f64) as f32
    }
}

impl Scalar for Rational64 {
    fn tolerance() -> Self {
        Rational64::from_integer(0)
    }

    fn ratio(num: i64, den: i64) -> Self {
        Rational64::new(num, den)
    }
}

#[inline]
pub fn min_of<T: PartialOrd>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

#[inline]
pub fn max_of<T: PartialOrd>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

/// `|a - b| <= tol`
#[inline]
pub fn approx_eq<T: Scalar>(a: T, b: T, tol: T) -> bool {
    (a - b).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_ratio_is_exact() {
        let r = Rational64::ratio(81, 49);
        assert_eq!(r * Rational64::from_integer(49), Rational64::from_integer(81));
        assert_eq!(Rational64::tolerance(), Rational64::from_integer(0));
    }

    #[test]
    fn min_max_helpers() {
        assert_eq!(min_of(1.0, 2.0), 1.0);
        assert_eq!(max_of(1.0, 2.0), 2.0);
        assert!(approx_eq(1.0, 1.0 + 1e-12, 1e-9));
    }
}
