//! Scalar abstraction shared by the model, reformulation and solver layers.
//!
//! Everything numeric in the crate is written against [`Scalar`] so the same
//! code runs in `f64`, `f32`, or exact [`BigRational`] arithmetic. The exact
//! instantiation is what the test-suite uses as a reference for the floating
//! point paths.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed};

pub trait Scalar:
    Num + Signed + Clone + PartialOrd + Debug + Display + Send + Sync + 'static
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    /// Converts a literal or tolerance into the scalar type.
    ///
    /// Exact types take the shortest decimal that round-trips the `f64`,
    /// so `0.1` becomes exactly `1/10`.
    fn from_f64_lossy(v: f64) -> Self;

    fn as_f64(&self) -> f64;

    fn floor(&self) -> Self;

    fn from_i64(v: i64) -> Self {
        Self::from_f64_lossy(v as f64)
    }

    fn round_nearest(&self) -> Self {
        let half = Self::from_f64_lossy(0.5);
        (self.clone() + half).floor()
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn as_f64(&self) -> f64 {
        *self
    }

    fn floor(&self) -> Self {
        f64::floor(*self)
    }

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn round_nearest(&self) -> Self {
        f64::round(*self)
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    fn as_f64(&self) -> f64 {
        *self as f64
    }

    fn floor(&self) -> Self {
        f32::floor(*self)
    }

    fn round_nearest(&self) -> Self {
        f32::round(*self)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_f64_lossy(v: f64) -> Self {
        assert!(v.is_finite(), "cannot represent {v} exactly");
        parse_decimal(&format!("{v:e}")).expect("f64 formats as a decimal literal")
    }

    fn as_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn floor(&self) -> Self {
        BigRational::floor(self)
    }

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
}

/// Parses `[-]digits[.digits][e[-]digits]` into an exact rational.
fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let negative = mantissa.starts_with('-');
    let mantissa = mantissa.trim_start_matches(['-', '+']);
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(BigInt::from_str(&digits).ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let factor = num_traits::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= factor;
    } else {
        value /= factor;
    }
    if negative {
        value = -value;
    }
    Some(value)
}

/// Sum of a slice in the scalar type.
pub fn sum<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc + v.clone())
}

/// Inner product of two equally long slices.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// `0` or `1` in the scalar type.
pub fn indicator<T: Scalar>(flag: bool) -> T {
    if flag {
        T::one()
    } else {
        T::zero()
    }
}

/// Returns `|x - round(x)|`.
pub fn fractionality<T: Scalar>(x: &T) -> T {
    (x.clone() - x.round_nearest()).abs()
}

pub(crate) fn one_half<T: Scalar>() -> T {
    T::one() / (T::one() + T::one())
}
