//! Scalar arithmetic in two modes.
//!
//! [`Rational`] (arbitrary-precision fractions) is used for constructing and
//! verifying networks, where every property is an exact equality or strict
//! inequality. `f64` is used once hardmax has been replaced by softmax.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

/// Relative tolerance under which two floats count as tied in hardmax.
pub const FLOAT_TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    /// Exact conversion for [`Rational`]; identity for `f64`.
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_finite(&self) -> bool;
    fn exp(&self) -> Result<Self>;
    /// Whether two entries count as the same value for hardmax.
    fn ties_with(&self, other: &Self) -> bool;

    fn max_of<'a>(values: impl IntoIterator<Item = &'a Self>) -> Option<Self> {
        values.into_iter().fold(None, |acc: Option<Self>, v| match acc {
            Some(m) if m >= *v => Some(m),
            _ => Some(v.clone()),
        })
    }

    fn min_of<'a>(values: impl IntoIterator<Item = &'a Self>) -> Option<Self> {
        values.into_iter().fold(None, |acc: Option<Self>, v| match acc {
            Some(m) if m <= *v => Some(m),
            _ => Some(v.clone()),
        })
    }
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Exact;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn from_f64(v: f64) -> Self {
        Rational::from_float(v).expect("finite float")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_finite(&self) -> bool {
        true
    }
    fn exp(&self) -> Result<Self> {
        Err(Error::Mode {
            op: "exp",
            mode: Mode::Exact,
        })
    }
    fn ties_with(&self, other: &Self) -> bool {
        self == other
    }
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn exp(&self) -> Result<Self> {
        Ok(f64::exp(*self))
    }
    fn ties_with(&self, other: &Self) -> bool {
        let scale = 1f64.max(f64::abs(*self)).max(f64::abs(*other));
        f64::abs(self - other) <= FLOAT_TIE_RTOL * scale
    }
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// `base^exp` as an exact integer.
pub fn pow_int(base: u64, exp: u32) -> Rational {
    Rational::from_integer(num_traits::pow(BigInt::from(base), exp as usize))
}

/// Parses `"p/q"`, an integer, or a decimal such as `"-0.375"` or `"1.5e-3"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((mantissa, exp)) = s.split_once(['e', 'E']) {
        let exp: i32 = exp.parse().map_err(|_| bad())?;
        if mantissa.contains('/') || exp.unsigned_abs() > 4096 {
            return Err(bad());
        }
        let scale = Rational::from_integer(num_traits::pow(BigInt::from(10), exp.unsigned_abs() as usize));
        let m = parse_rational(mantissa)?;
        return Ok(if exp >= 0 { m * scale } else { m / scale });
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let mag: BigInt = digits.parse().map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let r = Rational::new(mag, den);
        return Ok(if negative { -r } else { r });
    }
    let v: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(v))
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// True when `value` is an integer multiple of `1/q`.
pub fn is_multiple_of_step(value: &Rational, q: u64) -> bool {
    (value * Rational::from_integer(BigInt::from(q))).is_integer()
}
