//! Numeric abstraction shared by the metric and cost code.
//!
//! Rates, spreads and prices are computed over any [`Scalar`]: `f32`/`f64`
//! for everyday use, and [`num_rational::Ratio`] / [`num_rational::BigRational`]
//! when a result has to be reproduced exactly (e.g. `1.00 - 0.42` is not
//! `0.58` in binary floating point, but it is over the rationals).

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, ToPrimitive};

pub trait Scalar:
    Num + Clone + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Parses a plain decimal literal such as `"0.42"`, `"-3"` or `"1e-6"`.
    ///
    /// Rational implementations keep the literal exact.
    fn from_decimal(text: &str) -> Option<Self>;

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("every scalar type represents u64 counts")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn from_decimal(text: &str) -> Option<Self> {
        text.trim().parse().ok()
    }
}

impl Scalar for f32 {
    fn from_decimal(text: &str) -> Option<Self> {
        text.trim().parse().ok()
    }
}

impl Scalar for Ratio<i64> {
    fn from_decimal(text: &str) -> Option<Self> {
        let (negative, mantissa, exponent) = split_decimal(text)?;
        let (digits, scale) = mantissa;
        let numer: i64 = digits.parse().ok()?;
        let numer = if negative { -numer } else { numer };
        let shift = exponent - scale as i64;
        let pow = 10i64.checked_pow(shift.unsigned_abs().try_into().ok()?)?;
        Some(if shift >= 0 {
            Ratio::from_integer(numer.checked_mul(pow)?)
        } else {
            Ratio::new(numer, pow)
        })
    }
}

impl Scalar for BigRational {
    fn from_decimal(text: &str) -> Option<Self> {
        let (negative, mantissa, exponent) = split_decimal(text)?;
        let (digits, scale) = mantissa;
        let numer: BigInt = digits.parse().ok()?;
        let numer = if negative { -numer } else { numer };
        let shift = exponent - scale as i64;
        let pow = num_traits::pow(BigInt::from(10u8), shift.unsigned_abs() as usize);
        Some(if shift >= 0 {
            BigRational::from_integer(numer * pow)
        } else {
            BigRational::new(numer, pow)
        })
    }
}

/// Splits `[-+]digits[.digits][e[-+]digits]` into sign, (all digits, count
/// after the point) and the decimal exponent.
fn split_decimal(text: &str) -> Option<(bool, (String, usize), i64)> {
    let text = text.trim();
    let (negative, rest) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    let (mantissa, exponent) = match rest.find(['e', 'E']) {
        Some(at) => (&rest[..at], rest[at + 1..].parse::<i64>().ok()?),
        None => (rest, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut digits = format!("{int_part}{frac_part}");
    if digits.is_empty() {
        digits.push('0');
    }
    Some((negative, (digits, frac_part.len()), exponent))
}
