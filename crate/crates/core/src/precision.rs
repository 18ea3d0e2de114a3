//! Arbitrary-precision scalars and truncated power series in the time step.
//!
//! [`BigScalar`] wraps an `astro-float` binary floating-point number with a fixed
//! mantissa width. Arithmetic is delegated to `astro-float` with
//! round-to-nearest-even; decimal parsing and printing are done here with exact
//! big-integer arithmetic so that both are correctly rounded and round-trip.
//!
//! [`TauSeries`] is a dense polynomial in τ whose coefficients are [`BigScalar`]s,
//! truncated at a fixed order `lambda_max`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, RoundingMode, Sign};
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

/// Default mantissa width in bits (about 77 significant decimal digits).
pub const DEFAULT_PRECISION: usize = 256;

const RM: RoundingMode = RoundingMode::ToEven;
const WORD_BITS: usize = 64;

/// Rounds a requested precision up to the next whole 64-bit word.
pub fn normalize_precision(bits: usize) -> usize {
    bits.max(WORD_BITS).div_ceil(WORD_BITS) * WORD_BITS
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed decimal {text:?}: unexpected {found} at position {position}")]
pub struct ParseDecimalError {
    pub text: String,
    pub position: usize,
    pub found: String,
}

/// Binary floating-point number with a fixed mantissa width.
#[derive(Clone)]
pub struct BigScalar {
    value: BigFloat,
    precision: usize,
}

impl BigScalar {
    fn wrap(value: BigFloat, precision: usize) -> Self {
        Self { value, precision }
    }

    pub fn zero(precision: usize) -> Self {
        let precision = normalize_precision(precision);
        Self::wrap(BigFloat::from_word(0, precision), precision)
    }

    pub fn one(precision: usize) -> Self {
        Self::from_i64(1, precision)
    }

    pub fn from_i64(v: i64, precision: usize) -> Self {
        let precision = normalize_precision(precision);
        Self::wrap(BigFloat::from_i64(v, precision), precision)
    }

    /// Exact conversion; every binary64 value is representable at 64 bits and above.
    pub fn from_f64(v: f64, precision: usize) -> Self {
        let precision = normalize_precision(precision);
        Self::wrap(BigFloat::from_f64(v, precision), precision)
    }

    /// `num / den` rounded to nearest-even.
    pub fn from_ratio(num: i64, den: i64, precision: usize) -> Self {
        let n = Self::from_i64(num, precision);
        let d = Self::from_i64(den, precision);
        &n / &d
    }

    /// Parses a decimal literal, rounding to nearest-even at `precision` bits.
    pub fn parse(text: &str, precision: usize) -> Result<Self, ParseDecimalError> {
        parse_decimal(text, precision)
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    /// Re-rounds to another mantissa width.
    pub fn with_precision(&self, precision: usize) -> Self {
        let precision = normalize_precision(precision);
        let mut v = self.value.clone();
        v.set_precision(precision, RM)
            .expect("precision change cannot fail for finite widths");
        Self::wrap(v, precision)
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        !(self.value.is_nan() || self.value.is_inf())
    }

    pub fn is_negative(&self) -> bool {
        !self.is_zero() && self.value.is_negative()
    }

    pub fn abs(&self) -> Self {
        Self::wrap(self.value.abs(), self.precision)
    }

    pub fn cbrt(&self) -> Self {
        Self::wrap(self.value.cbrt(self.precision, RM), self.precision)
    }

    pub fn sqrt(&self) -> Self {
        Self::wrap(self.value.sqrt(self.precision, RM), self.precision)
    }

    pub fn powi(&self, n: usize) -> Self {
        Self::wrap(self.value.powi(n, self.precision, RM), self.precision)
    }

    /// `2^exp` exactly.
    pub fn pow2(exp: i64, precision: usize) -> Self {
        let precision = normalize_precision(precision);
        from_parts(false, BigUint::one(), exp, precision)
    }

    pub fn factorial(n: u32, precision: usize) -> Self {
        let mut f = BigUint::one();
        for i in 2..=n {
            f *= i;
        }
        from_parts(false, f, 0, normalize_precision(precision))
    }

    pub fn max(&self, other: &Self) -> Self {
        if other > self {
            other.clone()
        } else {
            self.clone()
        }
    }

    /// Nearest binary64 value (round-to-nearest-even on the mantissa).
    pub fn to_f64(&self) -> f64 {
        if self.value.is_nan() {
            return f64::NAN;
        }
        if self.value.is_inf() {
            return if self.value.is_inf_pos() {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        let Some((neg, m, b)) = to_parts(self) else {
            return 0.0;
        };
        let bits = m.bits() as i64;
        let (q, b) = if bits > 53 {
            round_shift(&m, (bits - 53) as u64, b)
        } else {
            (m, b)
        };
        let mant = q.to_u64().expect("53-bit mantissa") as f64;
        let v = mant * 2f64.powi(b.clamp(i32::MIN as i64, i32::MAX as i64) as i32);
        if neg {
            -v
        } else {
            v
        }
    }

    /// Canonical decimal text: enough significant digits to re-parse exactly at
    /// this precision, in the form `[-]d.ddd…e±x`.
    pub fn to_decimal(&self) -> String {
        let digits = decimal_digits_for(self.precision);
        self.to_scientific(digits)
    }

    /// Decimal text with `sig` significant digits, correctly rounded.
    pub fn to_scientific(&self, sig: usize) -> String {
        assert!(sig >= 1);
        let Some((neg, m, b)) = to_parts(self) else {
            return "0.0".to_string();
        };
        let (s, k) = scaled_digits(&m, b, sig);
        let text = s.to_str_radix(10);
        let (head, tail) = text.split_at(1);
        let tail = tail.trim_end_matches('0');
        let tail = if tail.is_empty() { "0" } else { tail };
        format!("{}{}.{}e{}", if neg { "-" } else { "" }, head, tail, k)
    }

    /// Fixed-point decimal text with exactly `frac_digits` fraction digits.
    pub fn to_fixed(&self, frac_digits: usize) -> String {
        let (neg, m, b) = to_parts(self).unwrap_or((false, BigUint::zero(), 0));
        // round(m * 2^b * 10^frac) half-even
        let ten = BigUint::from(10u32).pow(frac_digits as u32);
        let (num, den) = if b >= 0 {
            ((&m << b as usize) * &ten, BigUint::one())
        } else {
            (&m * &ten, BigUint::one() << (-b) as usize)
        };
        let s = div_round_even(&num, &den);
        let text = s.to_str_radix(10);
        let text = if text.len() <= frac_digits {
            format!("{}{}", "0".repeat(frac_digits + 1 - text.len()), text)
        } else {
            text
        };
        let (int_part, frac_part) = text.split_at(text.len() - frac_digits);
        let sign = if neg && !s.is_zero() { "-" } else { "" };
        if frac_digits == 0 {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac_part}")
        }
    }
}

/// Number of significant decimal digits that guarantees exact round trip.
pub fn decimal_digits_for(precision: usize) -> usize {
    (precision as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1
}

/// Splits a finite nonzero value into `(negative, m, b)` with value = ±m·2^b.
fn to_parts(x: &BigScalar) -> Option<(bool, BigUint, i64)> {
    if x.value.is_zero() || !x.is_finite() {
        return None;
    }
    let (words, _, sign, e, _) = x.value.as_raw_parts()?;
    let mut m = BigUint::zero();
    for w in words.iter().rev() {
        m = (m << WORD_BITS) + BigUint::from(*w);
    }
    let b = e as i64 - (words.len() * WORD_BITS) as i64;
    let tz = m.trailing_zeros().unwrap_or(0);
    Some((sign == Sign::Neg, m >> tz, b + tz as i64))
}

/// Rounds `m >> shift` to nearest-even, returning the new mantissa and exponent.
fn round_shift(m: &BigUint, shift: u64, b: i64) -> (BigUint, i64) {
    let q = m >> shift;
    let rem = m - (&q << shift);
    let half = BigUint::one() << (shift - 1);
    let up = rem > half || (rem == half && q.bit(0));
    let q = if up { q + 1u32 } else { q };
    (q, b + shift as i64)
}

/// Builds ±m·2^b rounded to `precision` bits.
fn from_parts(neg: bool, m: BigUint, b: i64, precision: usize) -> BigScalar {
    if m.is_zero() {
        return BigScalar::zero(precision);
    }
    let bits = m.bits() as i64;
    let p = precision as i64;
    let (mut q, mut b) = if bits > p {
        round_shift(&m, (bits - p) as u64, b)
    } else {
        (m << (p - bits) as usize, b - (p - bits))
    };
    if q.bits() as i64 > p {
        q >>= 1;
        b += 1;
    }
    let mut words = q.to_u64_digits();
    words.resize(precision / WORD_BITS, 0);
    let sign = if neg { Sign::Neg } else { Sign::Pos };
    let e = b + p;
    let e = i32::try_from(e).expect("exponent outside the 32-bit range");
    BigScalar::wrap(BigFloat::from_words(&words, sign, e), precision)
}

fn div_round_even(num: &BigUint, den: &BigUint) -> BigUint {
    let (q, r) = num.div_rem(den);
    let twice = &r << 1;
    if twice > *den || (twice == *den && q.bit(0)) {
        q + 1u32
    } else {
        q
    }
}

/// Returns `(s, k)` such that value ≈ s·10^(k−sig+1), 10^(sig−1) ≤ s < 10^sig.
fn scaled_digits(m: &BigUint, b: i64, sig: usize) -> (BigUint, i64) {
    let approx = (m.bits() as i64 + b - 1) as f64 * std::f64::consts::LOG10_2;
    let mut k = approx.floor() as i64;
    let lower = BigUint::from(10u32).pow(sig as u32 - 1);
    let upper = &lower * 10u32;
    loop {
        let shift = k - sig as i64 + 1;
        let mut num = m.clone();
        let mut den = BigUint::one();
        if b >= 0 {
            num <<= b as usize;
        } else {
            den <<= (-b) as usize;
        }
        if shift >= 0 {
            den *= BigUint::from(10u32).pow(shift as u32);
        } else {
            num *= BigUint::from(10u32).pow((-shift) as u32);
        }
        let s = div_round_even(&num, &den);
        if s >= upper {
            k += 1;
        } else if s < lower {
            k -= 1;
        } else {
            return (s, k);
        }
    }
}

/// Parses `[+-]digits[.digits][(e|E)[+-]digits]` to the nearest `precision`-bit value.
pub fn parse_decimal(text: &str, precision: usize) -> Result<BigScalar, ParseDecimalError> {
    let precision = normalize_precision(precision);
    let err = |position: usize| {
        let found = text[position..]
            .chars()
            .next()
            .map(|c| format!("{c:?}"))
            .unwrap_or_else(|| "end of input".to_string());
        ParseDecimalError {
            text: text.to_string(),
            position,
            found,
        }
    };
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut neg = false;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        neg = bytes[i] == b'-';
        i += 1;
    }
    let mut mantissa = BigUint::zero();
    let mut n_digits = 0;
    let mut exp10: i64 = 0;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        mantissa = mantissa * 10u32 + u32::from(bytes[i] - b'0');
        n_digits += 1;
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            mantissa = mantissa * 10u32 + u32::from(bytes[i] - b'0');
            n_digits += 1;
            exp10 -= 1;
            i += 1;
        }
    }
    if n_digits == 0 {
        return Err(err(i));
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        let mut eneg = false;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            eneg = bytes[i] == b'-';
            i += 1;
        }
        let start = i;
        let mut e: i64 = 0;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            e = e
                .checked_mul(10)
                .and_then(|e| e.checked_add(i64::from(bytes[i] - b'0')))
                .ok_or_else(|| err(i))?;
            i += 1;
        }
        if i == start {
            return Err(err(i));
        }
        exp10 += if eneg { -e } else { e };
    }
    if i != bytes.len() {
        return Err(err(i));
    }
    if mantissa.is_zero() {
        return Ok(BigScalar::zero(precision));
    }
    let (num, den) = if exp10 >= 0 {
        (mantissa * BigUint::from(10u32).pow(exp10 as u32), BigUint::one())
    } else {
        (mantissa, BigUint::from(10u32).pow((-exp10) as u32))
    };
    Ok(round_ratio(neg, &num, &den, precision))
}

/// Rounds ±num/den to `precision` bits, nearest-even.
fn round_ratio(neg: bool, num: &BigUint, den: &BigUint, precision: usize) -> BigScalar {
    let p = precision as i64;
    let mut b = num.bits() as i64 - den.bits() as i64 - p;
    loop {
        let (n, d) = if b >= 0 {
            (num.clone(), den << b as usize)
        } else {
            (num << (-b) as usize, den.clone())
        };
        let (q, r) = n.div_rem(&d);
        let qbits = q.bits() as i64;
        if qbits > p {
            b += 1;
            continue;
        }
        if qbits < p {
            b -= 1;
            continue;
        }
        let twice = &r << 1;
        let q = if twice > d || (twice == d && q.bit(0)) {
            q + 1u32
        } else {
            q
        };
        return from_parts(neg, q, b, precision);
    }
}

impl fmt::Display for BigScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = f.precision() {
            f.write_str(&self.to_scientific(p.max(1)))
        } else {
            f.write_str(&self.to_decimal())
        }
    }
}

impl fmt::Debug for BigScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BigScalar({}, {} bits)", self.to_scientific(24), self.precision)
    }
}

impl PartialEq for BigScalar {
    fn eq(&self, other: &Self) -> bool {
        self.value.cmp(&other.value) == Some(0)
    }
}

impl PartialOrd for BigScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.cmp(&other.value).map(|c| c.cmp(&0))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:ident) => {
        impl $trait<&BigScalar> for &BigScalar {
            type Output = BigScalar;
            fn $method(self, rhs: &BigScalar) -> BigScalar {
                let p = self.precision.max(rhs.precision);
                BigScalar::wrap(self.value.$op(&rhs.value, p, RM), p)
            }
        }
        impl $trait<BigScalar> for BigScalar {
            type Output = BigScalar;
            fn $method(self, rhs: BigScalar) -> BigScalar {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&BigScalar> for BigScalar {
            type Output = BigScalar;
            fn $method(self, rhs: &BigScalar) -> BigScalar {
                (&self).$method(rhs)
            }
        }
        impl $trait<BigScalar> for &BigScalar {
            type Output = BigScalar;
            fn $method(self, rhs: BigScalar) -> BigScalar {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);
binop!(Div, div, div);

impl Neg for &BigScalar {
    type Output = BigScalar;
    fn neg(self) -> BigScalar {
        BigScalar::wrap(BigFloat::neg(&self.value), self.precision)
    }
}

impl Neg for BigScalar {
    type Output = BigScalar;
    fn neg(self) -> BigScalar {
        -&self
    }
}

/// Sum of a slice, accumulated left to right.
pub fn sum(values: &[BigScalar], precision: usize) -> BigScalar {
    values
        .iter()
        .fold(BigScalar::zero(precision), |acc, v| &acc + v)
}

/// Polynomial in τ, `Σ coeffs[λ] τ^λ` for λ = 0..=lambda_max.
#[derive(Clone, Debug, PartialEq)]
pub struct TauSeries {
    coeffs: Vec<BigScalar>,
}

impl TauSeries {
    pub fn zeros(lambda_max: usize, precision: usize) -> Self {
        Self {
            coeffs: vec![BigScalar::zero(precision); lambda_max + 1],
        }
    }

    pub fn constant(c: BigScalar, lambda_max: usize) -> Self {
        let mut s = Self::zeros(lambda_max, c.precision());
        s.coeffs[0] = c;
        s
    }

    /// Panics on an empty coefficient list.
    pub fn from_coeffs(coeffs: Vec<BigScalar>) -> Self {
        assert!(!coeffs.is_empty(), "a series needs at least the τ^0 term");
        Self { coeffs }
    }

    pub fn lambda_max(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, lambda: usize) -> &BigScalar {
        &self.coeffs[lambda]
    }

    pub fn coeffs(&self) -> &[BigScalar] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<BigScalar> {
        self.coeffs
    }

    fn check_compatible(&self, other: &Self) {
        assert_eq!(
            self.lambda_max(),
            other.lambda_max(),
            "series truncation orders differ"
        );
    }

    /// Coefficientwise sum. Panics if the truncation orders differ.
    pub fn add(&self, other: &Self) -> Self {
        self.check_compatible(other);
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_compatible(other);
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `s · τ^shift · self`, dropping terms beyond `lambda_max`.
    pub fn scale(&self, s: &BigScalar, shift: usize) -> Self {
        let n = self.coeffs.len();
        let p = self.coeffs[0].precision().max(s.precision());
        let coeffs = (0..n)
            .map(|l| {
                if l < shift {
                    BigScalar::zero(p)
                } else {
                    s * &self.coeffs[l - shift]
                }
            })
            .collect();
        Self { coeffs }
    }

    /// In place `self += s · τ^shift · other`.
    pub fn add_scaled(&mut self, other: &Self, s: &BigScalar, shift: usize) {
        self.check_compatible(other);
        for l in shift..self.coeffs.len() {
            let src = &other.coeffs[l - shift];
            if !src.is_zero() {
                self.coeffs[l] = &self.coeffs[l] + &(s * src);
            }
        }
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let n = self.coeffs.len();
        let p = self.coeffs[0].precision();
        let mut out = vec![BigScalar::zero(p); n];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().take(n - i).enumerate() {
                out[i + j] = &out[i + j] + &(a * b);
            }
        }
        Self { coeffs: out }
    }

    /// Horner evaluation at τ.
    pub fn eval(&self, tau: &BigScalar) -> BigScalar {
        let mut acc = self.coeffs[self.coeffs.len() - 1].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = &(&acc * tau) + c;
        }
        acc
    }
}
