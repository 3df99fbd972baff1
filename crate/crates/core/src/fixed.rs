//! Signed fixed point with `m` magnitude bits and `f` fractional bits.
//!
//! The stored integer `raw` represents `raw * 2^-f` and is kept within
//! `|raw| < 2^(m+f)`. Products and sums are formed in `i128` (falling back
//! to big integers) so intermediate values never wrap.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::ArithError;
use crate::rounding::{div_round_big, shift_round_big, shift_round_i128, shift_round_i64, RoundingMode};
use crate::softfloat::SoftFloat;

/// Magnitude bits used when none are given.
pub const DEFAULT_MAGNITUDE_BITS: u32 = 10;
/// Largest supported `m + f`; keeps raw values in an `i64`.
pub const MAX_TOTAL_BITS: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedFormat {
    pub m: u32,
    pub f: u32,
    pub mode: RoundingMode,
}

impl FixedFormat {
    pub fn new(m: u32, f: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        if m < 1 {
            return Err(ArithError::InvalidFormat(format!("m must be at least 1, got {m}")));
        }
        if m + f > MAX_TOTAL_BITS {
            return Err(ArithError::InvalidFormat(format!(
                "m + f must not exceed {MAX_TOTAL_BITS}, got {}",
                m + f
            )));
        }
        Ok(FixedFormat { m, f, mode })
    }

    /// Format with the default 10 magnitude bits.
    pub fn with_fraction(f: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        Self::new(DEFAULT_MAGNITUDE_BITS, f, mode)
    }

    /// Exclusive bound on `|raw|`.
    #[inline]
    pub fn raw_limit(&self) -> i64 {
        1i64 << (self.m + self.f)
    }

    /// Total width including the sign bit.
    pub fn width(&self) -> u32 {
        1 + self.m + self.f
    }

    /// Value of one unit in the last place, `2^-f`.
    pub fn ulp(&self) -> f64 {
        (-(self.f as f64)).exp2()
    }

    #[inline]
    pub fn check_raw(&self, raw: i128) -> Result<i64, ArithError> {
        if raw.unsigned_abs() < self.raw_limit() as u128 {
            Ok(raw as i64)
        } else {
            Err(self.overflow(&BigInt::from(raw)))
        }
    }

    pub fn check_big(&self, raw: &BigInt) -> Result<i64, ArithError> {
        match raw.to_i128() {
            Some(r) => self.check_raw(r),
            None => Err(self.overflow(raw)),
        }
    }

    fn overflow(&self, raw: &BigInt) -> ArithError {
        let value = BigRational::new(raw.clone(), BigInt::one() << self.f);
        ArithError::Overflow {
            value: format!("{}", value.to_f64().unwrap_or(f64::INFINITY)),
            format: self.to_string(),
        }
    }

    /// Convert a binary64 value: `round(x * 2^f)`.
    pub fn raw_from_f64(&self, x: f64) -> Result<i64, ArithError> {
        if !x.is_finite() {
            return Err(ArithError::Overflow { value: x.to_string(), format: self.to_string() });
        }
        if x == 0.0 {
            return Ok(0);
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let e = exp + i64::from(self.f);
        let signed = if neg { -i128::from(mant) } else { i128::from(mant) };
        let raw = if e >= 0 {
            // 53-bit mantissa shifted past 62 bits always overflows.
            if e > 70 {
                return Err(ArithError::Overflow { value: x.to_string(), format: self.to_string() });
            }
            signed << e
        } else if e < -120 {
            // |x * 2^f| < 2^-67: far below half a unit under every mode.
            0
        } else {
            shift_round_i128(signed, (-e) as u32, self.mode)
        };
        self.check_raw(raw)
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{} {}", self.m, self.f, self.mode)
    }
}

/// Shift right by `f` bits and round: rescales a `2f`-fraction product to
/// `f` fraction bits. Negative values round symmetrically with positive ones.
#[inline]
pub fn shift_round(raw2f: i128, f: u32, mode: RoundingMode) -> i128 {
    match i64::try_from(raw2f) {
        Ok(v) if f < 64 => i128::from(shift_round_i64(v, f, mode)),
        _ => shift_round_i128(raw2f, f, mode),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPoint {
    raw: i64,
    fmt: FixedFormat,
}

impl FixedPoint {
    pub fn zero(fmt: FixedFormat) -> Self {
        FixedPoint { raw: 0, fmt }
    }

    pub fn from_raw(raw: i64, fmt: FixedFormat) -> Result<Self, ArithError> {
        Ok(FixedPoint { raw: fmt.check_raw(i128::from(raw))?, fmt })
    }

    pub fn from_f64(x: f64, fmt: FixedFormat) -> Result<Self, ArithError> {
        Ok(FixedPoint { raw: fmt.raw_from_f64(x)?, fmt })
    }

    pub fn from_rational(x: &BigRational, fmt: FixedFormat) -> Result<Self, ArithError> {
        let num = x.numer() << fmt.f;
        let raw = div_round_big(&num, x.denom(), fmt.mode);
        Ok(FixedPoint { raw: fmt.check_big(&raw)?, fmt })
    }

    pub fn from_softfloat(x: &SoftFloat, fmt: FixedFormat) -> Result<Self, ArithError> {
        match x.to_rational() {
            Some(r) => Self::from_rational(&r, fmt),
            None => Err(ArithError::Overflow { value: x.to_decimal(), format: fmt.to_string() }),
        }
    }

    pub fn from_decimal(s: &str, fmt: FixedFormat) -> Result<Self, ArithError> {
        Self::from_rational(&crate::softfloat::parse_finite_decimal(s)?, fmt)
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FixedFormat {
        self.fmt
    }

    pub fn is_zero(&self) -> bool {
        self.raw == 0
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 * self.fmt.ulp()
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.raw), BigInt::one() << self.fmt.f)
    }

    fn same(&self, rhs: &Self) -> Result<(), ArithError> {
        if self.fmt != rhs.fmt {
            return Err(ArithError::FormatMismatch { left: self.fmt.to_string(), right: rhs.fmt.to_string() });
        }
        Ok(())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(&self, rhs: &Self) -> Result<Self, ArithError> {
        self.same(rhs)?;
        let raw = self.fmt.check_raw(i128::from(self.raw) + i128::from(rhs.raw))?;
        Ok(FixedPoint { raw, fmt: self.fmt })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(&self, rhs: &Self) -> Result<Self, ArithError> {
        self.same(rhs)?;
        let raw = self.fmt.check_raw(i128::from(self.raw) - i128::from(rhs.raw))?;
        Ok(FixedPoint { raw, fmt: self.fmt })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(&self) -> Self {
        FixedPoint { raw: -self.raw, fmt: self.fmt }
    }

    /// Exact product at `2f` fractional bits.
    pub fn raw_product(&self, rhs: &Self) -> Result<i128, ArithError> {
        self.same(rhs)?;
        Ok(i128::from(self.raw) * i128::from(rhs.raw))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(&self, rhs: &Self) -> Result<Self, ArithError> {
        let p = self.raw_product(rhs)?;
        let raw = self.fmt.check_raw(shift_round(p, self.fmt.f, self.fmt.mode))?;
        Ok(FixedPoint { raw, fmt: self.fmt })
    }
}

impl PartialOrd for FixedPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.fmt == other.fmt {
            Some(self.raw.cmp(&other.raw))
        } else {
            None
        }
    }
}

impl fmt::Display for FixedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Exact sum of raw values, spilling into a big integer when needed.
pub fn raw_sum(raws: impl IntoIterator<Item = i128>) -> BigInt {
    let mut small = 0i128;
    let mut big: Option<BigInt> = None;
    for r in raws {
        match small.checked_add(r) {
            Some(s) => small = s,
            None => {
                *big.get_or_insert_with(BigInt::zero) += BigInt::from(small) + BigInt::from(r);
                small = 0;
            }
        }
    }
    match big {
        Some(b) => b + BigInt::from(small),
        None => BigInt::from(small),
    }
}

/// Accurate dot product `SR(Σ x_i y_i)`: one rounding of the exact `2f`-bit sum.
pub fn dot_accurate_raw(xs: &[i64], ys: &[i64], fmt: FixedFormat) -> Result<i64, ArithError> {
    if xs.len() != ys.len() {
        return Err(ArithError::LengthMismatch(xs.len(), ys.len()));
    }
    let mut acc = 0i128;
    for (x, y) in xs.iter().zip(ys) {
        let p = i128::from(*x) * i128::from(*y);
        match acc.checked_add(p) {
            Some(s) => acc = s,
            None => return dot_accurate_big(xs, ys, fmt),
        }
    }
    fmt.check_raw(shift_round(acc, fmt.f, fmt.mode))
}

#[cold]
fn dot_accurate_big(xs: &[i64], ys: &[i64], fmt: FixedFormat) -> Result<i64, ArithError> {
    let total = raw_sum(xs.iter().zip(ys).map(|(x, y)| i128::from(*x) * i128::from(*y)));
    fmt.check_big(&shift_round_big(&total, u64::from(fmt.f), fmt.mode))
}

/// Naive dot product `Σ SR(x_i y_i)`: one rounding per product, exact integer sum.
pub fn dot_naive_raw(xs: &[i64], ys: &[i64], fmt: FixedFormat) -> Result<i64, ArithError> {
    if xs.len() != ys.len() {
        return Err(ArithError::LengthMismatch(xs.len(), ys.len()));
    }
    let fast = match fmt.mode {
        RoundingMode::Rne => naive_word::<MODE_RNE>(xs, ys, fmt.f),
        RoundingMode::Rtz => naive_word::<MODE_RTZ>(xs, ys, fmt.f),
        RoundingMode::Rna => naive_word::<MODE_RNA>(xs, ys, fmt.f),
    };
    if let Some(v) = fast {
        return fmt.check_raw(i128::from(v));
    }
    let rounded = |(x, y): (&i64, &i64)| match x.checked_mul(*y) {
        Some(p) => i128::from(shift_round_i64(p, fmt.f, fmt.mode)),
        None => shift_round(i128::from(*x) * i128::from(*y), fmt.f, fmt.mode),
    };
    let mut acc = 0i128;
    for pair in xs.iter().zip(ys) {
        match acc.checked_add(rounded(pair)) {
            Some(s) => acc = s,
            None => return fmt.check_big(&raw_sum(xs.iter().zip(ys).map(rounded))),
        }
    }
    fmt.check_raw(acc)
}

const MODE_RNE: u8 = 0;
const MODE_RTZ: u8 = 1;
const MODE_RNA: u8 = 2;

/// Naive dot product entirely in 64-bit words; `None` if anything overflows.
fn naive_word<const MODE: u8>(xs: &[i64], ys: &[i64], f: u32) -> Option<i64> {
    let mut acc = 0i64;
    for (x, y) in xs.iter().zip(ys) {
        acc = acc.checked_add(round_word::<MODE>(x.checked_mul(*y)?, f))?;
    }
    Some(acc)
}

#[inline(always)]
fn round_word<const MODE: u8>(v: i64, f: u32) -> i64 {
    if f == 0 {
        return v;
    }
    let s = v >> 63;
    let mag = (v ^ s).wrapping_sub(s) as u64;
    let kept = mag >> f;
    let rem = mag & ((1u64 << f) - 1);
    let half = 1u64 << (f - 1);
    let up = match MODE {
        MODE_RNE => (rem > half) | ((rem == half) & (kept & 1 == 1)),
        MODE_RTZ => false,
        _ => rem >= half,
    };
    let r = (kept + u64::from(up)) as i64;
    (r ^ s).wrapping_sub(s)
}
