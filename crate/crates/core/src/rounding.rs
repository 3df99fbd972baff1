//! Rounding modes and the integer shift-and-round primitive shared by the
//! floating-point and fixed-point scalars.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

/// How a value that falls between two representable neighbours is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoundingMode {
    /// Nearest, ties to an even last digit.
    #[serde(rename = "rne")]
    Rne,
    /// Toward zero (truncation of the magnitude).
    #[serde(rename = "rtz")]
    Rtz,
    /// Nearest, ties away from zero.
    #[serde(rename = "rna")]
    Rna,
}

impl RoundingMode {
    pub const ALL: [RoundingMode; 3] = [RoundingMode::Rne, RoundingMode::Rtz, RoundingMode::Rna];

    pub fn as_str(self) -> &'static str {
        match self {
            RoundingMode::Rne => "rne",
            RoundingMode::Rtz => "rtz",
            RoundingMode::Rna => "rna",
        }
    }

    /// Decide whether a truncated magnitude must be bumped by one unit.
    ///
    /// `odd` is the parity of the truncated magnitude, `tail` the discarded
    /// part relative to half a unit.
    #[inline]
    pub fn rounds_up(self, odd: bool, tail: Tail) -> bool {
        match (self, tail) {
            (_, Tail::Zero) | (RoundingMode::Rtz, _) => false,
            (_, Tail::Below) => false,
            (_, Tail::Above) => true,
            (RoundingMode::Rne, Tail::Half) => odd,
            (RoundingMode::Rna, Tail::Half) => true,
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rne" => Ok(RoundingMode::Rne),
            "rtz" => Ok(RoundingMode::Rtz),
            "rna" => Ok(RoundingMode::Rna),
            other => Err(format!("unknown rounding mode '{other}' (expected rne, rtz or rna)")),
        }
    }
}

/// Discarded bits classified against half a unit in the last kept place.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Zero,
    Below,
    Half,
    Above,
}

impl Tail {
    /// Classify `rem` (the discarded low bits, `shift` of them) plus an
    /// optional sticky flag for bits already lost below `rem`.
    #[inline]
    pub fn of_u128(rem: u128, shift: u32, sticky: bool) -> Tail {
        debug_assert!((1..=128).contains(&shift));
        let half = 1u128 << (shift - 1);
        match rem.cmp(&half) {
            Ordering::Less if rem == 0 && !sticky => Tail::Zero,
            Ordering::Less => Tail::Below,
            Ordering::Equal if sticky => Tail::Above,
            Ordering::Equal => Tail::Half,
            Ordering::Greater => Tail::Above,
        }
    }

    fn of_big(rem: &BigUint, shift: u64, sticky: bool) -> Tail {
        if rem.is_zero() {
            return if sticky { Tail::Below } else { Tail::Zero };
        }
        let half = BigUint::one() << (shift - 1);
        match rem.cmp(&half) {
            Ordering::Less => Tail::Below,
            Ordering::Equal if sticky => Tail::Above,
            Ordering::Equal => Tail::Half,
            Ordering::Greater => Tail::Above,
        }
    }
}

/// Round the magnitude `mag / 2^shift` to an integer. Sign-agnostic.
#[inline]
pub fn shift_round_mag_u128(mag: u128, shift: u32, sticky: bool, mode: RoundingMode) -> u128 {
    if shift == 0 {
        debug_assert!(!sticky);
        return mag;
    }
    if shift == 128 {
        return u128::from(mode.rounds_up(false, Tail::of_u128(mag, 128, sticky)));
    }
    if shift > 128 {
        let tail = if mag == 0 && !sticky { Tail::Zero } else { Tail::Below };
        return u128::from(mode.rounds_up(false, tail));
    }
    let kept = mag >> shift;
    let rem = mag & ((1u128 << shift) - 1);
    let tail = Tail::of_u128(rem, shift, sticky);
    kept + u128::from(mode.rounds_up(kept & 1 == 1, tail))
}

/// Round a big magnitude `mag / 2^shift` to an integer.
pub fn shift_round_mag_big(mag: &BigUint, shift: u64, sticky: bool, mode: RoundingMode) -> BigUint {
    if shift == 0 {
        return mag.clone();
    }
    let kept = mag >> shift;
    let rem = if mag.bits() <= shift {
        mag.clone()
    } else {
        mag - (&kept << shift)
    };
    let tail = Tail::of_big(&rem, shift, sticky);
    let odd = kept.bit(0);
    if mode.rounds_up(odd, tail) {
        kept + 1u32
    } else {
        kept
    }
}

/// [`shift_round_i128`] for word-sized values, `shift < 64`.
#[inline]
pub fn shift_round_i64(v: i64, shift: u32, mode: RoundingMode) -> i64 {
    if shift == 0 {
        return v;
    }
    let mag = v.unsigned_abs();
    let kept = mag >> shift;
    let rem = mag & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    let up = match mode {
        RoundingMode::Rtz => false,
        RoundingMode::Rna => rem >= half,
        RoundingMode::Rne => rem > half || (rem == half && kept & 1 == 1),
    };
    let r = (kept + u64::from(up)) as i64;
    if v < 0 {
        -r
    } else {
        r
    }
}

/// Shift-right-and-round of a signed integer: `round(v / 2^shift)`.
///
/// Rounding is applied to the value, not to a two's-complement bit pattern,
/// so negative inputs mirror positive ones under every mode.
#[inline]
pub fn shift_round_i128(v: i128, shift: u32, mode: RoundingMode) -> i128 {
    let neg = v < 0;
    let mag = shift_round_mag_u128(v.unsigned_abs(), shift, false, mode);
    // |v| < 2^127 so the rounded magnitude never exceeds 2^126 + 1 for shift >= 1.
    let mag = mag as i128;
    if neg {
        -mag
    } else {
        mag
    }
}

/// Big-integer counterpart of [`shift_round_i128`].
pub fn shift_round_big(v: &BigInt, shift: u64, mode: RoundingMode) -> BigInt {
    let mag = shift_round_mag_big(v.magnitude(), shift, false, mode);
    BigInt::from_biguint(if v.is_negative() { Sign::Minus } else { Sign::Plus }, mag)
}

/// `round(num / den)` for a positive denominator, under `mode`.
pub fn div_round_big(num: &BigInt, den: &BigInt, mode: RoundingMode) -> BigInt {
    debug_assert!(den.is_positive());
    let neg = num.is_negative();
    let (q, r) = num.magnitude().div_rem(den.magnitude());
    let twice = &r << 1u32;
    let tail = if r.is_zero() {
        Tail::Zero
    } else {
        match twice.cmp(den.magnitude()) {
            Ordering::Less => Tail::Below,
            Ordering::Equal => Tail::Half,
            Ordering::Greater => Tail::Above,
        }
    };
    let odd = q.bit(0);
    let q = if mode.rounds_up(odd, tail) { q + 1u32 } else { q };
    BigInt::from_biguint(if neg { Sign::Minus } else { Sign::Plus }, q)
}

/// `round(num / den)` for `den > 0` on machine integers.
pub fn div_round_i128(num: i128, den: i128, mode: RoundingMode) -> i128 {
    debug_assert!(den > 0);
    let neg = num < 0;
    let mag = num.unsigned_abs();
    let den = den as u128;
    let q = mag / den;
    let r = mag % den;
    let tail = if r == 0 {
        Tail::Zero
    } else {
        // r < den <= 2^127 so 2r cannot overflow u128.
        match (r * 2).cmp(&den) {
            Ordering::Less => Tail::Below,
            Ordering::Equal => Tail::Half,
            Ordering::Greater => Tail::Above,
        }
    };
    let q = (q + u128::from(mode.rounds_up(q & 1 == 1, tail))) as i128;
    if neg {
        -q
    } else {
        q
    }
}
