//! Long accumulator for binary floating-point values.
//!
//! Every addend is aligned to the smallest exponent seen so far and added
//! to a single integer, so nothing is lost until the caller rounds the
//! final total. The integer lives in an `i128` while it fits and moves to a
//! big integer otherwise.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, Zero};

use crate::rounding::RoundingMode;
use crate::softfloat::{ExactParts, SoftFloat};

#[derive(Clone, Debug)]
enum Acc {
    Small(i128),
    Big(BigInt),
}

#[derive(Clone, Debug)]
pub struct ExactAccumulator {
    acc: Acc,
    /// Exponent of the accumulator's least significant bit.
    lsb: i64,
    empty: bool,
}

impl Default for ExactAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactAccumulator {
    pub fn new() -> Self {
        ExactAccumulator { acc: Acc::Small(0), lsb: 0, empty: true }
    }

    /// Add `±mag · 2^exp`.
    #[inline]
    pub fn add_u128(&mut self, neg: bool, mag: u128, exp: i64) {
        if mag == 0 {
            return;
        }
        if self.empty {
            self.empty = false;
            self.lsb = exp;
            self.acc = match i128::try_from(mag) {
                Ok(m) => Acc::Small(if neg { -m } else { m }),
                Err(_) => Acc::Big(signed_big(neg, BigUint::from(mag))),
            };
            return;
        }
        if let Acc::Small(a) = self.acc {
            if let Some(v) = self.try_small(a, neg, mag, exp) {
                self.acc = Acc::Small(v);
                return;
            }
        }
        self.add_big(neg, &BigUint::from(mag), exp);
    }

    #[inline]
    fn try_small(&mut self, a: i128, neg: bool, mag: u128, exp: i64) -> Option<i128> {
        let m = i128::try_from(mag).ok()?;
        let v = if neg { -m } else { m };
        if exp >= self.lsb {
            let sh = u32::try_from(exp - self.lsb).ok()?;
            let shifted = shl_checked(v, sh)?;
            a.checked_add(shifted)
        } else {
            let sh = u32::try_from(self.lsb - exp).ok()?;
            let a2 = shl_checked(a, sh)?;
            let s = a2.checked_add(v)?;
            self.lsb = exp;
            Some(s)
        }
    }

    pub fn add_big(&mut self, neg: bool, mag: &BigUint, exp: i64) {
        if mag.is_zero() {
            return;
        }
        let v = signed_big(neg, mag.clone());
        if self.empty {
            self.empty = false;
            self.lsb = exp;
            self.acc = Acc::Big(v);
            return;
        }
        let mut a = match std::mem::replace(&mut self.acc, Acc::Small(0)) {
            Acc::Small(s) => BigInt::from(s),
            Acc::Big(b) => b,
        };
        if exp >= self.lsb {
            a += v << ((exp - self.lsb) as u64);
        } else {
            a = (a << ((self.lsb - exp) as u64)) + v;
            self.lsb = exp;
        }
        self.acc = Acc::Big(a);
    }

    pub fn add_parts(&mut self, p: &ExactParts) {
        self.add_big(p.neg, &p.mag, p.exp);
    }

    pub fn add_softfloat(&mut self, x: &SoftFloat) {
        if let Some((neg, sig, exp)) = x.word_parts() {
            self.add_u128(neg, u128::from(sig), exp);
        } else if let Some(p) = x.parts() {
            self.add_parts(&p);
        }
    }

    /// Add a finite binary64 value exactly.
    pub fn add_f64(&mut self, x: f64) {
        debug_assert!(x.is_finite());
        if x == 0.0 {
            return;
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
        self.add_u128(neg, u128::from(mant), exp);
    }

    pub fn is_zero(&self) -> bool {
        match &self.acc {
            Acc::Small(a) => *a == 0,
            Acc::Big(b) => b.is_zero(),
        }
    }

    /// Exact total as `(neg, magnitude, exponent)`; `None` when zero.
    pub fn parts(&self) -> Option<ExactParts> {
        if self.is_zero() {
            return None;
        }
        let (neg, mag) = match &self.acc {
            Acc::Small(a) => (*a < 0, BigUint::from(a.unsigned_abs())),
            Acc::Big(b) => (b.is_negative(), b.magnitude().clone()),
        };
        Some(ExactParts { neg, mag, exp: self.lsb })
    }

    /// Exact total as a small magnitude when it fits.
    #[inline]
    pub fn small_parts(&self) -> Option<(bool, u128, i64)> {
        match self.acc {
            Acc::Small(a) => Some((a < 0, a.unsigned_abs(), self.lsb)),
            Acc::Big(_) => None,
        }
    }

    /// The total rounded once to `prec` bits.
    pub fn round(&self, prec: u32, mode: RoundingMode) -> SoftFloat {
        match self.small_parts() {
            Some((neg, mag, exp)) => SoftFloat::round_u128(neg, mag, exp, prec, mode),
            None => {
                let p = self.parts().expect("big accumulators are non-zero");
                SoftFloat::round_exact(p.neg, &p.mag, p.exp, prec, mode).expect("precision checked by caller")
            }
        }
    }
}

#[inline]
fn shl_checked(v: i128, sh: u32) -> Option<i128> {
    if sh >= 127 {
        return if v == 0 { Some(0) } else { None };
    }
    let r = v << sh;
    if r >> sh == v {
        Some(r)
    } else {
        None
    }
}

fn signed_big(neg: bool, mag: BigUint) -> BigInt {
    BigInt::from_biguint(if neg { Sign::Minus } else { Sign::Plus }, mag)
}
