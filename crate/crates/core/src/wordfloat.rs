//! Compact soft float for precisions up to [`WORD_PRECISION`] bits.
//!
//! Values carry no precision or mode; both live in a [`WordContext`], which
//! keeps the scalar `Copy` and small enough for the inference hot loops.
//! Results are bit-identical to [`SoftFloat`] at the same precision and mode.

use std::cmp::Ordering;

use crate::error::ArithError;
use crate::rounding::RoundingMode;
use crate::softfloat::{SoftFloat, WORD_PRECISION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
enum Class {
    #[default]
    Zero,
    Finite,
    Inf,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WordFloat {
    sig: u64,
    exp: i64,
    neg: bool,
    class: Class,
}

impl WordFloat {
    pub const ZERO: WordFloat = WordFloat { sig: 0, exp: 0, neg: false, class: Class::Zero };

    pub fn infinity(neg: bool) -> Self {
        WordFloat { sig: 0, exp: 0, neg, class: Class::Inf }
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.class == Class::Zero
    }

    pub fn is_infinite(&self) -> bool {
        self.class == Class::Inf
    }

    pub fn is_negative(&self) -> bool {
        self.class != Class::Zero && self.neg
    }

    /// `(neg, significand, exponent)` of a finite non-zero value.
    #[inline]
    pub fn parts(&self) -> Option<(bool, u64, i64)> {
        (self.class == Class::Finite).then_some((self.neg, self.sig, self.exp))
    }

    #[inline]
    pub fn neg(self) -> Self {
        WordFloat { neg: !self.neg, ..self }
    }

    pub fn abs(self) -> Self {
        WordFloat { neg: false, ..self }
    }
}

/// Precision and rounding mode shared by a family of [`WordFloat`] values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WordContext {
    prec: u32,
    mode: RoundingMode,
}

impl WordContext {
    pub fn new(prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        if !(2..=WORD_PRECISION).contains(&prec) {
            return Err(ArithError::InvalidPrecision(prec));
        }
        Ok(WordContext { prec, mode })
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }

    /// Round `±(mag + δ)·2^exp`, `δ ∈ (0, 1)` present iff `sticky`.
    #[inline]
    pub fn round(&self, neg: bool, mag: u128, exp: i64, sticky: bool) -> WordFloat {
        if mag == 0 {
            return WordFloat::ZERO;
        }
        if mag >> 64 == 0 {
            return self.round_word(neg, mag as u64, exp, sticky);
        }
        let bits = 128 - mag.leading_zeros();
        let prec = self.prec;
        if bits <= prec {
            let shift = prec - bits;
            return WordFloat { sig: (mag << shift) as u64, exp: exp - i64::from(shift), neg, class: Class::Finite };
        }
        let shift = bits - prec;
        let mut kept = (mag >> shift) as u64;
        let rem = mag & ((1u128 << shift) - 1);
        let half = 1u128 << (shift - 1);
        let up = match self.mode {
            RoundingMode::Rtz => false,
            RoundingMode::Rna => rem >= half,
            RoundingMode::Rne => rem > half || (rem == half && (sticky || kept & 1 == 1)),
        };
        let mut e = exp + i64::from(shift);
        if up {
            kept += 1;
            if kept >> prec != 0 {
                kept >>= 1;
                e += 1;
            }
        }
        WordFloat { sig: kept, exp: e, neg, class: Class::Finite }
    }

    #[inline]
    fn round_word(&self, neg: bool, mag: u64, exp: i64, sticky: bool) -> WordFloat {
        if mag == 0 {
            return WordFloat::ZERO;
        }
        let bits = 64 - mag.leading_zeros();
        let prec = self.prec;
        if bits <= prec {
            let shift = prec - bits;
            return WordFloat { sig: mag << shift, exp: exp - i64::from(shift), neg, class: Class::Finite };
        }
        let shift = bits - prec;
        let mut kept = mag >> shift;
        let rem = mag & ((1u64 << shift) - 1);
        let half = 1u64 << (shift - 1);
        let up = match self.mode {
            RoundingMode::Rtz => false,
            RoundingMode::Rna => rem >= half,
            RoundingMode::Rne => rem > half || (rem == half && (sticky || kept & 1 == 1)),
        };
        let mut e = exp + i64::from(shift);
        if up {
            kept += 1;
            if kept >> prec != 0 {
                kept >>= 1;
                e += 1;
            }
        }
        WordFloat { sig: kept, exp: e, neg, class: Class::Finite }
    }

    /// `Σ x_i y_i` from left to right, rounding every product and every
    /// partial sum.
    pub fn dot_naive(&self, x: &[WordFloat], y: &[WordFloat]) -> Result<WordFloat, ArithError> {
        if x.len() != y.len() {
            return Err(ArithError::LengthMismatch(x.len(), y.len()));
        }
        if x.iter().chain(y).any(|v| v.class == Class::Inf) {
            let mut acc = WordFloat::ZERO;
            for (a, b) in x.iter().zip(y) {
                acc = self.add(acc, self.mul(*a, *b)?)?;
            }
            return Ok(acc);
        }
        let mut acc = WordFloat::ZERO;
        for (a, b) in x.iter().zip(y) {
            if a.class == Class::Zero || b.class == Class::Zero {
                continue;
            }
            let p = self.round(a.neg ^ b.neg, u128::from(a.sig) * u128::from(b.sig), a.exp + b.exp, false);
            acc = if acc.class == Class::Zero { p } else { self.add_finite(acc.neg, acc.exp, acc.sig, p.neg, p.exp, p.sig).0 };
        }
        Ok(acc)
    }

    pub fn from_f64(&self, x: f64) -> Result<WordFloat, ArithError> {
        if x.is_nan() {
            return Err(ArithError::InvalidOperation("NaN has no soft-float encoding"));
        }
        if x.is_infinite() {
            return Ok(WordFloat::infinity(x < 0.0));
        }
        if x == 0.0 {
            return Ok(WordFloat::ZERO);
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 { (frac, -1074) } else { (frac | (1u64 << 52), biased - 1075) };
        Ok(self.round(neg, u128::from(mant), exp, false))
    }

    pub fn to_softfloat(&self, x: WordFloat) -> SoftFloat {
        match x.class {
            Class::Zero => SoftFloat::zero(self.prec, self.mode),
            Class::Inf => SoftFloat::infinity(x.neg, self.prec, self.mode),
            Class::Finite => SoftFloat::round_u128(x.neg, u128::from(x.sig), x.exp, self.prec, self.mode),
        }
    }

    pub fn from_softfloat(&self, x: &SoftFloat) -> Result<WordFloat, ArithError> {
        if x.precision() != self.prec || x.mode() != self.mode {
            return Err(ArithError::PrecisionMismatch {
                left: format!("p={} {}", self.prec, self.mode),
                right: format!("p={} {}", x.precision(), x.mode()),
            });
        }
        if x.is_zero() {
            return Ok(WordFloat::ZERO);
        }
        if x.is_infinite() {
            return Ok(WordFloat::infinity(x.is_negative()));
        }
        let (neg, sig, exp) = x.word_parts().expect("word precision");
        Ok(WordFloat { sig, exp, neg, class: Class::Finite })
    }

    pub fn to_f64(&self, x: WordFloat) -> f64 {
        match x.class {
            Class::Zero => 0.0,
            Class::Inf => {
                if x.neg {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
            Class::Finite => self.to_softfloat(x).to_f64(),
        }
    }

    #[inline]
    pub fn add(&self, a: WordFloat, b: WordFloat) -> Result<WordFloat, ArithError> {
        match (a.class, b.class) {
            (Class::Finite, Class::Finite) => Ok(self.add_finite(a.neg, a.exp, a.sig, b.neg, b.exp, b.sig).0),
            (Class::Zero, _) => Ok(b),
            (_, Class::Zero) => Ok(a),
            (Class::Inf, Class::Inf) if a.neg != b.neg => Err(ArithError::InvalidOperation("infinity minus infinity")),
            (Class::Inf, _) => Ok(a),
            (_, Class::Inf) => Ok(b),
        }
    }

    #[inline]
    pub fn sub(&self, a: WordFloat, b: WordFloat) -> Result<WordFloat, ArithError> {
        self.add(a, b.neg())
    }

    /// Sum of two finite values. The second component is the exact unrounded
    /// sum when it was formed without a sticky bit.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn add_finite(&self, na: bool, ea: i64, sa: u64, nb: bool, eb: i64, sb: u64) -> (WordFloat, Option<(bool, u128, i64)>) {
        let ((nx, ex, sx), (ny, ey, sy)) = if ea >= eb { ((na, ea, sa), (nb, eb, sb)) } else { ((nb, eb, sb), (na, ea, sa)) };
        let d = (i128::from(ex) - i128::from(ey)) as u128;
        if d < 64 && u128::from(sx.leading_zeros()) > d {
            let x = sx << d;
            let (neg, mag) = if nx == ny {
                (nx, x + sy)
            } else if x >= sy {
                (nx, x - sy)
            } else {
                (ny, sy - x)
            };
            return (self.round_word(neg, mag, ey, false), Some((neg, u128::from(mag), ey)));
        }
        if d <= 64 {
            let x = u128::from(sx) << d;
            let y = u128::from(sy);
            let (neg, mag) = if nx == ny {
                (nx, x + y)
            } else if x >= y {
                (nx, x - y)
            } else {
                (ny, y - x)
            };
            (self.round(neg, mag, ey, false), Some((neg, mag, ey)))
        } else {
            let x = u128::from(sx) << 64;
            let sh = d - 64;
            let (y, sticky) = if sh >= 64 { (0u128, true) } else { (u128::from(sy >> sh), sy & ((1u64 << sh) - 1) != 0) };
            let mag = if nx == ny { x + y } else { x - y - u128::from(sticky) };
            (self.round(nx, mag, ex - 64, sticky), None)
        }
    }

    #[inline]
    pub fn mul(&self, a: WordFloat, b: WordFloat) -> Result<WordFloat, ArithError> {
        match (a.class, b.class) {
            (Class::Finite, Class::Finite) => {
                Ok(self.round(a.neg ^ b.neg, u128::from(a.sig) * u128::from(b.sig), a.exp + b.exp, false))
            }
            (Class::Zero, Class::Inf) | (Class::Inf, Class::Zero) => {
                Err(ArithError::InvalidOperation("zero times infinity"))
            }
            (Class::Zero, _) | (_, Class::Zero) => Ok(WordFloat::ZERO),
            _ => Ok(WordFloat::infinity(a.neg ^ b.neg)),
        }
    }

    pub fn div(&self, a: WordFloat, b: WordFloat) -> Result<WordFloat, ArithError> {
        match (a.class, b.class) {
            (Class::Finite, Class::Finite) => {
                let shift = self.prec + 2;
                let num = u128::from(a.sig) << shift;
                let den = u128::from(b.sig);
                Ok(self.round(a.neg ^ b.neg, num / den, a.exp - b.exp - i64::from(shift), num % den != 0))
            }
            (Class::Zero, Class::Zero) => Err(ArithError::InvalidOperation("zero divided by zero")),
            (Class::Inf, Class::Inf) => Err(ArithError::InvalidOperation("infinity divided by infinity")),
            (Class::Finite | Class::Inf, Class::Zero) | (Class::Inf, Class::Finite) => {
                Ok(WordFloat::infinity(a.neg ^ b.neg))
            }
            _ => Ok(WordFloat::ZERO),
        }
    }

    /// `fl(a + b)` and `fl((a + b) - fl(a + b))`; exact under RNE.
    pub fn sum_residual(&self, a: WordFloat, b: WordFloat) -> Result<(WordFloat, WordFloat), ArithError> {
        match (a.class, b.class) {
            (Class::Zero, Class::Zero | Class::Finite) => return Ok((b, WordFloat::ZERO)),
            (Class::Finite, Class::Zero) => return Ok((a, WordFloat::ZERO)),
            _ => {}
        }
        if let (Some((na, sa, ea)), Some((nb, sb, eb))) = (a.parts(), b.parts()) {
            let (s, exact) = self.add_finite(na, ea, sa, nb, eb, sb);
            if let Some((en, emag, eexp)) = exact {
                let r = match s.parts() {
                    Some((sn, ss, se)) if se >= eexp => {
                        let (rn, rm) = signed_sub(en, emag, sn, u128::from(ss) << (se - eexp));
                        self.round(rn, rm, eexp, false)
                    }
                    _ => WordFloat::ZERO,
                };
                return Ok((s, r));
            }
        }
        let (s, r) = self.to_softfloat(a).sum_residual(&self.to_softfloat(b))?;
        Ok((self.from_softfloat(&s)?, self.from_softfloat(&r)?))
    }

    /// `fl(a · b)` and `fl(a · b - fl(a · b))`; exact under RNE.
    pub fn product_residual(&self, a: WordFloat, b: WordFloat) -> Result<(WordFloat, WordFloat), ArithError> {
        let p = self.mul(a, b)?;
        if let (Some((na, sa, ea)), Some((nb, sb, eb)), Some((_, ps, pe))) = (a.parts(), b.parts(), p.parts()) {
            let exact = u128::from(sa) * u128::from(sb);
            let exp = ea + eb;
            if pe < exp {
                return Ok((p, WordFloat::ZERO));
            }
            let neg = na ^ nb;
            let (rn, rm) = signed_sub(neg, exact, neg, u128::from(ps) << (pe - exp));
            return Ok((p, self.round(rn, rm, exp, false)));
        }
        Ok((p, WordFloat::ZERO))
    }

    pub fn cmp(&self, a: WordFloat, b: WordFloat) -> Ordering {
        fn rank(x: &WordFloat) -> i8 {
            match (x.class, x.neg) {
                (Class::Inf, true) => -2,
                (Class::Finite, true) => -1,
                (Class::Zero, _) => 0,
                (Class::Finite, false) => 1,
                (Class::Inf, false) => 2,
            }
        }
        let (ra, rb) = (rank(&a), rank(&b));
        if ra != rb || ra.abs() != 1 {
            return ra.cmp(&rb);
        }
        // Same precision: normalized significands compare after the exponent.
        let mag = a.exp.cmp(&b.exp).then(a.sig.cmp(&b.sig));
        if ra < 0 {
            mag.reverse()
        } else {
            mag
        }
    }
}

#[inline]
fn signed_sub(na: bool, a: u128, nb: bool, b: u128) -> (bool, u128) {
    let nb = !nb;
    if na == nb {
        (na, a + b)
    } else if a >= b {
        (na, a - b)
    } else {
        (nb, b - a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_softfloat_on_a_grid() {
        let xs = [0.0, 1.0, -1.5, 3.25, 1e-3, -7e5, 0.1, 2.0f64.powi(70), -2.0f64.powi(-80), 5.0];
        for p in [2u32, 5, 11, 24, 53, 62] {
            for mode in RoundingMode::ALL {
                let ctx = WordContext::new(p, mode).unwrap();
                for &a in &xs {
                    for &b in &xs {
                        let (wa, wb) = (ctx.from_f64(a).unwrap(), ctx.from_f64(b).unwrap());
                        let (sa, sb) = (ctx.to_softfloat(wa), ctx.to_softfloat(wb));
                        let same = |w: Result<WordFloat, ArithError>, s: Result<SoftFloat, ArithError>| match (w, s) {
                            (Ok(w), Ok(s)) => assert_eq!(ctx.to_softfloat(w), s, "p={p} {mode} a={a} b={b}"),
                            (Err(_), Err(_)) => {}
                            (w, s) => panic!("disagree: {w:?} vs {s:?}"),
                        };
                        same(ctx.add(wa, wb), sa.add(&sb));
                        same(ctx.sub(wa, wb), sa.sub(&sb));
                        same(ctx.mul(wa, wb), sa.mul(&sb));
                        same(ctx.div(wa, wb), sa.div(&sb));
                        assert_eq!(ctx.cmp(wa, wb), sa.cmp(&sb));
                        let (s1, r1) = ctx.sum_residual(wa, wb).unwrap();
                        let (s2, r2) = sa.sum_residual(&sb).unwrap();
                        assert_eq!((ctx.to_softfloat(s1), ctx.to_softfloat(r1)), (s2, r2));
                        let (p1, q1) = ctx.product_residual(wa, wb).unwrap();
                        let (p2, q2) = sa.product_residual(&sb).unwrap();
                        assert_eq!((ctx.to_softfloat(p1), ctx.to_softfloat(q1)), (p2, q2));
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_wide_precisions() {
        assert!(WordContext::new(63, RoundingMode::Rne).is_err());
        assert!(WordContext::new(1, RoundingMode::Rne).is_err());
    }
}
