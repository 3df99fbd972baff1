//! Binary floating point with a configurable significand width and rounding
//! mode, and an exponent that never overflows or underflows.
//!
//! A finite value is `(-1)^neg * sig * 2^exp` where `sig` has exactly
//! `prec` bits with the top one set. `prec` counts every significand bit,
//! the leading one included, so IEEE binary32 corresponds to `prec = 24`
//! and binary64 to `prec = 53`.
//!
//! Every arithmetic operation computes the exact result and rounds it once.
//! Precisions up to [`WORD_PRECISION`] run on machine words; wider ones fall
//! back to big integers.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};

use crate::error::ArithError;
use crate::rounding::{shift_round_mag_big, shift_round_mag_u128, RoundingMode};

pub const MIN_PRECISION: u32 = 2;
/// Widest precision whose operations run on `u64`/`u128` words.
pub const WORD_PRECISION: u32 = 62;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Sig {
    Word(u64),
    Wide(BigUint),
}

#[derive(Clone, Debug)]
enum Repr {
    Zero,
    Inf(bool),
    Finite { neg: bool, exp: i64, sig: Sig },
}

#[derive(Clone, Debug)]
pub struct SoftFloat {
    prec: u32,
    mode: RoundingMode,
    repr: Repr,
}

/// Sign, magnitude and binary exponent of an exact finite value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactParts {
    pub neg: bool,
    pub mag: BigUint,
    pub exp: i64,
}

pub fn check_precision(prec: u32) -> Result<(), ArithError> {
    if prec < MIN_PRECISION {
        Err(ArithError::InvalidPrecision(prec))
    } else {
        Ok(())
    }
}

fn finite_word(neg: bool, exp: i64, kept: u128, prec: u32) -> Repr {
    let sig = if prec <= WORD_PRECISION {
        Sig::Word(kept as u64)
    } else {
        Sig::Wide(BigUint::from(kept))
    };
    Repr::Finite { neg, exp, sig }
}

/// Round `±(mag + δ) * 2^exp` to `prec` bits, where `δ ∈ (0, 1)` is present
/// iff `sticky`. With `sticky` set, `mag` must hold at least `prec + 1` bits.
fn round_u128(neg: bool, mag: u128, exp: i64, sticky: bool, prec: u32, mode: RoundingMode) -> Repr {
    if mag == 0 {
        debug_assert!(!sticky);
        return Repr::Zero;
    }
    let bits = 128 - mag.leading_zeros();
    if bits > prec {
        let shift = bits - prec;
        let mut kept = shift_round_mag_u128(mag, shift, sticky, mode);
        let mut e = exp + i64::from(shift);
        if kept >> prec != 0 {
            kept >>= 1;
            e += 1;
        }
        finite_word(neg, e, kept, prec)
    } else {
        debug_assert!(!sticky, "sticky rounding needs guard bits");
        let shift = prec - bits;
        let e = exp - i64::from(shift);
        if prec < 128 {
            finite_word(neg, e, mag << shift, prec)
        } else {
            Repr::Finite { neg, exp: e, sig: Sig::Wide(BigUint::from(mag) << shift) }
        }
    }
}

fn round_big(neg: bool, mag: &BigUint, exp: i64, sticky: bool, prec: u32, mode: RoundingMode) -> Repr {
    if mag.is_zero() {
        debug_assert!(!sticky);
        return Repr::Zero;
    }
    let bits = mag.bits();
    let prec64 = u64::from(prec);
    let (sig, e) = if bits > prec64 {
        let shift = bits - prec64;
        let mut kept = shift_round_mag_big(mag, shift, sticky, mode);
        let mut e = exp + shift as i64;
        if kept.bits() > prec64 {
            kept >>= 1u32;
            e += 1;
        }
        (kept, e)
    } else {
        debug_assert!(!sticky, "sticky rounding needs guard bits");
        let shift = prec64 - bits;
        (mag << shift, exp - shift as i64)
    };
    let sig = if prec <= WORD_PRECISION {
        Sig::Word(sig.to_u64().expect("significand fits a word"))
    } else {
        Sig::Wide(sig)
    };
    Repr::Finite { neg, exp: e, sig }
}

/// `±m1·2^e1 ± m2·2^e2` rounded once. Alignment is capped so that a tiny
/// operand far below the other only contributes a sticky bit.
#[allow(clippy::too_many_arguments)]
fn add_parts_big(
    n1: bool,
    m1: &BigUint,
    e1: i64,
    n2: bool,
    m2: &BigUint,
    e2: i64,
    prec: u32,
    mode: RoundingMode,
) -> Repr {
    if m1.is_zero() {
        return round_big(n2, m2, e2, false, prec, mode);
    }
    if m2.is_zero() {
        return round_big(n1, m1, e1, false, prec, mode);
    }
    let ((nh, mh, eh), (nl, ml, el)) = if e1 >= e2 {
        ((n1, m1, e1), (n2, m2, e2))
    } else {
        ((n2, m2, e2), (n1, m1, e1))
    };
    let d = (i128::from(eh) - i128::from(el)) as u128;
    let limit = u128::from(mh.bits() + ml.bits()) + u128::from(prec) + 8;
    if d <= limit {
        let x = mh << (d as u64);
        if nh == nl {
            round_big(nh, &(x + ml), el, false, prec, mode)
        } else {
            match x.cmp(ml) {
                Ordering::Equal => Repr::Zero,
                Ordering::Greater => round_big(nh, &(x - ml), el, false, prec, mode),
                Ordering::Less => round_big(nl, &(ml - x), el, false, prec, mode),
            }
        }
    } else {
        // The low operand sits entirely below one unit of `mh << k`.
        let k = u64::from(prec) + 3;
        let x = mh << k;
        let e = eh - k as i64;
        if nh == nl {
            round_big(nh, &x, e, true, prec, mode)
        } else {
            round_big(nh, &(x - 1u32), e, true, prec, mode)
        }
    }
}

/// Exact `±m1·2^e1 ± m2·2^e2` without rounding. Only used where the caller
/// knows the exponents are close.
fn exact_add_parts(n1: bool, m1: &BigUint, e1: i64, n2: bool, m2: &BigUint, e2: i64) -> ExactParts {
    let e = e1.min(e2);
    let a = m1 << ((e1 - e) as u64);
    let b = m2 << ((e2 - e) as u64);
    let (neg, mag) = if n1 == n2 {
        (n1, a + b)
    } else if a >= b {
        (n1, a - b)
    } else {
        (n2, b - a)
    };
    ExactParts { neg, mag, exp: e }
}

impl SoftFloat {
    pub fn zero(prec: u32, mode: RoundingMode) -> Self {
        assert!(prec >= MIN_PRECISION, "precision must be at least 2 bits");
        SoftFloat { prec, mode, repr: Repr::Zero }
    }

    pub fn infinity(neg: bool, prec: u32, mode: RoundingMode) -> Self {
        assert!(prec >= MIN_PRECISION, "precision must be at least 2 bits");
        SoftFloat { prec, mode, repr: Repr::Inf(neg) }
    }

    pub fn one(prec: u32, mode: RoundingMode) -> Self {
        Self::from_i64(1, prec, mode).expect("valid precision")
    }

    fn with(&self, repr: Repr) -> Self {
        SoftFloat { prec: self.prec, mode: self.mode, repr }
    }

    /// Round the exact value `±mag · 2^exp` to `prec` bits.
    pub fn round_exact(
        neg: bool,
        mag: &BigUint,
        exp: i64,
        prec: u32,
        mode: RoundingMode,
    ) -> Result<Self, ArithError> {
        check_precision(prec)?;
        let repr = if mag.bits() <= 127 {
            round_u128(neg, mag.to_u128().unwrap_or(0), exp, false, prec, mode)
        } else {
            round_big(neg, mag, exp, false, prec, mode)
        };
        Ok(SoftFloat { prec, mode, repr })
    }

    /// Word-sized variant of [`SoftFloat::round_exact`].
    pub fn round_u128(neg: bool, mag: u128, exp: i64, prec: u32, mode: RoundingMode) -> Self {
        assert!(prec >= MIN_PRECISION, "precision must be at least 2 bits");
        SoftFloat { prec, mode, repr: round_u128(neg, mag, exp, false, prec, mode) }
    }

    /// Correctly rounded conversion of a rational.
    pub fn from_rational(v: &BigRational, prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        check_precision(prec)?;
        if v.is_zero() {
            return Ok(Self::zero(prec, mode));
        }
        let neg = v.is_negative();
        let n = v.numer().magnitude();
        let d = v.denom().magnitude();
        // Scale so the integer quotient carries at least prec + 2 bits.
        let k = i64::from(prec) + 3 + d.bits() as i64 - n.bits() as i64;
        let (num, den) = if k >= 0 {
            (n << (k as u64), d.clone())
        } else {
            (n.clone(), d << ((-k) as u64))
        };
        let (q, r) = num.div_rem(&den);
        let repr = round_big(neg, &q, -k, !r.is_zero(), prec, mode);
        Ok(SoftFloat { prec, mode, repr })
    }

    pub fn from_i64(v: i64, prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        check_precision(prec)?;
        Ok(SoftFloat {
            prec,
            mode,
            repr: round_u128(v < 0, u128::from(v.unsigned_abs()), 0, false, prec, mode),
        })
    }

    /// Correctly rounded conversion from a binary64 value.
    pub fn from_f64(x: f64, prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        check_precision(prec)?;
        if x.is_nan() {
            return Err(ArithError::InvalidOperation("NaN has no soft-float encoding"));
        }
        if x.is_infinite() {
            return Ok(Self::infinity(x < 0.0, prec, mode));
        }
        if x == 0.0 {
            return Ok(Self::zero(prec, mode));
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
        Ok(SoftFloat { prec, mode, repr: round_u128(neg, u128::from(mant), exp, false, prec, mode) })
    }

    pub fn from_f32(x: f32, prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        Self::from_f64(f64::from(x), prec, mode)
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero)
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self.repr, Repr::Inf(_))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.repr, Repr::Inf(_))
    }

    pub fn is_negative(&self) -> bool {
        match self.repr {
            Repr::Zero => false,
            Repr::Inf(neg) | Repr::Finite { neg, .. } => neg,
        }
    }

    /// Exponent of the leading significand bit, for finite non-zero values.
    pub fn leading_exponent(&self) -> Option<i64> {
        match &self.repr {
            Repr::Finite { exp, .. } => Some(exp + i64::from(self.prec) - 1),
            _ => None,
        }
    }

    /// `(neg, significand, exponent)` when the significand fits a word.
    #[inline]
    pub fn word_parts(&self) -> Option<(bool, u64, i64)> {
        match &self.repr {
            Repr::Finite { neg, exp, sig: Sig::Word(s) } => Some((*neg, *s, *exp)),
            _ => None,
        }
    }

    /// Exact decomposition of a finite value; `None` for zero and infinities.
    pub fn parts(&self) -> Option<ExactParts> {
        match &self.repr {
            Repr::Finite { neg, exp, sig } => Some(ExactParts { neg: *neg, mag: sig_big(sig), exp: *exp }),
            _ => None,
        }
    }

    pub fn to_rational(&self) -> Option<BigRational> {
        match &self.repr {
            Repr::Zero => Some(BigRational::zero()),
            Repr::Inf(_) => None,
            Repr::Finite { neg, exp, sig } => {
                let mag = BigInt::from_biguint(if *neg { Sign::Minus } else { Sign::Plus }, sig_big(sig));
                Some(if *exp >= 0 {
                    BigRational::from_integer(mag << (*exp as u64))
                } else {
                    BigRational::new(mag, BigInt::one() << ((-*exp) as u64))
                })
            }
        }
    }

    pub fn neg(&self) -> Self {
        let repr = match &self.repr {
            Repr::Zero => Repr::Zero,
            Repr::Inf(n) => Repr::Inf(!n),
            Repr::Finite { neg, exp, sig } => Repr::Finite { neg: !neg, exp: *exp, sig: sig.clone() },
        };
        self.with(repr)
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            self.neg()
        } else {
            self.clone()
        }
    }

    /// Re-round to another precision and mode.
    pub fn round_to(&self, prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        check_precision(prec)?;
        let repr = match &self.repr {
            Repr::Zero => Repr::Zero,
            Repr::Inf(n) => Repr::Inf(*n),
            Repr::Finite { neg, exp, sig: Sig::Word(s) } => {
                round_u128(*neg, u128::from(*s), *exp, false, prec, mode)
            }
            Repr::Finite { neg, exp, sig: Sig::Wide(s) } => round_big(*neg, s, *exp, false, prec, mode),
        };
        Ok(SoftFloat { prec, mode, repr })
    }

    fn check_compat(&self, rhs: &Self) -> Result<(), ArithError> {
        if self.prec != rhs.prec || self.mode != rhs.mode {
            return Err(ArithError::PrecisionMismatch {
                left: format!("p={} {}", self.prec, self.mode),
                right: format!("p={} {}", rhs.prec, rhs.mode),
            });
        }
        Ok(())
    }

    #[inline]
    fn word_path(&self) -> bool {
        self.prec <= WORD_PRECISION
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(&self, rhs: &Self) -> Result<Self, ArithError> {
        self.check_compat(rhs)?;
        Ok(self.with(self.add_repr(rhs, false)?))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(&self, rhs: &Self) -> Result<Self, ArithError> {
        self.check_compat(rhs)?;
        Ok(self.with(self.add_repr(rhs, true)?))
    }

    fn add_repr(&self, rhs: &Self, negate: bool) -> Result<Repr, ArithError> {
        Ok(match (&self.repr, &rhs.repr) {
            (Repr::Zero, Repr::Zero) => Repr::Zero,
            (Repr::Zero, _) => {
                if negate {
                    rhs.neg().repr
                } else {
                    rhs.repr.clone()
                }
            }
            (_, Repr::Zero) => self.repr.clone(),
            (Repr::Inf(a), Repr::Inf(b)) => {
                if *a == (*b ^ negate) {
                    Repr::Inf(*a)
                } else {
                    return Err(ArithError::InvalidOperation("infinity minus infinity"));
                }
            }
            (Repr::Inf(a), _) => Repr::Inf(*a),
            (_, Repr::Inf(b)) => Repr::Inf(*b ^ negate),
            (
                Repr::Finite { neg: na, exp: ea, sig: sa },
                Repr::Finite { neg: nb, exp: eb, sig: sb },
            ) => {
                let nb = *nb ^ negate;
                match (sa, sb) {
                    (Sig::Word(x), Sig::Word(y)) if self.word_path() => {
                        add_words(*na, *ea, *x, nb, *eb, *y, self.prec, self.mode).0
                    }
                    _ => add_parts_big(*na, &sig_big(sa), *ea, nb, &sig_big(sb), *eb, self.prec, self.mode),
                }
            }
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(&self, rhs: &Self) -> Result<Self, ArithError> {
        self.check_compat(rhs)?;
        let repr = match (&self.repr, &rhs.repr) {
            (Repr::Zero, Repr::Inf(_)) | (Repr::Inf(_), Repr::Zero) => {
                return Err(ArithError::InvalidOperation("zero times infinity"))
            }
            (Repr::Zero, _) | (_, Repr::Zero) => Repr::Zero,
            (Repr::Inf(a), b) | (b, Repr::Inf(a)) => {
                let nb = match b {
                    Repr::Inf(n) | Repr::Finite { neg: n, .. } => *n,
                    Repr::Zero => unreachable!(),
                };
                Repr::Inf(*a ^ nb)
            }
            (
                Repr::Finite { neg: na, exp: ea, sig: sa },
                Repr::Finite { neg: nb, exp: eb, sig: sb },
            ) => {
                let neg = na ^ nb;
                let exp = ea + eb;
                match (sa, sb) {
                    (Sig::Word(x), Sig::Word(y)) => {
                        round_u128(neg, u128::from(*x) * u128::from(*y), exp, false, self.prec, self.mode)
                    }
                    _ => round_big(neg, &(sig_big(sa) * sig_big(sb)), exp, false, self.prec, self.mode),
                }
            }
        };
        Ok(self.with(repr))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(&self, rhs: &Self) -> Result<Self, ArithError> {
        self.check_compat(rhs)?;
        let repr = match (&self.repr, &rhs.repr) {
            (Repr::Zero, Repr::Zero) => return Err(ArithError::InvalidOperation("zero divided by zero")),
            (Repr::Inf(_), Repr::Inf(_)) => {
                return Err(ArithError::InvalidOperation("infinity divided by infinity"))
            }
            (Repr::Finite { neg, .. }, Repr::Zero) => Repr::Inf(*neg),
            (Repr::Inf(a), Repr::Zero) => Repr::Inf(*a),
            (Repr::Inf(a), Repr::Finite { neg, .. }) => Repr::Inf(a ^ neg),
            (Repr::Zero, _) | (Repr::Finite { .. }, Repr::Inf(_)) => Repr::Zero,
            (
                Repr::Finite { neg: na, exp: ea, sig: sa },
                Repr::Finite { neg: nb, exp: eb, sig: sb },
            ) => {
                let neg = na ^ nb;
                let shift = self.prec + 2;
                let exp = ea - eb - i64::from(shift);
                match (sa, sb) {
                    (Sig::Word(x), Sig::Word(y)) if self.prec <= 63 => {
                        let num = u128::from(*x) << shift;
                        let den = u128::from(*y);
                        round_u128(neg, num / den, exp, num % den != 0, self.prec, self.mode)
                    }
                    _ => {
                        let num = sig_big(sa) << shift;
                        let (q, r) = num.div_rem(&sig_big(sb));
                        round_big(neg, &q, exp, !r.is_zero(), self.prec, self.mode)
                    }
                }
            }
        };
        Ok(self.with(repr))
    }

    /// Division by a positive integer with a single rounding.
    pub fn div_int(&self, n: u64) -> Result<Self, ArithError> {
        if n == 0 {
            return self.div(&Self::zero(self.prec, self.mode));
        }
        match self.to_rational() {
            None => Ok(self.clone()),
            Some(r) => Self::from_rational(&(r / BigRational::from_integer(BigInt::from(n))), self.prec, self.mode),
        }
    }

    /// `self * b + c` with one rounding.
    pub fn mul_add(&self, b: &Self, c: &Self) -> Result<Self, ArithError> {
        self.check_compat(b)?;
        self.check_compat(c)?;
        let (p, q) = match (self.parts(), b.parts()) {
            (Some(p), Some(q)) => (p, q),
            _ => return self.mul(b)?.add(c),
        };
        let Some(r) = c.parts() else {
            if c.is_zero() {
                return self.mul(b);
            }
            return Ok(c.clone());
        };
        let prod = &p.mag * &q.mag;
        let repr = add_parts_big(p.neg ^ q.neg, &prod, p.exp + q.exp, r.neg, &r.mag, r.exp, self.prec, self.mode);
        Ok(self.with(repr))
    }

    /// Rounded sum `s = fl(a + b)` together with `fl((a + b) - s)`.
    ///
    /// Under round-to-nearest-even the second component is exact, so the
    /// pair is an error-free transformation.
    pub fn sum_residual(&self, rhs: &Self) -> Result<(Self, Self), ArithError> {
        self.check_compat(rhs)?;
        let zero = Self::zero(self.prec, self.mode);
        if let (Repr::Finite { neg: na, exp: ea, sig: Sig::Word(x) }, Repr::Finite { neg: nb, exp: eb, sig: Sig::Word(y) }) =
            (&self.repr, &rhs.repr)
        {
            if self.word_path() {
                let (s, exact) = add_words(*na, *ea, *x, *nb, *eb, *y, self.prec, self.mode);
                if let Some((en, emag, eexp)) = exact {
                    let s = self.with(s);
                    let residual = match s.word_parts() {
                        None => zero,
                        Some((sn, ss, se)) => {
                            // s is the rounding of the exact sum, so its lsb is not below eexp
                            // whenever anything was discarded.
                            if se < eexp {
                                zero
                            } else {
                                let sa = u128::from(ss) << (se - eexp);
                                let (rn, rm) = signed_sub(en, emag, sn, sa);
                                self.with(round_u128(rn, rm, eexp, false, self.prec, self.mode))
                            }
                        }
                    };
                    return Ok((s, residual));
                }
            }
        }
        let s = self.add(rhs)?;
        let (Some(a), Some(b), Some(sp)) = (self.parts(), rhs.parts(), s.parts()) else {
            return Ok((s, zero));
        };
        // The larger-exponent operand stays within a couple of ulps of s, so
        // aligning it against s is cheap; the other operand is folded in with
        // capped alignment.
        let (big, small) = if a.exp >= b.exp { (a, b) } else { (b, a) };
        let t = exact_add_parts(big.neg, &big.mag, big.exp, !sp.neg, &sp.mag, sp.exp);
        let repr = add_parts_big(t.neg, &t.mag, t.exp, small.neg, &small.mag, small.exp, self.prec, self.mode);
        Ok((s, self.with(repr)))
    }

    /// Rounded product `p = fl(a * b)` together with `fl(a * b - p)`.
    pub fn product_residual(&self, rhs: &Self) -> Result<(Self, Self), ArithError> {
        let p = self.mul(rhs)?;
        let zero = Self::zero(self.prec, self.mode);
        if let (Some((na, x, ea)), Some((nb, y, eb)), Some((_, ps, pe))) =
            (self.word_parts(), rhs.word_parts(), p.word_parts())
        {
            let exact = u128::from(x) * u128::from(y);
            let exp = ea + eb;
            if pe < exp {
                return Ok((p, zero));
            }
            let pa = u128::from(ps) << (pe - exp);
            let neg = na ^ nb;
            let (rn, rm) = signed_sub(neg, exact, neg, pa);
            return Ok((p, self.with(round_u128(rn, rm, exp, false, self.prec, self.mode))));
        }
        let (Some(a), Some(b), Some(pp)) = (self.parts(), rhs.parts(), p.parts()) else {
            return Ok((p, zero));
        };
        let prod = &a.mag * &b.mag;
        let neg = a.neg ^ b.neg;
        let repr = add_parts_big(neg, &prod, a.exp + b.exp, !pp.neg, &pp.mag, pp.exp, self.prec, self.mode);
        Ok((p, self.with(repr)))
    }

    /// Total order on values; precision and mode are ignored.
    pub fn cmp_value(&self, other: &Self) -> Ordering {
        fn rank(r: &Repr) -> i8 {
            match r {
                Repr::Inf(true) => -2,
                Repr::Finite { neg: true, .. } => -1,
                Repr::Zero => 0,
                Repr::Finite { neg: false, .. } => 1,
                Repr::Inf(false) => 2,
            }
        }
        let (ra, rb) = (rank(&self.repr), rank(&other.repr));
        if ra != rb || ra.abs() != 1 {
            return ra.cmp(&rb);
        }
        let mag = self.cmp_abs(other);
        if ra < 0 {
            mag.reverse()
        } else {
            mag
        }
    }

    /// Compare magnitudes.
    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        match (&self.repr, &other.repr) {
            (Repr::Zero, Repr::Zero) | (Repr::Inf(_), Repr::Inf(_)) => Ordering::Equal,
            (Repr::Zero, _) | (_, Repr::Inf(_)) => Ordering::Less,
            (_, Repr::Zero) | (Repr::Inf(_), _) => Ordering::Greater,
            (Repr::Finite { exp: ea, sig: sa, .. }, Repr::Finite { exp: eb, sig: sb, .. }) => {
                if let (Sig::Word(x), Sig::Word(y)) = (sa, sb) {
                    let ta = ea + i64::from(64 - x.leading_zeros());
                    let tb = eb + i64::from(64 - y.leading_zeros());
                    if ta != tb {
                        return ta.cmp(&tb);
                    }
                    // Equal leading positions: the lsb gap is below 64.
                    return if ea >= eb {
                        (u128::from(*x) << (ea - eb)).cmp(&u128::from(*y))
                    } else {
                        u128::from(*x).cmp(&(u128::from(*y) << (eb - ea)))
                    };
                }
                let (x, y) = (sig_big(sa), sig_big(sb));
                let ta = ea + x.bits() as i64;
                let tb = eb + y.bits() as i64;
                if ta != tb {
                    return ta.cmp(&tb);
                }
                if ea >= eb {
                    (x << ((ea - eb) as u64)).cmp(&y)
                } else {
                    x.cmp(&(y << ((eb - ea) as u64)))
                }
            }
        }
    }

    pub fn max<'a>(&'a self, other: &'a Self) -> &'a Self {
        if other.cmp_value(self) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    /// Nearest binary64 value (ties to even, gradual underflow).
    pub fn to_f64(&self) -> f64 {
        match &self.repr {
            Repr::Zero => 0.0,
            Repr::Inf(n) => {
                if *n {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
            Repr::Finite { neg, exp, sig } => {
                let v = compose_native(&sig_big(sig), *exp, 53, -1074, 1023);
                if *neg {
                    -v
                } else {
                    v
                }
            }
        }
    }

    /// Nearest binary32 value (ties to even, gradual underflow).
    pub fn to_f32(&self) -> f32 {
        match &self.repr {
            Repr::Finite { neg, exp, sig } => {
                // Exact in binary64, so the narrowing cast does not round again.
                let v = compose_native(&sig_big(sig), *exp, 24, -149, 127) as f32;
                if *neg {
                    -v
                } else {
                    v
                }
            }
            _ => self.to_f64() as f32,
        }
    }

    /// Parse a decimal literal (`-1.25e-3`, `inf`), rounding once.
    pub fn from_decimal(s: &str, prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        check_precision(prec)?;
        match parse_decimal(s)? {
            Parsed::Inf(neg) => Ok(Self::infinity(neg, prec, mode)),
            Parsed::Finite(r) => Self::from_rational(&r, prec, mode),
        }
    }

    /// Shortest decimal string that reads back to the same value at the same
    /// precision and mode.
    pub fn to_decimal(&self) -> String {
        let (neg, exact) = match &self.repr {
            Repr::Zero => return "0".to_string(),
            Repr::Inf(n) => return if *n { "-inf".into() } else { "inf".into() },
            Repr::Finite { neg, .. } => (*neg, self.to_rational().expect("finite").abs()),
        };
        let max_digits = exact_decimal_digits(&exact);
        for n in 1..=max_digits {
            let (near, other, k) = decimal_candidates(&exact, n);
            for digits in [near, other] {
                let candidate = decimal_to_rational(&digits, k, n);
                let back = Self::from_rational(&candidate, self.prec, self.mode).expect("valid precision");
                if back.abs().cmp_value(&self.abs()) == Ordering::Equal {
                    return format_decimal(neg, &digits.to_string(), k);
                }
            }
        }
        unreachable!("the exact expansion always reads back")
    }
}

/// Outcome of a word add: the rounded result and, when the sum was formed
/// exactly, the unrounded `(neg, mag, exp)`.
type WordSum = (Repr, Option<(bool, u128, i64)>);

#[allow(clippy::too_many_arguments)]
#[inline]
fn add_words(na: bool, ea: i64, sa: u64, nb: bool, eb: i64, sb: u64, prec: u32, mode: RoundingMode) -> WordSum {
    let ((nx, ex, sx), (ny, ey, sy)) = if ea >= eb { ((na, ea, sa), (nb, eb, sb)) } else { ((nb, eb, sb), (na, ea, sa)) };
    let d = (i128::from(ex) - i128::from(ey)) as u128;
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
        (round_u128(neg, mag, ey, false, prec, mode), Some((neg, mag, ey)))
    } else {
        let x = u128::from(sx) << 64;
        let e = ex - 64;
        let sh = d - 64;
        let (y, sticky) = if sh >= 64 {
            (0u128, true)
        } else {
            (u128::from(sy >> sh), sy & ((1u64 << sh) - 1) != 0)
        };
        let mag = if nx == ny { x + y } else { x - y - u128::from(sticky) };
        (round_u128(nx, mag, e, sticky, prec, mode), None)
    }
}

#[inline]
fn signed_sub(na: bool, a: u128, nb: bool, b: u128) -> (bool, u128) {
    // (±a) - (±b)
    let nb = !nb;
    if na == nb {
        (na, a + b)
    } else if a >= b {
        (na, a - b)
    } else {
        (nb, b - a)
    }
}

fn sig_big(sig: &Sig) -> BigUint {
    match sig {
        Sig::Word(w) => BigUint::from(*w),
        Sig::Wide(b) => b.clone(),
    }
}

/// Value of `mag * 2^exp` rounded (RNE) to a native binary format with
/// `mant` significand bits, smallest subnormal exponent `min_lsb` and
/// largest leading-bit exponent `max_top`.
fn compose_native(mag: &BigUint, exp: i64, mant: u32, min_lsb: i64, max_top: i64) -> f64 {
    let bits = mag.bits() as i64;
    let top = exp + bits - 1;
    // lsb of the result: mant bits below the top, but never below min_lsb.
    let lsb = (top - i64::from(mant) + 1).max(min_lsb);
    let rounded = if lsb > exp {
        shift_round_mag_big(mag, (lsb - exp) as u64, false, RoundingMode::Rne)
    } else {
        mag << ((exp - lsb) as u64)
    };
    if rounded.is_zero() {
        return 0.0;
    }
    let rtop = lsb + rounded.bits() as i64 - 1;
    if rtop > max_top {
        return f64::INFINITY;
    }
    let m = rounded.to_u64().expect("at most 53 bits") as f64;
    // m < 2^53 is exact; scaling by a power of two is exact for normal results.
    m * pow2(lsb)
}

fn pow2(e: i64) -> f64 {
    // Split to avoid intermediate overflow/underflow of a single factor.
    if e >= -1022 && e <= 1023 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else if e < -1022 {
        pow2(e + 600) * pow2(-600)
    } else {
        pow2(e - 600) * pow2(600)
    }
}

impl PartialEq for SoftFloat {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_value(other) == Ordering::Equal
    }
}

impl Eq for SoftFloat {}

impl PartialOrd for SoftFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SoftFloat {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_value(other)
    }
}

impl fmt::Display for SoftFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

enum Parsed {
    Inf(bool),
    Finite(BigRational),
}

fn parse_decimal(s: &str) -> Result<Parsed, ArithError> {
    let err = || ArithError::Parse(s.to_string());
    let t = s.trim();
    let (neg, body) = match t.as_bytes().first() {
        Some(b'-') => (true, &t[1..]),
        Some(b'+') => (false, &t[1..]),
        _ => (false, t),
    };
    let lower = body.to_ascii_lowercase();
    if lower == "inf" || lower == "infinity" {
        return Ok(Parsed::Inf(neg));
    }
    let (mantissa, exponent) = match lower.find('e') {
        Some(i) => (&lower[..i], lower[i + 1..].parse::<i64>().map_err(|_| err())?),
        None => (lower.as_str(), 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    if exponent.abs() > 1_000_000 {
        return Err(err());
    }
    let digits: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| err())?;
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let mut r = if scale >= 0 {
        BigRational::from_integer(digits * Pow::pow(&ten, scale as u64))
    } else {
        BigRational::new(digits, Pow::pow(&ten, (-scale) as u64))
    };
    if neg {
        r = -r;
    }
    Ok(Parsed::Finite(r))
}

pub(crate) fn parse_finite_decimal(s: &str) -> Result<BigRational, ArithError> {
    match parse_decimal(s)? {
        Parsed::Finite(r) => Ok(r),
        Parsed::Inf(_) => Err(ArithError::Parse(s.to_string())),
    }
}

fn exact_decimal_digits(v: &BigRational) -> u64 {
    // v = n / 2^k: the expansion has as many digits as n * 5^k.
    let den = v.denom().magnitude();
    let k = den.trailing_zeros().unwrap_or(0);
    let n = v.numer().magnitude() * Pow::pow(&BigUint::from(5u32), k);
    n.to_string().trim_end_matches('0').len().max(1) as u64
}

/// Nearest `n`-digit decimal of `v > 0`, the other neighbour, and the
/// decimal exponent of the leading digit.
fn decimal_candidates(v: &BigRational, n: u64) -> (BigInt, BigInt, i64) {
    let ten = BigRational::from_integer(BigInt::from(10u32));
    // Estimate floor(log10 v) from bit lengths, then correct.
    let bits = v.numer().bits() as i64 - v.denom().bits() as i64;
    let mut k = (bits as f64 * std::f64::consts::LOG10_2).floor() as i64;
    loop {
        let p = pow10(&ten, k);
        if &p > v {
            k -= 1;
        } else if &(p * &ten) <= v {
            k += 1;
        } else {
            break;
        }
    }
    let scaled = v * pow10(&ten, n as i64 - 1 - k);
    let floor = scaled.floor().to_integer();
    let frac = &scaled - BigRational::from_integer(floor.clone());
    let half = BigRational::new(BigInt::one(), BigInt::from(2u32));
    let ceil = if frac.is_zero() { floor.clone() } else { &floor + 1u32 };
    let (near, other) = match frac.cmp(&half) {
        Ordering::Less => (floor, ceil),
        Ordering::Greater => (ceil, floor),
        Ordering::Equal if floor.is_even() => (floor, ceil),
        Ordering::Equal => (ceil, floor),
    };
    let limit = Pow::pow(&BigInt::from(10u32), n);
    let fix = |d: BigInt| -> (BigInt, i64) {
        if d >= limit {
            (d / 10u32, k + 1)
        } else {
            (d, k)
        }
    };
    let (near, kn) = fix(near);
    let (other, _) = fix(other);
    (near, other, kn)
}

fn pow10(ten: &BigRational, e: i64) -> BigRational {
    if e >= 0 {
        Pow::pow(ten, e as u64)
    } else {
        Pow::pow(ten, (-e) as u64).recip()
    }
}

fn decimal_to_rational(digits: &BigInt, k: i64, n: u64) -> BigRational {
    let ten = BigRational::from_integer(BigInt::from(10u32));
    BigRational::from_integer(digits.clone()) * pow10(&ten, k - (n as i64 - 1))
}

fn format_decimal(neg: bool, digits: &str, k: i64) -> String {
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if neg { "-" } else { "" };
    let n = digits.len() as i64;
    if (-7..21).contains(&k) {
        if k >= n - 1 {
            format!("{sign}{digits}{}", "0".repeat((k - n + 1) as usize))
        } else if k >= 0 {
            let (a, b) = digits.split_at((k + 1) as usize);
            format!("{sign}{a}.{b}")
        } else {
            format!("{sign}0.{}{digits}", "0".repeat((-k - 1) as usize))
        }
    } else if n == 1 {
        format!("{sign}{digits}e{k}")
    } else {
        format!("{sign}{}.{}e{k}", &digits[..1], &digits[1..])
    }
}
