//! Scalar backends behind a single trait so reductions, the runtime and the
//! harness are written once.
//!
//! A backend is a small context object (precision, rounding mode, format)
//! plus a scalar type. Scalars stay compact because the context carries the
//! configuration.

use std::cmp::Ordering;
use std::fmt;
use std::marker::PhantomData;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::ArithError;
use crate::exact::ExactAccumulator;
use crate::fixed::{dot_accurate_raw, dot_naive_raw, raw_sum, shift_round, FixedFormat};
use crate::reducers::DotAlgorithm;
use crate::rounding::{div_round_big, div_round_i128, RoundingMode};
use crate::softfloat::{check_precision, SoftFloat};
use crate::wordfloat::{WordContext, WordFloat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithKind {
    Float,
    Fixed,
}

impl ArithKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArithKind::Float => "float",
            ArithKind::Fixed => "fixed",
        }
    }
}

impl fmt::Display for ArithKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ArithKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "float" => Ok(ArithKind::Float),
            "fixed" => Ok(ArithKind::Fixed),
            other => Err(format!("unknown arithmetic '{other}' (expected float or fixed)")),
        }
    }
}

pub trait Arithmetic: Send + Sync {
    type Scalar: Clone + Send + Sync + fmt::Debug;

    fn kind(&self) -> ArithKind;
    fn describe(&self) -> String;

    fn zero(&self) -> Self::Scalar;
    /// Convert a real input, rounding once.
    fn from_f64(&self, x: f64) -> Result<Self::Scalar, ArithError>;
    fn to_f64(&self, x: &Self::Scalar) -> f64;

    fn add(&self, a: &Self::Scalar, b: &Self::Scalar) -> Result<Self::Scalar, ArithError>;
    fn sub(&self, a: &Self::Scalar, b: &Self::Scalar) -> Result<Self::Scalar, ArithError>;
    fn mul(&self, a: &Self::Scalar, b: &Self::Scalar) -> Result<Self::Scalar, ArithError>;
    fn neg(&self, a: &Self::Scalar) -> Self::Scalar;
    fn cmp(&self, a: &Self::Scalar, b: &Self::Scalar) -> Ordering;
    fn is_zero(&self, a: &Self::Scalar) -> bool;

    fn abs(&self, a: &Self::Scalar) -> Self::Scalar {
        if self.cmp(a, &self.zero()) == Ordering::Less {
            self.neg(a)
        } else {
            a.clone()
        }
    }

    fn max(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar {
        if self.cmp(b, a) == Ordering::Greater {
            b.clone()
        } else {
            a.clone()
        }
    }

    /// True sum rounded once.
    fn exact_sum(&self, xs: &[Self::Scalar]) -> Result<Self::Scalar, ArithError>;

    /// True mean `Σ xs / n` rounded once.
    fn exact_mean(&self, xs: &[Self::Scalar]) -> Result<Self::Scalar, ArithError>;

    /// `(fl(a + b), error)` as used by compensated algorithms. Under
    /// round-to-nearest-even the error term is exact; under other modes it is
    /// what the classic six-operation algorithm produces.
    fn two_sum(&self, a: &Self::Scalar, b: &Self::Scalar) -> Result<(Self::Scalar, Self::Scalar), ArithError>;

    /// `(fl(a · b), fl(a · b − fl(a · b)))`, the fused-multiply-add form.
    fn two_product(&self, a: &Self::Scalar, b: &Self::Scalar) -> Result<(Self::Scalar, Self::Scalar), ArithError>;

    /// `Σ x_i y_i` left to right with every product and partial sum rounded.
    fn naive_dot(&self, x: &[Self::Scalar], y: &[Self::Scalar]) -> Result<Self::Scalar, ArithError> {
        if x.len() != y.len() {
            return Err(ArithError::LengthMismatch(x.len(), y.len()));
        }
        let Some((first, rest)) = x.split_first() else {
            return Ok(self.zero());
        };
        let mut acc = self.mul(first, &y[0])?;
        for (xi, yi) in rest.iter().zip(&y[1..]) {
            acc = self.add(&acc, &self.mul(xi, yi)?)?;
        }
        Ok(acc)
    }

    /// Fixed-point dot products; other backends reject the call.
    fn fixed_dot(&self, _x: &[Self::Scalar], _y: &[Self::Scalar], alg: DotAlgorithm) -> Result<Self::Scalar, ArithError> {
        Err(ArithError::Incompatible(format!("{} dot product needs a fixed-point backend", alg)))
    }
}

/// Knuth's branch-free TwoSum, evaluated with the backend's own rounding.
pub fn knuth_two_sum<A: Arithmetic + ?Sized>(
    arith: &A,
    a: &A::Scalar,
    b: &A::Scalar,
) -> Result<(A::Scalar, A::Scalar), ArithError> {
    let s = arith.add(a, b)?;
    let bb = arith.sub(&s, a)?;
    let aa = arith.sub(&s, &bb)?;
    let db = arith.sub(b, &bb)?;
    let da = arith.sub(a, &aa)?;
    Ok((s, arith.add(&da, &db)?))
}

/// Soft float at any precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloatArith {
    prec: u32,
    mode: RoundingMode,
}

impl FloatArith {
    pub fn new(prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        check_precision(prec)?;
        Ok(FloatArith { prec, mode })
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }
}

impl Arithmetic for FloatArith {
    type Scalar = SoftFloat;

    fn kind(&self) -> ArithKind {
        ArithKind::Float
    }

    fn describe(&self) -> String {
        format!("float p={} {}", self.prec, self.mode)
    }

    fn zero(&self) -> SoftFloat {
        SoftFloat::zero(self.prec, self.mode)
    }

    fn from_f64(&self, x: f64) -> Result<SoftFloat, ArithError> {
        SoftFloat::from_f64(x, self.prec, self.mode)
    }

    fn to_f64(&self, x: &SoftFloat) -> f64 {
        x.to_f64()
    }

    fn add(&self, a: &SoftFloat, b: &SoftFloat) -> Result<SoftFloat, ArithError> {
        a.add(b)
    }

    fn sub(&self, a: &SoftFloat, b: &SoftFloat) -> Result<SoftFloat, ArithError> {
        a.sub(b)
    }

    fn mul(&self, a: &SoftFloat, b: &SoftFloat) -> Result<SoftFloat, ArithError> {
        a.mul(b)
    }

    fn neg(&self, a: &SoftFloat) -> SoftFloat {
        a.neg()
    }

    fn cmp(&self, a: &SoftFloat, b: &SoftFloat) -> Ordering {
        a.cmp_value(b)
    }

    fn is_zero(&self, a: &SoftFloat) -> bool {
        a.is_zero()
    }

    fn exact_sum(&self, xs: &[SoftFloat]) -> Result<SoftFloat, ArithError> {
        if let Some(inf) = infinite_sum(xs.iter().filter(|x| x.is_infinite()).map(|x| x.is_negative()))? {
            return Ok(SoftFloat::infinity(inf, self.prec, self.mode));
        }
        let mut acc = ExactAccumulator::new();
        for x in xs {
            acc.add_softfloat(x);
        }
        Ok(acc.round(self.prec, self.mode))
    }

    fn exact_mean(&self, xs: &[SoftFloat]) -> Result<SoftFloat, ArithError> {
        let total = exact_total(xs.iter().map(|x| x.to_rational()))?;
        match total {
            None => self.exact_sum(xs),
            Some(t) => SoftFloat::from_rational(&(t / BigInt::from(xs.len().max(1))), self.prec, self.mode),
        }
    }

    fn two_sum(&self, a: &SoftFloat, b: &SoftFloat) -> Result<(SoftFloat, SoftFloat), ArithError> {
        if self.mode == RoundingMode::Rne {
            a.sum_residual(b)
        } else {
            knuth_two_sum(self, a, b)
        }
    }

    fn two_product(&self, a: &SoftFloat, b: &SoftFloat) -> Result<(SoftFloat, SoftFloat), ArithError> {
        a.product_residual(b)
    }
}

/// Word-sized soft float; bit-identical to [`FloatArith`] for `p <= 62`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordArith {
    ctx: WordContext,
}

impl WordArith {
    pub fn new(prec: u32, mode: RoundingMode) -> Result<Self, ArithError> {
        Ok(WordArith { ctx: WordContext::new(prec, mode)? })
    }

    pub fn context(&self) -> WordContext {
        self.ctx
    }
}

impl Arithmetic for WordArith {
    type Scalar = WordFloat;

    fn kind(&self) -> ArithKind {
        ArithKind::Float
    }

    fn describe(&self) -> String {
        format!("float p={} {}", self.ctx.precision(), self.ctx.mode())
    }

    fn zero(&self) -> WordFloat {
        WordFloat::ZERO
    }

    fn from_f64(&self, x: f64) -> Result<WordFloat, ArithError> {
        self.ctx.from_f64(x)
    }

    fn to_f64(&self, x: &WordFloat) -> f64 {
        self.ctx.to_f64(*x)
    }

    #[inline]
    fn add(&self, a: &WordFloat, b: &WordFloat) -> Result<WordFloat, ArithError> {
        self.ctx.add(*a, *b)
    }

    #[inline]
    fn sub(&self, a: &WordFloat, b: &WordFloat) -> Result<WordFloat, ArithError> {
        self.ctx.sub(*a, *b)
    }

    #[inline]
    fn mul(&self, a: &WordFloat, b: &WordFloat) -> Result<WordFloat, ArithError> {
        self.ctx.mul(*a, *b)
    }

    fn neg(&self, a: &WordFloat) -> WordFloat {
        a.neg()
    }

    fn cmp(&self, a: &WordFloat, b: &WordFloat) -> Ordering {
        self.ctx.cmp(*a, *b)
    }

    fn is_zero(&self, a: &WordFloat) -> bool {
        a.is_zero()
    }

    fn exact_sum(&self, xs: &[WordFloat]) -> Result<WordFloat, ArithError> {
        if let Some(inf) = infinite_sum(xs.iter().filter(|x| x.is_infinite()).map(|x| x.is_negative()))? {
            return Ok(WordFloat::infinity(inf));
        }
        let mut acc = ExactAccumulator::new();
        for x in xs {
            if let Some((neg, sig, exp)) = x.parts() {
                acc.add_u128(neg, u128::from(sig), exp);
            }
        }
        match acc.small_parts() {
            Some((neg, mag, exp)) => Ok(self.ctx.round(neg, mag, exp, false)),
            None => self.ctx.from_softfloat(&acc.round(self.ctx.precision(), self.ctx.mode())),
        }
    }

    fn exact_mean(&self, xs: &[WordFloat]) -> Result<WordFloat, ArithError> {
        let soft: Vec<SoftFloat> = xs.iter().map(|x| self.ctx.to_softfloat(*x)).collect();
        let f = FloatArith::new(self.ctx.precision(), self.ctx.mode())?;
        self.ctx.from_softfloat(&f.exact_mean(&soft)?)
    }

    fn naive_dot(&self, x: &[WordFloat], y: &[WordFloat]) -> Result<WordFloat, ArithError> {
        self.ctx.dot_naive(x, y)
    }

    fn two_sum(&self, a: &WordFloat, b: &WordFloat) -> Result<(WordFloat, WordFloat), ArithError> {
        if self.ctx.mode() == RoundingMode::Rne {
            self.ctx.sum_residual(*a, *b)
        } else {
            knuth_two_sum(self, a, b)
        }
    }

    fn two_product(&self, a: &WordFloat, b: &WordFloat) -> Result<(WordFloat, WordFloat), ArithError> {
        self.ctx.product_residual(*a, *b)
    }
}

/// Fixed point; scalars are raw integers at `fmt.f` fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedArith {
    fmt: FixedFormat,
}

impl FixedArith {
    pub fn new(fmt: FixedFormat) -> Self {
        FixedArith { fmt }
    }

    pub fn format(&self) -> FixedFormat {
        self.fmt
    }
}

impl Arithmetic for FixedArith {
    type Scalar = i64;

    fn kind(&self) -> ArithKind {
        ArithKind::Fixed
    }

    fn describe(&self) -> String {
        format!("fixed {}", self.fmt)
    }

    fn zero(&self) -> i64 {
        0
    }

    fn from_f64(&self, x: f64) -> Result<i64, ArithError> {
        self.fmt.raw_from_f64(x)
    }

    fn to_f64(&self, x: &i64) -> f64 {
        *x as f64 * self.fmt.ulp()
    }

    #[inline]
    fn add(&self, a: &i64, b: &i64) -> Result<i64, ArithError> {
        self.fmt.check_raw(i128::from(*a) + i128::from(*b))
    }

    #[inline]
    fn sub(&self, a: &i64, b: &i64) -> Result<i64, ArithError> {
        self.fmt.check_raw(i128::from(*a) - i128::from(*b))
    }

    #[inline]
    fn mul(&self, a: &i64, b: &i64) -> Result<i64, ArithError> {
        self.fmt.check_raw(shift_round(i128::from(*a) * i128::from(*b), self.fmt.f, self.fmt.mode))
    }

    fn neg(&self, a: &i64) -> i64 {
        -a
    }

    fn cmp(&self, a: &i64, b: &i64) -> Ordering {
        a.cmp(b)
    }

    fn is_zero(&self, a: &i64) -> bool {
        *a == 0
    }

    fn exact_sum(&self, xs: &[i64]) -> Result<i64, ArithError> {
        self.fmt.check_big(&raw_sum(xs.iter().map(|x| i128::from(*x))))
    }

    fn exact_mean(&self, xs: &[i64]) -> Result<i64, ArithError> {
        let n = xs.len().max(1);
        let total = raw_sum(xs.iter().map(|x| i128::from(*x)));
        let q = match num_traits::ToPrimitive::to_i128(&total) {
            Some(t) => BigInt::from(div_round_i128(t, n as i128, self.fmt.mode)),
            None => div_round_big(&total, &BigInt::from(n), self.fmt.mode),
        };
        self.fmt.check_big(&q)
    }

    fn two_sum(&self, a: &i64, b: &i64) -> Result<(i64, i64), ArithError> {
        Ok((self.add(a, b)?, 0))
    }

    fn two_product(&self, _a: &i64, _b: &i64) -> Result<(i64, i64), ArithError> {
        Err(ArithError::Incompatible("error-free products need a floating-point backend".into()))
    }

    fn fixed_dot(&self, x: &[i64], y: &[i64], alg: DotAlgorithm) -> Result<i64, ArithError> {
        match alg {
            DotAlgorithm::FixedAccurate => dot_accurate_raw(x, y, self.fmt),
            DotAlgorithm::FixedNaive => dot_naive_raw(x, y, self.fmt),
            other => Err(ArithError::Incompatible(format!("{other} dot product needs a floating-point backend"))),
        }
    }
}

/// Hardware floating point (`f32`, `f64`) through `num_traits::Float`.
///
/// Serves as the binary32/binary64 reference. Subnormal results of
/// [`Arithmetic::exact_sum`] are rounded as if the exponent were unbounded.
#[derive(Debug)]
pub struct NativeArith<T> {
    prec: u32,
    _marker: PhantomData<T>,
}

impl<T> Clone for NativeArith<T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for NativeArith<T> {}

impl<T: Float> Default for NativeArith<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> NativeArith<T> {
    pub fn new() -> Self {
        let eps = T::epsilon().to_f64().expect("epsilon is finite");
        NativeArith { prec: (1.0 - eps.log2()) as u32, _marker: PhantomData }
    }

    /// Significand bits of `T`, leading bit included.
    pub fn precision(&self) -> u32 {
        self.prec
    }
}

impl<T> Arithmetic for NativeArith<T>
where
    T: Float + Send + Sync + fmt::Debug,
{
    type Scalar = T;

    fn kind(&self) -> ArithKind {
        ArithKind::Float
    }

    fn describe(&self) -> String {
        format!("native binary p={}", self.prec)
    }

    fn zero(&self) -> T {
        T::zero()
    }

    fn from_f64(&self, x: f64) -> Result<T, ArithError> {
        if x.is_nan() {
            return Err(ArithError::InvalidOperation("NaN input"));
        }
        T::from(x).ok_or(ArithError::InvalidOperation("value not representable"))
    }

    fn to_f64(&self, x: &T) -> f64 {
        x.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn add(&self, a: &T, b: &T) -> Result<T, ArithError> {
        Ok(*a + *b)
    }

    #[inline]
    fn sub(&self, a: &T, b: &T) -> Result<T, ArithError> {
        Ok(*a - *b)
    }

    #[inline]
    fn mul(&self, a: &T, b: &T) -> Result<T, ArithError> {
        Ok(*a * *b)
    }

    fn neg(&self, a: &T) -> T {
        -*a
    }

    fn cmp(&self, a: &T, b: &T) -> Ordering {
        a.partial_cmp(b).unwrap_or(Ordering::Equal)
    }

    fn is_zero(&self, a: &T) -> bool {
        a.is_zero()
    }

    fn exact_sum(&self, xs: &[T]) -> Result<T, ArithError> {
        if xs.iter().any(|x| !x.is_finite()) {
            return Ok(xs.iter().fold(T::zero(), |a, b| a + *b));
        }
        let mut acc = ExactAccumulator::new();
        for x in xs {
            acc.add_f64(self.to_f64(x));
        }
        self.from_f64(acc.round(self.prec, RoundingMode::Rne).to_f64())
    }

    fn exact_mean(&self, xs: &[T]) -> Result<T, ArithError> {
        let total = exact_total(xs.iter().map(|x| BigRational::from_float(self.to_f64(x))))?;
        match total {
            None => self.exact_sum(xs),
            Some(t) => {
                let q = SoftFloat::from_rational(&(t / BigInt::from(xs.len().max(1))), self.prec, RoundingMode::Rne)?;
                self.from_f64(q.to_f64())
            }
        }
    }

    fn two_sum(&self, a: &T, b: &T) -> Result<(T, T), ArithError> {
        knuth_two_sum(self, a, b)
    }

    fn two_product(&self, a: &T, b: &T) -> Result<(T, T), ArithError> {
        let p = *a * *b;
        Ok((p, a.mul_add(*b, -p)))
    }
}

/// Exact rational arithmetic: the oracle backend, nothing is ever rounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RationalArith;

impl Arithmetic for RationalArith {
    type Scalar = BigRational;

    fn kind(&self) -> ArithKind {
        ArithKind::Float
    }

    fn describe(&self) -> String {
        "exact rational".into()
    }

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }

    fn from_f64(&self, x: f64) -> Result<BigRational, ArithError> {
        BigRational::from_float(x).ok_or(ArithError::InvalidOperation("non-finite input"))
    }

    fn to_f64(&self, x: &BigRational) -> f64 {
        num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::NAN)
    }

    fn add(&self, a: &BigRational, b: &BigRational) -> Result<BigRational, ArithError> {
        Ok(a + b)
    }

    fn sub(&self, a: &BigRational, b: &BigRational) -> Result<BigRational, ArithError> {
        Ok(a - b)
    }

    fn mul(&self, a: &BigRational, b: &BigRational) -> Result<BigRational, ArithError> {
        Ok(a * b)
    }

    fn neg(&self, a: &BigRational) -> BigRational {
        -a
    }

    fn cmp(&self, a: &BigRational, b: &BigRational) -> Ordering {
        a.cmp(b)
    }

    fn is_zero(&self, a: &BigRational) -> bool {
        a.is_zero()
    }

    fn abs(&self, a: &BigRational) -> BigRational {
        a.abs()
    }

    fn exact_sum(&self, xs: &[BigRational]) -> Result<BigRational, ArithError> {
        Ok(xs.iter().fold(BigRational::zero(), |a, b| a + b))
    }

    fn exact_mean(&self, xs: &[BigRational]) -> Result<BigRational, ArithError> {
        Ok(self.exact_sum(xs)? / BigInt::from(xs.len().max(1)))
    }

    fn two_sum(&self, a: &BigRational, b: &BigRational) -> Result<(BigRational, BigRational), ArithError> {
        Ok((a + b, BigRational::zero()))
    }

    fn two_product(&self, a: &BigRational, b: &BigRational) -> Result<(BigRational, BigRational), ArithError> {
        Ok((a * b, BigRational::zero()))
    }
}

/// Sign of the sum of some infinities, or an error if they cancel.
fn infinite_sum(signs: impl Iterator<Item = bool>) -> Result<Option<bool>, ArithError> {
    let mut seen: Option<bool> = None;
    for neg in signs {
        match seen {
            Some(s) if s != neg => return Err(ArithError::InvalidOperation("infinity minus infinity")),
            _ => seen = Some(neg),
        }
    }
    Ok(seen)
}

/// Exact rational total, or `None` when an infinity is involved.
fn exact_total(xs: impl Iterator<Item = Option<BigRational>>) -> Result<Option<BigRational>, ArithError> {
    let mut total = BigRational::zero();
    for x in xs {
        match x {
            Some(v) => total += v,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}
