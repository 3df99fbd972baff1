//! Rational reference implementations. They share no code with the library:
//! rounding is done by brute-force scaling of exact rationals.
#![allow(dead_code)]

use std::path::PathBuf;

use certinfer::RoundingMode;
use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

pub fn pow2(k: i64) -> BigRational {
    let one = BigInt::one();
    if k >= 0 {
        BigRational::from_integer(one << k as usize)
    } else {
        BigRational::new(one.clone(), one << (-k) as usize)
    }
}

pub fn from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// `⌊log2 |a|⌋` for non-zero `a`.
pub fn ilog2(a: &BigRational) -> i64 {
    let a = a.abs();
    let mut e = a.numer().bits() as i64 - a.denom().bits() as i64;
    while pow2(e) > a {
        e -= 1;
    }
    while pow2(e + 1) <= a {
        e += 1;
    }
    e
}

/// Round a non-negative rational to an integer.
fn round_int(a: &BigRational, mode: RoundingMode) -> BigInt {
    let (n, r) = a.numer().div_rem(a.denom());
    let frac = BigRational::new(r, a.denom().clone());
    let half = q(1, 2);
    let up = match mode {
        RoundingMode::Rtz => false,
        RoundingMode::Rna => frac >= half,
        RoundingMode::Rne => frac > half || (frac == half && n.is_odd()),
    };
    if up {
        n + 1
    } else {
        n
    }
}

/// `x` rounded to `p` significant bits.
pub fn round_float(x: &BigRational, p: u32, mode: RoundingMode) -> BigRational {
    if x.is_zero() {
        return x.clone();
    }
    let e = ilog2(x);
    let scale = pow2(p as i64 - 1 - e);
    let m = round_int(&(x.abs() * &scale), mode);
    let v = BigRational::from_integer(m) / scale;
    if x.is_negative() {
        -v
    } else {
        v
    }
}

/// Raw integer of `x` in a format with `f` fraction bits, rounding by value.
pub fn round_fixed(x: &BigRational, f: u32, mode: RoundingMode) -> BigInt {
    let m = round_int(&(x.abs() * pow2(f as i64)), mode);
    if x.is_negative() {
        -m
    } else {
        m
    }
}

/// `round(v / 2^f)` for an integer at `2f` fraction bits.
pub fn shift_round(v: &BigInt, f: u32, mode: RoundingMode) -> BigInt {
    round_fixed(&(BigRational::from_integer(v.clone()) / pow2(f as i64)), 0, mode)
}

pub fn to_i64(v: &BigInt) -> i64 {
    v.to_i64().expect("fits")
}

pub fn sign(v: &BigRational) -> Sign {
    v.numer().sign()
}

/// Every `p`-bit value `±m·2^k` with `k` in `exps`, thinned to at most
/// `limit` values by a fixed stride, plus zero.
pub fn float_grid(p: u32, exps: std::ops::RangeInclusive<i64>, limit: usize) -> Vec<BigRational> {
    let mut all = Vec::new();
    for k in exps {
        for m in (1u64 << (p - 1))..(1u64 << p) {
            let v = BigRational::from_integer(m.into()) * pow2(k - (p as i64 - 1));
            all.push(v.clone());
            all.push(-v);
        }
    }
    let stride = all.len().div_ceil(limit - 1).max(1);
    let mut out: Vec<BigRational> = all.into_iter().step_by(stride).collect();
    out.truncate(limit - 1);
    out.push(BigRational::zero());
    out
}

/// A vector with `Σ|x| / |Σx| ≥ min_cond`: random magnitudes over a wide
/// exponent span, each paired with a slightly perturbed negation.
pub fn ill_conditioned<R: rand::Rng>(rng: &mut R, max_len: usize, min_cond: f64) -> Vec<f64> {
    use rand::seq::SliceRandom;
    loop {
        let half = rng.gen_range(1..=max_len / 2);
        let span = rng.gen_range(30..60);
        let mut xs = Vec::with_capacity(2 * half);
        for _ in 0..half {
            let e = rng.gen_range(0..span);
            let v = rng.gen_range(1.0..2.0) * (e as f64).exp2() * if rng.gen() { 1.0 } else { -1.0 };
            let noise = rng.gen_range(-1.0..1.0) * rng.gen_range(0..4) as f64;
            xs.push(v);
            xs.push(-v + noise);
        }
        xs.shuffle(rng);
        let total = exact_sum(&xs);
        let abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        let abs = exact_sum(&abs);
        if !total.is_zero() && abs / total.abs() >= from_f64(min_cond) {
            return xs;
        }
    }
}

/// Exact sum of binary64 values: every term is an integer multiple of 2^-1074.
pub fn exact_sum(xs: &[f64]) -> BigRational {
    let mut total = BigInt::zero();
    for &x in xs {
        let (m, e, sign) = num_traits::Float::integer_decode(x);
        let term = BigInt::from(m) << (e + 1074) as usize;
        if sign < 0 {
            total -= term;
        } else {
            total += term;
        }
    }
    BigRational::from_integer(total) / pow2(1074)
}
