mod common;

use certinfer::fixed::{dot_accurate_raw, dot_naive_raw, shift_round, FixedFormat, FixedPoint};
use certinfer::{ArithError, RoundingMode};
use common::{pow2, q, round_fixed, to_i64};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use proptest::prelude::*;

use RoundingMode::{Rna, Rne, Rtz};

fn fmt(f: u32, mode: RoundingMode) -> FixedFormat {
    FixedFormat::with_fraction(f, mode).unwrap()
}

fn fx(x: f64, f: u32, mode: RoundingMode) -> FixedPoint {
    FixedPoint::from_f64(x, fmt(f, mode)).unwrap()
}

fn raw(r: i64, f: u32, mode: RoundingMode) -> FixedPoint {
    FixedPoint::from_raw(r, fmt(f, mode)).unwrap()
}

fn mode() -> impl Strategy<Value = RoundingMode> {
    prop::sample::select(vec![Rne, Rtz, Rna])
}

#[test]
fn conversion_examples() {
    assert_eq!(fx(1.5, 4, Rne).raw(), 24);
    assert_eq!(FixedPoint::from_decimal("0.1", fmt(8, Rne)).unwrap().raw(), 26);
    assert_eq!(FixedPoint::from_decimal("0.1", fmt(8, Rtz)).unwrap().raw(), 25);
    assert_eq!(fx(1.25, 1, Rne).raw(), 2);
    assert_eq!(fx(1.25, 1, Rna).raw(), 3);
    assert_eq!(fx(-1.25, 1, Rna).raw(), -3);
    assert_eq!(fx(-1.25, 1, Rtz).raw(), -2);
}

#[test]
fn shift_round_examples() {
    assert_eq!(shift_round(576, 4, Rne), 36);
    assert_eq!(shift_round(8, 4, Rne), 0);
    assert_eq!(shift_round(8, 4, Rna), 1);
    assert_eq!(shift_round(8, 4, Rtz), 0);
    assert_eq!(shift_round(-8, 4, Rna), -1);
    assert_eq!(shift_round(-8, 4, Rne), 0);
    assert_eq!(shift_round(-8, 4, Rtz), 0);
    assert_eq!(shift_round(-24, 4, Rne), -2);
    assert_eq!(shift_round(-31, 4, Rtz), -1);
}

#[test]
fn arithmetic_examples() {
    let a = raw(24, 4, Rne);
    assert_eq!(a.add(&raw(8, 4, Rne)).unwrap().raw(), 32);
    assert_eq!(a.add(&raw(0, 4, Rne)).unwrap(), a);
    assert_eq!(a.mul(&a).unwrap().raw(), 36);
    assert_eq!(a.mul(&fx(1.0, 4, Rne)).unwrap(), a);
    assert_eq!(a.raw_product(&a).unwrap(), 576);
    assert_eq!(raw(1, 4, Rne).raw_product(&raw(8, 4, Rne)).unwrap(), 8);
    assert_eq!(fx(0.0625, 4, Rne).mul(&fx(0.5, 4, Rne)).unwrap().to_f64(), 0.0);
    assert_eq!(fx(0.0625, 4, Rna).mul(&fx(0.5, 4, Rna)).unwrap().to_f64(), 0.0625);
}

#[test]
fn range_and_formats() {
    assert_eq!(fx(600.0, 13, Rne).to_f64(), 600.0);
    assert!(matches!(FixedPoint::from_f64(2000.0, fmt(13, Rne)), Err(ArithError::Overflow { .. })));
    assert!(matches!(FixedPoint::from_f64(-1024.0, fmt(0, Rne)), Err(ArithError::Overflow { .. })));
    assert_eq!(fx(-1023.0, 0, Rne).raw(), -1023);
    let big = fx(1000.0, 8, Rne);
    assert!(matches!(big.add(&big), Err(ArithError::Overflow { .. })));
    assert!(matches!(big.mul(&big), Err(ArithError::Overflow { .. })));
    assert!(matches!(raw(1, 4, Rne).add(&raw(1, 5, Rne)), Err(ArithError::FormatMismatch { .. })));
    assert!(matches!(raw(1, 4, Rne).add(&raw(1, 4, Rtz)), Err(ArithError::FormatMismatch { .. })));
    assert!(FixedFormat::new(0, 4, Rne).is_err());
    assert_eq!(fmt(13, Rne).width(), 24);
}

#[test]
fn dot_product_witness() {
    let f = fmt(1, Rne);
    assert_eq!(dot_naive_raw(&[1, 1], &[1, 1], f).unwrap(), 0);
    assert_eq!(dot_accurate_raw(&[1, 1], &[1, 1], f).unwrap(), 1);
}

/// `x_i = 2^-f`, `y_i = 1 − 2^-f`: each truncated product loses almost a
/// full unit, so the naive error approaches `n·2^-f`.
#[test]
fn naive_error_grows_linearly() {
    let f = 8;
    let format = fmt(f, Rtz);
    for n in [1usize, 10, 100, 1000] {
        let xs = vec![1i64; n];
        let ys = vec![(1i64 << f) - 1; n];
        let exact = q(n as i64 * ((1 << f) - 1), 1) * pow2(-2 * f as i64);
        let naive = BigRational::from_integer(dot_naive_raw(&xs, &ys, format).unwrap().into()) * pow2(-(f as i64));
        let accurate =
            BigRational::from_integer(dot_accurate_raw(&xs, &ys, format).unwrap().into()) * pow2(-(f as i64));
        let unit = pow2(-(f as i64));
        let naive_err = (&exact - naive).abs();
        let accurate_err = (&exact - accurate).abs();
        assert!(accurate_err < unit);
        assert!(naive_err <= q(n as i64, 1) * &unit);
        assert!(naive_err >= q(n as i64, 1) * &unit * q(255, 256) - &unit);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn conversion_matches_oracle(n in -(1i64 << 40)..(1i64 << 40), d in 1i64..(1 << 30), f in 0u32..40, m in mode()) {
        let x = q(n, d);
        let format = fmt(f, m);
        let want = round_fixed(&x, f, m);
        match FixedPoint::from_rational(&x, format) {
            Ok(v) => {
                prop_assert_eq!(BigInt::from(v.raw()), want);
                let err = (v.to_rational() - &x).abs();
                let unit = pow2(-(f as i64));
                if m == Rtz {
                    prop_assert!(err < unit);
                } else {
                    prop_assert!(err * q(2, 1) <= unit);
                }
            }
            Err(_) => prop_assert!(want.abs() >= BigInt::from(format.raw_limit())),
        }
    }

    #[test]
    fn binary64_conversion_matches_oracle(x in -1023.0f64..1023.0, f in 0u32..52, m in mode()) {
        let v = FixedPoint::from_f64(x, fmt(f, m)).unwrap();
        prop_assert_eq!(BigInt::from(v.raw()), round_fixed(&common::from_f64(x), f, m));
    }

    #[test]
    fn shift_round_matches_oracle(v in any::<i64>(), f in 0u32..64, m in mode()) {
        let got = shift_round(i128::from(v), f, m);
        prop_assert_eq!(BigInt::from(got), common::shift_round(&BigInt::from(v), f, m));
        let wide = i128::from(v) << 40;
        prop_assert_eq!(BigInt::from(shift_round(wide, f + 40, m)), BigInt::from(got));
    }

    #[test]
    fn mul_is_shift_round_of_raw_product(a in -(1i64 << 20)..(1i64 << 20), b in -(1i64 << 20)..(1i64 << 20), f in 10u32..20, m in mode()) {
        let (x, y) = (raw(a, f, m), raw(b, f, m));
        let p = x.raw_product(&y).unwrap();
        prop_assert_eq!(p, i128::from(a) * i128::from(b));
        let want = common::shift_round(&BigInt::from(p), f, m);
        match x.mul(&y) {
            Ok(z) => prop_assert_eq!(BigInt::from(z.raw()), want),
            Err(_) => prop_assert!(want.abs() >= BigInt::from(fmt(f, m).raw_limit())),
        }
    }

    #[test]
    fn nearest_modes_differ_only_on_ties(v in any::<i64>(), f in 1u32..40) {
        let even = shift_round(i128::from(v), f, Rne);
        let away = shift_round(i128::from(v), f, Rna);
        let tail = v.unsigned_abs() & ((1u64 << f) - 1);
        if even != away {
            prop_assert_eq!(tail, 1u64 << (f - 1));
        }
    }

    #[test]
    fn addition_is_exact_and_associative(a in -(1i64 << 20)..(1i64 << 20), b in -(1i64 << 20)..(1i64 << 20), c in -(1i64 << 20)..(1i64 << 20)) {
        let (x, y, z) = (raw(a, 12, Rne), raw(b, 12, Rne), raw(c, 12, Rne));
        let left = x.add(&y).unwrap().add(&z).unwrap();
        let right = x.add(&y.add(&z).unwrap()).unwrap();
        prop_assert_eq!(left, right);
        prop_assert_eq!(left.raw(), a + b + c);
        prop_assert_eq!(x.sub(&y).unwrap().raw(), a - b);
    }

    #[test]
    fn dot_products_match_oracle(xs in prop::collection::vec(-(1i64 << 16)..(1i64 << 16), 0..64), seed in any::<u64>(), f in 1u32..16, m in mode()) {
        let ys: Vec<i64> = xs.iter().enumerate().map(|(i, x)| (x ^ (seed >> (i % 48)) as i64) % (1 << 16)).collect();
        let format = FixedFormat::new(62 - f, f, m).unwrap();
        let products: Vec<BigInt> = xs.iter().zip(&ys).map(|(x, y)| BigInt::from(*x) * *y).collect();
        let total: BigInt = products.iter().sum();
        let accurate = common::shift_round(&total, f, m);
        let naive: BigInt = products.iter().map(|p| common::shift_round(p, f, m)).sum();
        prop_assert_eq!(BigInt::from(dot_accurate_raw(&xs, &ys, format).unwrap()), accurate);
        prop_assert_eq!(BigInt::from(dot_naive_raw(&xs, &ys, format).unwrap()), naive);
    }
}

#[test]
fn extreme_raw_values_use_the_wide_path() {
    let format = FixedFormat::new(31, 31, Rne).unwrap();
    let big = (1i64 << 62) - 1;
    let xs = vec![big; 8];
    let ys = vec![1i64 << 31; 8];
    // Σ x·y exceeds i128 only after many terms; SR(Σ)/2^31 = 8·big overflows the format.
    assert!(dot_accurate_raw(&xs, &ys, format).is_err());
    let ys: Vec<i64> = (0..8).map(|i| if i % 2 == 0 { 1 << 31 } else { -(1 << 31) }).collect();
    assert_eq!(dot_accurate_raw(&xs, &ys, format).unwrap(), 0);
    assert_eq!(to_i64(&BigInt::from(dot_naive_raw(&xs, &ys, format).unwrap())), 0);
}
