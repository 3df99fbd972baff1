//! Summation and dot-product algorithms over any [`Arithmetic`] backend.
//!
//! Each algorithm has one fixed evaluation order, so results are
//! reproducible regardless of how callers schedule independent reductions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arith::{ArithKind, Arithmetic};
use crate::error::ArithError;
use crate::rounding::RoundingMode;
use crate::softfloat::SoftFloat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SumAlgorithm {
    /// Left-to-right fold.
    Naive,
    /// Balanced tree; the left half takes the extra element on odd splits.
    Pairwise,
    /// Neumaier's compensated sum, compensation added once at the end.
    Kn,
    /// True sum rounded once.
    Exact,
}

impl SumAlgorithm {
    pub const ALL: [SumAlgorithm; 4] = [SumAlgorithm::Naive, SumAlgorithm::Pairwise, SumAlgorithm::Kn, SumAlgorithm::Exact];

    pub fn as_str(self) -> &'static str {
        match self {
            SumAlgorithm::Naive => "naive",
            SumAlgorithm::Pairwise => "pairwise",
            SumAlgorithm::Kn => "kn",
            SumAlgorithm::Exact => "exact",
        }
    }
}

impl fmt::Display for SumAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SumAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(SumAlgorithm::Naive),
            "pairwise" => Ok(SumAlgorithm::Pairwise),
            "kn" | "kahan" | "neumaier" => Ok(SumAlgorithm::Kn),
            "exact" => Ok(SumAlgorithm::Exact),
            other => Err(format!("unknown sum algorithm '{other}' (expected naive, pairwise, kn or exact)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DotAlgorithm {
    /// Rounded products, then the chosen sum.
    FloatNaive,
    /// Ogita–Rump–Oishi compensated dot product.
    FloatOro,
    /// Each product shifted and rounded, then summed exactly.
    FixedNaive,
    /// Exact sum of the raw products, one final shift-and-round.
    FixedAccurate,
}

impl DotAlgorithm {
    pub const ALL: [DotAlgorithm; 4] =
        [DotAlgorithm::FloatNaive, DotAlgorithm::FloatOro, DotAlgorithm::FixedNaive, DotAlgorithm::FixedAccurate];

    /// Name used on the command line and in reports.
    pub fn label(self) -> &'static str {
        match self {
            DotAlgorithm::FloatNaive | DotAlgorithm::FixedNaive => "naive",
            DotAlgorithm::FloatOro => "oro",
            DotAlgorithm::FixedAccurate => "accurate",
        }
    }

    pub fn kind(self) -> ArithKind {
        match self {
            DotAlgorithm::FloatNaive | DotAlgorithm::FloatOro => ArithKind::Float,
            DotAlgorithm::FixedNaive | DotAlgorithm::FixedAccurate => ArithKind::Fixed,
        }
    }

    /// Resolve a command-line name for the given arithmetic.
    pub fn parse(name: &str, kind: ArithKind) -> Result<Self, String> {
        match (name.to_ascii_lowercase().as_str(), kind) {
            ("naive", ArithKind::Float) => Ok(DotAlgorithm::FloatNaive),
            ("naive", ArithKind::Fixed) => Ok(DotAlgorithm::FixedNaive),
            ("oro", ArithKind::Float) => Ok(DotAlgorithm::FloatOro),
            ("accurate", ArithKind::Fixed) => Ok(DotAlgorithm::FixedAccurate),
            ("oro", ArithKind::Fixed) => Err("the oro dot product requires --arith float".into()),
            ("accurate", ArithKind::Float) => Err("the accurate dot product requires --arith fixed".into()),
            (other, _) => Err(format!("unknown dot algorithm '{other}' (expected naive, accurate or oro)")),
        }
    }
}

impl fmt::Display for DotAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DotAlgorithm::FloatNaive => "float-naive",
            DotAlgorithm::FloatOro => "float-oro",
            DotAlgorithm::FixedNaive => "fixed-naive",
            DotAlgorithm::FixedAccurate => "fixed-accurate",
        };
        f.write_str(s)
    }
}

/// Sum with the given algorithm. An empty input sums to zero.
///
/// Fixed-point addition is exact, so for fixed backends every algorithm
/// reduces to the exact integer sum; only the final value is range-checked.
pub fn sum<A: Arithmetic + ?Sized>(a: &A, xs: &[A::Scalar], alg: SumAlgorithm) -> Result<A::Scalar, ArithError> {
    if xs.is_empty() {
        return Ok(a.zero());
    }
    if a.kind() == ArithKind::Fixed {
        return a.exact_sum(xs);
    }
    match alg {
        SumAlgorithm::Naive => naive_sum(a, xs),
        SumAlgorithm::Pairwise => pairwise_sum(a, xs),
        SumAlgorithm::Kn => neumaier_sum(a, xs),
        SumAlgorithm::Exact => a.exact_sum(xs),
    }
}

fn naive_sum<A: Arithmetic + ?Sized>(a: &A, xs: &[A::Scalar]) -> Result<A::Scalar, ArithError> {
    let mut acc = xs[0].clone();
    for x in &xs[1..] {
        acc = a.add(&acc, x)?;
    }
    Ok(acc)
}

fn pairwise_sum<A: Arithmetic + ?Sized>(a: &A, xs: &[A::Scalar]) -> Result<A::Scalar, ArithError> {
    match xs.len() {
        1 => Ok(xs[0].clone()),
        n => {
            let (l, r) = xs.split_at(n.div_ceil(2));
            a.add(&pairwise_sum(a, l)?, &pairwise_sum(a, r)?)
        }
    }
}

fn neumaier_sum<A: Arithmetic + ?Sized>(a: &A, xs: &[A::Scalar]) -> Result<A::Scalar, ArithError> {
    let mut s = xs[0].clone();
    let mut c = a.zero();
    for x in &xs[1..] {
        let t = a.add(&s, x)?;
        let lost = if a.cmp(&a.abs(&s), &a.abs(x)) != std::cmp::Ordering::Less {
            a.add(&a.sub(&s, &t)?, x)?
        } else {
            a.add(&a.sub(x, &t)?, &s)?
        };
        c = a.add(&c, &lost)?;
        s = t;
    }
    a.add(&s, &c)
}

/// Plain Kahan summation. Kept as a reference point for tests; the
/// reductions use [`SumAlgorithm::Kn`].
pub fn kahan_sum<A: Arithmetic + ?Sized>(a: &A, xs: &[A::Scalar]) -> Result<A::Scalar, ArithError> {
    let mut s = a.zero();
    let mut c = a.zero();
    for x in xs {
        let y = a.sub(x, &c)?;
        let t = a.add(&s, &y)?;
        c = a.sub(&a.sub(&t, &s)?, &y)?;
        s = t;
    }
    Ok(s)
}

/// Dot product `Σ x_i y_i` with the given product and sum algorithms.
pub fn dot<A: Arithmetic + ?Sized>(
    a: &A,
    x: &[A::Scalar],
    y: &[A::Scalar],
    dot_alg: DotAlgorithm,
    sum_alg: SumAlgorithm,
) -> Result<A::Scalar, ArithError> {
    if x.len() != y.len() {
        return Err(ArithError::LengthMismatch(x.len(), y.len()));
    }
    if dot_alg.kind() != a.kind() {
        return Err(ArithError::Incompatible(format!("{dot_alg} dot product cannot run on {}", a.describe())));
    }
    match dot_alg {
        DotAlgorithm::FixedNaive | DotAlgorithm::FixedAccurate => a.fixed_dot(x, y, dot_alg),
        DotAlgorithm::FloatNaive => {
            if x.is_empty() {
                return Ok(a.zero());
            }
            if sum_alg == SumAlgorithm::Naive {
                return a.naive_dot(x, y);
            }
            let products = x.iter().zip(y).map(|(xi, yi)| a.mul(xi, yi)).collect::<Result<Vec<_>, _>>()?;
            sum(a, &products, sum_alg)
        }
        DotAlgorithm::FloatOro => oro_dot(a, x, y, sum_alg),
    }
}

/// Compensated dot product built from error-free transformations.
///
/// The running value follows a TwoSum cascade over TwoProduct results. The
/// per-step compensation terms `r_1`, `fl(q_i + r_i)` are reduced with
/// `sum_alg` and added to the value once at the end; with a naive sum this is
/// exactly the classic Dot2 loop.
pub fn oro_dot<A: Arithmetic + ?Sized>(
    a: &A,
    x: &[A::Scalar],
    y: &[A::Scalar],
    sum_alg: SumAlgorithm,
) -> Result<A::Scalar, ArithError> {
    if x.len() != y.len() {
        return Err(ArithError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Ok(a.zero());
    }
    // A zero factor contributes a zero compensation term and leaves the
    // running value unchanged, so such terms are dropped unless the sum's
    // tree shape depends on their position.
    let keep_zeros = sum_alg == SumAlgorithm::Pairwise;
    let mut p = a.zero();
    let mut comps = Vec::with_capacity(x.len());
    for (xi, yi) in x.iter().zip(y) {
        if a.is_zero(xi) || a.is_zero(yi) {
            if keep_zeros {
                comps.push(a.zero());
            }
            continue;
        }
        let (h, r) = a.two_product(xi, yi)?;
        let (s, q) = a.two_sum(&p, &h)?;
        p = s;
        comps.push(a.add(&q, &r)?);
    }
    let comp = sum(a, &comps, sum_alg)?;
    a.add(&p, &comp)
}

fn require_rne(a: &SoftFloat, b: &SoftFloat) -> Result<(), ArithError> {
    for m in [a.mode(), b.mode()] {
        if m != RoundingMode::Rne {
            return Err(ArithError::UnsupportedMode(m));
        }
    }
    Ok(())
}

/// `s = fl(a + b)` and `e` with `s + e == a + b` exactly.
pub fn two_sum(a: &SoftFloat, b: &SoftFloat) -> Result<(SoftFloat, SoftFloat), ArithError> {
    require_rne(a, b)?;
    a.sum_residual(b)
}

/// `p = fl(a · b)` and `e` with `p + e == a · b` exactly.
pub fn two_product(a: &SoftFloat, b: &SoftFloat) -> Result<(SoftFloat, SoftFloat), ArithError> {
    require_rne(a, b)?;
    a.product_residual(b)
}
