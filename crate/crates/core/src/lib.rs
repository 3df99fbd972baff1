//! Reduced-precision arithmetic for neural network inference: soft floats
//! and fixed point with selectable rounding, deterministic reductions, a
//! small graph runtime, affine error bounds and bit-width sweeps.

pub mod arith;
pub mod bounds;
pub mod error;
pub mod exact;
pub mod fixed;
pub mod graph;
pub mod harness;
pub mod reducers;
pub mod runtime;
pub mod rounding;
pub mod softfloat;
pub mod tensor;
pub mod wordfloat;

pub use arith::{ArithKind, Arithmetic, FixedArith, FloatArith, NativeArith, RationalArith, WordArith};
pub use error::ArithError;
pub use exact::ExactAccumulator;
pub use fixed::{FixedFormat, FixedPoint};
pub use reducers::{dot, sum, DotAlgorithm, SumAlgorithm};
pub use rounding::RoundingMode;
pub use softfloat::SoftFloat;
pub use wordfloat::{WordContext, WordFloat};

/// Hardware binary32.
pub type F32Arith = NativeArith<f32>;
/// Hardware binary64.
pub type F64Arith = NativeArith<f64>;
/// Exact rationals.
pub type ExactArith = RationalArith;
