//! Static bounds on fixed-point error via affine arithmetic.
//!
//! Every tensor element is an [`AffineForm`]: a center, shared noise symbols
//! with coefficients, and a residual radius for collapsed terms. A form
//! describes the set of values the fixed-point run can produce. Centers and
//! coefficients are binary64; each operation adds an outward slack term to
//! the residual covering its own binary64 rounding, so concretizations stay
//! sound.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::arith::{Arithmetic, FixedArith, NativeArith};
use crate::error::ArithError;
use crate::fixed::{FixedFormat, DEFAULT_MAGNITUDE_BITS};
use crate::graph::{Graph, ModelError, Node, Op};
use crate::reducers::{DotAlgorithm, SumAlgorithm};
use crate::rounding::RoundingMode;
use crate::runtime::{dense_rows, fold_batch_norm, for_each_broadcast, quantize_graph, ExecConfig};

pub const DEFAULT_MAX_SYMBOLS: usize = 64;
pub const BOUNDS_COLUMNS: [&str; 4] = ["layer_index", "op_kind", "bound", "empirical_error"];

const U: f64 = f64::EPSILON / 2.0;

/// `γ_n = n·u / (1 − n·u)`, the classic bound for `n` accumulated roundings.
fn gamma(n: usize) -> f64 {
    let nu = n as f64 * U;
    nu / (1.0 - nu)
}

/// A value no smaller than the exact result of the operation that produced
/// `x`, for non-negative `x`.
fn up(x: f64) -> f64 {
    x + x.abs() * f64::EPSILON + f64::from_bits(1)
}

fn up_nonzero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        up(x)
    }
}

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Shape(String),
    #[error("bounds for {0} are not supported")]
    Unsupported(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub center: f64,
    /// `(symbol, coefficient)` sorted by symbol.
    pub terms: Vec<(u32, f64)>,
    pub residual: f64,
}

impl AffineForm {
    pub fn constant(center: f64) -> Self {
        AffineForm { center, terms: Vec::new(), residual: 0.0 }
    }

    /// Upper bound on the distance from the center to any admitted value.
    pub fn radius(&self) -> f64 {
        let s: f64 = self.terms.iter().map(|t| t.1.abs()).sum::<f64>() + self.residual;
        if s == 0.0 {
            return 0.0;
        }
        up(s * (1.0 + gamma(self.terms.len() + 1)))
    }

    /// Outward-rounded enclosing interval.
    pub fn interval(&self) -> (f64, f64) {
        let r = self.radius();
        if r == 0.0 {
            return (self.center, self.center);
        }
        (-up(r - self.center), up(self.center + r))
    }

    pub fn contains(&self, v: f64) -> bool {
        let (lo, hi) = self.interval();
        lo <= v && v <= hi
    }

    /// Upper bound on the magnitude of any admitted value.
    pub fn magnitude(&self) -> f64 {
        let r = self.radius();
        if r == 0.0 {
            return self.center.abs();
        }
        up(self.center.abs() + r)
    }

    /// Value of the form at a point of the noise space; missing symbols are 0
    /// and the residual is scaled by `residual_at`.
    pub fn evaluate(&self, eps: &HashMap<u32, f64>, residual_at: f64) -> f64 {
        self.center + self.terms.iter().map(|(s, a)| a * eps.get(s).copied().unwrap_or(0.0)).sum::<f64>()
            + self.residual * residual_at
    }
}

/// Extra error of a linear operation, folded into one fresh symbol per output.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearError {
    /// Rounding error of the operation itself (`2^-f` for an accurate dot
    /// product, `n·2^-f` for a naive one).
    pub rounding: f64,
    /// Bound on `|ŵ − w|` for each weight; contributes `weight · Σ|x_i|`.
    pub weight: f64,
    /// Bound on `|b̂ − b|`.
    pub bias: f64,
}

/// Issues noise symbols and holds scratch space for linear combinations.
#[derive(Debug)]
pub struct Propagator {
    next: u32,
    max_symbols: usize,
    scratch: Vec<f64>,
    touched: Vec<u32>,
}

impl Propagator {
    pub fn new(max_symbols: usize) -> Self {
        Propagator { next: 0, max_symbols: max_symbols.max(1), scratch: Vec::new(), touched: Vec::new() }
    }

    pub fn fresh(&mut self) -> u32 {
        let s = self.next;
        self.next = self.next.checked_add(1).expect("noise symbol space exhausted");
        s
    }

    pub fn symbols_issued(&self) -> u32 {
        self.next
    }

    pub fn max_symbols(&self) -> usize {
        self.max_symbols
    }

    /// Keep the largest terms and move the rest into the residual.
    fn capped(&self, center: f64, mut terms: Vec<(u32, f64)>, mut residual: f64) -> AffineForm {
        let k = self.max_symbols;
        if terms.len() > k {
            terms.select_nth_unstable_by(k - 1, |a, b| b.1.abs().total_cmp(&a.1.abs()));
            let dropped: f64 = terms[k..].iter().map(|t| t.1.abs()).sum();
            let dropped = up(dropped * (1.0 + gamma(terms.len() - k)));
            residual = up(residual + dropped);
            terms.truncate(k);
            terms.sort_unstable_by_key(|t| t.0);
        }
        AffineForm { center, terms, residual }
    }

    /// `center ± radius` on a fresh symbol.
    pub fn seeded(&mut self, center: f64, radius: f64) -> AffineForm {
        if radius == 0.0 {
            return AffineForm::constant(center);
        }
        AffineForm { center, terms: vec![(self.fresh(), radius)], residual: 0.0 }
    }

    /// `bias + Σ w_i x_i`, plus one fresh symbol covering `err`.
    pub fn combine<'a>(
        &mut self,
        inputs: impl IntoIterator<Item = (&'a AffineForm, f64)>,
        bias: f64,
        err: LinearError,
    ) -> AffineForm {
        let mut center = bias;
        let mut residual = 0.0;
        let mut weighted_mag = 0.0;
        let mut input_mag = 0.0;
        let mut n = 0usize;
        for (x, w) in inputs {
            n += 1;
            if w == 0.0 {
                continue;
            }
            center += w * x.center;
            for &(s, a) in &x.terms {
                let i = s as usize;
                if i >= self.scratch.len() {
                    let len = (i + 1).max(2 * self.scratch.len());
                    self.scratch.resize(len, 0.0);
                }
                if self.scratch[i] == 0.0 {
                    self.touched.push(s);
                }
                self.scratch[i] += w * a;
            }
            residual += w.abs() * x.residual;
            let m = x.magnitude();
            weighted_mag += w.abs() * m;
            input_mag += m;
        }
        self.touched.sort_unstable();
        self.touched.dedup();
        let mut terms = Vec::with_capacity(self.touched.len() + 1);
        for &s in &self.touched {
            let a = std::mem::replace(&mut self.scratch[s as usize], 0.0);
            if a != 0.0 {
                terms.push((s, a));
            }
        }
        self.touched.clear();
        // Binary64 error of the center and coefficient accumulations above.
        let slack = gamma(n + 3) * up(up(weighted_mag) + bias.abs());
        if residual > 0.0 || slack > 0.0 {
            residual = up(up(residual * (1.0 + gamma(n + 1))) + slack);
        }
        let extra = err.rounding + err.bias + err.weight * up(input_mag * (1.0 + gamma(n + 1)));
        if extra > 0.0 {
            terms.push((self.fresh(), up(up(extra) * (1.0 + gamma(4)))));
        }
        self.capped(center, terms, residual)
    }

    /// Interval clamp of `max(x, 0)`.
    pub fn relu(&mut self, x: &AffineForm) -> AffineForm {
        let (lo, hi) = x.interval();
        if lo >= 0.0 {
            x.clone()
        } else if hi <= 0.0 {
            AffineForm::constant(0.0)
        } else {
            let half = up(hi / 2.0);
            self.seeded(half, half)
        }
    }

    /// Interval clamp of the maximum over a window.
    pub fn max(&mut self, xs: &[&AffineForm]) -> AffineForm {
        let iv: Vec<(f64, f64)> = xs.iter().map(|x| x.interval()).collect();
        for (k, &(lo, _)) in iv.iter().enumerate() {
            if iv.iter().enumerate().all(|(j, &(_, hi))| j == k || hi <= lo) {
                return xs[k].clone();
            }
        }
        let lo = iv.iter().map(|r| r.0).fold(f64::INFINITY, f64::min).max(iv.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max));
        let hi = iv.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let center = lo / 2.0 + hi / 2.0;
        let half = up(up(hi - center).max(up(center - lo)));
        self.seeded(center, half)
    }
}

/// A fresh symbol of magnitude `2^-f` around each element.
pub fn seed_error(x: &[f64], f: u32, prop: &mut Propagator) -> Vec<AffineForm> {
    let eps = ulp(f);
    x.iter().map(|&v| prop.seeded(v, eps)).collect()
}

fn ulp(f: u32) -> f64 {
    (-(f as f64)).exp2()
}

/// Largest `|q(v) − v|` over `values`, where `q` converts to `fmt`. Values
/// that do not fit fall back to one unit in the last place.
fn conversion_error(values: &[f64], fmt: FixedFormat) -> f64 {
    values.iter().map(|&v| single_conversion_error(v, fmt)).fold(0.0, f64::max)
}

fn single_conversion_error(v: f64, fmt: FixedFormat) -> f64 {
    match fmt.raw_from_f64(v) {
        Ok(raw) if raw.unsigned_abs() < 1 << 53 => {
            let d = (raw as f64 * fmt.ulp() - v).abs();
            up_nonzero(d)
        }
        _ => fmt.ulp(),
    }
}

fn seed_quantized(v: f64, fmt: FixedFormat, prop: &mut Propagator) -> AffineForm {
    prop.seeded(v, single_conversion_error(v, fmt))
}

/// `y = W x + b` for a row-major `rows × cols` matrix, adding `err` per output.
pub fn propagate_linear(
    w: &[f64],
    rows: usize,
    cols: usize,
    b: Option<&[f64]>,
    x: &[AffineForm],
    err: LinearError,
    prop: &mut Propagator,
) -> Result<Vec<AffineForm>, BoundsError> {
    if w.len() != rows * cols || x.len() != cols || b.is_some_and(|b| b.len() != rows) {
        return Err(BoundsError::Shape(format!(
            "cannot apply a {rows}x{cols} matrix to {} inputs with {:?} biases",
            x.len(),
            b.map(<[f64]>::len)
        )));
    }
    Ok((0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            prop.combine(x.iter().zip(row.iter().copied()), b.map_or(0.0, |b| b[r]), err)
        })
        .collect())
}

pub fn propagate_relu(x: &[AffineForm], prop: &mut Propagator) -> Vec<AffineForm> {
    x.iter().map(|v| prop.relu(v)).collect()
}

/// Max over windows given as lists of element indices.
pub fn propagate_maxpool(x: &[AffineForm], windows: &[Vec<usize>], prop: &mut Propagator) -> Vec<AffineForm> {
    windows
        .iter()
        .map(|w| {
            let forms: Vec<&AffineForm> = w.iter().map(|&i| &x[i]).collect();
            prop.max(&forms)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsOptions {
    pub max_symbols: usize,
    pub magnitude_bits: u32,
    pub round: RoundingMode,
    pub dot: DotAlgorithm,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        BoundsOptions {
            max_symbols: DEFAULT_MAX_SYMBOLS,
            magnitude_bits: DEFAULT_MAGNITUDE_BITS,
            round: RoundingMode::Rne,
            dot: DotAlgorithm::FixedAccurate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerBound {
    pub layer_index: usize,
    pub node: String,
    pub op_kind: &'static str,
    /// Largest possible `|fixed − reference|` over the node's output.
    pub bound: f64,
    /// Widest concretization interval in the node's output.
    pub interval_width: f64,
    /// Measured `max |fixed − reference|`; `None` if the run failed first.
    pub empirical_error: Option<f64>,
}

/// Deterministic input drawn uniformly from `[0, 1)`.
pub fn default_input(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen::<f64>()).collect()
}

/// Per-node error bounds for `f` fractional bits at `input`, with the error
/// of one fixed-point run alongside.
///
/// The reference is the same graph evaluated in binary64 on the unconverted
/// input. Bounds cover conversion of the input and of every parameter plus
/// each operation's own rounding.
pub fn analyze(graph: &Graph, f: u32, input: &[f64], opts: &BoundsOptions) -> Result<Vec<LayerBound>, BoundsError> {
    let fmt = FixedFormat::new(opts.magnitude_bits, f, opts.round)?;
    let reference = reference_run(graph, input)?;
    let empirical = empirical_run(graph, fmt, input, opts, &reference);
    let mut prop = Propagator::new(opts.max_symbols);
    let mut last_use = HashMap::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        for id in &node.inputs {
            last_use.insert(id.as_str(), i);
        }
    }
    let mut values: HashMap<&str, Vec<AffineForm>> = HashMap::new();
    values.insert(&graph.input, seed_error(input, f, &mut prop));
    let mut out = Vec::with_capacity(graph.nodes.len());
    for (i, node) in graph.nodes.iter().enumerate() {
        let forms = propagate_node(graph, node, &values, &mut prop, fmt, opts)?;
        let r = &reference[i];
        let mut bound = 0.0f64;
        let mut width = 0.0f64;
        for (form, &rv) in forms.iter().zip(r) {
            let rad = form.radius();
            bound = bound.max(up_nonzero((form.center - rv).abs() + rad));
            width = width.max(2.0 * rad);
        }
        out.push(LayerBound {
            layer_index: i,
            node: node.name.clone(),
            op_kind: node.op.kind(),
            bound,
            interval_width: width,
            empirical_error: empirical.get(i).copied(),
        });
        for id in &node.inputs {
            if last_use.get(id.as_str()) == Some(&i) {
                values.remove(id.as_str());
            }
        }
        values.insert(node.output(), forms);
    }
    Ok(out)
}

fn reference_run(graph: &Graph, input: &[f64]) -> Result<Vec<Vec<f64>>, BoundsError> {
    let cfg = ExecConfig { dot: DotAlgorithm::FloatNaive, sum: SumAlgorithm::Naive };
    let prepared = quantize_graph(graph, NativeArith::<f64>::new(), cfg)?;
    let mut outs = Vec::with_capacity(graph.nodes.len());
    prepared.run_traced(input, |_, _, t| outs.push(t.data().to_vec()))?;
    Ok(outs)
}

/// Per-node `max |fixed − reference|` for as many nodes as the run completes.
fn empirical_run(graph: &Graph, fmt: FixedFormat, input: &[f64], opts: &BoundsOptions, reference: &[Vec<f64>]) -> Vec<f64> {
    let arith = FixedArith::new(fmt);
    let cfg = ExecConfig { dot: opts.dot, sum: SumAlgorithm::Naive };
    let mut errs = Vec::new();
    let result = quantize_graph(graph, arith, cfg).and_then(|prepared| {
        prepared.run_traced(input, |i, _, t| {
            let e = t
                .data()
                .iter()
                .zip(&reference[i])
                .map(|(v, r)| (arith.to_f64(v) - r).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        })
    });
    if let Err(e) = result {
        log::warn!("fixed-point run stopped after {} nodes: {e}", errs.len());
    }
    errs
}

fn propagate_node(
    graph: &Graph,
    node: &Node,
    values: &HashMap<&str, Vec<AffineForm>>,
    prop: &mut Propagator,
    fmt: FixedFormat,
    opts: &BoundsOptions,
) -> Result<Vec<AffineForm>, BoundsError> {
    let eps = fmt.ulp();
    let shape = |id: &str| graph.shape(id).expect("validated").to_vec();
    let naive = opts.dot == DotAlgorithm::FixedNaive;
    let dot_rounding = |n: usize| if naive { n as f64 * eps } else { eps };
    let constant = |id: &str, prop: &mut Propagator| -> Option<Vec<AffineForm>> {
        graph.initializer(id).map(|t| t.data().iter().map(|&v| seed_quantized(f64::from(v), fmt, prop)).collect())
    };
    let get = |id: &str| values.get(id).ok_or_else(|| BoundsError::Model(ModelError::Missing(id.to_string())));
    let f64s = |id: &str| -> Vec<f64> {
        graph.initializer(id).map(|t| t.data().iter().map(|&v| f64::from(v)).collect()).unwrap_or_default()
    };
    Ok(match &node.op {
        Op::Conv { strides, pads, dilations } => {
            let x = get(&node.inputs[0])?;
            let [n, c, h, w] = <[usize; 4]>::try_from(shape(&node.inputs[0])).expect("4-d");
            let ws = shape(&node.inputs[1]);
            let (oc, kh, kw) = (ws[0], ws[2], ws[3]);
            let os = shape(node.output());
            let (oh, ow) = (os[2], os[3]);
            let weights = f64s(&node.inputs[1]);
            let bias = node.inputs.get(2).map(|b| f64s(b));
            let patch = c * kh * kw;
            let err = LinearError {
                rounding: dot_rounding(patch),
                weight: conversion_error(&weights, fmt),
                bias: bias.as_deref().map_or(0.0, |b| conversion_error(b, fmt)),
            };
            let mut out = Vec::with_capacity(n * oc * oh * ow);
            let mut taps: Vec<(usize, usize)> = Vec::with_capacity(patch);
            for b in 0..n {
                for o in 0..oc {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            taps.clear();
                            for ci in 0..c {
                                for ky in 0..kh {
                                    let iy = (oy * strides[0] + ky * dilations[0]) as isize - pads[0] as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * strides[1] + kx * dilations[1]) as isize - pads[1] as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        let xi = ((b * c + ci) * h + iy as usize) * w + ix as usize;
                                        let wi = ((o * c + ci) * kh + ky) * kw + kx;
                                        taps.push((xi, wi));
                                    }
                                }
                            }
                            let bias_v = bias.as_ref().map_or(0.0, |b| b[o]);
                            out.push(prop.combine(taps.iter().map(|&(xi, wi)| (&x[xi], weights[wi])), bias_v, err));
                        }
                    }
                }
            }
            out
        }
        Op::Gemm { .. } | Op::MatMul => {
            let (rows, inner, bias) = match &node.op {
                Op::Gemm { trans_b, alpha, beta } => {
                    let b = graph.initializer(&node.inputs[1]).expect("validated");
                    let inner = if *trans_b { b.shape()[1] } else { b.shape()[0] };
                    let bias = node.inputs.get(2).map(|c| (f64s(c).iter().map(|v| v * beta).collect::<Vec<_>>(), shape(c)));
                    (dense_rows(b, *trans_b, *alpha), inner, bias)
                }
                _ => match graph.initializer(&node.inputs[1]) {
                    Some(b) => (dense_rows(b, false, 1.0), b.shape()[0], None),
                    None => return Err(BoundsError::Unsupported(format!("MatMul of two variables ({})", node.name))),
                },
            };
            let x = get(&node.inputs[0])?;
            let os = shape(node.output());
            let (m, n) = (os[0], os[1]);
            let err = LinearError {
                rounding: dot_rounding(inner),
                weight: conversion_error(&rows, fmt),
                bias: bias.as_ref().map_or(0.0, |b| conversion_error(&b.0, fmt)),
            };
            let mut bias_full = vec![0.0; m * n];
            if let Some((bv, bs)) = &bias {
                for_each_broadcast(&os, &os, bs, |k, l| bias_full[k] = bv[l]);
            }
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                let xi = &x[i * inner..(i + 1) * inner];
                for j in 0..n {
                    let row = &rows[j * inner..(j + 1) * inner];
                    out.push(prop.combine(xi.iter().zip(row.iter().copied()), bias_full[i * n + j], err));
                }
            }
            out
        }
        Op::Add => {
            let operand = |k: usize, prop: &mut Propagator| -> Result<Vec<AffineForm>, BoundsError> {
                match constant(&node.inputs[k], prop) {
                    Some(c) => Ok(c),
                    None => Ok(get(&node.inputs[k])?.clone()),
                }
            };
            let (l, r) = (operand(0, prop)?, operand(1, prop)?);
            let os = shape(node.output());
            let mut pairs = Vec::with_capacity(os.iter().product());
            for_each_broadcast(&os, &shape(&node.inputs[0]), &shape(&node.inputs[1]), |i, j| pairs.push((i, j)));
            pairs.into_iter().map(|(i, j)| prop.combine([(&l[i], 1.0), (&r[j], 1.0)], 0.0, LinearError::default())).collect()
        }
        Op::Relu => propagate_relu(get(&node.inputs[0])?, prop),
        Op::MaxPool { kernel, strides, pads } => {
            let x = get(&node.inputs[0])?;
            let is = shape(&node.inputs[0]);
            let os = shape(node.output());
            let (h, w) = (is[2], is[3]);
            let mut windows = Vec::with_capacity(os.iter().product());
            for p in 0..is[0] * is[1] {
                for oy in 0..os[2] {
                    for ox in 0..os[3] {
                        let mut win = Vec::with_capacity(kernel[0] * kernel[1]);
                        for ky in 0..kernel[0] {
                            let iy = (oy * strides[0] + ky) as isize - pads[0] as isize;
                            for kx in 0..kernel[1] {
                                let ix = (ox * strides[1] + kx) as isize - pads[1] as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    win.push((p * h + iy as usize) * w + ix as usize);
                                }
                            }
                        }
                        windows.push(win);
                    }
                }
            }
            propagate_maxpool(x, &windows, prop)
        }
        Op::GlobalAveragePool => {
            let x = get(&node.inputs[0])?;
            let is = shape(&node.inputs[0]);
            let plane = is[2] * is[3];
            let inv = 1.0 / plane as f64;
            let err = LinearError { rounding: eps, ..Default::default() };
            x.chunks(plane).map(|ch| prop.combine(ch.iter().map(|v| (v, inv)), 0.0, err)).collect()
        }
        Op::BatchNormalization { epsilon } => {
            let (scale, shift) = fold_batch_norm(graph, node, *epsilon)?;
            let x = get(&node.inputs[0])?;
            let is = shape(&node.inputs[0]);
            let plane: usize = is[2..].iter().product();
            let err = LinearError { rounding: eps, weight: conversion_error(&scale, fmt), bias: conversion_error(&shift, fmt) };
            let mut out = Vec::with_capacity(x.len());
            for (k, ch) in x.chunks(plane).enumerate() {
                let c = k % is[1];
                out.extend(ch.iter().map(|v| prop.combine([(v, scale[c])], shift[c], err)));
            }
            out
        }
        Op::Flatten { .. } | Op::Reshape { .. } => get(&node.inputs[0])?.clone(),
        Op::Constant { value } => value.data().iter().map(|&v| seed_quantized(f64::from(v), fmt, prop)).collect(),
    })
}

impl From<ArithError> for BoundsError {
    fn from(e: ArithError) -> Self {
        BoundsError::Model(ModelError::Arith { node: String::new(), source: e })
    }
}

/// Write `layer_index,op_kind,bound,empirical_error`.
pub fn write_bounds_csv(path: &Path, layers: &[LayerBound]) -> Result<(), BoundsError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| BoundsError::Io { path: parent.to_path_buf(), source: e })?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BOUNDS_COLUMNS)?;
    for l in layers {
        w.write_record([
            l.layer_index.to_string(),
            l.op_kind.to_string(),
            format!("{:e}", l.bound),
            l.empirical_error.map(|e| format!("{e:e}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| BoundsError::Io { path: path.to_path_buf(), source: e })
}
