//! Executes a [`Graph`] on any [`Arithmetic`] backend.
//!
//! Weights are converted once by [`quantize_graph`]; every operator then runs
//! entirely in the target arithmetic. Convolution and dense layers are
//! evaluated as dot products whose inner index runs over `(c, ky, kx)` with
//! padding zeros included, so the reduction order is fixed by the model.

use std::collections::HashMap;

use crate::arith::Arithmetic;
use crate::error::ArithError;
use crate::graph::{broadcast_shape, Graph, ModelError, Node, Op};
use crate::reducers::{dot, DotAlgorithm, SumAlgorithm};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub dot: DotAlgorithm,
    pub sum: SumAlgorithm,
}

enum Layer<S> {
    Conv { weights: Vec<S>, bias: Option<Vec<S>>, out_channels: usize },
    Dense { rows: Vec<S>, inner: usize, bias: Option<Tensor<S>> },
    Affine { scale: Vec<S>, shift: Vec<S> },
    Constant(Tensor<S>),
    Plain,
}

/// A graph with its parameters converted to one arithmetic.
pub struct PreparedGraph<'g, A: Arithmetic> {
    graph: &'g Graph,
    arith: A,
    cfg: ExecConfig,
    layers: Vec<Layer<A::Scalar>>,
    consts: HashMap<String, Tensor<A::Scalar>>,
    last_use: HashMap<String, usize>,
}

fn quantize<A: Arithmetic>(arith: &A, name: &str, values: impl Iterator<Item = f64> + Clone) -> Result<Vec<A::Scalar>, ModelError> {
    values.clone().map(|v| arith.from_f64(v)).collect::<Result<Vec<_>, _>>().map_err(|e| match e {
        ArithError::Overflow { .. } => ModelError::Overflow {
            tensor: name.to_string(),
            max_abs: values.fold(0.0, |m: f64, v| m.max(v.abs())),
        },
        other => ModelError::Arith { node: name.to_string(), source: other },
    })
}

fn quantize_tensor<A: Arithmetic>(arith: &A, name: &str, t: &Tensor<f32>) -> Result<Tensor<A::Scalar>, ModelError> {
    let data = quantize(arith, name, t.data().iter().map(|&v| f64::from(v)))?;
    Ok(Tensor::new(t.shape().to_vec(), data))
}

/// Convert every parameter of `graph` into `arith`.
///
/// Fails with [`ModelError::Overflow`] naming the first tensor that does not
/// fit. Gemm `alpha`/`beta` and batch normalization are folded in binary64
/// before the single conversion.
pub fn quantize_graph<A: Arithmetic>(graph: &Graph, arith: A, cfg: ExecConfig) -> Result<PreparedGraph<'_, A>, ModelError> {
    if cfg.dot.kind() != arith.kind() {
        return Err(ModelError::Arith {
            node: String::new(),
            source: ArithError::Incompatible(format!("{} dot product cannot run on {}", cfg.dot, arith.describe())),
        });
    }
    let init = |id: &str| graph.initializer(id).ok_or_else(|| ModelError::Missing(id.to_string()));
    let mut layers = Vec::with_capacity(graph.nodes.len());
    let mut consts = HashMap::new();
    for node in &graph.nodes {
        let layer = match &node.op {
            Op::Conv { .. } => {
                let w = init(&node.inputs[1])?;
                let bias = match node.inputs.get(2) {
                    Some(b) => Some(quantize_tensor(&arith, b, init(b)?)?.into_data()),
                    None => None,
                };
                Layer::Conv {
                    weights: quantize_tensor(&arith, &node.inputs[1], w)?.into_data(),
                    bias,
                    out_channels: w.shape()[0],
                }
            }
            Op::Gemm { trans_b, alpha, beta } => {
                let b = init(&node.inputs[1])?;
                let rows = dense_rows(b, *trans_b, *alpha);
                let bias = match node.inputs.get(2) {
                    Some(c) => {
                        let t = init(c)?;
                        let data = quantize(&arith, c, t.data().iter().map(|&v| f64::from(v) * beta))?;
                        Some(Tensor::new(t.shape().to_vec(), data))
                    }
                    None => None,
                };
                let inner = if *trans_b { b.shape()[1] } else { b.shape()[0] };
                Layer::Dense { rows: quantize(&arith, &node.inputs[1], rows.into_iter())?, inner, bias }
            }
            Op::MatMul => match graph.initializer(&node.inputs[1]) {
                Some(b) => Layer::Dense {
                    rows: quantize(&arith, &node.inputs[1], dense_rows(b, false, 1.0).into_iter())?,
                    inner: b.shape()[0],
                    bias: None,
                },
                None => Layer::Plain,
            },
            Op::BatchNormalization { epsilon } => {
                let (scale, shift) = fold_batch_norm(graph, node, *epsilon)?;
                Layer::Affine {
                    scale: quantize(&arith, &format!("{}.scale", node.name), scale.into_iter())?,
                    shift: quantize(&arith, &format!("{}.shift", node.name), shift.into_iter())?,
                }
            }
            Op::Constant { value } => Layer::Constant(quantize_tensor(&arith, node.output(), value)?),
            Op::Add => {
                for id in &node.inputs {
                    if let Some(t) = graph.initializer(id) {
                        consts.insert(id.clone(), quantize_tensor(&arith, id, t)?);
                    }
                }
                Layer::Plain
            }
            _ => Layer::Plain,
        };
        if matches!(node.op, Op::MatMul) && matches!(layer, Layer::Plain) {
            if let Some(t) = graph.initializer(&node.inputs[0]) {
                consts.insert(node.inputs[0].clone(), quantize_tensor(&arith, &node.inputs[0], t)?);
            }
        }
        layers.push(layer);
    }
    let mut last_use = HashMap::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        for id in &node.inputs {
            last_use.insert(id.clone(), i);
        }
    }
    Ok(PreparedGraph { graph, arith, cfg, layers, consts, last_use })
}

/// Per-channel `(scale, shift)` equivalent to a batch normalization node,
/// computed in binary64.
pub(crate) fn fold_batch_norm(graph: &Graph, node: &Node, epsilon: f64) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let p = |i: usize| {
        graph
            .initializer(&node.inputs[i])
            .map(|t| t.data().iter().map(|&v| f64::from(v)).collect::<Vec<_>>())
            .ok_or_else(|| ModelError::Missing(node.inputs[i].clone()))
    };
    let (gamma, beta, mean, var) = (p(1)?, p(2)?, p(3)?, p(4)?);
    let scale: Vec<f64> = gamma.iter().zip(&var).map(|(g, v)| g / (v + epsilon).sqrt()).collect();
    let shift: Vec<f64> = beta.iter().zip(&mean).zip(&scale).map(|((b, m), s)| b - m * s).collect();
    Ok((scale, shift))
}

/// Weights of a dense layer laid out one output per row, scaled by `alpha`.
pub(crate) fn dense_rows(b: &Tensor<f32>, trans_b: bool, alpha: f64) -> Vec<f64> {
    let (r, c) = (b.shape()[0], b.shape()[1]);
    let d = b.data();
    let scaled = |v: f32| f64::from(v) * alpha;
    if trans_b {
        d.iter().map(|&v| scaled(v)).collect()
    } else {
        (0..c).flat_map(|j| (0..r).map(move |i| scaled(d[i * c + j]))).collect()
    }
}

impl<'g, A: Arithmetic> PreparedGraph<'g, A> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn arith(&self) -> &A {
        &self.arith
    }

    pub fn config(&self) -> ExecConfig {
        self.cfg
    }

    /// Convert a real-valued input (any shape with the model's element count).
    pub fn convert_input(&self, input: &[f64]) -> Result<Tensor<A::Scalar>, ModelError> {
        let want: usize = self.graph.input_shape.iter().product();
        if input.len() != want {
            return Err(ModelError::Input(format!(
                "expected {want} values for shape {:?}, got {}",
                self.graph.input_shape,
                input.len()
            )));
        }
        let data = input
            .iter()
            .map(|&v| self.arith.from_f64(v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ModelError::Arith { node: self.graph.input.clone(), source: e })?;
        Ok(Tensor::new(self.graph.input_shape.clone(), data))
    }

    pub fn run(&self, input: &[f64]) -> Result<Tensor<A::Scalar>, ModelError> {
        self.run_traced(input, |_, _, _| {})
    }

    /// Run and report each node's output as it is produced.
    pub fn run_traced(
        &self,
        input: &[f64],
        visit: impl FnMut(usize, &Node, &Tensor<A::Scalar>),
    ) -> Result<Tensor<A::Scalar>, ModelError> {
        let x = self.convert_input(input)?;
        self.execute(x, visit)
    }

    /// Run from an input already in the target arithmetic.
    pub fn execute(
        &self,
        input: Tensor<A::Scalar>,
        mut visit: impl FnMut(usize, &Node, &Tensor<A::Scalar>),
    ) -> Result<Tensor<A::Scalar>, ModelError> {
        let g = self.graph;
        let mut values: HashMap<&str, Tensor<A::Scalar>> = HashMap::new();
        values.insert(g.input.as_str(), input);
        for (i, node) in g.nodes.iter().enumerate() {
            let out = {
                let get = |id: &str| -> Result<&Tensor<A::Scalar>, ModelError> {
                    values.get(id).or_else(|| self.consts.get(id)).ok_or_else(|| ModelError::Missing(id.to_string()))
                };
                self.eval(node, &self.layers[i], &get).map_err(|e| match e {
                    EvalError::Arith(source) => ModelError::Arith { node: node.name.clone(), source },
                    EvalError::Model(m) => m,
                })?
            };
            visit(i, node, &out);
            for id in &node.inputs {
                if self.last_use.get(id) == Some(&i) && id != &g.output {
                    values.remove(id.as_str());
                }
            }
            values.insert(node.output(), out);
        }
        values.remove(g.output.as_str()).ok_or_else(|| ModelError::Missing(g.output.clone()))
    }

    fn eval<'v>(
        &self,
        node: &Node,
        layer: &Layer<A::Scalar>,
        get: &dyn Fn(&str) -> Result<&'v Tensor<A::Scalar>, ModelError>,
    ) -> Result<Tensor<A::Scalar>, EvalError>
    where
        A::Scalar: 'v,
    {
        let a = &self.arith;
        let out_shape = self.graph.shape(node.output()).expect("validated").to_vec();
        let data = match (&node.op, layer) {
            (Op::Conv { strides, pads, dilations }, Layer::Conv { weights, bias, out_channels }) => {
                let x = get(&node.inputs[0])?;
                let w_shape = self.graph.shape(&node.inputs[1]).expect("validated");
                let geom = ConvGeometry {
                    in_shape: x.shape(),
                    kernel: [w_shape[2], w_shape[3]],
                    out: [out_shape[2], out_shape[3]],
                    strides: *strides,
                    pads: *pads,
                    dilations: *dilations,
                };
                self.conv(x, weights, bias.as_deref(), *out_channels, &geom)?
            }
            (Op::Gemm { .. } | Op::MatMul, Layer::Dense { rows, inner, bias }) => {
                let x = get(&node.inputs[0])?;
                self.dense(x.data(), rows, *inner, bias.as_ref(), &out_shape)?
            }
            (Op::MatMul, _) => {
                let (l, r) = (get(&node.inputs[0])?, get(&node.inputs[1])?);
                let (k, n) = (r.shape()[0], r.shape()[1]);
                let rows: Vec<A::Scalar> =
                    (0..n).flat_map(|j| (0..k).map(move |i| r.data()[i * n + j].clone())).collect();
                self.dense(l.data(), &rows, k, None, &out_shape)?
            }
            (Op::Add, _) => {
                let (l, r) = (get(&node.inputs[0])?, get(&node.inputs[1])?);
                if l.shape() == r.shape() {
                    l.data().iter().zip(r.data()).map(|(p, q)| a.add(p, q)).collect::<Result<Vec<_>, _>>()?
                } else {
                    let mut out = Vec::with_capacity(out_shape.iter().product());
                    for_each_broadcast(&out_shape, l.shape(), r.shape(), |i, j| {
                        out.push(a.add(&l.data()[i], &r.data()[j]));
                    });
                    out.into_iter().collect::<Result<Vec<_>, _>>()?
                }
            }
            (Op::Relu, _) => {
                let zero = a.zero();
                get(&node.inputs[0])?.data().iter().map(|v| a.max(v, &zero)).collect()
            }
            (Op::MaxPool { kernel, strides, pads }, _) => {
                let x = get(&node.inputs[0])?;
                self.max_pool(x, *kernel, *strides, *pads, &out_shape)
            }
            (Op::GlobalAveragePool, _) => {
                let x = get(&node.inputs[0])?;
                let plane = x.shape()[2] * x.shape()[3];
                x.data().chunks(plane).map(|c| a.exact_mean(c)).collect::<Result<Vec<_>, _>>()?
            }
            (Op::BatchNormalization { .. }, Layer::Affine { scale, shift }) => {
                let x = get(&node.inputs[0])?;
                let (c, plane) = (x.shape()[1], x.shape()[2..].iter().product::<usize>());
                let mut out = Vec::with_capacity(x.len());
                for (i, chunk) in x.data().chunks(plane).enumerate() {
                    let ch = i % c;
                    for v in chunk {
                        out.push(a.add(&a.mul(v, &scale[ch])?, &shift[ch])?);
                    }
                }
                out
            }
            (Op::Flatten { .. } | Op::Reshape { .. }, _) => get(&node.inputs[0])?.data().to_vec(),
            (Op::Constant { .. }, Layer::Constant(t)) => t.data().to_vec(),
            (op, _) => unreachable!("layer prepared for {}", op.kind()),
        };
        Tensor::try_new(out_shape, data).map_err(|e| EvalError::Model(ModelError::Shape { node: node.name.clone(), reason: e }))
    }

    fn conv(
        &self,
        x: &Tensor<A::Scalar>,
        weights: &[A::Scalar],
        bias: Option<&[A::Scalar]>,
        out_channels: usize,
        g: &ConvGeometry,
    ) -> Result<Vec<A::Scalar>, EvalError> {
        let a = &self.arith;
        let [n, c, h, w] = [g.in_shape[0], g.in_shape[1], g.in_shape[2], g.in_shape[3]];
        let [kh, kw] = g.kernel;
        let [oh, ow] = g.out;
        let patch_len = c * kh * kw;
        let zero = a.zero();
        let mut out = vec![zero.clone(); n * out_channels * oh * ow];
        let mut patch: Vec<A::Scalar> = Vec::with_capacity(patch_len);
        for b in 0..n {
            let img = &x.data()[b * c * h * w..(b + 1) * c * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    patch.clear();
                    for ci in 0..c {
                        for ky in 0..kh {
                            let iy = (oy * g.strides[0] + ky * g.dilations[0]) as isize - g.pads[0] as isize;
                            for kx in 0..kw {
                                let ix = (ox * g.strides[1] + kx * g.dilations[1]) as isize - g.pads[1] as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    patch.push(zero.clone());
                                } else {
                                    patch.push(img[(ci * h + iy as usize) * w + ix as usize].clone());
                                }
                            }
                        }
                    }
                    for o in 0..out_channels {
                        let row = &weights[o * patch_len..(o + 1) * patch_len];
                        let mut v = dot(a, row, &patch, self.cfg.dot, self.cfg.sum)?;
                        if let Some(bias) = bias {
                            v = a.add(&v, &bias[o])?;
                        }
                        out[((b * out_channels + o) * oh + oy) * ow + ox] = v;
                    }
                }
            }
        }
        Ok(out)
    }

    fn dense(
        &self,
        x: &[A::Scalar],
        rows: &[A::Scalar],
        inner: usize,
        bias: Option<&Tensor<A::Scalar>>,
        out_shape: &[usize],
    ) -> Result<Vec<A::Scalar>, EvalError> {
        let a = &self.arith;
        let (m, n) = (out_shape[0], out_shape[1]);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let xi = &x[i * inner..(i + 1) * inner];
            for j in 0..n {
                out.push(dot(a, &rows[j * inner..(j + 1) * inner], xi, self.cfg.dot, self.cfg.sum)?);
            }
        }
        if let Some(bias) = bias {
            let mut biased = Vec::with_capacity(out.len());
            let mut err = None;
            for_each_broadcast(out_shape, out_shape, bias.shape(), |k, l| match a.add(&out[k], &bias.data()[l]) {
                Ok(v) => biased.push(v),
                Err(e) => {
                    err.get_or_insert(e);
                }
            });
            if let Some(e) = err {
                return Err(e.into());
            }
            out = biased;
        }
        Ok(out)
    }

    fn max_pool(
        &self,
        x: &Tensor<A::Scalar>,
        kernel: [usize; 2],
        strides: [usize; 2],
        pads: [usize; 4],
        out_shape: &[usize],
    ) -> Vec<A::Scalar> {
        let a = &self.arith;
        let [h, w] = [x.shape()[2], x.shape()[3]];
        let [oh, ow] = [out_shape[2], out_shape[3]];
        let planes = x.shape()[0] * x.shape()[1];
        let mut out = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let plane = &x.data()[p * h * w..(p + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best: Option<&A::Scalar> = None;
                    for ky in 0..kernel[0] {
                        let iy = (oy * strides[0] + ky) as isize - pads[0] as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel[1] {
                            let ix = (ox * strides[1] + kx) as isize - pads[1] as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let v = &plane[iy as usize * w + ix as usize];
                            if best.map_or(true, |b| a.cmp(v, b) == std::cmp::Ordering::Greater) {
                                best = Some(v);
                            }
                        }
                    }
                    out.push(best.expect("window overlaps the input").clone());
                }
            }
        }
        out
    }
}

struct ConvGeometry<'s> {
    in_shape: &'s [usize],
    kernel: [usize; 2],
    out: [usize; 2],
    strides: [usize; 2],
    pads: [usize; 4],
    dilations: [usize; 2],
}

enum EvalError {
    Arith(ArithError),
    Model(ModelError),
}

impl From<ArithError> for EvalError {
    fn from(e: ArithError) -> Self {
        EvalError::Arith(e)
    }
}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        EvalError::Model(e)
    }
}

/// Visit `(i, j)` flat indices of `a` and `b` for every element of the
/// broadcast shape `out`, in row-major order.
pub fn for_each_broadcast(out: &[usize], a: &[usize], b: &[usize], mut f: impl FnMut(usize, usize)) {
    debug_assert_eq!(broadcast_shape(a, b).as_deref(), Some(out).filter(|_| a.len().max(b.len()) == out.len()));
    let strides = |s: &[usize]| {
        let mut st = vec![0usize; out.len()];
        let mut acc = 1;
        for (k, &d) in s.iter().enumerate().rev() {
            let pos = out.len() - s.len() + k;
            st[pos] = if d == 1 { 0 } else { acc };
            acc *= d;
        }
        st
    };
    let (sa, sb) = (strides(a), strides(b));
    let total: usize = out.iter().product();
    let mut idx = vec![0usize; out.len()];
    let (mut i, mut j) = (0usize, 0usize);
    for _ in 0..total {
        f(i, j);
        for d in (0..out.len()).rev() {
            idx[d] += 1;
            i += sa[d];
            j += sb[d];
            if idx[d] < out[d] {
                break;
            }
            i -= sa[d] * out[d];
            j -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_walk() {
        let mut seen = Vec::new();
        for_each_broadcast(&[2, 3], &[2, 3], &[3], |i, j| seen.push((i, j)));
        assert_eq!(seen, vec![(0, 0), (1, 1), (2, 2), (3, 0), (4, 1), (5, 2)]);
        seen.clear();
        for_each_broadcast(&[2, 2], &[2, 1], &[1, 2], |i, j| seen.push((i, j)));
        assert_eq!(seen, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }
}
