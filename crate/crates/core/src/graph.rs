//! Static operator graphs and the portable on-disk model format.
//!
//! A model is a directory holding `model.json` (graph, attributes and a
//! tensor table) and `weights.bin` (little-endian binary32 payloads, each
//! starting on a 64-byte boundary and guarded by a CRC32).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::error::ArithError;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: &str = "1.0";
pub const SUPPORTED_MAJOR: u64 = 1;
pub const BLOB_ALIGN: usize = 64;
pub const MANIFEST_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("unsupported format_version {0} (this reader handles {SUPPORTED_MAJOR}.x)")]
    Version(String),
    #[error("tensor {tensor}: {reason}")]
    Checksum { tensor: String, reason: String },
    #[error("unknown tensor or value '{0}'")]
    Missing(String),
    #[error("unsupported operator {0}")]
    UnsupportedOp(String),
    #[error("node {node}: {reason}")]
    Attribute { node: String, reason: String },
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("node {node}: {reason}")]
    Shape { node: String, reason: String },
    #[error("tensor {tensor} does not fit the target format (max |value| = {max_abs})")]
    Overflow { tensor: String, max_abs: f64 },
    #[error("node {node}: {source}")]
    Arith {
        node: String,
        #[source]
        source: ArithError,
    },
    #[error("input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub format_version: String,
    #[serde(default)]
    pub name: String,
    pub inputs: Vec<InputSpec>,
    pub outputs: Vec<String>,
    pub tensors: Vec<TensorEntry>,
    pub nodes: Vec<NodeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InputSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub byte_length: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeEntry {
    #[serde(default)]
    pub name: String,
    pub op: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub attributes: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Conv { strides: [usize; 2], pads: [usize; 4], dilations: [usize; 2] },
    Gemm { trans_b: bool, alpha: f64, beta: f64 },
    MatMul,
    Add,
    Relu,
    MaxPool { kernel: [usize; 2], strides: [usize; 2], pads: [usize; 4] },
    GlobalAveragePool,
    BatchNormalization { epsilon: f64 },
    Flatten { axis: usize },
    Reshape { shape: Vec<i64> },
    Constant { value: Tensor<f32> },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Conv { .. } => "Conv",
            Op::Gemm { .. } => "Gemm",
            Op::MatMul => "MatMul",
            Op::Add => "Add",
            Op::Relu => "Relu",
            Op::MaxPool { .. } => "MaxPool",
            Op::GlobalAveragePool => "GlobalAveragePool",
            Op::BatchNormalization { .. } => "BatchNormalization",
            Op::Flatten { .. } => "Flatten",
            Op::Reshape { .. } => "Reshape",
            Op::Constant { .. } => "Constant",
        }
    }

    fn parse(entry: &NodeEntry) -> Result<Op, ModelError> {
        let a = Attrs { node: &entry.name, map: &entry.attributes };
        Ok(match entry.op.as_str() {
            "Conv" => {
                if a.int("group", 1)? != 1 {
                    return Err(ModelError::UnsupportedOp(format!("Conv with group != 1 ({})", entry.name)));
                }
                if let Some(p) = a.map.get("auto_pad").and_then(Value::as_str) {
                    if p != "NOTSET" {
                        return Err(a.err(format!("auto_pad {p} is not supported")));
                    }
                }
                Op::Conv { strides: a.pair("strides", 1)?, pads: a.quad("pads")?, dilations: a.pair("dilations", 1)? }
            }
            "Gemm" => {
                if a.int("transA", 0)? != 0 {
                    return Err(a.err("transA is not supported".into()));
                }
                Op::Gemm { trans_b: a.int("transB", 0)? != 0, alpha: a.float("alpha", 1.0)?, beta: a.float("beta", 1.0)? }
            }
            "MatMul" => Op::MatMul,
            "Add" => Op::Add,
            "Relu" => Op::Relu,
            "MaxPool" => {
                if a.int("ceil_mode", 0)? != 0 {
                    return Err(a.err("ceil_mode is not supported".into()));
                }
                if a.pair("dilations", 1)? != [1, 1] {
                    return Err(a.err("dilated pooling is not supported".into()));
                }
                let kernel = a.ints("kernel_shape")?.ok_or_else(|| a.err("kernel_shape is required".into()))?;
                let kernel = to_pair(&kernel).ok_or_else(|| a.err("kernel_shape must have two entries".into()))?;
                Op::MaxPool { kernel, strides: a.pair("strides", 1)?, pads: a.quad("pads")? }
            }
            "GlobalAveragePool" => Op::GlobalAveragePool,
            "BatchNormalization" => Op::BatchNormalization { epsilon: a.float("epsilon", 1e-5)? },
            "Flatten" => {
                let axis = a.int("axis", 1)?;
                if axis < 0 {
                    return Err(a.err("negative Flatten axis is not supported".into()));
                }
                Op::Flatten { axis: axis as usize }
            }
            "Reshape" => Op::Reshape { shape: a.ints("shape")?.ok_or_else(|| a.err("shape is required".into()))? },
            "Constant" => {
                let v = a.map.get("value").ok_or_else(|| a.err("value is required".into()))?;
                let shape: Vec<usize> = serde_json::from_value(v.get("shape").cloned().unwrap_or(json!([])))
                    .map_err(|e| a.err(format!("value.shape: {e}")))?;
                let data: Vec<f32> = serde_json::from_value(v.get("data").cloned().unwrap_or(json!([])))
                    .map_err(|e| a.err(format!("value.data: {e}")))?;
                let shape = if shape.is_empty() { vec![1] } else { shape };
                Op::Constant { value: Tensor::try_new(shape, data).map_err(|e| a.err(e))? }
            }
            other => return Err(ModelError::UnsupportedOp(other.to_string())),
        })
    }

    fn attributes(&self) -> Map<String, Value> {
        let v = match self {
            Op::Conv { strides, pads, dilations } => {
                json!({"strides": strides, "pads": pads, "dilations": dilations, "group": 1})
            }
            Op::Gemm { trans_b, alpha, beta } => json!({"transB": i64::from(*trans_b), "alpha": alpha, "beta": beta}),
            Op::MaxPool { kernel, strides, pads } => json!({"kernel_shape": kernel, "strides": strides, "pads": pads}),
            Op::BatchNormalization { epsilon } => json!({ "epsilon": epsilon }),
            Op::Flatten { axis } => json!({ "axis": axis }),
            Op::Reshape { shape } => json!({ "shape": shape }),
            Op::Constant { value } => json!({"value": {"shape": value.shape(), "data": value.data()}}),
            Op::MatMul | Op::Add | Op::Relu | Op::GlobalAveragePool => json!({}),
        };
        match v {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }
}

struct Attrs<'a> {
    node: &'a str,
    map: &'a Map<String, Value>,
}

impl Attrs<'_> {
    fn err(&self, reason: String) -> ModelError {
        ModelError::Attribute { node: self.node.to_string(), reason }
    }

    fn int(&self, key: &str, default: i64) -> Result<i64, ModelError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_i64().ok_or_else(|| self.err(format!("{key} must be an integer"))),
        }
    }

    fn float(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| self.err(format!("{key} must be a number"))),
        }
    }

    fn ints(&self, key: &str) -> Result<Option<Vec<i64>>, ModelError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|_| self.err(format!("{key} must be a list of integers"))),
        }
    }

    fn pair(&self, key: &str, default: usize) -> Result<[usize; 2], ModelError> {
        match self.ints(key)? {
            None => Ok([default; 2]),
            Some(v) => to_pair(&v).ok_or_else(|| self.err(format!("{key} must hold two positive integers"))),
        }
    }

    fn quad(&self, key: &str) -> Result<[usize; 4], ModelError> {
        match self.ints(key)? {
            None => Ok([0; 4]),
            Some(v) if v.len() == 4 && v.iter().all(|&x| x >= 0) => {
                Ok([v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize])
            }
            Some(_) => Err(self.err(format!("{key} must hold four non-negative integers"))),
        }
    }
}

fn to_pair(v: &[i64]) -> Option<[usize; 2]> {
    (v.len() == 2 && v.iter().all(|&x| x > 0)).then(|| [v[0] as usize, v[1] as usize])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Node {
    pub fn new(name: &str, op: Op, inputs: &[&str], outputs: &[&str]) -> Self {
        Node {
            name: name.to_string(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn output(&self) -> &str {
        &self.outputs[0]
    }
}

/// Validated graph with binary32 initializers and inferred value shapes.
#[derive(Debug, Clone)]
pub struct Graph {
    pub name: String,
    pub input: String,
    pub input_shape: Vec<usize>,
    pub output: String,
    pub nodes: Vec<Node>,
    pub initializers: BTreeMap<String, Tensor<f32>>,
    shapes: HashMap<String, Vec<usize>>,
}

impl Graph {
    pub fn new(
        name: &str,
        input: (&str, Vec<usize>),
        output: &str,
        nodes: Vec<Node>,
        initializers: BTreeMap<String, Tensor<f32>>,
    ) -> Result<Self, ModelError> {
        let mut g = Graph {
            name: name.to_string(),
            input: input.0.to_string(),
            input_shape: input.1,
            output: output.to_string(),
            nodes,
            initializers,
            shapes: HashMap::new(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Shape of any value, initializer or graph input.
    pub fn shape(&self, id: &str) -> Option<&[usize]> {
        self.shapes.get(id).map(Vec::as_slice)
    }

    pub fn initializer(&self, id: &str) -> Option<&Tensor<f32>> {
        self.initializers.get(id)
    }

    fn validate(&mut self) -> Result<(), ModelError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(ModelError::Graph(format!("input shape {:?} is invalid", self.input_shape)));
        }
        let mut shapes: HashMap<String, Vec<usize>> = HashMap::new();
        shapes.insert(self.input.clone(), self.input_shape.clone());
        for (k, t) in &self.initializers {
            if shapes.insert(k.clone(), t.shape().to_vec()).is_some() {
                return Err(ModelError::Graph(format!("'{k}' is both an initializer and the graph input")));
            }
        }
        let mut produced: HashSet<String> = HashSet::new();
        for node in &self.nodes {
            for i in &node.inputs {
                if !shapes.contains_key(i) {
                    return Err(ModelError::Graph(format!(
                        "node {} reads '{i}' before it is produced",
                        node.name
                    )));
                }
            }
            if node.outputs.len() != 1 {
                return Err(ModelError::Graph(format!("node {} must have exactly one output", node.name)));
            }
            let out = &node.outputs[0];
            if shapes.contains_key(out) || !produced.insert(out.clone()) {
                return Err(ModelError::Graph(format!("value '{out}' has more than one producer")));
            }
            let shape = infer_shape(self, node, &shapes)?;
            shapes.insert(out.clone(), shape);
        }
        if !produced.contains(&self.output) {
            return Err(ModelError::Graph(format!("output '{}' is never produced", self.output)));
        }
        self.shapes = shapes;
        Ok(())
    }

    /// Multiply-accumulate count of one inference (Conv, Gemm and MatMul).
    pub fn count_macs(&self) -> u64 {
        self.nodes.iter().map(|n| self.node_macs(n)).sum()
    }

    pub fn node_macs(&self, n: &Node) -> u64 {
        let shape = |id: &str| self.shapes[id].clone();
        match &n.op {
            Op::Conv { .. } => {
                let out: usize = shape(n.output()).iter().product();
                let w = shape(&n.inputs[1]);
                (out * w[1] * w[2] * w[3]) as u64
            }
            Op::Gemm { .. } | Op::MatMul => {
                let out: usize = shape(n.output()).iter().product();
                let a = shape(&n.inputs[0]);
                (out * a[1]) as u64
            }
            _ => 0,
        }
    }

    pub fn to_manifest(&self) -> (Manifest, Vec<u8>) {
        let mut blob = Vec::new();
        let mut tensors = Vec::new();
        for (name, t) in &self.initializers {
            blob.resize(blob.len().next_multiple_of(BLOB_ALIGN), 0);
            let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            tensors.push(TensorEntry {
                name: name.clone(),
                dtype: "f32".into(),
                shape: t.shape().to_vec(),
                offset: blob.len() as u64,
                byte_length: bytes.len() as u64,
                crc32: crc32fast::hash(&bytes),
            });
            blob.extend_from_slice(&bytes);
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeEntry {
                name: n.name.clone(),
                op: n.op.kind().to_string(),
                inputs: n.inputs.clone(),
                outputs: n.outputs.clone(),
                attributes: n.op.attributes(),
            })
            .collect();
        let manifest = Manifest {
            format_version: FORMAT_VERSION.into(),
            name: self.name.clone(),
            inputs: vec![InputSpec { name: self.input.clone(), shape: self.input_shape.clone() }],
            outputs: vec![self.output.clone()],
            tensors,
            nodes,
        };
        (manifest, blob)
    }

    /// Write `model.json` and `weights.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let (manifest, blob) = self.to_manifest();
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| ModelError::Manifest(e.to_string()))?;
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, text + "\n").map_err(|e| io_err(&mpath, e))?;
        let wpath = dir.join(WEIGHTS_FILE);
        fs::write(&wpath, blob).map_err(|e| io_err(&wpath, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io { path: path.to_path_buf(), source }
}

/// Accept `1`, `1.0` or `1.2.3`-style versions with a known major.
pub fn check_version(v: &str) -> Result<(), ModelError> {
    let major = v.split('.').next().and_then(|m| m.trim().parse::<u64>().ok());
    match major {
        Some(SUPPORTED_MAJOR) => Ok(()),
        _ => Err(ModelError::Version(v.to_string())),
    }
}

/// Load a model from its directory or from the path of its `model.json`.
pub fn load_model(path: &Path) -> Result<Graph, ModelError> {
    let (mpath, dir) = if path.is_dir() {
        (path.join(MANIFEST_FILE), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ModelError::Manifest(e.to_string()))?;
    let wpath = dir.join(WEIGHTS_FILE);
    let blob = if manifest.tensors.is_empty() && !wpath.exists() {
        Vec::new()
    } else {
        fs::read(&wpath).map_err(|e| io_err(&wpath, e))?
    };
    from_manifest(&manifest, &blob)
}

pub fn from_manifest(m: &Manifest, blob: &[u8]) -> Result<Graph, ModelError> {
    check_version(&m.format_version)?;
    let mut initializers = BTreeMap::new();
    for t in &m.tensors {
        let bad = |reason: String| ModelError::Checksum { tensor: t.name.clone(), reason };
        if t.dtype != "f32" {
            return Err(ModelError::Manifest(format!("tensor {} has dtype {}, expected f32", t.name, t.dtype)));
        }
        let count: usize = t.shape.iter().product();
        if t.byte_length != 4 * count as u64 {
            return Err(bad(format!("byte_length {} does not match shape {:?}", t.byte_length, t.shape)));
        }
        let end = t.offset.checked_add(t.byte_length).filter(|&e| e <= blob.len() as u64);
        let Some(end) = end else {
            return Err(bad(format!("blob is truncated ({} bytes, need {})", blob.len(), t.offset + t.byte_length)));
        };
        let bytes = &blob[t.offset as usize..end as usize];
        let crc = crc32fast::hash(bytes);
        if crc != t.crc32 {
            return Err(bad(format!("crc32 {crc:#010x} does not match manifest {:#010x}", t.crc32)));
        }
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let tensor = Tensor::try_new(t.shape.clone(), data).map_err(|e| bad(e))?;
        if initializers.insert(t.name.clone(), tensor).is_some() {
            return Err(ModelError::Manifest(format!("tensor {} is listed twice", t.name)));
        }
    }
    let nodes = m
        .nodes
        .iter()
        .map(|e| {
            Ok(Node { name: e.name.clone(), op: Op::parse(e)?, inputs: e.inputs.clone(), outputs: e.outputs.clone() })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let [input] = m.inputs.as_slice() else {
        return Err(ModelError::Manifest(format!("expected one graph input, found {}", m.inputs.len())));
    };
    let output = m.outputs.first().ok_or_else(|| ModelError::Manifest("no graph output".into()))?;
    Graph::new(&m.name, (&input.name, input.shape.clone()), output, nodes, initializers)
}

fn shape_err(node: &Node, reason: impl Into<String>) -> ModelError {
    ModelError::Shape { node: node.name.clone(), reason: reason.into() }
}

/// Numpy-style broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn pooled(len: usize, pad: usize, kernel: usize, stride: usize) -> Option<usize> {
    let padded = len + pad;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

fn infer_shape(g: &Graph, node: &Node, shapes: &HashMap<String, Vec<usize>>) -> Result<Vec<usize>, ModelError> {
    let arity = |lo: usize, hi: usize| {
        if node.inputs.len() < lo || node.inputs.len() > hi {
            Err(shape_err(node, format!("expected {lo}..={hi} inputs, got {}", node.inputs.len())))
        } else {
            Ok(())
        }
    };
    let s = |i: usize| shapes[&node.inputs[i]].clone();
    let need_init = |i: usize| {
        if g.initializers.contains_key(&node.inputs[i]) {
            Ok(())
        } else {
            Err(shape_err(node, format!("input '{}' must be a stored tensor", node.inputs[i])))
        }
    };
    match &node.op {
        Op::Conv { strides, pads, dilations } => {
            arity(2, 3)?;
            need_init(1)?;
            let (x, w) = (s(0), s(1));
            if x.len() != 4 || w.len() != 4 {
                return Err(shape_err(node, "Conv expects 4-d input and weight"));
            }
            if x[1] != w[1] {
                return Err(shape_err(node, format!("input has {} channels, weight expects {}", x[1], w[1])));
            }
            if node.inputs.len() == 3 {
                need_init(2)?;
                if s(2) != [w[0]] {
                    return Err(shape_err(node, "bias length must equal output channels"));
                }
            }
            let mut out = vec![x[0], w[0]];
            for d in 0..2 {
                let k = dilations[d] * (w[2 + d] - 1) + 1;
                let o = pooled(x[2 + d], pads[d] + pads[d + 2], k, strides[d])
                    .ok_or_else(|| shape_err(node, "kernel larger than padded input"))?;
                out.push(o);
            }
            Ok(out)
        }
        Op::Gemm { trans_b, .. } => {
            arity(2, 3)?;
            need_init(1)?;
            let (a, b) = (s(0), s(1));
            if a.len() != 2 || b.len() != 2 {
                return Err(shape_err(node, "Gemm expects 2-d operands"));
            }
            let (k, n) = if *trans_b { (b[1], b[0]) } else { (b[0], b[1]) };
            if a[1] != k {
                return Err(shape_err(node, format!("inner dimensions differ ({} vs {k})", a[1])));
            }
            if node.inputs.len() == 3 {
                need_init(2)?;
                let c = s(2);
                if broadcast_shape(&[a[0], n], &c).as_deref() != Some(&[a[0], n][..]) {
                    return Err(shape_err(node, format!("bias shape {c:?} does not broadcast to [{}, {n}]", a[0])));
                }
            }
            Ok(vec![a[0], n])
        }
        Op::MatMul => {
            arity(2, 2)?;
            let (a, b) = (s(0), s(1));
            if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
                return Err(shape_err(node, format!("cannot multiply {a:?} by {b:?}")));
            }
            Ok(vec![a[0], b[1]])
        }
        Op::Add => {
            arity(2, 2)?;
            broadcast_shape(&s(0), &s(1)).ok_or_else(|| shape_err(node, format!("{:?} and {:?} do not broadcast", s(0), s(1))))
        }
        Op::Relu => {
            arity(1, 1)?;
            Ok(s(0))
        }
        Op::MaxPool { kernel, strides, pads } => {
            arity(1, 1)?;
            let x = s(0);
            if x.len() != 4 {
                return Err(shape_err(node, "MaxPool expects a 4-d input"));
            }
            let mut out = vec![x[0], x[1]];
            for d in 0..2 {
                if pads[d] >= kernel[d] || pads[d + 2] >= kernel[d] {
                    return Err(shape_err(node, "padding must be smaller than the kernel"));
                }
                out.push(
                    pooled(x[2 + d], pads[d] + pads[d + 2], kernel[d], strides[d])
                        .ok_or_else(|| shape_err(node, "kernel larger than padded input"))?,
                );
            }
            Ok(out)
        }
        Op::GlobalAveragePool => {
            arity(1, 1)?;
            let x = s(0);
            if x.len() != 4 {
                return Err(shape_err(node, "GlobalAveragePool expects a 4-d input"));
            }
            Ok(vec![x[0], x[1], 1, 1])
        }
        Op::BatchNormalization { .. } => {
            arity(5, 5)?;
            let x = s(0);
            if x.len() < 2 {
                return Err(shape_err(node, "BatchNormalization needs a channel axis"));
            }
            for i in 1..5 {
                need_init(i)?;
                if s(i) != [x[1]] {
                    return Err(shape_err(node, format!("parameter {} must have {} entries", node.inputs[i], x[1])));
                }
            }
            Ok(x)
        }
        Op::Flatten { axis } => {
            arity(1, 1)?;
            let x = s(0);
            if *axis > x.len() {
                return Err(shape_err(node, "Flatten axis out of range"));
            }
            Ok(vec![x[..*axis].iter().product(), x[*axis..].iter().product()])
        }
        Op::Reshape { shape } => {
            arity(1, 1)?;
            let x = s(0);
            let total: usize = x.iter().product();
            let mut out = Vec::with_capacity(shape.len());
            let mut infer = None;
            for (i, &d) in shape.iter().enumerate() {
                match d {
                    0 => out.push(*x.get(i).ok_or_else(|| shape_err(node, "0 in Reshape beyond input rank"))?),
                    -1 if infer.is_none() => {
                        infer = Some(i);
                        out.push(1);
                    }
                    d if d > 0 => out.push(d as usize),
                    _ => return Err(shape_err(node, format!("invalid Reshape target {shape:?}"))),
                }
            }
            let known: usize = out.iter().product();
            if let Some(i) = infer {
                if known == 0 || total % known != 0 {
                    return Err(shape_err(node, format!("cannot reshape {x:?} to {shape:?}")));
                }
                out[i] = total / known;
            }
            if out.iter().product::<usize>() != total {
                return Err(shape_err(node, format!("cannot reshape {x:?} to {shape:?}")));
            }
            Ok(out)
        }
        Op::Constant { value } => {
            arity(0, 0)?;
            Ok(value.shape().to_vec())
        }
    }
}
