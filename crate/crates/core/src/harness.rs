//! Bit-width sweeps: datasets, the top-1 agreement metric, CSV reports,
//! minimum-width extraction and throughput estimates.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arith::{ArithKind, Arithmetic, FixedArith, FloatArith, WordArith};
use crate::error::ArithError;
use crate::fixed::{FixedFormat, DEFAULT_MAGNITUDE_BITS};
use crate::graph::{check_version, Graph, ModelError};
use crate::reducers::{DotAlgorithm, SumAlgorithm};
use crate::rounding::RoundingMode;
use crate::runtime::{quantize_graph, ExecConfig};
use crate::softfloat::WORD_PRECISION;
use crate::tensor::argmax_by;

pub const REPORT_COLUMNS: [&str; 10] =
    ["arith", "dot", "sum", "round", "pbits", "samples", "failures", "agreement_pct", "macs", "est_inf_per_s"];
pub const BUDGET_COLUMNS: [&str; 6] = ["arith", "dot", "sum", "round", "pbits", "ops_per_sec"];
const TIMESTAMP_PREFIX: &str = "# generated_at=";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no samples to compare")]
    Empty,
    #[error("{outputs} outputs but {reference} reference labels")]
    LengthMismatch { outputs: usize, reference: usize },
    #[error("{0} never reaches 100% agreement")]
    NotReached(String),
    #[error("the model performs no multiply-accumulates")]
    ZeroMacs,
    #[error("invalid ops budget {0}")]
    InvalidBudget(f64),
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("cannot resume: {0}")]
    Resume(String),
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: String,
    pub count: usize,
    pub sample_shape: Vec<usize>,
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub samples_sha256: Option<String>,
    pub labels: Vec<usize>,
    #[serde(default)]
    pub preprocessing: serde_json::Value,
}

/// Fixed-stride binary32 samples with reference top-1 labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    samples: Vec<f32>,
    stride: usize,
}

impl Dataset {
    pub fn new(sample_shape: Vec<usize>, samples: Vec<f32>, labels: Vec<usize>) -> Result<Self, HarnessError> {
        let stride: usize = sample_shape.iter().product();
        if stride == 0 || samples.len() != stride * labels.len() {
            return Err(HarnessError::Dataset(format!(
                "{} values cannot hold {} samples of shape {sample_shape:?}",
                samples.len(),
                labels.len()
            )));
        }
        let meta = DatasetMeta {
            format_version: "1.0".into(),
            count: labels.len(),
            sample_shape,
            num_classes: None,
            samples_sha256: None,
            labels,
            preprocessing: serde_json::Value::Null,
        };
        Ok(Dataset { meta, samples, stride })
    }

    /// Read `samples.bin` and `labels.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let lpath = dir.join("labels.json");
        let text = fs::read_to_string(&lpath).map_err(|e| io_err(&lpath, e))?;
        let meta: DatasetMeta =
            serde_json::from_str(&text).map_err(|e| HarnessError::Dataset(format!("labels.json: {e}")))?;
        check_version(&meta.format_version).map_err(|e| HarnessError::Dataset(e.to_string()))?;
        if meta.labels.len() != meta.count {
            return Err(HarnessError::Dataset(format!("count is {} but {} labels given", meta.count, meta.labels.len())));
        }
        let spath = dir.join("samples.bin");
        let bytes = fs::read(&spath).map_err(|e| io_err(&spath, e))?;
        if let Some(want) = &meta.samples_sha256 {
            let got = format!("{:x}", Sha256::digest(&bytes));
            if !got.eq_ignore_ascii_case(want) {
                return Err(HarnessError::Dataset(format!("samples.bin sha256 {got} does not match {want}")));
            }
        }
        let stride: usize = meta.sample_shape.iter().product();
        if stride == 0 || bytes.len() != 4 * stride * meta.count {
            return Err(HarnessError::Dataset(format!(
                "samples.bin holds {} bytes, expected {} samples of shape {:?}",
                bytes.len(),
                meta.count,
                meta.sample_shape
            )));
        }
        let samples = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Dataset { meta, samples, stride })
    }

    pub fn len(&self) -> usize {
        self.meta.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.samples[i * self.stride..(i + 1) * self.stride]
    }

    pub fn labels(&self) -> &[usize] {
        &self.meta.labels
    }
}

/// Percentage of samples whose predicted class equals the reference, to two
/// decimals. Failed samples (`None`) count as disagreements. The value is
/// never rounded up to 100 unless every sample agrees.
pub fn top1_agreement(outputs: &[Option<usize>], reference: &[usize]) -> Result<f64, HarnessError> {
    if outputs.len() != reference.len() {
        return Err(HarnessError::LengthMismatch { outputs: outputs.len(), reference: reference.len() });
    }
    if outputs.is_empty() {
        return Err(HarnessError::Empty);
    }
    let matches = outputs.iter().zip(reference).filter(|(o, r)| **o == Some(**r)).count();
    Ok(agreement_pct(matches, outputs.len()))
}

fn agreement_pct(matches: usize, n: usize) -> f64 {
    let pct = ((matches as f64 * 10000.0) / n as f64).round() / 100.0;
    if matches < n {
        pct.min(99.99)
    } else {
        pct
    }
}

/// How a float `pbits` value maps to the soft-float precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PbitsConvention {
    /// `pbits` counts every significand bit, the leading one included.
    #[default]
    Total,
    /// `pbits` counts stored bits; the implicit leading one is extra.
    Stored,
}

impl PbitsConvention {
    pub fn precision(self, pbits: u32) -> u32 {
        match self {
            PbitsConvention::Total => pbits,
            PbitsConvention::Stored => pbits + 1,
        }
    }
}

impl FromStr for PbitsConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "total" => Ok(PbitsConvention::Total),
            "stored" => Ok(PbitsConvention::Stored),
            other => Err(format!("unknown convention '{other}' (expected total or stored)")),
        }
    }
}

/// One configuration of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub arith: ArithKind,
    pub dot: DotAlgorithm,
    pub sum: SumAlgorithm,
    pub round: RoundingMode,
    pub pbits: u32,
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{} pbits={}", self.arith, self.dot.label(), self.sum, self.round, self.pbits)
    }
}

/// Backend settings shared by every point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendOptions {
    pub magnitude_bits: u32,
    pub convention: PbitsConvention,
}

impl Default for BackendOptions {
    fn default() -> Self {
        BackendOptions { magnitude_bits: DEFAULT_MAGNITUDE_BITS, convention: PbitsConvention::Total }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub arith: ArithKind,
    pub pbits: (u32, u32),
    pub rounds: Vec<RoundingMode>,
    pub sums: Vec<SumAlgorithm>,
    pub dots: Vec<DotAlgorithm>,
    pub samples: Option<usize>,
    pub workers: usize,
    pub backend: BackendOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        let (lo, hi) = self.pbits;
        if lo < 1 || lo > hi {
            return bad(format!("pbits range {lo}..{hi} must satisfy 1 <= lo <= hi"));
        }
        if self.arith == ArithKind::Float && self.backend.convention.precision(lo) < 2 {
            return bad("float precision must be at least 2 bits".into());
        }
        if self.samples == Some(0) {
            return bad("sample limit must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("worker count must be at least 1".into());
        }
        if self.rounds.is_empty() || self.sums.is_empty() || self.dots.is_empty() {
            return bad("rounding, sum and dot lists must be non-empty".into());
        }
        if let Some(d) = self.dots.iter().find(|d| d.kind() != self.arith) {
            return bad(format!("{d} does not run on {} arithmetic", self.arith));
        }
        if self.arith == ArithKind::Fixed {
            FixedFormat::new(self.backend.magnitude_bits, hi, RoundingMode::Rne).map_err(HarnessError::Arith)?;
        }
        Ok(())
    }

    /// Grid points in report order: dot, sum, rounding, then width.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for &dot in &self.dots {
            for &sum in &self.sums {
                for &round in &self.rounds {
                    for pbits in self.pbits.0..=self.pbits.1 {
                        out.push(Point { arith: self.arith, dot, sum, round, pbits });
                    }
                }
            }
        }
        out
    }
}

/// Top-1 class of each requested sample at one grid point; `None` marks a
/// sample whose run failed. A model that cannot be converted at all fails
/// every sample.
pub fn predict(
    graph: &Graph,
    dataset: &Dataset,
    point: &Point,
    backend: BackendOptions,
    indices: &[usize],
) -> Vec<Option<usize>> {
    let cfg = ExecConfig { dot: point.dot, sum: point.sum };
    let result = match point.arith {
        ArithKind::Fixed => FixedFormat::new(backend.magnitude_bits, point.pbits, point.round)
            .map_err(ModelError::from_arith)
            .and_then(|fmt| predict_with(graph, FixedArith::new(fmt), cfg, dataset, indices)),
        ArithKind::Float => {
            let p = backend.convention.precision(point.pbits);
            if p <= WORD_PRECISION {
                WordArith::new(p, point.round)
                    .map_err(ModelError::from_arith)
                    .and_then(|a| predict_with(graph, a, cfg, dataset, indices))
            } else {
                FloatArith::new(p, point.round)
                    .map_err(ModelError::from_arith)
                    .and_then(|a| predict_with(graph, a, cfg, dataset, indices))
            }
        }
    };
    result.unwrap_or_else(|e| {
        log::warn!("{point}: {e}");
        vec![None; indices.len()]
    })
}

impl ModelError {
    fn from_arith(source: ArithError) -> Self {
        ModelError::Arith { node: String::new(), source }
    }
}

fn predict_with<A: Arithmetic>(
    graph: &Graph,
    arith: A,
    cfg: ExecConfig,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<Vec<Option<usize>>, ModelError> {
    let prepared = quantize_graph(graph, arith, cfg)?;
    Ok(indices
        .par_iter()
        .map(|&i| {
            let input: Vec<f64> = dataset.sample(i).iter().map(|&v| f64::from(v)).collect();
            match prepared.run(&input) {
                Ok(out) => argmax_by(out.data(), |a, b| prepared.arith().cmp(a, b)),
                Err(e) => {
                    log::debug!("sample {i}: {e}");
                    None
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub point: Point,
    pub samples: usize,
    pub failures: usize,
    pub agreement_pct: f64,
    pub macs: u64,
    pub est_inf_per_s: Option<f64>,
}

impl ReportRow {
    pub fn is_full(&self) -> bool {
        self.agreement_pct >= 100.0
    }

    fn record(&self) -> Vec<String> {
        let p = &self.point;
        vec![
            p.arith.to_string(),
            p.dot.label().to_string(),
            p.sum.to_string(),
            p.round.to_string(),
            p.pbits.to_string(),
            self.samples.to_string(),
            self.failures.to_string(),
            format!("{:.2}", self.agreement_pct),
            self.macs.to_string(),
            self.est_inf_per_s.map(|v| v.to_string()).unwrap_or_default(),
        ]
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self, String> {
        if rec.len() != REPORT_COLUMNS.len() {
            return Err(format!("expected {} fields, got {}", REPORT_COLUMNS.len(), rec.len()));
        }
        let num = |i: usize| rec[i].parse::<u64>().map_err(|e| format!("{}: {e}", REPORT_COLUMNS[i]));
        let arith: ArithKind = rec[0].parse()?;
        let point = Point {
            arith,
            dot: DotAlgorithm::parse(&rec[1], arith)?,
            sum: rec[2].parse()?,
            round: rec[3].parse()?,
            pbits: num(4)? as u32,
        };
        let est = match &rec[9] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|e| format!("est_inf_per_s: {e}"))?),
        };
        Ok(ReportRow {
            point,
            samples: num(5)? as usize,
            failures: num(6)? as usize,
            agreement_pct: rec[7].parse().map_err(|e| format!("agreement_pct: {e}"))?,
            macs: num(8)?,
            est_inf_per_s: est,
        })
    }
}

/// Ops-per-second budgets keyed by configuration, as supplied by the user.
#[derive(Debug, Clone, Default)]
pub struct BudgetTable {
    pub rows: Vec<(Point, f64)>,
}

impl BudgetTable {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().ne(BUDGET_COLUMNS) {
            return Err(HarnessError::Spec(format!("budget table header must be {}", BUDGET_COLUMNS.join(","))));
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| HarnessError::Spec(format!("budget table row {}: {m}", line + 1));
            let arith: ArithKind = rec[0].parse().map_err(bad)?;
            let point = Point {
                arith,
                dot: DotAlgorithm::parse(&rec[1], arith).map_err(bad)?,
                sum: rec[2].parse().map_err(bad)?,
                round: rec[3].parse().map_err(bad)?,
                pbits: rec[4].parse().map_err(|e| bad(format!("pbits: {e}")))?,
            };
            let ops: f64 = rec[5].parse().map_err(|e| bad(format!("ops_per_sec: {e}")))?;
            rows.push((point, ops));
        }
        Ok(BudgetTable { rows })
    }

    pub fn get(&self, point: &Point) -> Option<f64> {
        self.rows.iter().find(|(p, _)| p == point).map(|(_, ops)| *ops)
    }
}

/// Inferences per second for a budget of `ops_per_sec`, one MAC being two
/// operations.
pub fn estimate_inferences_per_sec(ops_per_sec: f64, macs: u64) -> Result<f64, HarnessError> {
    if macs == 0 {
        return Err(HarnessError::ZeroMacs);
    }
    if !(ops_per_sec >= 0.0 && ops_per_sec.is_finite()) {
        return Err(HarnessError::InvalidBudget(ops_per_sec));
    }
    Ok(ops_per_sec / (2.0 * macs as f64))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinPbits {
    pub pbits: u32,
    /// Set when a narrower width also reached 100% but a wider one did not.
    pub warning: Option<String>,
}

/// Smallest width reaching 100% agreement such that every wider tested
/// width does too.
pub fn min_pbits(rows: &[(u32, f64)]) -> Result<MinPbits, HarnessError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.0);
    let mut best = None;
    for &(p, pct) in sorted.iter().rev() {
        if pct >= 100.0 {
            best = Some(p);
        } else {
            break;
        }
    }
    let Some(pbits) = best else {
        return Err(HarnessError::NotReached(format!("{} tested widths", sorted.len())));
    };
    let early: Vec<u32> = sorted.iter().filter(|r| r.0 < pbits && r.1 >= 100.0).map(|r| r.0).collect();
    let warning = (!early.is_empty()).then(|| {
        format!("agreement is not monotone: 100% already at {early:?} but lost again below {pbits}")
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(MinPbits { pbits, warning })
}

/// [`min_pbits`] for the rows of one configuration in a report.
pub fn min_pbits_for(
    report: &[ReportRow],
    arith: ArithKind,
    dot: DotAlgorithm,
    sum: SumAlgorithm,
    round: RoundingMode,
) -> Result<MinPbits, HarnessError> {
    let rows: Vec<(u32, f64)> = report
        .iter()
        .filter(|r| r.point.arith == arith && r.point.dot == dot && r.point.sum == sum && r.point.round == round)
        .map(|r| (r.point.pbits, r.agreement_pct))
        .collect();
    min_pbits(&rows).map_err(|e| match e {
        HarnessError::NotReached(_) => {
            HarnessError::NotReached(format!("{arith}/{}/{sum}/{round}", dot.label()))
        }
        other => other,
    })
}

/// Evaluate one grid point over the first `n` samples.
pub fn evaluate_point(
    graph: &Graph,
    dataset: &Dataset,
    point: &Point,
    backend: BackendOptions,
    n: usize,
    macs: u64,
    budgets: Option<&BudgetTable>,
) -> Result<ReportRow, HarnessError> {
    let indices: Vec<usize> = (0..n).collect();
    let preds = predict(graph, dataset, point, backend, &indices);
    let agreement = top1_agreement(&preds, &dataset.labels()[..n])?;
    let est = match budgets.and_then(|b| b.get(point)) {
        Some(ops) => Some(estimate_inferences_per_sec(ops, macs)?),
        None => None,
    };
    Ok(ReportRow {
        point: *point,
        samples: n,
        failures: preds.iter().filter(|p| p.is_none()).count(),
        agreement_pct: agreement,
        macs,
        est_inf_per_s: est,
    })
}

/// Where and how a sweep writes its report.
#[derive(Debug, Clone)]
pub struct ReportSink {
    pub path: PathBuf,
    pub resume: bool,
}

/// Run every point of `spec`, streaming rows to `sink` in grid order.
///
/// With `resume`, rows already present in the report are kept and only the
/// missing points are evaluated; the existing rows must be a prefix of the
/// grid. A half-written trailing line is discarded.
pub fn run_sweep(
    graph: &Graph,
    dataset: &Dataset,
    spec: &SweepSpec,
    sink: Option<&ReportSink>,
    budgets: Option<&BudgetTable>,
) -> Result<Vec<ReportRow>, HarnessError> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(HarnessError::Empty);
    }
    let n = spec.samples.unwrap_or(dataset.len()).min(dataset.len());
    let macs = graph.count_macs();
    let points = spec.points();
    let mut rows = Vec::with_capacity(points.len());
    let mut writer = match sink {
        Some(s) => {
            let (w, done) = open_report(s, &points)?;
            rows.extend(done);
            Some(w)
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    for point in &points[rows.len()..] {
        let row = pool.install(|| evaluate_point(graph, dataset, point, spec.backend, n, macs, budgets))?;
        log::info!("{point}: {:.2}% ({} failures)", row.agreement_pct, row.failures);
        if let Some(w) = writer.as_mut() {
            w.write_record(row.record())?;
            w.flush().map_err(|e| io_err(&sink.expect("writer implies sink").path, e))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn open_report(sink: &ReportSink, points: &[Point]) -> Result<(csv::Writer<fs::File>, Vec<ReportRow>), HarnessError> {
    let path = &sink.path;
    let mut done = Vec::new();
    if sink.resume && path.exists() {
        let mut text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        text.truncate(text.rfind('\n').map_or(0, |i| i + 1));
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(text.as_bytes());
        if !text.trim().is_empty() && rdr.headers()?.iter().ne(REPORT_COLUMNS) {
            return Err(HarnessError::Resume(format!("{} has an unexpected header", path.display())));
        }
        for rec in rdr.records() {
            let row = ReportRow::parse(&rec?).map_err(HarnessError::Resume)?;
            match points.get(done.len()) {
                Some(p) if *p == row.point => done.push(row),
                _ => {
                    return Err(HarnessError::Resume(format!(
                        "row {} does not match this sweep; remove {} or drop --resume",
                        row.point,
                        path.display()
                    )))
                }
            }
        }
        let file = fs::OpenOptions::new().write(true).truncate(true).open(path).map_err(|e| io_err(path, e))?;
        let mut file = file;
        let stamp = text.lines().find(|l| l.starts_with(TIMESTAMP_PREFIX)).map(str::to_string);
        writeln!(file, "{}", stamp.unwrap_or_else(timestamp_line)).map_err(|e| io_err(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(REPORT_COLUMNS)?;
        for row in &done {
            w.write_record(row.record())?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
        return Ok((w, done));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    writeln!(file, "{}", timestamp_line()).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(REPORT_COLUMNS)?;
    w.flush().map_err(|e| io_err(path, e))?;
    Ok((w, done))
}

fn timestamp_line() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{TIMESTAMP_PREFIX}{secs}")
}

/// Parse a report written by [`run_sweep`].
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    if rdr.headers()?.iter().ne(REPORT_COLUMNS) {
        return Err(HarnessError::Spec(format!("{} is not a sweep report", path.display())));
    }
    rdr.records()
        .map(|r| ReportRow::parse(&r?).map_err(HarnessError::Spec))
        .collect()
}

/// Parse `LO..HI` (or a single width).
pub fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("'{t}': {e}"));
    match s.split_once("..") {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi.trim_start_matches('='))?)),
        None => {
            let v = parse(s)?;
            Ok((v, v))
        }
    }
}

/// Group rows by configuration, keeping first-seen order.
pub fn configurations(rows: &[ReportRow]) -> Vec<(ArithKind, DotAlgorithm, SumAlgorithm, RoundingMode)> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for r in rows {
        let key = (r.point.arith, r.point.dot, r.point.sum, r.point.round);
        if seen.insert(key, ()).is_none() {
            out.push(key);
        }
    }
    out
}
