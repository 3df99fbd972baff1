use std::path::PathBuf;

use certinfer::graph::load_model;
use certinfer::harness::{predict, BackendOptions, Dataset, Point};
use certinfer::runtime::{quantize_graph, ExecConfig};
use certinfer::{ArithKind, DotAlgorithm, F64Arith, RoundingMode, SumAlgorithm};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn golden_logits(n: usize) -> Vec<f32> {
    let bytes = std::fs::read(fixture("mnist/dataset/golden_logits.bin")).unwrap();
    bytes.chunks_exact(4).take(n * 10).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
}

#[test]
fn binary64_run_matches_reference_logits() {
    let graph = load_model(&fixture("mnist/model")).unwrap();
    let data = Dataset::load(&fixture("mnist/dataset")).unwrap();
    let cfg = ExecConfig { dot: DotAlgorithm::FloatNaive, sum: SumAlgorithm::Naive };
    let prepared = quantize_graph(&graph, F64Arith::new(), cfg).unwrap();
    let golden = golden_logits(20);
    for i in 0..20 {
        let input: Vec<f64> = data.sample(i).iter().map(|&v| f64::from(v)).collect();
        let out = prepared.run(&input).unwrap();
        assert_eq!(out.shape(), &[1, 10]);
        for (a, b) in out.data().iter().zip(&golden[i * 10..(i + 1) * 10]) {
            assert!((a - f64::from(*b)).abs() < 1e-4, "sample {i}: {a} vs {b}");
        }
    }
}

#[test]
fn wide_fixed_point_agrees_with_reference() {
    let graph = load_model(&fixture("mnist/model")).unwrap();
    let data = Dataset::load(&fixture("mnist/dataset")).unwrap();
    let point = Point {
        arith: ArithKind::Fixed,
        dot: DotAlgorithm::FixedAccurate,
        sum: SumAlgorithm::Naive,
        round: RoundingMode::Rne,
        pbits: 24,
    };
    let idx: Vec<usize> = (0..50).collect();
    let preds = predict(&graph, &data, &point, BackendOptions::default(), &idx);
    for (i, p) in preds.iter().enumerate() {
        assert_eq!(*p, Some(data.labels()[i]), "sample {i}");
    }
}
