mod common;

use certinfer::graph::load_model;
use certinfer::harness::{
    estimate_inferences_per_sec, min_pbits, min_pbits_for, read_report, run_sweep, top1_agreement, BackendOptions,
    BudgetTable, Dataset, HarnessError, ReportSink, SweepSpec,
};
use certinfer::{ArithKind, DotAlgorithm, RoundingMode, SumAlgorithm};
use common::fixture;

#[test]
fn agreement_examples() {
    assert_eq!(top1_agreement(&[Some(1), Some(2), Some(0)], &[1, 2, 0]).unwrap(), 100.0);
    assert_eq!(top1_agreement(&[Some(0), None, Some(0)], &[1, 2, 3]).unwrap(), 0.0);
    assert_eq!(top1_agreement(&[Some(1), Some(2), Some(0)], &[1, 2, 1]).unwrap(), 66.67);
    // One miss in 10^5 must not display as 100.
    let mut out = vec![Some(0); 100_000];
    out[7] = Some(1);
    assert_eq!(top1_agreement(&out, &vec![0; 100_000]).unwrap(), 99.99);
    assert!(matches!(top1_agreement(&[], &[]), Err(HarnessError::Empty)));
    assert!(matches!(top1_agreement(&[Some(0)], &[0, 1]), Err(HarnessError::LengthMismatch { .. })));
}

#[test]
fn minimum_width_examples() {
    let r = min_pbits(&[(9, 97.0), (10, 99.8), (11, 100.0), (12, 100.0)]).unwrap();
    assert_eq!((r.pbits, r.warning), (11, None));
    let r = min_pbits(&[(10, 100.0), (11, 99.9), (12, 100.0)]).unwrap();
    assert_eq!(r.pbits, 12);
    assert!(r.warning.is_some());
    assert!(matches!(min_pbits(&[(10, 99.0), (11, 99.5)]), Err(HarnessError::NotReached(_))));
    assert!(matches!(min_pbits(&[(10, 100.0), (11, 99.5)]), Err(HarnessError::NotReached(_))));
}

#[test]
fn estimate_examples() {
    assert_eq!(estimate_inferences_per_sec(2e12, 1_000_000).unwrap(), 1e6);
    assert_eq!(estimate_inferences_per_sec(0.0, 1_000_000).unwrap(), 0.0);
    let macs = 786_560u64;
    let budget = 3_007_621.0 * 2.0 * macs as f64;
    assert_eq!(estimate_inferences_per_sec(budget, macs).unwrap(), 3_007_621.0);
    assert!(matches!(estimate_inferences_per_sec(1.0, 0), Err(HarnessError::ZeroMacs)));
    assert!(estimate_inferences_per_sec(-1.0, 10).is_err());
    assert!(estimate_inferences_per_sec(f64::NAN, 10).is_err());
}

fn spec(arith: ArithKind, pbits: (u32, u32), dots: Vec<DotAlgorithm>, samples: usize, workers: usize) -> SweepSpec {
    SweepSpec {
        arith,
        pbits,
        rounds: vec![RoundingMode::Rne, RoundingMode::Rna],
        sums: vec![SumAlgorithm::Naive],
        dots,
        samples: Some(samples),
        workers,
        backend: BackendOptions::default(),
    }
}

#[test]
fn a_reference_equivalent_backend_agrees_everywhere() {
    let g = load_model(&fixture("mnist/model")).unwrap();
    let d = Dataset::load(&fixture("mnist/dataset")).unwrap();
    let rows = run_sweep(&g, &d, &spec(ArithKind::Float, (40, 42), vec![DotAlgorithm::FloatNaive], 1, 1), None, None)
        .unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.agreement_pct == 100.0 && r.failures == 0 && r.macs == 786_560));
}

#[test]
fn sweeps_are_deterministic_and_readable() {
    let g = load_model(&fixture("mnist/model")).unwrap();
    let d = Dataset::load(&fixture("mnist/dataset")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let budgets = BudgetTable::parse("arith,dot,sum,round,pbits,ops_per_sec\nfixed,accurate,naive,rne,6,1e9\n").unwrap();
    let s = spec(ArithKind::Fixed, (4, 7), vec![DotAlgorithm::FixedNaive, DotAlgorithm::FixedAccurate], 60, 2);
    let sink = ReportSink { path: dir.path().join("r.csv"), resume: false };
    let rows = run_sweep(&g, &d, &s, Some(&sink), Some(&budgets)).unwrap();
    let again = run_sweep(&g, &d, &SweepSpec { workers: 1, ..s.clone() }, None, None).unwrap();
    let strip = |r: &[certinfer::harness::ReportRow]| r.iter().map(|x| (x.point, x.agreement_pct)).collect::<Vec<_>>();
    assert_eq!(strip(&rows), strip(&again));
    assert_eq!(read_report(&sink.path).unwrap(), rows);
    let est: Vec<_> = rows.iter().filter_map(|r| r.est_inf_per_s).collect();
    assert_eq!(est, vec![1e9 / (2.0 * 786_560.0)]);
    let naive = |round| {
        let rows: Vec<_> = rows.iter().filter(|r| r.point.dot == DotAlgorithm::FixedNaive && r.point.round == round).collect();
        rows.iter().map(|r| r.agreement_pct).collect::<Vec<_>>()
    };
    assert_eq!(naive(RoundingMode::Rne).len(), 4);
    let best = min_pbits_for(&rows, ArithKind::Fixed, DotAlgorithm::FixedAccurate, SumAlgorithm::Naive, RoundingMode::Rne);
    match best {
        Ok(m) => assert!((4..=7).contains(&m.pbits)),
        Err(e) => assert!(e.to_string().contains("fixed/accurate/naive/rne"), "{e}"),
    }
}

#[test]
fn invalid_sweeps_are_rejected() {
    let g = load_model(&fixture("mnist/model")).unwrap();
    let d = Dataset::load(&fixture("mnist/dataset")).unwrap();
    let bad = [
        spec(ArithKind::Fixed, (5, 4), vec![DotAlgorithm::FixedNaive], 5, 1),
        spec(ArithKind::Fixed, (0, 4), vec![DotAlgorithm::FixedNaive], 5, 1),
        spec(ArithKind::Fixed, (4, 5), vec![DotAlgorithm::FloatOro], 5, 1),
        spec(ArithKind::Fixed, (4, 5), vec![DotAlgorithm::FixedNaive], 0, 1),
        spec(ArithKind::Fixed, (4, 5), vec![DotAlgorithm::FixedNaive], 5, 0),
    ];
    for s in bad {
        assert!(matches!(run_sweep(&g, &d, &s, None, None), Err(HarnessError::Spec(_))), "{s:?}");
    }
}

#[test]
fn overflowing_points_count_as_failures() {
    let g = load_model(&fixture("mnist/model")).unwrap();
    let d = Dataset::load(&fixture("mnist/dataset")).unwrap();
    let s = SweepSpec {
        backend: BackendOptions { magnitude_bits: 1, ..BackendOptions::default() },
        ..spec(ArithKind::Fixed, (8, 8), vec![DotAlgorithm::FixedAccurate], 10, 1)
    };
    let rows = run_sweep(&g, &d, &s, None, None).unwrap();
    assert!(rows.iter().all(|r| r.failures == 10 && r.agreement_pct == 0.0));
}
