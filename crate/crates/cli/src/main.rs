use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use certinfer::bounds::{analyze, default_input, write_bounds_csv, BoundsOptions, DEFAULT_MAX_SYMBOLS};
use certinfer::graph::{load_model, Graph};
use certinfer::harness::{
    configurations, estimate_inferences_per_sec, min_pbits_for, parse_range, run_sweep, BackendOptions, BudgetTable,
    Dataset, HarnessError, PbitsConvention, ReportRow, ReportSink, SweepSpec,
};
use certinfer::{ArithKind, DotAlgorithm, RoundingMode, SumAlgorithm};

#[derive(Parser)]
#[command(name = "certinfer", version, about = "Bit-width sweeps and error bounds for neural-network inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep arithmetic configurations and report top-1 agreement.
    Run(RunArgs),
    /// Write per-layer static error bounds for fixed-point inference.
    Bounds(BoundsArgs),
    /// Print the multiply-accumulate count of one inference.
    Macs {
        #[arg(long)]
        model: PathBuf,
    },
    /// Turn an ops-per-second budget table into inferences per second.
    Estimate {
        #[arg(long)]
        budget_table: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Arith {
    Float,
    Fixed,
}

impl From<Arith> for ArithKind {
    fn from(a: Arith) -> Self {
        match a {
            Arith::Float => ArithKind::Float,
            Arith::Fixed => ArithKind::Fixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Total,
    Stored,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    arith: Arith,
    /// Width range: fraction bits for fixed, significand bits for float.
    #[arg(long, value_parser = parse_range)]
    pbits: (u32, u32),
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    round: Vec<RoundingMode>,
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    sum: Vec<SumAlgorithm>,
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    dot: Vec<String>,
    /// Evaluate only the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Keep rows already in the report and compute only the missing ones.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    out: PathBuf,
    /// Ops-per-second budgets used to fill est_inf_per_s.
    #[arg(long)]
    budget_table: Option<PathBuf>,
    /// Magnitude bits of the fixed-point format.
    #[arg(long, default_value_t = 10)]
    mbits: u32,
    /// Whether a float width counts the implicit leading bit.
    #[arg(long, value_enum, default_value_t = Convention::Total)]
    convention: Convention,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    fbits: u32,
    #[arg(long)]
    out: PathBuf,
    /// Take the input from this dataset instead of a seeded uniform one.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dataset sample used as input.
    #[arg(long, default_value_t = 0)]
    sample: usize,
    /// Seed of the uniform [0, 1) input used without --dataset.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "accurate")]
    dot: String,
    #[arg(long, default_value_t = RoundingMode::Rne)]
    round: RoundingMode,
    #[arg(long, default_value_t = 10)]
    mbits: u32,
    /// Noise symbols kept per value before the rest collapse.
    #[arg(long, default_value_t = DEFAULT_MAX_SYMBOLS)]
    max_symbols: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn model(path: &Path) -> Result<Graph> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let arith = ArithKind::from(args.arith);
    let dots = args
        .dot
        .iter()
        .map(|d| DotAlgorithm::parse(d, arith))
        .collect::<Result<Vec<_>, _>>()
        .map_err(anyhow::Error::msg)?;
    let convention = match args.convention {
        Convention::Total => PbitsConvention::Total,
        Convention::Stored => PbitsConvention::Stored,
    };
    let spec = SweepSpec {
        arith,
        pbits: args.pbits,
        rounds: args.round,
        sums: args.sum,
        dots,
        samples: args.samples,
        workers: args.workers,
        backend: BackendOptions { magnitude_bits: args.mbits, convention },
    };
    spec.validate()?;
    let graph = model(&args.model)?;
    let dataset = Dataset::load(&args.dataset).with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    let budgets = args.budget_table.as_deref().map(BudgetTable::load).transpose()?;
    let sink = ReportSink { path: args.out, resume: args.resume };
    let rows = run_sweep(&graph, &dataset, &spec, Some(&sink), budgets.as_ref())?;
    summarize(&rows, convention);
    Ok(())
}

/// Print the narrowest width reaching full agreement per configuration. Float
/// widths are given under both counting conventions.
fn summarize(rows: &[ReportRow], convention: PbitsConvention) {
    for (arith, dot, sum, round) in configurations(rows) {
        let name = format!("{arith}/{}/{sum}/{round}", dot.label());
        match min_pbits_for(rows, arith, dot, sum, round) {
            Ok(m) if arith == ArithKind::Float => {
                let p = convention.precision(m.pbits);
                println!("{name}: min pbits {} total, {} stored", p, p - 1);
            }
            Ok(m) => println!("{name}: min fraction bits {}", m.pbits),
            Err(HarnessError::NotReached(_)) => println!("{name}: 100% not reached in the tested range"),
            Err(e) => println!("{name}: {e}"),
        }
    }
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let graph = model(&args.model)?;
    let len: usize = graph.input_shape.iter().product();
    let input = match &args.dataset {
        Some(dir) => {
            let data = Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
            if args.sample >= data.len() {
                bail!("sample {} out of range: dataset has {}", args.sample, data.len());
            }
            let s = data.sample(args.sample);
            if s.len() != len {
                bail!("dataset samples have {} values, the model expects {len}", s.len());
            }
            s.iter().map(|&v| f64::from(v)).collect()
        }
        None => default_input(len, args.seed),
    };
    let dot = DotAlgorithm::parse(&args.dot, ArithKind::Fixed).map_err(anyhow::Error::msg)?;
    let opts = BoundsOptions { max_symbols: args.max_symbols, magnitude_bits: args.mbits, round: args.round, dot };
    let layers = analyze(&graph, args.fbits, &input, &opts)?;
    write_bounds_csv(&args.out, &layers)?;
    if let Some(last) = layers.last() {
        let emp = last.empirical_error.map_or_else(|| "n/a (run failed)".to_string(), |e| format!("{e:e}"));
        println!("final layer {} ({}): bound {:e}, empirical {emp}", last.layer_index, last.op_kind, last.bound);
    }
    Ok(())
}

fn estimate(budget_table: &Path, model_path: &Path) -> Result<()> {
    let graph = model(model_path)?;
    let table = BudgetTable::load(budget_table)?;
    let macs = graph.count_macs();
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["arith", "dot", "sum", "round", "pbits", "ops_per_sec", "macs", "est_inf_per_s"])?;
    for (p, ops) in &table.rows {
        let est = estimate_inferences_per_sec(*ops, macs)?;
        w.write_record([
            p.arith.to_string(),
            p.dot.label().to_string(),
            p.sum.to_string(),
            p.round.to_string(),
            p.pbits.to_string(),
            ops.to_string(),
            macs.to_string(),
            est.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bounds(a) => bounds(a),
        Command::Macs { model: m } => model(&m).map(|g| println!("{}", g.count_macs())),
        Command::Estimate { budget_table, model: m } => estimate(&budget_table, &m),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Several library errors already embed their source in the message.
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
