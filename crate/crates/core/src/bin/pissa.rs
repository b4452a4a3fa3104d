//! `pissa` command-line interface.
//!
//! Errors are reported as a single line on stderr,
//! `pissa: error[<kind>]: <message>`, with exit code 2 for usage errors and
//! 1 for everything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pissa::adapter::{
    load_adapter_dir, pissa_init, pissa_init_fast, save_adapter_dir, to_lora_delta, AdapterMeta, BaseFile,
    DecomposedLayer, Origin,
};
use pissa::harness::{run_experiment_to_file, ExperimentKind, ExperimentSpec, ReportFormat};
use pissa::linalg::{load_matrix, save_matrix, write_atomic};
use pissa::train::LAYER_DIRS;
use pissa::{Error, RandomSource, Result};

/// Largest accepted relative discrepancy in `convert-lora`'s identity check.
const IDENTITY_TOL: f64 = 1e-10;
/// Largest accepted relative reconstruction error in `decompose`.
const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(name = "pissa", version, about = "Principal singular value adapters: decomposition, quantization and toy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a stored matrix into a principal adapter and a residual, or sweep synthetic matrices.
    Decompose(DecomposeArgs),
    /// Quantization error of QLoRA, LoftQ and QPiSSA initializations.
    QuantBench(QuantArgs),
    /// Toy pretrain/fine-tune runs with one loss trace per strategy and seed.
    Converge(ToyArgs),
    /// Randomized-SVD initialization error against the exact SVD.
    FastsvdBench(FastArgs),
    /// Finite-difference checks of adapter gradients on random small MLPs.
    Gradcheck(GradArgs),
    /// Principal / medium / minor adapter initialization on the toy task.
    Ablation(ToyArgs),
    /// Re-express a trained adapter as a plain low-rank update of the original weight.
    ConvertLora(ConvertArgs),
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    /// Rows of the synthetic matrices.
    #[arg(long, default_value_t = 256)]
    m: usize,
    /// Columns of the synthetic matrices.
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Singular values decay as i^-alpha.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Seeds: a list `0,3,7` or an inclusive range `0..9`.
    #[arg(long, default_value = "0..9", value_parser = parse_seeds)]
    seeds: SeedList,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Stored matrix (PSSA). Without it a synthetic sweep is run.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Adapter rank for a stored matrix.
    #[arg(long)]
    rank: Option<usize>,
    /// Use the randomized SVD with this many subspace iterations.
    #[arg(long)]
    niter: Option<usize>,
    /// Seed for the randomized SVD.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ranks for a synthetic sweep.
    #[arg(long, value_parser = parse_usize_list)]
    ranks: Option<UsizeList>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args, Debug)]
struct QuantArgs {
    /// Stored matrix (PSSA) used for every seed instead of a synthetic one.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "1,2,4,8,16,32,64,128", value_parser = parse_usize_list)]
    ranks: UsizeList,
    /// Alternating rounds for LoftQ and QPiSSA.
    #[arg(long = "T", alias = "iters", default_value = "1,5", value_parser = parse_usize_list)]
    iters: UsizeList,
    #[arg(long, default_value_t = 64)]
    block_size: usize,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args, Debug)]
struct FastArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "16", value_parser = parse_usize_list)]
    ranks: UsizeList,
    /// Subspace iteration counts.
    #[arg(long, default_value = "1,2,4,8,16", value_parser = parse_usize_list)]
    niter: UsizeList,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args, Debug)]
struct ToyArgs {
    /// Adapter rank in both MLP layers.
    #[arg(long, default_value_t = 4)]
    rank: usize,
    /// Fine-tuning steps.
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Strategy names (pissa, lora, medium, minor, qlora, qpissa-tN, loftq-tN).
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    /// Directory for initial and trained adapter checkpoints.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args, Debug)]
struct GradArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Adapter directory at initialization (must include the frozen base).
    #[arg(long)]
    init: PathBuf,
    /// Adapter directory after training.
    #[arg(long)]
    trained: PathBuf,
    /// Output directory for deltaA.pssa / deltaB.pssa.
    #[arg(long)]
    out: PathBuf,
    /// Rows of each random probe batch in the identity check.
    #[arg(long, default_value_t = 16)]
    probe_rows: usize,
    /// Number of probe batches.
    #[arg(long, default_value_t = 10)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

#[derive(Clone, Debug)]
struct UsizeList(Vec<usize>);

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range start '{a}'"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range end '{b}'"))?;
        if b < a {
            return Err(format!("empty seed range {a}..{b}"));
        }
        return Ok(SeedList((a..=b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad seed '{t}'")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(SeedList)
}

fn parse_usize_list(s: &str) -> std::result::Result<UsizeList, String> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad integer '{t}'")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(UsizeList)
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn spec_from(kind: ExperimentKind, sweep: &SweepArgs) -> ExperimentSpec {
    ExperimentSpec {
        m: sweep.m,
        n: sweep.n,
        alpha: sweep.alpha,
        seeds: sweep.seeds.0.clone(),
        output: sweep.out.clone(),
        format: sweep.format,
        ..ExperimentSpec::new(kind)
    }
}

fn run_sweep(spec: ExperimentSpec) -> Result<()> {
    let report = run_experiment_to_file(&spec)?;
    match &spec.output {
        Some(path) => println!(
            "{} rows={} failures={} config_hash={} out={}",
            spec.kind,
            report.rows.len(),
            report.failures(),
            report.config_hash,
            path.display()
        ),
        None => print!("{}", report.render(spec.format)?),
    }
    Ok(())
}

fn decompose(args: DecomposeArgs) -> Result<()> {
    let Some(input) = args.input else {
        let mut spec = spec_from(ExperimentKind::Decompose, &args.sweep);
        if let Some(r) = args.ranks {
            spec.ranks = r.0;
        }
        return run_sweep(spec);
    };
    let rank = args
        .rank
        .ok_or_else(|| Error::InvalidArgument("--rank is required with --in".into()))?;
    let out = args
        .sweep
        .out
        .ok_or_else(|| Error::InvalidArgument("--out DIR is required with --in".into()))?;
    let w = load_matrix(&input)?;
    let layer = match args.niter {
        Some(niter) => pissa_init_fast(&w, rank, niter, &mut RandomSource::new(args.seed))?,
        None => pissa_init(&w, rank)?,
    };
    let err = pissa::adapter::reconstruction_error(&w, &layer)?;
    if err > RECONSTRUCTION_TOL {
        return Err(Error::Undefined {
            what: "decomposition",
            reason: format!("reconstruction error {err:e} exceeds {RECONSTRUCTION_TOL:e}"),
        });
    }
    save_adapter_dir(&out, &layer, args.niter.map(|_| args.seed), true)?;
    println!(
        "decompose rank={rank} shape={}x{} reconstruction_error={err:.6e} out={}",
        w.rows(),
        w.cols(),
        out.display()
    );
    Ok(())
}

/// Converts one adapter directory; returns the worst identity discrepancy.
fn convert_one(init: &Path, trained: &Path, out: &Path, args: &ConvertArgs) -> Result<f64> {
    let (a0, base0, _) = load_adapter_dir(init)?;
    let base = base0.ok_or_else(|| {
        Error::InvalidArgument(format!("{} has no frozen base; save it with the base included", init.display()))
    })?;
    let (a1, base1, meta1) = load_adapter_dir(trained)?;
    if let Some(b1) = &base1 {
        if b1.dense() != base.dense() {
            return Err(Error::InvalidArgument(format!(
                "frozen bases differ between {} and {}",
                init.display(),
                trained.display()
            )));
        }
    }
    let wres = base.dense();
    let w = wres.add(&a0.delta())?;
    let delta = to_lora_delta(&a0, &a1)?;

    let mut rng = RandomSource::new(args.seed);
    let mut worst = 0.0f64;
    for _ in 0..args.probes {
        let x = rng.normal_matrix(args.probe_rows, w.rows(), 1.0);
        let via_delta = x.matmul(&w)?.add(&x.matmul(&delta.delta())?)?;
        let trained_layer = DecomposedLayer::new(base.clone(), a1.clone(), meta1.origin)?;
        let via_trained = pissa::adapter::forward(&trained_layer, &x)?;
        let scale = via_trained.max_abs().max(1.0);
        worst = worst.max(via_delta.sub(&via_trained)?.max_abs() / scale);
    }
    if worst > IDENTITY_TOL {
        return Err(Error::Undefined {
            what: "adapter conversion",
            reason: format!("probe discrepancy {worst:e} exceeds {IDENTITY_TOL:e}"),
        });
    }
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    save_matrix(out.join("deltaA.pssa"), &delta.a)?;
    save_matrix(out.join("deltaB.pssa"), &delta.b)?;
    let meta = AdapterMeta {
        rank: delta.rank(),
        scale: delta.scale,
        origin: Origin::Lora,
        seed: meta1.seed,
        base: BaseFile::None,
    };
    write_atomic(&out.join("meta.txt"), meta.to_text().as_bytes())?;
    Ok(worst)
}

fn convert_lora(args: ConvertArgs) -> Result<()> {
    if args.probes == 0 || args.probe_rows == 0 {
        return Err(Error::InvalidArgument("--probes and --probe-rows must be positive".into()));
    }
    let pairs: Vec<(PathBuf, PathBuf, PathBuf)> = if args.init.join("meta.txt").exists() {
        vec![(args.init.clone(), args.trained.clone(), args.out.clone())]
    } else {
        let found: Vec<_> = LAYER_DIRS
            .iter()
            .filter(|d| args.init.join(d).join("meta.txt").exists())
            .map(|d| (args.init.join(d), args.trained.join(d), args.out.join(d)))
            .collect();
        if found.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} is neither an adapter directory nor a model checkpoint",
                args.init.display()
            )));
        }
        found
    };
    for (init, trained, out) in &pairs {
        let worst = convert_one(init, trained, out, &args)?;
        println!(
            "convert-lora out={} identity_max_rel_error={worst:.6e} probes={}",
            out.display(),
            args.probes
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decompose(a) => decompose(a),
        Command::QuantBench(a) => {
            let mut spec = spec_from(ExperimentKind::QuantBench, &a.sweep);
            spec.input = a.input;
            spec.ranks = a.ranks.0;
            spec.iters = a.iters.0;
            spec.block_size = a.block_size;
            run_sweep(spec)
        }
        Command::FastsvdBench(a) => {
            let mut spec = spec_from(ExperimentKind::FastsvdBench, &a.sweep);
            spec.input = a.input;
            spec.ranks = a.ranks.0;
            spec.niters = a.niter.0;
            run_sweep(spec)
        }
        Command::Converge(a) => run_sweep(toy_spec(ExperimentKind::Converge, a)),
        Command::Ablation(a) => run_sweep(toy_spec(ExperimentKind::Ablation, a)),
        Command::Gradcheck(a) => {
            let mut spec = spec_from(ExperimentKind::Gradcheck, &a.sweep);
            spec.eps = a.eps;
            spec.strategies = a.strategies;
            run_sweep(spec)
        }
        Command::ConvertLora(a) => convert_lora(a),
    }
}

fn toy_spec(kind: ExperimentKind, a: ToyArgs) -> ExperimentSpec {
    let mut spec = spec_from(kind, &a.sweep);
    spec.toy_rank = a.rank;
    spec.steps = a.steps;
    spec.strategies = a.strategies;
    spec.checkpoint_dir = a.checkpoint_dir;
    spec
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid usage");
            eprintln!("pissa: error[usage]: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if matches!(e, Error::InvalidArgument(_)) { 2 } else { 1 };
            eprintln!("pissa: error[{}]: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(code)
        }
    }
}
