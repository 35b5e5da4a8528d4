use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fuzzreg::covering::Direction;
use fuzzreg::io;
use fuzzreg::pipeline::{self, Instance, Params, Pipeline};
use fuzzreg::sampling::StepFunctionFamily;
use fuzzreg::{generators, DiscreteMeasure, Error, Mode};

/// Certificates for covering numbers, nets, and regularity partitions.
#[derive(Parser)]
#[command(name = "fuzzreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal ε-cover of the rows (or columns) in sup norm.
    Cover(RunArgs),
    /// Partition of the rows into pieces of spread at most ε.
    CoverPartition(RunArgs),
    /// Search for an ε-approximation of size n.
    Approx(RunArgs),
    /// Monte Carlo tail of f_n against the covering-number bound.
    TailCheck(RunArgs),
    /// Fuzzy ε-net with thresholds --lower < --upper.
    Net(RunArgs),
    /// Grid average of a step-function family.
    GridApprox(RunArgs),
    /// Sum-of-products approximation in L¹.
    Structured(RunArgs),
    /// (ε, δ)-regular partition.
    NipReg(RunArgs),
    /// Largest ε-homogeneous rectangle with sides of mass ≥ δ.
    Seh(RunArgs),
    /// Iterated rectangle extraction until the non-homogeneous mass is ≤ γ.
    DistalReg(RunArgs),
    /// Rectangle where φ ≥ β inside a distal partition.
    DensitySeh(RunArgs),
    /// Rectangle of oscillation ≤ 2/s via level buckets.
    BucketedSeh(RunArgs),
    /// Build and verify a (γ, δ)-cutting.
    Cutting(RunArgs),
    /// Verify a cutting given with --cutting.
    CuttingVerify(RunArgs),
    /// Refine a distal partition into near-equal pieces.
    Equipartition(RunArgs),
    /// Rerun a certificate and compare.
    VerifyCert {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
    },
    /// Write a canonical instance.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Predicate: `.csv` matrix or JSON tensor.
    #[arg(long, value_name = "FILE")]
    phi: Option<PathBuf>,
    /// One measure per axis, in axis order; uniform when omitted.
    #[arg(long, value_name = "FILE")]
    mu: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    family: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    cutting: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    attempts: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lower: Option<f64>,
    #[arg(long)]
    upper: Option<f64>,
    /// Candidate budget for the rectangle search.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    /// Compute covering numbers exactly instead of greedily.
    #[arg(long)]
    exact: bool,
    /// Piece-mass tolerance for equipartition; defaults to 2/n.
    #[arg(long)]
    equi_gamma: Option<f64>,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Rows,
    Columns,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Constant,
    Identity,
    HalfGraph,
    Threshold,
    Random,
    SquareWave,
    Uniform,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long)]
    n: usize,
    /// Column count for `constant` and `random`; defaults to --n.
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    value: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Axis name for `uniform`.
    #[arg(long, default_value = "x")]
    axis: String,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Defaults to CSV for matrices; families and measures are always JSON.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

enum Outcome {
    Pass,
    Violation,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match dispatch(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("FR_THREADS") else { return Ok(()) };
    let n: usize = raw.parse().with_context(|| format!("FR_THREADS: `{raw}` is not a thread count"))?;
    if n == 0 {
        bail!("FR_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Library parameter errors are reported under their flag name.
fn describe(e: &anyhow::Error) -> String {
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidParameter { name, reason }) => format!("--{}: {reason}", name.replace('_', "-")),
        _ => format!("{e:#}"),
    }
}

fn dispatch(command: Command) -> anyhow::Result<Outcome> {
    let (pipeline, args) = match command {
        Command::VerifyCert { input } => return verify_cert(&input),
        Command::Gen(args) => return generate(&args).map(|()| Outcome::Pass),
        Command::Cover(a) => (Pipeline::Cover, a),
        Command::CoverPartition(a) => (Pipeline::CoverPartition, a),
        Command::Approx(a) => (Pipeline::Approx, a),
        Command::TailCheck(a) => (Pipeline::TailCheck, a),
        Command::Net(a) => (Pipeline::Net, a),
        Command::GridApprox(a) => (Pipeline::GridApprox, a),
        Command::Structured(a) => (Pipeline::Structured, a),
        Command::NipReg(a) => (Pipeline::NipReg, a),
        Command::Seh(a) => (Pipeline::Seh, a),
        Command::DistalReg(a) => (Pipeline::DistalReg, a),
        Command::DensitySeh(a) => (Pipeline::DensitySeh, a),
        Command::BucketedSeh(a) => (Pipeline::BucketedSeh, a),
        Command::Cutting(a) => (Pipeline::Cutting, a),
        Command::CuttingVerify(a) => (Pipeline::CuttingVerify, a),
        Command::Equipartition(a) => (Pipeline::Equipartition, a),
    };
    run_pipeline(pipeline, &args)
}

fn load_instance(args: &RunArgs) -> anyhow::Result<Instance> {
    let mus = args
        .mu
        .iter()
        .map(|p| io::load_measure(p).with_context(|| format!("--mu {}", p.display())))
        .collect::<anyhow::Result<Vec<DiscreteMeasure>>>()?;
    let mut instance = match (&args.phi, &args.family) {
        (Some(p), _) => {
            let phi = io::load_predicate(p).with_context(|| format!("--phi {}", p.display()))?;
            let mut inst = Instance::new(phi, mus).context("--mu")?;
            if let Some(f) = &args.family {
                inst.family = Some(io::load_family(f).with_context(|| format!("--family {}", f.display()))?);
            }
            inst
        }
        (None, Some(f)) => Instance::from_family(io::load_family(f).with_context(|| format!("--family {}", f.display()))?),
        (None, None) => bail!("--phi: no predicate given"),
    };
    if let Some(c) = &args.cutting {
        instance.cutting = Some(io::load_cutting(c).with_context(|| format!("--cutting {}", c.display()))?);
    }
    Ok(instance)
}

fn run_pipeline(pipeline: Pipeline, args: &RunArgs) -> anyhow::Result<Outcome> {
    let instance = load_instance(args)?;
    let params = Params {
        eps: args.eps,
        delta: args.delta,
        gamma: args.gamma,
        s: args.s,
        mode: args.mode,
        seed: args.seed,
        n: args.n,
        trials: args.trials,
        attempts: args.attempts,
        alpha: args.alpha,
        beta: args.beta,
        lower: args.lower,
        upper: args.upper,
        budget: args.budget,
        direction: args.direction.map(|d| match d {
            DirectionArg::Rows => Direction::RowsOverColumns,
            DirectionArg::Columns => Direction::ColumnsOverRows,
        }),
        exact: args.exact,
        equi_gamma: args.equi_gamma,
        sweep: args.sweep.clone(),
    };
    let cert = pipeline::run(pipeline, &instance, &params)?;
    eprint!("{}", cert.summary());
    let text = match args.format {
        Format::Json => cert.to_json()? + "\n",
        Format::Csv => cert.plot_data().context("--format csv")?,
    };
    emit(args.out.as_deref(), &text)?;
    Ok(if cert.pass { Outcome::Pass } else { Outcome::Violation })
}

fn verify_cert(path: &Path) -> anyhow::Result<Outcome> {
    let cert = io::load_certificate(path).with_context(|| format!("--in {}", path.display()))?;
    let v = pipeline::verify(&cert)?;
    for p in &v.problems {
        eprintln!("problem: {p}");
    }
    if v.pass {
        eprintln!("certificate `{}` verified", cert.kind);
        Ok(Outcome::Pass)
    } else {
        eprintln!("certificate `{}` does not verify", cert.kind);
        Ok(Outcome::Violation)
    }
}

fn generate(args: &GenArgs) -> anyhow::Result<()> {
    let n = args.n;
    if n == 0 {
        bail!("--n must be positive");
    }
    let cols = args.cols.unwrap_or(n);
    let phi = match args.kind {
        GenKind::Constant => generators::constant(n, cols, args.value).context("--value")?,
        GenKind::Identity => generators::identity(n),
        GenKind::HalfGraph => generators::half_graph(n),
        GenKind::Threshold => generators::threshold(n),
        GenKind::Random => generators::random(n, cols, args.seed.context("--seed is required for `random`")?),
        GenKind::SquareWave => return emit(args.out.as_deref(), &io::family_to_json(&StepFunctionFamily::square_wave(n))?),
        GenKind::Uniform => {
            return emit(args.out.as_deref(), &io::measure_to_json(&DiscreteMeasure::uniform(args.axis.clone(), n))?)
        }
    };
    let text = match args.format.unwrap_or(Format::Csv) {
        Format::Csv => io::predicate_to_csv(&phi)?,
        Format::Json => io::predicate_to_json(&phi)?,
    };
    emit(args.out.as_deref(), &text)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("--out {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
