use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sssvd::bench::{block_sweep_suite, model_suite, run_bench, write_bench_csv};
use sssvd::contour::{ContourRule, Transform, DEFAULT_ASPECT, DEFAULT_NODES};
use sssvd::filter::filter_profile;
use sssvd::pipeline::{solve, Mode, RunConfig};
use sssvd::problems::{
    build_model, normalize_spectrum, read_matrix_market, write_matrix_market, ModelKind, ModelSpec, DEFAULT_MODEL_SEED,
};
use sssvd::report::{write_triplets_csv, RunReport};
use sssvd::verify::{verify, VerifyOptions};
use sssvd::{ProblemMatrix, SsError, SsParams};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sssvd",
    version,
    about = "Singular triplets in an interval by contour integration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the singular triplets with σ in [a, b].
    Solve(SolveArgs),
    /// Write a model problem as Matrix Market plus its exact spectrum.
    Model(ModelArgs),
    /// Tabulate |f(σ)| for the contour rule of an interval.
    FilterPlot(FilterArgs),
    /// Time the algorithm steps over a suite of runs.
    Bench(BenchArgs),
    /// Check a run against an independent dense SVD.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct Source {
    /// Built-in model problem (1: uniform spectrum, 2: log-uniform spectrum).
    #[arg(long, conflicts_with = "input", value_parser = clap::value_parser!(u32).range(1..=2))]
    model: Option<u32>,
    /// Matrix Market file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Rows of the model problem.
    #[arg(long, default_value_t = 1000)]
    m: usize,
    /// Columns of the model problem.
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_MODEL_SEED)]
    model_seed: u64,
    /// Scale the input so its largest singular value is 1.
    #[arg(long)]
    normalize: bool,
}

struct Loaded {
    label: String,
    matrix: ProblemMatrix,
    truth: Option<Vec<f64>>,
}

impl Source {
    fn load(&self) -> sssvd::Result<Loaded> {
        let (label, matrix, truth) = match (&self.model, &self.input) {
            (Some(k), None) => {
                let spec = ModelSpec {
                    which: ModelKind::from_index(*k)?,
                    m: self.m,
                    n: self.n,
                    seed: self.model_seed,
                };
                let p = build_model(spec)?;
                (format!("model{k}"), p.matrix, Some(p.sigma))
            }
            (None, Some(path)) => (path.display().to_string(), read_matrix_market(path)?, None),
            _ => {
                return Err(SsError::InvalidArgument(
                    "give exactly one of --model or --input".into(),
                ))
            }
        };
        if self.normalize {
            let (scaled, s) = normalize_spectrum(&matrix)?;
            let truth = truth.map(|t| t.into_iter().map(|x| x / s).collect());
            return Ok(Loaded {
                label,
                matrix: scaled,
                truth,
            });
        }
        Ok(Loaded { label, matrix, truth })
    }
}

#[derive(Args, Clone)]
struct Params {
    /// Target interval `a b`.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, required = true)]
    interval: Vec<f64>,
    #[arg(long, default_value = "ss-svd", value_parser = parse_mode)]
    mode: Mode,
    /// Block size.
    #[arg(long = "L", default_value_t = 20)]
    block_size: usize,
    /// Number of moments.
    #[arg(long = "M", default_value_t = 4)]
    moments: usize,
    /// Quadrature points.
    #[arg(long = "N", default_value_t = DEFAULT_NODES)]
    nodes: usize,
    /// Filter applications.
    #[arg(long, default_value_t = 1)]
    ell: usize,
    /// Relative low-rank threshold.
    #[arg(long, default_value_t = 1e-20)]
    delta: f64,
    /// Relative spurious threshold.
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Ellipse aspect ratio.
    #[arg(long, default_value_t = DEFAULT_ASPECT)]
    alpha: f64,
    /// Seed of the random starting block.
    #[arg(long, default_value_t = SsParams::default().seed)]
    seed: u64,
    /// Choose L so that L·M ≈ 3·t for an expected count t.
    #[arg(long = "auto-L", value_name = "T")]
    auto_l: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: SsError| e.to_string())
}

impl Params {
    fn config(&self) -> RunConfig {
        let block_size = match self.auto_l {
            Some(t) => (3 * t).div_ceil(self.moments.max(1)).max(1),
            None => self.block_size,
        };
        let mut cfg = RunConfig::new((self.interval[0], self.interval[1]), self.mode).with_params(SsParams {
            block_size,
            moments: self.moments,
            nodes: self.nodes,
            iterations: self.ell,
            delta: self.delta,
            epsilon: self.eps,
            seed: self.seed,
        });
        cfg.aspect = self.alpha;
        cfg.threads = self.threads;
        cfg
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    params: Params,
    /// Output prefix for `.report.json` and `.triplets.csv`.
    #[arg(long, default_value = "sssvd")]
    prefix: String,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    model: u32,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_MODEL_SEED)]
    model_seed: u64,
    /// Writes `<prefix>.mtx` and `<prefix>.sigma.csv`.
    #[arg(long, default_value = "model")]
    prefix: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformChoice {
    Identity,
    Exp,
    Both,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, required = true)]
    interval: Vec<f64>,
    #[arg(long = "N", default_value_t = DEFAULT_NODES)]
    nodes: usize,
    #[arg(long, default_value_t = DEFAULT_ASPECT)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "both")]
    transform: TransformChoice,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long, default_value_t = 400)]
    points: usize,
    /// Linear instead of logarithmic grid.
    #[arg(long)]
    linear: bool,
    #[arg(long, default_value = "sssvd")]
    prefix: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    /// Both model problems under all four modes.
    Models,
    /// L = 15, 30, 60, 120 at M = 4.
    Sweep,
    All,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_MODEL_SEED)]
    model_seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Writes `<prefix>.bench.csv` and `<prefix>.bench.json`.
    #[arg(long, default_value = "sssvd")]
    prefix: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    params: Params,
    #[arg(long, default_value_t = 2000)]
    oracle_cap: usize,
    /// Perturb the computed left vectors by this relative amount first.
    #[arg(long)]
    inject_noise: Option<f64>,
    /// Writes `<prefix>.verify.json`.
    #[arg(long, default_value = "sssvd")]
    prefix: String,
}

fn create(path: impl AsRef<Path>) -> sssvd::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_solve(args: &SolveArgs) -> sssvd::Result<u8> {
    let input = args.source.load()?;
    let cfg = args.params.config();
    let sol = solve(&input.matrix, &cfg)?;
    let report = RunReport::build(&input.label, &input.matrix, &sol, input.truth.as_deref())?;
    report.write_json(create(format!("{}.report.json", args.prefix))?)?;
    let mut csv = create(format!("{}.triplets.csv", args.prefix))?;
    write_triplets_csv(&report, &mut csv)?;
    csv.flush()?;

    println!(
        "{}: {} triplets in [{}, {}] ({} candidates, rank {})",
        report.mode, report.found, report.interval[0], report.interval[1], report.candidates, report.retained_rank
    );
    for (i, r) in report
        .triplets
        .iter()
        .enumerate()
        .filter(|(_, r)| r.in_interval && !r.spurious)
    {
        println!(
            "{i:4}  sigma = {:.16e}  residual = {:.3e}  estimate = {:.3e}",
            r.sigma,
            r.residual_exact.unwrap_or(f64::NAN),
            r.residual_estimated
        );
    }
    if let Some(acc) = &report.accuracy {
        println!(
            "max relative error {:.3e}, median {:.3e}, max residual {:.3e}",
            acc.max_rel_error, acc.median_rel_error, acc.max_residual
        );
    }
    let t = &report.timings;
    println!(
        "time [s]: steps 1-2 {:.4}  step 3 {:.4}  step 4 {:.4}  step 5 {:.4}  total {:.4}",
        t.steps_1_2, t.step_3, t.step_4, t.step_5, t.total
    );
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(0)
}

fn cmd_model(args: &ModelArgs) -> sssvd::Result<u8> {
    let p = build_model(ModelSpec {
        which: ModelKind::from_index(args.model)?,
        m: args.m,
        n: args.n,
        seed: args.model_seed,
    })?;
    write_matrix_market(Path::new(&format!("{}.mtx", args.prefix)), &p.matrix)?;
    let mut out = create(format!("{}.sigma.csv", args.prefix))?;
    writeln!(out, "index,sigma")?;
    for (i, s) in p.sigma.iter().enumerate() {
        writeln!(out, "{},{s:.16e}", i + 1)?;
    }
    out.flush()?;
    println!(
        "wrote {}.mtx ({}x{}) and {}.sigma.csv",
        args.prefix, args.m, args.n, args.prefix
    );
    Ok(0)
}

fn cmd_filter(args: &FilterArgs) -> sssvd::Result<u8> {
    let (a, b) = (args.interval[0], args.interval[1]);
    let lo = args.sigma_min.unwrap_or(if a > 0.0 { a * 1e-3 } else { b * 1e-5 });
    let hi = args.sigma_max.unwrap_or(10.0 * b);
    let transforms: &[(Transform, &str)] = match args.transform {
        TransformChoice::Identity => &[(Transform::Identity, "")],
        TransformChoice::Exp => &[(Transform::Exp, "")],
        TransformChoice::Both => &[(Transform::Identity, ".identity"), (Transform::Exp, ".exp")],
    };
    for (tr, tag) in transforms {
        let rule = ContourRule::build(a, b, args.nodes, args.alpha, *tr)?;
        let profile = filter_profile(&rule, lo, hi, args.points, !args.linear)?;
        let path = format!("{}{tag}.filter.csv", args.prefix);
        let mut out = create(&path)?;
        profile.write_csv(&mut out)?;
        out.flush()?;
        println!("wrote {path} ({} points, {} transform)", args.points, tr.name());
    }
    Ok(0)
}

fn cmd_bench(args: &BenchArgs) -> sssvd::Result<u8> {
    let cases = match args.suite {
        Suite::Models => model_suite(args.model_seed),
        Suite::Sweep => block_sweep_suite(args.model_seed),
        Suite::All => {
            let mut c = model_suite(args.model_seed);
            c.extend(block_sweep_suite(args.model_seed));
            c
        }
    };
    let rows = run_bench(&cases, args.repeats, args.threads);
    let mut csv = create(format!("{}.bench.csv", args.prefix))?;
    write_bench_csv(&rows, &mut csv)?;
    csv.flush()?;
    serde_json::to_writer_pretty(create(format!("{}.bench.json", args.prefix))?, &rows)
        .map_err(std::io::Error::other)?;

    println!(
        "{:<20} {:>10} {:>10} {:>10} {:>10} {:>10} {:>6} {:>10} {:>10}",
        "run", "steps1-2", "step3", "step4", "step5", "total", "found", "error", "residual"
    );
    for r in &rows {
        let t = &r.timings;
        match &r.error {
            Some(e) => println!("{:<20} failed: {e}", r.label),
            None => println!(
                "{:<20} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>6} {:>10.2e} {:>10.2e}",
                r.label, t.steps_1_2, t.step_3, t.step_4, t.step_5, t.total, r.found, r.max_rel_error, r.max_residual
            ),
        }
    }
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> sssvd::Result<u8> {
    let input = args.source.load()?;
    let cfg = args.params.config();
    let report = verify(
        &input.matrix,
        &cfg,
        input.truth.as_deref(),
        VerifyOptions {
            oracle_cap: args.oracle_cap,
            inject_noise: args.inject_noise,
        },
    )?;
    serde_json::to_writer_pretty(create(format!("{}.verify.json", args.prefix))?, &report)
        .map_err(std::io::Error::other)?;
    for c in &report.checks {
        let status = match (c.passed, c.gating) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "info",
        };
        println!("{status:>4}  {:<45} {:.3e} (tol {:.1e})", c.name, c.value, c.tolerance);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    Ok(if report.passed() { 0 } else { EXIT_CHECK_FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Model(a) => cmd_model(a),
        Command::FilterPlot(a) => cmd_filter(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            })
        }
    }
}
