use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glm_breakdown::design::{derive_rng, DesignKind, DesignSpec, SeedPath};
use glm_breakdown::fit::{fit_mle, FitOptions, FitStatus};
use glm_breakdown::glm::{Family, FamilyKind, ResponseVector};
use glm_breakdown::harness::{
    run_experiment_with, summarize, write_summary_csv, ExperimentConfig, GridPoint, OuterResultRow,
    RunControl, MANIFEST_FILE,
};
use glm_breakdown::numerics::DenseMatrix;
use glm_breakdown::uniformity::{test_uniformity_with_min, PValueSample, DEFAULT_MIN_SAMPLE};
use glm_breakdown::Error;

const WORKERS_ENV: &str = "GLM_BREAKDOWN_WORKERS";

#[derive(Parser)]
#[command(
    name = "glm-breakdown",
    version = env!("CARGO_PKG_VERSION"),
    about = "GLM maximum likelihood fits, Wald p-values and uniformity experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Sample a random design matrix and write it as headerless CSV
    GenDesign(GenDesignArgs),
    /// Fit a canonical GLM by maximum likelihood
    Fit(FitArgs),
    /// KS and Anderson-Darling tests of a p-value sample against Uniform(0, 1)
    TestUniformity(UniformityArgs),
    /// Run (or resume) a Monte Carlo experiment described by a config file
    Run(RunArgs),
    /// Boxplot statistics of a finished or partial experiment
    Summarize(SummarizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Stiefel,
    Ar1,
}

#[derive(Args)]
struct GenDesignArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long)]
    seed: u64,
    /// Scale every column to Euclidean norm √n
    #[arg(long)]
    rescale_columns: bool,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    family: FamilyKind,
    /// Known dispersion for the linear family
    #[arg(long, default_value_t = 1.0)]
    dispersion: f64,
    /// Headerless numeric CSV, one row per observation
    #[arg(long)]
    design: PathBuf,
    /// Single-column CSV of responses
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    intercept: bool,
    #[arg(long, default_value_t = FitOptions::default().max_iter)]
    max_iter: usize,
    /// Exit with status 2 unless the fit converged
    #[arg(long)]
    strict: bool,
    /// JSON output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UniformityArgs {
    /// Single-column CSV of values in [0, 1]
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLE)]
    min_sample: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Continue an interrupted run in an existing output directory
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    r_inner: Option<usize>,
    #[arg(long)]
    r_outer: Option<usize>,
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    signal_magnitude: Option<f64>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    dispersion: Option<f64>,
    #[arg(long)]
    tested_coordinate: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    nonconvergence_policy: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    fixed_beta0: bool,
    #[arg(long)]
    rescale_columns: bool,
    #[arg(long)]
    include_intercept: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Csv(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidResponse { .. }
            | Error::NonFinite { .. }
            | Error::CoordinateOutOfRange { .. }
            | Error::SampleTooSmall { .. }
            | Error::EmptyResults(_) => Failure::Usage(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenDesign(args) => gen_design(args),
        Command::Fit(args) => fit(args),
        Command::TestUniformity(args) => uniformity(args),
        Command::Run(args) => run(args),
        Command::Summarize(args) => summarize_cmd(args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen_design(args: GenDesignArgs) -> Result<ExitCode, Failure> {
    let kind = match args.kind {
        KindArg::Stiefel => DesignKind::StiefelUniform,
        KindArg::Ar1 => DesignKind::GaussianAr1 { rho: args.rho },
    };
    let mut spec = DesignSpec::new(kind, args.n, args.p)?;
    spec.rescale_columns = args.rescale_columns;
    spec.validate()?;
    let mut rng = derive_rng(&SeedPath::new(args.seed, vec![]));
    let x = spec.sample(&mut rng)?;
    {
        let mut out = output(args.out.as_deref())?;
        write_matrix(&x, &mut out)?;
        out.flush()?;
    }
    if matches!(args.kind, KindArg::Stiefel) {
        let defect = orthonormality_defect(&x)?;
        let line = format!("orthonormality_defect {defect:e}");
        if args.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn orthonormality_defect(x: &DenseMatrix) -> Result<f64, Failure> {
    let n = x.rows() as f64;
    let gram = x.weighted_gram(&vec![1.0 / n; x.rows()])?;
    let p = gram.cols();
    Ok((0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| (gram.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max))
}

fn write_matrix(x: &DenseMatrix, out: &mut dyn Write) -> io::Result<()> {
    for i in 0..x.rows() {
        let row = x.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a headerless numeric CSV into rows, reporting the offending line.
fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let name = path.display().to_string();
    let parse_err = |line: usize, reason: String| {
        Failure::from(Error::Parse {
            path: name.clone(),
            line,
            reason,
        })
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Usage(format!("{name}: {e}")))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(line, format!("not a number: {field:?}")))
            })
            .collect::<Result<Vec<f64>, Failure>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(rows)
}

fn read_column(path: &Path) -> Result<Vec<f64>, Failure> {
    let rows = read_numeric_csv(path)?;
    if let Some(bad) = rows.iter().position(|r| r.len() != 1) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: bad + 1,
            reason: format!("expected one column, found {}", rows[bad].len()),
        }
        .into());
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

fn fit(args: FitArgs) -> Result<ExitCode, Failure> {
    let family = match args.family {
        FamilyKind::Linear => Family::linear(args.dispersion)?,
        kind => Family::from_kind(kind, 1.0)?,
    };
    let x = DenseMatrix::from_rows(&read_numeric_csv(&args.design)?)?;
    let y = ResponseVector::new(&family, read_column(&args.response)?)?;
    let opts = FitOptions {
        max_iter: args.max_iter,
        include_intercept: args.intercept,
        ..FitOptions::default()
    };
    let result = fit_mle(&family, &x, &y, &opts)?;
    {
        let mut out = output(args.out.as_deref())?;
        serde_json::to_writer_pretty(&mut out, &result)
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        out.write_all(b"\n")?;
        out.flush()?;
    }
    eprintln!(
        "status {:?} after {} iterations, score norm {:e}",
        result.status, result.iterations, result.final_score_norm
    );
    if args.strict && result.status != FitStatus::Converged {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn uniformity(args: UniformityArgs) -> Result<ExitCode, Failure> {
    let sample = PValueSample::new(read_column(&args.input)?)?;
    let result = test_uniformity_with_min(&sample, args.min_sample)?;
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &result).map_err(|e| Failure::Runtime(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

/// Reads the config file and layers command-line values over it, key by key.
fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.config.display())))?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        Failure::Usage(format!("{}: {}", args.config.display(), e.message()))
    })?;
    let mut set = |key: &str, value: toml::Value| {
        table.insert(key.to_string(), value);
    };
    let int = |v: usize| toml::Value::Integer(v as i64);
    if let Some(v) = args.n {
        set("n", int(v));
    }
    if let Some(v) = args.delta {
        set("delta", toml::Value::Float(v));
    }
    if let Some(v) = args.r_inner {
        set("r_inner", int(v));
    }
    if let Some(v) = args.r_outer {
        set("r_outer", int(v));
    }
    if let Some(v) = &args.design {
        set("design", toml::Value::String(v.clone()));
    }
    if let Some(v) = args.rho {
        set("rho", toml::Value::Float(v));
    }
    if let Some(v) = args.s {
        set("s", int(v));
    }
    if let Some(v) = args.signal_magnitude {
        set("signal_magnitude", toml::Value::Float(v));
    }
    if let Some(v) = &args.family {
        set("family", toml::Value::String(v.clone()));
    }
    if let Some(v) = args.dispersion {
        set("dispersion", toml::Value::Float(v));
    }
    if let Some(v) = args.tested_coordinate {
        set("tested_coordinate", int(v));
    }
    if let Some(v) = args.master_seed {
        // seeds use the full u64 range; TOML integers are signed
        set("master_seed", toml::Value::Integer(v as i64));
    }
    if let Some(v) = &args.nonconvergence_policy {
        set("nonconvergence_policy", toml::Value::String(v.clone()));
    }
    if let Some(v) = &args.output_dir {
        set("output_dir", toml::Value::String(v.display().to_string()));
    }
    if let Some(v) = args.workers {
        set("workers", int(v));
    }
    for (flag, key) in [
        (args.fixed_beta0, "fixed_beta0"),
        (args.rescale_columns, "rescale_columns"),
        (args.include_intercept, "include_intercept"),
    ] {
        if flag {
            set(key, toml::Value::Boolean(true));
        }
    }
    Ok(ExperimentConfig::from_toml_str(&table.to_string())?)
}

fn run(args: RunArgs) -> Result<ExitCode, Failure> {
    let config = load_config(&args)?;
    if config.output_dir.join(MANIFEST_FILE).exists() && !args.resume {
        return Err(Failure::Usage(format!(
            "{} already holds results; pass --resume to continue them",
            config.output_dir.display()
        )));
    }
    let r_outer = config.r_outer;
    let report = move |g: &GridPoint, row: &OuterResultRow, done: usize| {
        eprintln!(
            "alpha0={:.4} p={} outer_rep={} ks_pvalue={:.4} converged={} [{done}/{r_outer}]",
            g.alpha0, g.p, row.outer_rep, row.ks_pvalue, row.n_converged
        );
    };
    let control = RunControl {
        task_limit: None,
        progress: Some(&report),
    };
    let outcome = run_experiment_with(&config, &control)?;
    println!(
        "completed {} tasks, {} already present, results in {}",
        outcome.completed,
        outcome.skipped,
        config.output_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn summarize_cmd(args: SummarizeArgs) -> Result<ExitCode, Failure> {
    let rows = summarize(&args.results)?;
    let mut out = output(args.out.as_deref())?;
    write_summary_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
