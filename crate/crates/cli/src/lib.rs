//! Command implementations behind the `loops` binary.
//!
//! Every command parses a Matrix Market file as FP64, casts it to the
//! requested precision and dispatches to the generic core entry points.
//! Output goes to caller-supplied writers so the commands are testable
//! in-process.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loops_spmm::bench::{run_bench, BenchOptions, BenchReport};
use loops_spmm::engine::EngineConfig;
use loops_spmm::format::{convert_csr_to_loops, encode_loops};
use loops_spmm::kernels::{KernelConfig, KernelElement};
use loops_spmm::scheduler::{
    default_candidates, plan_schedule, CalibrationOptions, ScheduleDecision, ScheduleDocument, WallClockMachine,
};
use loops_spmm::sparse::{parse_matrix_market, random_dense, CsrMatrix, DenseMatrix};
use loops_spmm::verify::{threads_for_split, verify_matrix};
use loops_spmm::{f16, Precision};

/// Seed of the dense right-hand side when `--seed` is not given.
pub const DEFAULT_B_SEED: u64 = 0x5EED;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_INPUT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "loops", version, about = "Hybrid CSR + BCSR sparse x dense matrix multiplication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a Matrix Market file to a binary hybrid-layout dump.
    Convert(ConvertArgs),
    /// Check the hybrid kernel against the FP64 reference product.
    Verify(VerifyArgs),
    /// Calibrate, schedule, convert and time the hybrid SpMM.
    Bench(BenchArgs),
    /// Calibrate the performance model and emit the schedule document.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Input matrix (Matrix Market coordinate format).
    pub input: PathBuf,
    #[arg(long, default_value = "fp64")]
    pub precision: Precision,
    #[arg(long, default_value_t = 512, value_parser = parse_svl)]
    pub svl_bits: usize,
    /// Columns of the dense operand.
    #[arg(long, default_value_t = 32)]
    pub n_cols: usize,
    /// Column windows processed per pass; defaults to the engine maximum.
    #[arg(long)]
    pub tiles_in_flight: Option<usize>,
    /// Total worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed for the dense operand.
    #[arg(long, default_value_t = DEFAULT_B_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    /// Row boundary, or `auto` to calibrate and balance.
    #[arg(long, default_value = "auto")]
    pub r_boundary: RowBoundary,
    /// Schedule JSON to reuse or write.
    #[arg(long)]
    pub schedule_cache: Option<PathBuf>,
    /// Timed repetitions per calibration candidate.
    #[arg(long, default_value_t = 3)]
    pub calibration_reps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Output dump; defaults to the input path with a `.loops` extension.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub out: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Timed repetitions.
    #[arg(long, default_value_t = loops_spmm::bench::DEFAULT_REPS)]
    pub reps: usize,
    /// Untimed repetitions before measurement.
    #[arg(long, default_value_t = loops_spmm::bench::DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub out: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Schedule JSON to reuse if valid, written otherwise.
    #[arg(long)]
    pub schedule_cache: Option<PathBuf>,
    /// Timed repetitions per candidate.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowBoundary {
    Auto,
    Rows(usize),
}

impl FromStr for RowBoundary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RowBoundary::Auto);
        }
        s.parse().map(RowBoundary::Rows).map_err(|_| format!("expected a row count or `auto`, got `{s}`"))
    }
}

fn parse_svl(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("`{s}` is not an integer"))?;
    EngineConfig::new(v).map(|_| v).map_err(|e| e.to_string())
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, arguments or I/O (exit 2).
    Input(String),
    /// The kernel disagreed with the oracle (exit 1).
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT_ERROR,
            Failure::Verification(_) => EXIT_VERIFY_FAILED,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Verification(m) => f.write_str(m),
        }
    }
}

impl From<loops_spmm::Error> for Failure {
    fn from(e: loops_spmm::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

macro_rules! dispatch {
    ($p:expr, $t:ident => $body:expr) => {
        match $p {
            Precision::Fp64 => {
                type $t = f64;
                $body
            }
            Precision::Fp32 => {
                type $t = f32;
                $body
            }
            Precision::Fp16 => {
                type $t = f16;
                $body
            }
        }
    };
}

/// Runs `cli`, writing reports to `out` and diagnostics to `err`; returns
/// the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Convert(a) => dispatch!(a.common.precision, T => cmd_convert::<T>(&a, out, err)),
        Command::Verify(a) => dispatch!(a.common.precision, T => cmd_verify::<T>(&a, out)),
        Command::Bench(a) => dispatch!(a.common.precision, T => cmd_bench::<T>(&a, out, err)),
        Command::Calibrate(a) => dispatch!(a.common.precision, T => cmd_calibrate::<T>(&a, out, err)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {f}");
            f.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

struct Problem<T: KernelElement> {
    id: String,
    a: CsrMatrix<T>,
    b: DenseMatrix<T>,
    cfg: KernelConfig,
    threads: usize,
}

fn load<T: KernelElement>(c: &CommonArgs) -> Result<Problem<T>, Failure> {
    let bytes = std::fs::read(&c.input).map_err(|e| Failure::Input(format!("{}: {e}", c.input.display())))?;
    let a64 = parse_matrix_market(&bytes).map_err(|e| Failure::Input(format!("{}: {e}", c.input.display())))?;
    let engine = EngineConfig::new(c.svl_bits)?;
    if c.n_cols == 0 {
        return Err(Failure::Input("--n-cols must be positive".into()));
    }
    let cfg = match c.tiles_in_flight {
        Some(k) => KernelConfig::new(engine, k, c.n_cols),
        None => KernelConfig::saturating(engine, T::PRECISION, c.n_cols),
    };
    cfg.validate(T::PRECISION)?;
    let threads = match c.threads {
        Some(0) => return Err(Failure::Input("--threads must be positive".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let a = a64.cast::<T>();
    let b = random_dense::<T>(a.ncols(), c.n_cols, c.seed);
    let id = c.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Problem { id, a, b, cfg, threads })
}

fn read_cached(path: &Path, p: &Problem<impl KernelElement>, precision: Precision) -> Option<ScheduleDocument> {
    let text = std::fs::read_to_string(path).ok()?;
    let doc = ScheduleDocument::from_json(&text).ok()?;
    let fits = doc.precision == precision
        && doc.svl_bits == p.cfg.engine.svl_bits()
        && doc.t_neon + doc.t_sme <= p.threads
        && doc.t_neon + doc.t_sme > 0
        && doc.r_boundary <= p.a.nrows();
    fits.then_some(doc)
}

/// Cached schedule if `cache` holds a compatible one, else a fresh
/// calibration. The flag is true when the cache was used.
fn schedule<T: KernelElement>(
    p: &Problem<T>,
    cache: Option<&Path>,
    reps: usize,
    err: &mut dyn Write,
) -> Result<(ScheduleDocument, bool), Failure> {
    if let Some(doc) = cache.and_then(|c| read_cached(c, p, T::PRECISION)) {
        let _ = writeln!(err, "using cached schedule {}", cache.unwrap().display());
        return Ok((doc, true));
    }
    let opts = CalibrationOptions { threads_total: p.threads, warmup: 1, reps: reps.max(1), ..Default::default() };
    let mut machine = WallClockMachine::new(&p.a, &p.b, p.cfg, opts);
    let plan = plan_schedule(&mut machine, &default_candidates(p.threads))?;
    if !plan.fitted {
        let _ = writeln!(err, "calibration could not fit all coefficients; using the best measured configuration");
    }
    Ok((ScheduleDocument::new(&plan.model, &plan.decision, &p.cfg.engine, T::PRECISION), false))
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    std::fs::write(path, bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Decision for an explicit row boundary: the thread budget is split evenly
/// between the parts that have work.
fn manual_decision(nrows: usize, rb: usize, threads: usize) -> Result<ScheduleDecision, Failure> {
    if rb > nrows {
        return Err(Failure::Input(format!("--r-boundary {rb} exceeds the {nrows} rows of the matrix")));
    }
    let half = (threads / 2).max(1);
    let d = threads_for_split(nrows, rb, half, threads.saturating_sub(half).max(1));
    Ok(match (d.t_neon, d.t_sme) {
        (0, 0) => ScheduleDecision { t_neon: 1, ..d },
        (0, _) => ScheduleDecision { t_sme: threads, ..d },
        (_, 0) => ScheduleDecision { t_neon: threads, ..d },
        _ => d,
    })
}

fn resolve_decision<T: KernelElement>(
    p: &Problem<T>,
    s: &ScheduleArgs,
    err: &mut dyn Write,
) -> Result<(ScheduleDecision, Option<ScheduleDocument>), Failure> {
    match s.r_boundary {
        RowBoundary::Rows(rb) => Ok((manual_decision(p.a.nrows(), rb, p.threads)?, None)),
        RowBoundary::Auto => {
            let (doc, _) = schedule(p, s.schedule_cache.as_deref(), s.calibration_reps, err)?;
            Ok((doc.decision(), Some(doc)))
        }
    }
}

// ---------------------------------------------------------------------------
// Commands

pub fn sidecar_path(dump: &Path) -> PathBuf {
    let mut s = dump.as_os_str().to_owned();
    s.push(".schedule.json");
    PathBuf::from(s)
}

fn cmd_convert<T: KernelElement>(args: &ConvertArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let p = load::<T>(&args.common)?;
    let (decision, doc) = resolve_decision(&p, &args.schedule, err)?;
    let m = convert_csr_to_loops(&p.a, decision.r_boundary, p.cfg.engine.lanes(T::PRECISION))?;
    let embedded = doc.map(|d| (d.t_neon, d.t_sme));
    let output = args.output.clone().unwrap_or_else(|| args.common.input.with_extension("loops"));
    write_file(&output, &encode_loops(&m, embedded))?;
    writeln!(out, "wrote {} (r_boundary {}, {} tiles)", output.display(), m.r_boundary(), m.bcsr_part().ntiles())?;
    if let Some(doc) = doc {
        let sidecar = sidecar_path(&output);
        write_file(&sidecar, doc.to_json().as_bytes())?;
        if let Some(cache) = &args.schedule.schedule_cache {
            write_file(cache, doc.to_json().as_bytes())?;
        }
        writeln!(out, "wrote {}", sidecar.display())?;
    }
    Ok(())
}

/// Thread pairs exercised by `verify`: sequential, two-and-two, and the
/// full budget on each path.
fn verify_thread_pairs(threads: usize) -> Vec<(usize, usize)> {
    let mut pairs = vec![(1, 1), (2, 2), (threads, threads)];
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn cmd_verify<T: KernelElement>(args: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let p = load::<T>(&args.common)?;
    let tifs = match args.common.tiles_in_flight {
        Some(k) => vec![k],
        None => {
            let mut v = vec![1, p.cfg.engine.max_tiles(T::PRECISION)];
            v.dedup();
            v
        }
    };
    let mut cases = Vec::new();
    for tif in tifs {
        let cfg = KernelConfig { tiles_in_flight: tif, ..p.cfg };
        cases.extend(verify_matrix(&p.a, &p.b, &cfg, &verify_thread_pairs(p.threads))?);
    }
    match args.out {
        OutputFormat::Text => {
            for c in &cases {
                writeln!(
                    out,
                    "r_boundary={} t_neon={} t_sme={} tiles_in_flight={} max_rel_error={:e} {}",
                    c.decision.r_boundary,
                    c.decision.t_neon,
                    c.decision.t_sme,
                    c.tiles_in_flight,
                    c.max_error,
                    if c.passed { "PASS" } else { "FAIL" }
                )?;
            }
        }
        OutputFormat::Json => {
            let rows: Vec<_> = cases
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "r_boundary": c.decision.r_boundary,
                        "t_neon": c.decision.t_neon,
                        "t_sme": c.decision.t_sme,
                        "tiles_in_flight": c.tiles_in_flight,
                        "max_rel_error": c.max_error,
                        "passed": c.passed,
                    })
                })
                .collect();
            writeln!(out, "{}", serde_json::to_string_pretty(&rows).expect("serializable"))?;
        }
        OutputFormat::Csv => {
            writeln!(out, "r_boundary,t_neon,t_sme,tiles_in_flight,max_rel_error,passed")?;
            for c in &cases {
                writeln!(
                    out,
                    "{},{},{},{},{:e},{}",
                    c.decision.r_boundary, c.decision.t_neon, c.decision.t_sme, c.tiles_in_flight, c.max_error, c.passed
                )?;
            }
        }
    }
    let failed = cases.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} of {} configurations exceed the tolerance", cases.len())));
    }
    Ok(())
}

fn cmd_bench<T: KernelElement>(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    if args.reps == 0 {
        return Err(Failure::Input("--reps must be positive".into()));
    }
    let p = load::<T>(&args.common)?;
    let (decision, doc) = resolve_decision(&p, &args.schedule, err)?;
    if let (Some(doc), Some(cache)) = (doc, &args.schedule.schedule_cache) {
        write_file(cache, doc.to_json().as_bytes())?;
    }
    let opts = BenchOptions { warmup: args.warmup, reps: args.reps };
    let report = run_bench(&p.id, &p.a, &p.b, &decision, &p.cfg, opts)?;
    write_report(&report, args.out, out)
}

fn write_report(r: &BenchReport, format: OutputFormat, out: &mut dyn Write) -> CmdResult {
    match format {
        OutputFormat::Json | OutputFormat::Text => writeln!(out, "{}", r.to_json())?,
        OutputFormat::Csv => {
            writeln!(out, "{}", BenchReport::CSV_HEADER)?;
            writeln!(out, "{}", r.to_csv_row())?;
        }
    }
    Ok(())
}

fn cmd_calibrate<T: KernelElement>(args: &CalibrateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let p = load::<T>(&args.common)?;
    let (doc, cached) = schedule(&p, args.schedule_cache.as_deref(), args.reps, err)?;
    if let (Some(cache), false) = (&args.schedule_cache, cached) {
        write_file(cache, doc.to_json().as_bytes())?;
    }
    writeln!(out, "{}", doc.to_json())?;
    Ok(())
}
