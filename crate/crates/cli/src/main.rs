use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bilinear_core::verify::{Tolerances, DEFAULT_SEED};

mod commands;
mod output;

/// Exit codes shared by every subcommand.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DOMAIN: u8 = 2;
pub const EXIT_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "bilinear",
    version,
    about = "Geometry of bilinear structure fields: geodesics, curvature, signatures, splittings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace the geodesic from a structure field in a given direction as CSV.
    Geodesic(GeodesicArgs),
    /// Run the seeded verification suites and emit a JSON report.
    Verify(VerifyArgs),
    /// Tabulate predicted vs counted signatures of the pointwise metric.
    SignatureTable(SignatureArgs),
    /// Compare the closed-form curvature with a finite-difference oracle on a field.
    CurvatureCheck(CurvatureArgs),
    /// Check that a geodesic stays symmetric or skew.
    Closure(ClosureArgs),
    /// Split a Riemannian metric field along a distribution.
    Split(SplitArgs),
}

#[derive(Args, Debug)]
struct MetricArg {
    /// Metric parameter α (non-zero).
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct GeodesicArgs {
    #[command(flatten)]
    metric: MetricArg,
    /// Initial structure field (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Initial velocity field (JSON).
    #[arg(long)]
    direction: PathBuf,
    #[arg(long)]
    t_max: f64,
    /// Number of rows, evenly spaced on [0, t_max].
    #[arg(long, default_value_t = 101)]
    samples: usize,
    /// Shorten the trace to 0.99·m_h instead of failing when t_max ≥ m_h.
    #[arg(long)]
    clip: bool,
    /// Geodesic solver by name.
    #[arg(long, default_value = "closed-form")]
    method: String,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Run only the named suites (repeatable).
    #[arg(long = "suite")]
    suites: Vec<String>,
    /// Curvature model under test.
    #[arg(long, default_value = "closed-form")]
    method: String,
    /// Test hook: replace the curvature model by a corrupted closed form.
    #[arg(long, hide = true)]
    corrupt_curvature: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SignatureArgs {
    /// Use α = ±|alpha| instead of the default sweep over ±1 and ±1/n.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 5)]
    max_n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurvatureArgs {
    #[command(flatten)]
    metric: MetricArg,
    #[arg(long)]
    input: PathBuf,
    /// Random direction triples per mesh point.
    #[arg(long, default_value_t = 4)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = bilinear_core::curvature::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value = "closed-form")]
    method: String,
    #[arg(long, hide = true)]
    corrupt_curvature: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClosureArgs {
    #[command(flatten)]
    metric: MetricArg,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    direction: PathBuf,
    /// symmetric or skew.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Sampling horizon when the geodesic never blows up; otherwise 0.9·m_h.
    #[arg(long, default_value_t = 2.0)]
    t_max: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Riemannian metric field (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Distribution `{"k": int, "frame"?: [[...]]}` (JSON).
    #[arg(long)]
    distribution: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Pulls `--tol-<name> <value>` and `--tol-<name>=<value>` out of the
/// argument list, since clap cannot declare flags with open-ended names.
fn extract_tolerances(args: Vec<OsString>) -> Result<(Vec<OsString>, Tolerances), String> {
    let mut tolerances = Tolerances::default();
    let mut rest = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.to_str().and_then(|s| s.strip_prefix("--tol-")) else {
            rest.push(arg);
            continue;
        };
        let (name, value) = match flag.split_once('=') {
            Some((name, value)) => (name.to_string(), value.to_string()),
            None => {
                let value = iter
                    .next()
                    .and_then(|v| v.into_string().ok())
                    .ok_or_else(|| format!("--tol-{flag} needs a value"))?;
                (flag.to_string(), value)
            }
        };
        let value: f64 = value
            .parse()
            .map_err(|_| format!("--tol-{name}: '{value}' is not a number"))?;
        tolerances.set(&name, value).map_err(|e| e.to_string())?;
    }
    Ok((rest, tolerances))
}

fn main() -> ExitCode {
    let (args, tolerances) = match extract_tolerances(std::env::args_os().collect()) {
        Ok(split) => split,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Geodesic(a) => commands::geodesic(a),
        Command::Verify(a) => commands::verify(a, tolerances),
        Command::SignatureTable(a) => commands::signature_table(a),
        Command::CurvatureCheck(a) => commands::curvature_check(a, &tolerances),
        Command::Closure(a) => commands::closure(a, &tolerances),
        Command::Split(a) => commands::split(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
