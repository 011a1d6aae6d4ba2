//! `gflm` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric failure.
//! Failures print a single `error: kind=<kind> message=<text>` line on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gflm_core::bootstrap::{bootstrap_ci, BootstrapConfig};
use gflm_core::dataset::{load_dataset, DatasetPaths, GflmDataset};
use gflm_core::estimators::{EstimatorKind, FitContext};
use gflm_core::glm::Family;
use gflm_core::goldens::{bundled_goldens, check_goldens};
use gflm_core::mecov::load_known_cov;
use gflm_core::montecarlo::{run_study, SimScenario};
use gflm_core::pipeline::{fit_dataset, EstimatorSpec};
use gflm_core::presets::{load_preset, preset_names, preset_text};
use gflm_core::rc::RcConfig;
use gflm_core::simex::SimexConfig;
use gflm_core::{bspline::select_kn, Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gflm", version, about = "Functional logistic regression with error-prone covariates")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one estimator to a dataset.
    Fit(FitArgs),
    /// Run a Monte Carlo study from a scenario file or preset.
    Simulate(SimulateArgs),
    /// Percentile bootstrap bands for one estimator.
    Bootstrap(BootstrapArgs),
    /// List the built-in scenarios, or print one.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Long CSV: subject_id, replicate, time_index, value.
    #[arg(long)]
    functional: PathBuf,
    /// Long CSV: subject_id, replicate, value.
    #[arg(long)]
    scalar: PathBuf,
    /// CSV: subject_id, y, then error-free covariates.
    #[arg(long)]
    outcomes: PathBuf,
    /// True functional covariate (same layout as --functional, one replicate).
    #[arg(long)]
    true_functional: Option<PathBuf>,
    /// True scalar covariate (same layout as --scalar, one replicate).
    #[arg(long)]
    true_scalar: Option<PathBuf>,
    /// Grid size; defaults to one more than the largest time index.
    #[arg(long)]
    t_points: Option<usize>,
    /// binomial (logit link) or gaussian (identity link).
    #[arg(long, default_value = "binomial")]
    family: String,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// oracle, simex, rc, average or naive.
    #[arg(long)]
    estimator: String,
    /// Number of cubic B-spline basis functions (default from sample size).
    #[arg(long)]
    kn: Option<usize>,
    /// SIMEX error-inflation levels, comma separated [default: 0,0.5,1,1.5,2]
    #[arg(long, value_delimiter = ',')]
    simex_lambdas: Option<Vec<f64>>,
    /// Pseudo-datasets per SIMEX level [default: 200]
    #[arg(long)]
    simex_s: Option<usize>,
    /// Seed for every random draw the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicate used by the naive estimator (1-based).
    #[arg(long, default_value_t = 1)]
    naive_session: usize,
    /// Odd moving-average window applied to calibrated curves.
    #[arg(long)]
    rc_window: Option<usize>,
    /// Known error covariance of the replicate-mean curve (headerless square CSV).
    #[arg(long)]
    known_cov: Option<PathBuf>,
    /// Known error variance of the replicate-mean scalar (single value).
    #[arg(long, requires = "known_cov")]
    known_scalar_var: Option<PathBuf>,
    /// Fit without an intercept column.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Flat key = value scenario file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name (see `gflm presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Override the scenario's replication count.
    #[arg(long)]
    replications: Option<usize>,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also compare against the bundled reference values.
    #[arg(long)]
    check_goldens: bool,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 500)]
    b: usize,
    /// Pointwise coverage of the percentile bands.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => EXIT_USAGE,
        Error::Shape(_) | Error::Data(_) | Error::Io(_) | Error::Csv(_) => EXIT_DATA,
        Error::Identifiability(_) | Error::Numeric(_) | Error::EstimatorFailure(_) => EXIT_NUMERIC,
    }
}

fn error_line(kind: &str, message: &str) -> String {
    format!("error: kind={kind} message={}", message.replace(['\n', '\r'], " "))
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", error_line("usage", &e.to_string()));
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        // Stdout closed early (e.g. piped into `head`).
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.message()));
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Presets { show } => cmd_presets(show),
    }
}

fn load(data: &DataArgs, kind: EstimatorKind) -> Result<GflmDataset> {
    let has_truth = data.true_functional.is_some() && data.true_scalar.is_some();
    if kind == EstimatorKind::Oracle && !has_truth {
        return Err(Error::InvalidArgument(
            "--estimator oracle needs --true-functional and --true-scalar".into(),
        ));
    }
    if data.true_functional.is_some() != data.true_scalar.is_some() {
        return Err(Error::InvalidArgument("--true-functional and --true-scalar go together".into()));
    }
    let paths = DatasetPaths {
        functional: data.functional.clone(),
        scalar: data.scalar.clone(),
        outcomes: data.outcomes.clone(),
        true_functional: data.true_functional.clone(),
        true_scalar: data.true_scalar.clone(),
    };
    load_dataset(&paths, data.t_points, Family::parse(&data.family)?)
}

fn prepare(data: &DataArgs, model: &ModelArgs) -> Result<(GflmDataset, FitContext, EstimatorSpec)> {
    let kind = EstimatorKind::parse(&model.estimator)?;
    let ds = load(data, kind)?;
    let ctx = FitContext::new(ds.grid().clone(), select_kn(ds.n_subjects(), model.kn), ds.family)?
        .intercept(!model.no_intercept);
    let defaults = SimexConfig::default();
    let simex = SimexConfig {
        lambdas: model.simex_lambdas.clone().unwrap_or(defaults.lambdas),
        n_sim: model.simex_s.unwrap_or(defaults.n_sim),
        seed: model.seed,
        ..SimexConfig::default()
    };
    simex.validate()?;
    let rc = RcConfig { smoothing_window: model.rc_window };
    rc.validate()?;
    let known_cov = match &model.known_cov {
        Some(p) => Some(load_known_cov(p, model.known_scalar_var.as_deref(), ctx.grid.len())?),
        None => None,
    };
    let spec = EstimatorSpec { kind, naive_session: model.naive_session, simex, rc, known_cov };
    Ok((ds, ctx, spec))
}

fn write(path: &Path, body: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let (ds, ctx, spec) = prepare(&a.data, &a.model)?;
    let out = fit_dataset(&ds, &ctx, &spec)?;
    std::fs::create_dir_all(&a.out)?;
    let fit = &out.fit;
    let mut coef = String::from("label,estimate,exp_estimate\n");
    for (label, v) in fit.labels.iter().zip(fit.coefficients.iter()) {
        let _ = writeln!(coef, "{label},{v:?},{:?}", v.exp());
    }
    write(&a.out.join("coefficients.csv"), &coef)?;
    let mut curve = String::from("t,beta1\n");
    for (t, b) in ctx.grid.points().iter().zip(fit.beta1.iter()) {
        let _ = writeln!(curve, "{t:?},{b:?}");
    }
    write(&a.out.join("beta1.csv"), &curve)?;
    if let Some(trace) = &out.simex_trace {
        trace.write_csv(&a.out.join("simex_trace.csv"))?;
    }
    if let Some(diag) = &out.rc_diagnostics {
        diag.write_csv(&a.out.join("rc_diagnostics.csv"))?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut sc = match (&a.scenario, &a.preset) {
        (Some(path), _) => SimScenario::from_file(path)?,
        (None, Some(name)) => load_preset(name)?,
        (None, None) => unreachable!("clap requires one of --scenario/--preset"),
    };
    if let Some(r) = a.replications {
        sc.n_replications = r;
    }
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    let report = run_study(&sc)?.report();
    std::fs::create_dir_all(&a.out)?;
    report.write_csv(&a.out.join("metrics.csv"))?;
    write(&a.out.join("scenario.txt"), &sc.to_config_string())?;
    if a.check_goldens {
        let mut body = String::from("check,passed\n");
        for c in check_goldens(&report, &bundled_goldens()) {
            let _ = writeln!(body, "\"{}\",{}", c.description, c.passed);
        }
        write(&a.out.join("goldens_check.csv"), &body)?;
    }
    Ok(())
}

fn cmd_bootstrap(a: BootstrapArgs) -> Result<()> {
    let (ds, ctx, spec) = prepare(&a.data, &a.model)?;
    let cfg = BootstrapConfig { b: a.b, level: a.level, seed: a.model.seed };
    let bands = bootstrap_ci(&ds, &ctx, &spec, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    bands.write_csv(&a.out.join("beta1_bands.csv"), &a.out.join("scalar_bands.csv"))
}

fn cmd_presets(show: Option<String>) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match show {
        Some(name) => {
            let text = preset_text(&name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
            stdout.write_all(text.as_bytes())?;
        }
        None => {
            for name in preset_names() {
                writeln!(stdout, "{name}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Numeric("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::EstimatorFailure("x".into())), EXIT_NUMERIC);
    }

    #[test]
    fn error_line_is_single_line() {
        assert_eq!(error_line("data", "a\nb"), "error: kind=data message=a b");
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["gflm", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["gflm", "simulate", "--out", "x"]), EXIT_USAGE);
        assert_eq!(run(["gflm", "presets", "--show", "nope"]), EXIT_USAGE);
        assert_eq!(run(["gflm", "--help"]), EXIT_OK);
    }
}
