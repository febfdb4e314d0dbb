use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hopfnv::nalgebra::{DMatrix, DVector};
use hopfnv::serial::{format_f64, to_json_pretty};
use hopfnv::spectrum::{char_roots, leading_pair, CharRoot, DEFAULT_ORDER};
use hopfnv::verify::{full_report, VerificationReport};
use hopfnv::{
    assemble_b_at, bundle_derivatives, closest_boundary_point, continue_manifold, find_hopf,
    normal_vector_on, residual, solve_steady, ClosestPoint, ContinuationOptions, ContinuationRun,
    Error, HopfSolution, ModelSpec, NormalVector, Provider, SteadyPoint,
};
use serde::Serialize;

/// An error together with a JSON document to print anyway.
struct CliError {
    error: Error,
    document: Option<String>,
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        CliError {
            error,
            document: None,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hopfnv",
    version,
    about = "Modified Hopf manifolds and normal vectors of delay differential equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state at the given parameters.
    Steady(SteadyArgs),
    /// Characteristic roots at the steady state.
    Eigs(SteadyArgs),
    /// Modified Hopf point with one free parameter.
    FindHopf(HopfArgs),
    /// Unit normal of the manifold in parameter space.
    NormalVector(NormalArgs),
    /// Pseudo-arclength continuation along the manifold.
    Continue(ContinueArgs),
    /// Closest manifold point to a nominal parameter vector.
    ClosestPoint(ClosestArgs),
    /// Runs every oracle check at a modified Hopf point.
    Verify(HopfArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Derivatives {
    Auto,
    Analytic,
    Fd,
}

#[derive(Args)]
struct Common {
    /// Built-in model name or path to a JSON model file.
    #[arg(long)]
    model: String,
    /// Comma-separated parameter vector (defaults to the built-in nominal values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<f64>>,
    /// Comma-separated initial guess for the steady state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    guess: Option<Vec<f64>>,
    /// Chebyshev collocation order.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    #[arg(long, value_enum, default_value = "auto")]
    derivatives: Derivatives,
    /// Also write the JSON document to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SteadyArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct HopfArgs {
    #[command(flatten)]
    common: Common,
    /// Prescribed real part of the leading pair.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    sigma: f64,
    /// Zero-based index of the parameter released by the point solver (default: last).
    #[arg(long)]
    free: Option<usize>,
    /// Start from a saved `find-hopf` document instead of solving.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct NormalArgs {
    #[command(flatten)]
    hopf: HopfArgs,
    /// Zero-based active parameter indices (default: all).
    #[arg(long, value_delimiter = ',')]
    active: Option<Vec<usize>>,
}

#[derive(Args)]
struct ContinueArgs {
    #[command(flatten)]
    hopf: HopfArgs,
    /// Zero-based active parameter indices (default: all).
    #[arg(long, value_delimiter = ',')]
    active: Option<Vec<usize>>,
    /// Initial direction in parameter space (default: first active non-free parameter).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    direction: Option<Vec<f64>>,
    /// Number of continuation steps.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Arclength step size.
    #[arg(long, default_value_t = 0.05)]
    h: f64,
    /// Add a CSV table (step, parameters, omega) to the output; with `--out`
    /// it is also written next to the JSON file.
    #[arg(long)]
    csv: bool,
    /// Recompute the leading pair at each point and warn on drift.
    #[arg(long)]
    check_leading: bool,
}

#[derive(Args)]
struct ClosestArgs {
    #[command(flatten)]
    hopf: HopfArgs,
    /// Zero-based active parameter indices (default: all).
    #[arg(long, value_delimiter = ',')]
    active: Option<Vec<usize>>,
    /// Nominal parameter vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    nominal: Vec<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Domain(_) | Error::Parse(_) | Error::Json(_) => 2,
        Error::NonConvergence { .. } | Error::Stalled { .. } => 3,
        Error::Regularity(_) => 4,
        Error::Numerical(_) => 5,
    }
}

fn model_of(c: &Common) -> Result<ModelSpec, Error> {
    let provider = match c.derivatives {
        Derivatives::Auto => Provider::Auto,
        Derivatives::Analytic => Provider::Analytic,
        Derivatives::Fd => Provider::FiniteDifference,
    };
    Ok(ModelSpec::resolve(&c.model)?.with_provider(provider))
}

fn alpha_of(model: &ModelSpec, c: &Common) -> Result<DVector<f64>, Error> {
    let alpha = match &c.alpha {
        Some(v) => DVector::from_column_slice(v),
        None => hopfnv::model::builtin::default_alpha(model.name())
            .filter(|_| hopfnv::model::builtin::by_name(&c.model).is_some())
            .ok_or_else(|| Error::Input("--alpha is required for file models".into()))?,
    };
    model.check_alpha(&alpha)?;
    Ok(alpha)
}

fn guess_of(model: &ModelSpec, c: &Common) -> Result<DVector<f64>, Error> {
    let g = match &c.guess {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(model.n()),
    };
    model.check_state(&g)?;
    Ok(g)
}

fn vector(v: &[f64], len: usize, what: &str) -> Result<DVector<f64>, Error> {
    if v.len() != len {
        return Err(Error::Input(format!(
            "{what} must have {len} components, got {}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(v))
}

#[derive(Serialize)]
struct Doc<'a, T: Serialize> {
    command: &'a str,
    model: &'a str,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(
    command: &str,
    model: &ModelSpec,
    body: T,
    out: Option<&Path>,
) -> Result<String, Error> {
    let text = to_json_pretty(&Doc {
        command,
        model: model.name(),
        body,
    })?;
    if let Some(path) = out {
        fs::write(path, format!("{text}\n"))
            .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(text)
}

fn load_solution(model: &ModelSpec, path: &Path) -> Result<HopfSolution, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(name) = value.get("model").and_then(|v| v.as_str()) {
        if name != model.name() {
            return Err(Error::Input(format!(
                "{} holds a solution for model '{name}', not '{}'",
                path.display(),
                model.name()
            )));
        }
    }
    let value = value.get("solution").cloned().unwrap_or(value);
    let sol: HopfSolution = serde_json::from_value(value)?;
    model.check_state(&sol.point.x_tilde)?;
    model.check_alpha(&sol.point.alpha)?;
    Ok(sol)
}

/// The solution from `--resume` after a residual check, or a fresh solve.
fn hopf_solution(model: &ModelSpec, args: &HopfArgs) -> Result<(HopfSolution, bool), Error> {
    if let Some(path) = &args.resume {
        let mut sol = load_solution(model, path)?;
        let f = residual(model, &sol.point, sol.sigma)?;
        if !sol.point.converged(&f) {
            return Err(Error::NonConvergence {
                what: "resumed solution check",
                iterations: 0,
                residual: f.amax(),
            });
        }
        sol.residual_norm = f.amax();
        return Ok((sol, true));
    }
    let c = &args.common;
    let alpha = alpha_of(model, c)?;
    let guess = guess_of(model, c)?;
    let sol = find_hopf(model, &alpha, args.sigma, args.free, Some(&guess), c.order)?;
    Ok((sol, false))
}

fn run_steady(args: &SteadyArgs) -> Result<String, CliError> {
    let c = &args.common;
    let model = model_of(c)?;
    let alpha = alpha_of(&model, c)?;
    let p = solve_steady(&model, &alpha, &guess_of(&model, c)?)?;
    Ok(emit("steady", &model, p, c.out.as_deref())?)
}

#[derive(Serialize)]
struct EigsBody {
    steady: SteadyPoint,
    roots: Vec<CharRoot>,
    leading: Option<CharRoot>,
    dropped: Vec<String>,
}

fn run_eigs(args: &SteadyArgs) -> Result<String, CliError> {
    let c = &args.common;
    let model = model_of(c)?;
    let alpha = alpha_of(&model, c)?;
    let steady = solve_steady(&model, &alpha, &guess_of(&model, c)?)?;
    let bundle = bundle_derivatives(&model, &steady.x_tilde, &alpha)?;
    let spectrum = char_roots(&steady, &bundle, c.order)?;
    let leading = leading_pair(&spectrum.roots).ok();
    let body = EigsBody {
        steady,
        roots: spectrum.roots,
        leading,
        dropped: spectrum.dropped,
    };
    Ok(emit("eigs", &model, body, c.out.as_deref())?)
}

#[derive(Serialize)]
struct HopfBody {
    #[serde(flatten)]
    solution: HopfSolution,
    resumed: bool,
}

fn run_find_hopf(args: &HopfArgs) -> Result<String, CliError> {
    let model = model_of(&args.common)?;
    let (solution, resumed) = hopf_solution(&model, args)?;
    Ok(emit(
        "find-hopf",
        &model,
        HopfBody { solution, resumed },
        args.common.out.as_deref(),
    )?)
}

fn active_or_all(model: &ModelSpec, active: &Option<Vec<usize>>) -> Vec<usize> {
    active
        .clone()
        .unwrap_or_else(|| (0..model.n_alpha()).collect())
}

#[derive(Serialize)]
struct NormalBody {
    solution: HopfSolution,
    normal: NormalVector,
    b_matrix: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn run_normal(args: &NormalArgs) -> Result<String, CliError> {
    let model = model_of(&args.hopf.common)?;
    let (solution, _) = hopf_solution(&model, &args.hopf)?;
    let b = assemble_b_at(&model, &solution.point, solution.sigma)?;
    let normal = normal_vector_on(&b, &active_or_all(&model, &args.active))?;
    let body = NormalBody {
        solution,
        normal,
        b_matrix: rows(&b.assembled),
    };
    Ok(emit(
        "normal-vector",
        &model,
        body,
        args.hopf.common.out.as_deref(),
    )?)
}

fn csv_table(model: &ModelSpec, points: &[HopfSolution]) -> String {
    let mut header = vec!["step".to_string()];
    header.extend(model.system().param_names());
    header.push("omega".into());
    let mut out = header.join(",");
    out.push('\n');
    for (k, p) in points.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(p.point.alpha.iter().map(|&v| format_f64(v)));
        row.push(format_f64(p.point.omega));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct ContinueBody<'a> {
    #[serde(flatten)]
    run: &'a ContinuationRun,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
}

#[derive(Serialize)]
struct StalledBody<'a> {
    error: String,
    partial: &'a [HopfSolution],
}

fn run_continue(args: &ContinueArgs) -> Result<String, CliError> {
    let common = &args.hopf.common;
    let model = model_of(common)?;
    let (start, _) = hopf_solution(&model, &args.hopf)?;
    let active = active_or_all(&model, &args.active);
    let direction = match &args.direction {
        Some(d) => vector(d, model.n_alpha(), "--direction")?,
        None => {
            let free = args.hopf.free.unwrap_or(model.n_alpha() - 1);
            let k = active
                .iter()
                .copied()
                .find(|&k| k != free)
                .unwrap_or(active[0]);
            let mut d = DVector::zeros(model.n_alpha());
            d[k] = 1.0;
            d
        }
    };
    let opts = ContinuationOptions::new(direction, args.steps, args.h)
        .with_active(active)
        .with_leading_check(args.check_leading);
    let run = match continue_manifold(&model, &start, &opts) {
        Ok(run) => run,
        Err(Error::Stalled { reason, partial }) => {
            let document = emit(
                "continue",
                &model,
                StalledBody {
                    error: reason.clone(),
                    partial: &partial,
                },
                None,
            )
            .ok();
            return Err(CliError {
                error: Error::Stalled { reason, partial },
                document,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let csv = args.csv.then(|| csv_table(&model, &run.points));
    if let (Some(table), Some(out)) = (&csv, &common.out) {
        let path = out.with_extension("csv");
        fs::write(&path, table)
            .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(emit(
        "continue",
        &model,
        ContinueBody { run: &run, csv },
        common.out.as_deref(),
    )?)
}

fn run_closest(args: &ClosestArgs) -> Result<String, CliError> {
    let model = model_of(&args.hopf.common)?;
    let nominal = vector(&args.nominal, model.n_alpha(), "--nominal")?;
    let (seed, _) = hopf_solution(&model, &args.hopf)?;
    let active = args.active.clone();
    let cp: ClosestPoint = closest_boundary_point(&model, &nominal, &seed, active.as_deref())?;
    Ok(emit(
        "closest-point",
        &model,
        cp,
        args.hopf.common.out.as_deref(),
    )?)
}

#[derive(Serialize)]
struct VerifyBody {
    solution: HopfSolution,
    report: VerificationReport,
}

fn run_verify(args: &HopfArgs) -> Result<String, CliError> {
    let model = model_of(&args.common)?;
    let (solution, _) = hopf_solution(&model, args)?;
    let report = full_report(&model, &solution)?;
    if !report.passed {
        for c in report.failing() {
            log::warn!(
                "check {} failed: measured {:e}, tolerance {:e}",
                c.name,
                c.measured,
                c.tolerance
            );
        }
    }
    Ok(emit(
        "verify",
        &model,
        VerifyBody { solution, report },
        args.common.out.as_deref(),
    )?)
}

/// Writes to stdout, ignoring a closed pipe.
fn print_document(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Steady(a) => run_steady(a),
        Command::Eigs(a) => run_eigs(a),
        Command::FindHopf(a) => run_find_hopf(a),
        Command::NormalVector(a) => run_normal(a),
        Command::Continue(a) => run_continue(a),
        Command::ClosestPoint(a) => run_closest(a),
        Command::Verify(a) => run_verify(a),
    };
    match result {
        Ok(text) => {
            print_document(&text);
            ExitCode::SUCCESS
        }
        Err(CliError { error, document }) => {
            if let Some(doc) = document {
                print_document(&doc);
            }
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
