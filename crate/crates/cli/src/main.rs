//! `flatcheck`: decide whether a control-affine model is static-feedback
//! equivalent to one of the flat triangular forms, verify candidate flat
//! outputs and transformations, and emit example models and trajectories.
//!
//! Exit codes: `0` for a TF0/TF1 verdict or a successful verification, `1`
//! when a necessary condition or a verification fails, `2` when the run is
//! inconclusive, `3` for input errors.

mod mapfile;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flatcheck_core::{
    check_auto, check_tf0, check_tf1, crane_model, generate_tf, integrate_rk4, scramble,
    verify_flat_output, verify_transformation, CheckConfig, CheckError, CheckReport, Expr,
    RankTable, StructureIndices, SystemModel, TransformMaps, Verdict,
};

const EXIT_OK: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "flatcheck",
    version,
    about = "Static-feedback equivalence to flat triangular forms",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model for equivalence to the triangular forms.
    Check(CheckArgs),
    /// Verify a candidate flat output against a model.
    VerifyOutput(VerifyOutputArgs),
    /// Verify a candidate state/input transformation against a model.
    VerifyTransformation(VerifyTransformationArgs),
    /// Emit the built-in crane or randomly generated triangular models.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Form {
    /// Try the shift-0 form first, then the shift-1 form.
    Auto,
    /// Shift-0 triangular form only.
    Tf0,
    /// Shift-1 triangular form only.
    Tf1,
}

#[derive(clap::Args)]
struct CommonOpts {
    /// Sample points for the numeric rank protocol.
    #[arg(long, default_value_t = 25)]
    points: usize,
    /// Relative tolerance for ranks and residuals.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for sample drawing; falls back to $FLATCHECK_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the machine-readable report as JSON to this path.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CheckArgs {
    /// Model file (see docs/dsl.md for the format).
    model: PathBuf,
    /// Which triangular form to test.
    #[arg(long, value_enum, default_value_t = Form::Auto)]
    form: Form,
    /// Evaluate every condition instead of stopping at the first failure.
    #[arg(long)]
    all_conditions: bool,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(clap::Args)]
struct VerifyOutputArgs {
    /// Model file.
    model: PathBuf,
    /// Candidate output: one expression per line in the model's states.
    #[arg(long, value_name = "PATH")]
    phi_file: PathBuf,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(clap::Args)]
struct VerifyTransformationArgs {
    /// Model file.
    model: PathBuf,
    /// Transformation file with [indices], [phi], [alpha], [beta] sections.
    #[arg(long, value_name = "PATH")]
    map_file: PathBuf,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[command(subcommand)]
    kind: GenerateKind,
}

#[derive(Subcommand)]
enum GenerateKind {
    /// The built-in gantry-crane model.
    Crane(GenOut),
    /// A random shift-0 triangular instance.
    Tf0(GenTf),
    /// A random shift-1 triangular instance.
    Tf1(GenTf),
}

#[derive(clap::Args)]
struct GenOut {
    /// Output path for the model file (stdout when omitted).
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Also integrate a zero-input trajectory and write it as CSV here.
    #[arg(long, value_name = "PATH")]
    trajectory: Option<PathBuf>,
    /// Trajectory horizon.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Integrator step size.
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Initial state, comma-separated; domain midpoints when omitted.
    #[arg(long, value_name = "X1,..,XN")]
    x0: Option<String>,
}

#[derive(clap::Args)]
struct GenTf {
    /// Number of secondary inputs; the model has m+1 inputs.
    #[arg(long)]
    m: usize,
    /// Depth of the bottom chain block.
    #[arg(long)]
    k_zeta: usize,
    /// Depth of the coupled chain block.
    #[arg(long)]
    k_chi: usize,
    /// Top integrator chain lengths: m+1 comma-separated entries.
    #[arg(long, value_name = "L1,..,LM1")]
    k_xi: String,
    /// Seed for the random drift entries; falls back to $FLATCHECK_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Terms per random drift entry.
    #[arg(long, default_value_t = 2)]
    complexity: usize,
    /// Hide the structure behind a random diffeomorphism and feedback.
    #[arg(long)]
    scramble: bool,
    #[command(flatten)]
    out: GenOut,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests leave through stdout with success;
            // everything else is an input error.
            let code = if err.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Check(args) => run_check(&args),
        Command::VerifyOutput(args) => run_verify_output(&args),
        Command::VerifyTransformation(args) => run_verify_transformation(&args),
        Command::Generate(args) => run_generate(&args),
    };
    ExitCode::from(code)
}

/// Resolve the sampling seed: explicit flag, then $FLATCHECK_SEED, then the
/// given default.
fn resolve_seed(flag: Option<u64>, default: u64) -> Result<u64, String> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("FLATCHECK_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("FLATCHECK_SEED is not an unsigned integer: {v:?}")),
        Err(std::env::VarError::NotPresent) => Ok(default),
        Err(err) => Err(format!("FLATCHECK_SEED: {err}")),
    }
}

fn input_error(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_INPUT
}

fn build_cfg(common: &CommonOpts) -> Result<CheckConfig, u8> {
    let seed = resolve_seed(common.seed, 42).map_err(input_error)?;
    let cfg = CheckConfig {
        n_points: common.points,
        tol_rel: common.tol,
        seed,
        max_resample: 50,
    };
    cfg.validate().map_err(input_error)?;
    Ok(cfg)
}

fn load_model_file(path: &Path) -> Result<SystemModel, u8> {
    let text = fs::read_to_string(path)
        .map_err(|err| input_error(format_args!("{}: {err}", path.display())))?;
    SystemModel::load(&text)
        .map_err(|err| input_error(format_args!("{}: {err}", path.display())))
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, report: &T) -> Result<(), u8> {
    let Some(path) = path else { return Ok(()) };
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|err| input_error(format_args!("serializing report: {err}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|err| input_error(format_args!("{}: {err}", path.display())))
}

fn verdict_exit(verdict: &Verdict) -> u8 {
    match verdict {
        Verdict::Tf0 | Verdict::Tf1 => EXIT_OK,
        Verdict::Fail(_) => EXIT_FAIL,
        Verdict::Inconclusive(_) => EXIT_INCONCLUSIVE,
    }
}

/// A check that never leaves the involutive regime has no obstruction block:
/// the model is static feedback linearizable and the triangular dichotomy
/// does not apply. Report that as an inconclusive verdict with the ranks
/// seen so far; the remaining indices stay at zero (undetermined).
fn linearizable_report(model: &SystemModel, ranks: Vec<usize>) -> CheckReport {
    CheckReport {
        verdict: Verdict::Inconclusive("StaticFeedbackLinearizable".to_string()),
        indices: StructureIndices {
            m: model.num_inputs().saturating_sub(1),
            s: 0,
            k_zeta: 0,
            k_chi: 0,
            k_xi: Vec::new(),
        },
        ranks: RankTable {
            d: ranks,
            ..RankTable::default()
        },
        conditions: Vec::new(),
        flat_output: None,
    }
}

/// Exit code for check errors that are not handled specially by the caller.
fn check_error_exit(err: &CheckError) -> u8 {
    match err {
        // Numeric evaluation could not stabilize: the protocol cannot decide.
        CheckError::Geom(_) | CheckError::Subdist(_) => {
            eprintln!("inconclusive: {err}");
            EXIT_INCONCLUSIVE
        }
        _ => input_error(err),
    }
}

fn run_check(args: &CheckArgs) -> u8 {
    let model = match load_model_file(&args.model) {
        Ok(model) => model,
        Err(code) => return code,
    };
    let cfg = match build_cfg(&args.common) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let result = match args.form {
        Form::Auto => check_auto(&model, &cfg, args.all_conditions),
        Form::Tf0 => check_tf0(&model, &cfg, args.all_conditions),
        Form::Tf1 => check_tf1(&model, &cfg, args.all_conditions),
    };
    let report = match result {
        Ok(report) => report,
        Err(CheckError::NeverNonInvolutive { ranks }) => linearizable_report(&model, ranks),
        Err(err) => return check_error_exit(&err),
    };
    println!(
        "model: {} ({} states, {} inputs)",
        model.name,
        model.n(),
        model.num_inputs()
    );
    print!("{report}");
    if let Err(code) = write_json(&args.common.json, &report) {
        return code;
    }
    verdict_exit(&report.verdict)
}

/// Parse expressions in the model's state scope, one per non-comment line.
fn parse_scoped_lines(model: &SystemModel, text: &str) -> Result<Vec<Expr>, String> {
    let scope = model.state_names();
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let expr = model
            .dag
            .parse_closed(line, &scope)
            .map_err(|err| format!("line {}: {err}", lineno + 1))?;
        out.push(expr);
    }
    Ok(out)
}

fn run_verify_output(args: &VerifyOutputArgs) -> u8 {
    let model = match load_model_file(&args.model) {
        Ok(model) => model,
        Err(code) => return code,
    };
    let cfg = match build_cfg(&args.common) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let text = match fs::read_to_string(&args.phi_file) {
        Ok(text) => text,
        Err(err) => return input_error(format_args!("{}: {err}", args.phi_file.display())),
    };
    let phi = match parse_scoped_lines(&model, &text) {
        Ok(phi) => phi,
        Err(err) => return input_error(format_args!("{}: {err}", args.phi_file.display())),
    };
    match verify_flat_output(&model, &phi, &cfg) {
        Ok(status) => {
            println!(
                "flat output: {} (basis residual {:.3e})",
                status.status, status.basis_residual
            );
            if let Err(code) = write_json(&args.common.json, &status) {
                return code;
            }
            if status.verified() {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Err(CheckError::StructureNotEstablished(verdict)) => {
            eprintln!("structure check returned {verdict}; cannot verify a flat output");
            if verdict.starts_with("Fail") {
                EXIT_FAIL
            } else {
                EXIT_INCONCLUSIVE
            }
        }
        Err(CheckError::NeverNonInvolutive { .. }) => {
            eprintln!("inconclusive: the model is static feedback linearizable");
            EXIT_INCONCLUSIVE
        }
        Err(err) => check_error_exit(&err),
    }
}

fn run_verify_transformation(args: &VerifyTransformationArgs) -> u8 {
    let model = match load_model_file(&args.model) {
        Ok(model) => model,
        Err(code) => return code,
    };
    let cfg = match build_cfg(&args.common) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    let text = match fs::read_to_string(&args.map_file) {
        Ok(text) => text,
        Err(err) => return input_error(format_args!("{}: {err}", args.map_file.display())),
    };
    let mf = match mapfile::parse_map_file(&text) {
        Ok(mf) => mf,
        Err(err) => return input_error(format_args!("{}: {err}", args.map_file.display())),
    };
    let scope = model.state_names();
    let parse_all = |entries: &[String]| -> Result<Vec<Expr>, String> {
        entries
            .iter()
            .map(|src| {
                model
                    .dag
                    .parse_closed(src, &scope)
                    .map_err(|err| format!("{src:?}: {err}"))
            })
            .collect()
    };
    let maps = {
        let phi = parse_all(&mf.phi);
        let alpha = parse_all(&mf.alpha);
        let beta: Result<Vec<Vec<Expr>>, String> =
            mf.beta.iter().map(|row| parse_all(row)).collect();
        match (phi, alpha, beta) {
            (Ok(phi), Ok(alpha), Ok(beta)) => TransformMaps { phi, alpha, beta },
            (Err(err), ..) | (_, Err(err), _) | (.., Err(err)) => {
                return input_error(format_args!("{}: {err}", args.map_file.display()))
            }
        }
    };
    match verify_transformation(&model, &maps, &mf.indices, &cfg, args.common.tol) {
        Ok(report) => {
            print!("{report}");
            if let Err(code) = write_json(&args.common.json, &report) {
                return code;
            }
            if report.verified {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        // Singular supplied maps cannot be a valid transformation.
        Err(err @ (CheckError::SingularJacobian | CheckError::SingularBeta)) => {
            eprintln!("verification failed: {err}");
            EXIT_FAIL
        }
        Err(err) => check_error_exit(&err),
    }
}

fn parse_x0(spec: &str, n: usize) -> Result<Vec<f64>, String> {
    let vals: Result<Vec<f64>, _> = spec.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|err| format!("--x0: {err}"))?;
    if vals.len() != n {
        return Err(format!("--x0 has {} entries; the model has {n} states", vals.len()));
    }
    Ok(vals)
}

fn parse_k_xi(spec: &str) -> Result<Vec<usize>, String> {
    spec.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("--k-xi: not an unsigned integer: {v:?}"))
        })
        .collect()
}

fn emit_model(model: &SystemModel, out: &GenOut) -> u8 {
    let text = match model.save() {
        Ok(text) => text,
        Err(err) => return input_error(err),
    };
    match &out.output {
        Some(path) => {
            if let Err(err) = fs::write(path, text) {
                return input_error(format_args!("{}: {err}", path.display()));
            }
        }
        None => print!("{text}"),
    }

    if let Some(traj_path) = &out.trajectory {
        if !(out.step > 0.0) || !out.horizon.is_finite() || out.horizon < 0.0 {
            return input_error("--step must be positive and --horizon nonnegative");
        }
        let x0 = match &out.x0 {
            Some(spec) => match parse_x0(spec, model.n()) {
                Ok(x0) => x0,
                Err(err) => return input_error(err),
            },
            None => model.domain.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
        };
        let zero = |_: f64| vec![0.0; model.num_inputs()];
        let traj = match integrate_rk4(model, &x0, &zero, out.horizon, out.step) {
            Ok(traj) => traj,
            Err(err) => return input_error(err),
        };
        if let Err(err) = fs::write(traj_path, traj.to_csv()) {
            return input_error(format_args!("{}: {err}", traj_path.display()));
        }
    }
    EXIT_OK
}

fn run_generate(args: &GenerateArgs) -> u8 {
    match &args.kind {
        GenerateKind::Crane(out) => emit_model(&crane_model(), out),
        GenerateKind::Tf0(tf) => generate_instance(tf, 0),
        GenerateKind::Tf1(tf) => generate_instance(tf, 1),
    }
}

fn generate_instance(tf: &GenTf, s: usize) -> u8 {
    let seed = match resolve_seed(tf.seed, 0) {
        Ok(seed) => seed,
        Err(err) => return input_error(err),
    };
    let k_xi = match parse_k_xi(&tf.k_xi) {
        Ok(k_xi) => k_xi,
        Err(err) => return input_error(err),
    };
    let indices = StructureIndices {
        m: tf.m,
        s,
        k_zeta: tf.k_zeta,
        k_chi: tf.k_chi,
        k_xi,
    };
    let model = match generate_tf(&indices, seed, tf.complexity) {
        Ok(model) => model,
        Err(err) => return input_error(err),
    };
    if tf.scramble {
        match scramble(&model, seed.wrapping_add(1)) {
            Ok(scrambled) => emit_model(&scrambled.model, &tf.out),
            Err(err) => input_error(err),
        }
    } else {
        emit_model(&model, &tf.out)
    }
}
