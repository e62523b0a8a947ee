//! `hilfer-kit`: special functions, fractional operators, Gronwall bounds,
//! impulsive solves and stability certificates from JSON configs to CSV.
//!
//! Exit status: 0 success, 1 usage, 2 invalid input, 3 non-convergence,
//! 4 failed certificate or dominance check.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hilfer_core::gronwall::BoundForm;
use hilfer_core::Error;

use commands::{Operator, Outcome, Perturbation, Psi, SolveSettings, SpecialFn, Status};
use output::RunKey;

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "hilfer-kit", version, about = "Numerics for impulsive Hilfer fractional evolution problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gamma, Mittag-Leffler and Wright function values.
    Specfun {
        #[command(subcommand)]
        command: SpecfunCommand,
    },
    /// Fractional integral or Hilfer derivative of a sampled function.
    Ops(OpsArgs),
    /// Gronwall bound against the extremal trajectory.
    Bound(BoundArgs),
    /// Picard solve of the impulsive problem.
    Solve(SolveArgs),
    /// Stability certificate for a perturbed solve.
    Stability(StabilityArgs),
}

#[derive(Debug, Subcommand)]
enum SpecfunCommand {
    Eval {
        #[arg(long = "fn", value_enum)]
        func: SpecialFn,
        /// Comma-separated arguments: gamma x | mlf alpha,beta,z | wright alpha,theta | moment alpha,dbar.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        args: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct OpsArgs {
    #[arg(long, value_enum)]
    op: Operator,
    #[arg(long)]
    alpha: f64,
    /// Type parameter of the Hilfer derivative.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, value_enum, default_value = "identity")]
    psi: Psi,
    /// Regular factor f(t) in the expression language.
    #[arg(long = "fn")]
    function: String,
    /// Exponent of the (Psi(t) - Psi(a))^mu factor.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1024)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormArg {
    Published,
    Absorbed,
}

impl From<FormArg> for BoundForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Published => BoundForm::Published,
            FormArg::Absorbed => BoundForm::Absorbed,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true)]
struct BoundArgs {
    #[command(subcommand)]
    command: Option<BoundCommand>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report a single time instead of every grid node.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 1024)]
    grid: usize,
    #[arg(long, value_enum, default_value = "published")]
    form: FormArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum BoundCommand {
    /// Dominance check on seeded random instances.
    Verify {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        #[arg(long, value_enum, default_value = "published")]
        form: FormArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long)]
    config: PathBuf,
    /// Cells per window.
    #[arg(long, default_value_t = 512)]
    grid: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl SolverArgs {
    fn settings(&self) -> SolveSettings {
        SolveSettings { grid: self.grid, tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// `eps=<size>,phi=one|t|exp[,imp=<size>]`.
    #[arg(long)]
    perturb: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The argument list minus the output path, which does not affect results.
fn command_line(argv: &[String]) -> String {
    let mut kept = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.as_str());
        }
    }
    kept.join(" ")
}

fn run(cli: Cli, command: String) -> anyhow::Result<(Outcome, Option<PathBuf>, RunKey)> {
    let key = |config: Option<&PathBuf>, seed: u64| RunKey { command: command.clone(), config: config.cloned(), seed };
    Ok(match cli.command {
        Command::Specfun { command: SpecfunCommand::Eval { func, args, out } } => {
            (commands::specfun_eval(func, &args)?, out, key(None, 0))
        }
        Command::Ops(a) => {
            let req = commands::OpsRequest {
                op: a.op,
                alpha: a.alpha,
                beta: a.beta,
                psi: a.psi,
                function: &a.function,
                mu: a.mu,
                start: a.a,
                end: a.horizon,
                grid: a.grid,
            };
            (commands::ops(&req)?, a.out, key(None, 0))
        }
        Command::Bound(BoundArgs { command: Some(BoundCommand::Verify { seed, instances, grid, form, out }), .. }) => {
            (commands::bound_verify(seed, instances, grid, form.into())?, out, key(None, seed))
        }
        Command::Bound(a) => {
            let config = a.config.ok_or_else(|| UsageError("bound needs --config <file> or the verify subcommand".into()))?;
            (commands::bound(&config, a.t, a.grid, a.form.into())?, a.out, key(Some(&config), 0))
        }
        Command::Solve(a) => {
            let outcome = commands::solve(&a.solver.config, &a.solver.settings())?;
            (outcome, a.out, key(Some(&a.solver.config), 0))
        }
        Command::Stability(a) => {
            let p = Perturbation::parse(&a.perturb).map_err(|e| UsageError(format!("--perturb: {e:#}")))?;
            let outcome = commands::stability(&a.solver.config, p, &a.solver.settings())?;
            (outcome, a.out, key(Some(&a.solver.config), 0))
        }
    })
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Convergence(_) | Error::PointwiseImpulse(_)) => EXIT_NONCONVERGENCE,
        _ => EXIT_INVALID,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("HILFER_KIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("HILFER_KIT_THREADS = {raw:?} must be a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let (outcome, out, key) = match run(cli, command_line(&argv)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Err(e) = output::emit(&outcome.table, out.as_deref(), &key) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INVALID);
    }
    match outcome.status {
        Status::Done => ExitCode::SUCCESS,
        Status::NotConverged => {
            eprintln!("error: did not converge");
            ExitCode::from(EXIT_NONCONVERGENCE)
        }
        Status::CertificateFailed => {
            eprintln!("error: check failed (see the margin column)");
            ExitCode::from(EXIT_CERTIFICATE)
        }
    }
}
