//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sassc_core::{Algorithm, SolverParams};

use crate::commands;
use crate::error::{exit, CliError, CliResult};

/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "SASSC_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "sassc",
    version,
    about = "Stochastic state-constrained control: solve, certify, study"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a canonical instance file from a template or an existing spec.
    Generate(GenerateArgs),
    /// Solve an instance; writes primal.json, dual.json and report.json.
    Solve(Common),
    /// Check a primal/dual pair against the optimality system.
    Certify(CertifyArgs),
    /// Slack-penalty continuation towards the hard-constrained problem.
    Homotopy(HomotopyArgs),
    /// Compare the first-order solver with the barrier reference.
    CompareOracle(Common),
    /// Manufactured-solution convergence study of the PDE discretization.
    Mms(MmsArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Instance JSON file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// KKT tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap (outer iterations for ph; ignored by barrier).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the scenario seed of the instance.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "default")]
    template: Template,
    #[arg(long)]
    n1d: Option<usize>,
    /// Scenario count.
    #[arg(long)]
    scenarios: Option<usize>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    primal: PathBuf,
    #[arg(long)]
    dual: PathBuf,
}

#[derive(Args, Debug)]
struct HomotopyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated slack weights.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000,10000")]
    schedule: Vec<f64>,
}

#[derive(Args, Debug)]
struct MmsArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated interior node counts per dimension.
    #[arg(long, value_delimiter = ',', default_value = "7,15,31")]
    levels: Vec<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmArg {
    Pdhg,
    Ph,
    Barrier,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Pdhg => Algorithm::Pdhg,
            AlgorithmArg::Ph => Algorithm::ProgressiveHedging,
            AlgorithmArg::Barrier => Algorithm::Barrier,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// 16 x 16 nodes, 8 scenarios, binding obstacle.
    Default,
    /// 4 x 4 nodes, 3 scenarios.
    Tiny,
}

/// Resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub instance: Option<PathBuf>,
    pub params: SolverParams,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// `--tol` as given, for commands whose default differs from the solver's.
    pub tol: Option<f64>,
    /// Worker cap from the environment. The solvers are serial, so this is
    /// validated and recorded only.
    pub threads: Option<usize>,
}

impl RunConfig {
    fn new(command: &'static str, c: &Common, threads: Option<usize>) -> CliResult<Self> {
        let mut params = SolverParams::default();
        if let Some(a) = c.algorithm {
            params.algorithm = a.into();
        }
        if let Some(t) = c.tol {
            params.kkt_tolerance = t;
        }
        if let Some(m) = c.max_iters {
            match params.algorithm {
                Algorithm::ProgressiveHedging => params.ph_max_outer = m,
                _ => params.max_iters = m,
            }
        }
        params.validate()?;
        Ok(Self {
            command,
            instance: c.instance.clone(),
            params,
            out: c.out.clone(),
            seed: c.seed,
            tol: c.tol,
            threads,
        })
    }

    pub fn instance_path(&self) -> CliResult<&PathBuf> {
        self.instance
            .as_ref()
            .ok_or_else(|| CliError::Input(format!("{} needs --instance", self.command)))
    }
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Input(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
        Err(e) => Err(CliError::Input(format!("{THREADS_VAR}: {e}"))),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::INPUT
            } else {
                exit::OK
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let threads = threads_from_env()?;
    match cli.command {
        Command::Generate(a) => {
            let cfg = RunConfig::new("generate", &a.common, threads)?;
            commands::generate(&cfg, a.template, a.n1d, a.scenarios)
        }
        Command::Solve(c) => commands::solve(&RunConfig::new("solve", &c, threads)?),
        Command::Certify(a) => commands::certify(
            &RunConfig::new("certify", &a.common, threads)?,
            &a.primal,
            &a.dual,
        ),
        Command::Homotopy(a) => commands::homotopy(
            &RunConfig::new("homotopy", &a.common, threads)?,
            &a.schedule,
        ),
        Command::CompareOracle(c) => {
            commands::compare_oracle(&RunConfig::new("compare-oracle", &c, threads)?)
        }
        Command::Mms(a) => commands::mms(&RunConfig::new("mms", &a.common, threads)?, &a.levels),
    }
}
