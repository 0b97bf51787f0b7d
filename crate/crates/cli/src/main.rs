//! `treegls`: GLS, effective sample sizes and model selection on phylogenies.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "treegls",
    version,
    about = "Regression and effective sample size under tree-structured dependence"
)]
struct Cli {
    /// Worker threads for parallel searches and simulations (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Effective sample size of the intercept, or of a lineage split.
    Ess(EssArgs),
    /// GLS fit of the first trait column on the others.
    Fit(FitArgs),
    /// Fit with a lineage effect on the clade below a node.
    Shift(ShiftArgs),
    /// Choose tips that maximize the scaled effective sample size.
    Design(DesignArgs),
    /// AIC, BIC and corrected BIC of the null model, and of a lineage model.
    Score(ScoreArgs),
    /// Run a convergence experiment from a config file, or draw one BM trait on a tree.
    Simulate(SimulateArgs),
    /// Intercept variance of replicated symmetric trees as the number of levels grows.
    Phase(PhaseArgs),
    /// Closed-form spectrum of a symmetric tree's covariance.
    Eigs(EigsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Model {
    Bm,
    Ou,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Policy {
    Mean,
    Max,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    #[value(name = "S")]
    S,
    #[value(name = "SB")]
    Sb,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Forward,
    Backward,
    Exhaustive,
    Random,
}

#[derive(Args, Debug)]
struct Lineage {
    /// Internal node label, or comma-separated tips whose common ancestor is the node.
    #[arg(long)]
    shift_node: Option<String>,
    #[arg(long, value_enum, default_value = "SB")]
    shift_mode: Mode,
}

#[derive(Args, Debug)]
struct EssArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    t_policy: Policy,
    #[command(flatten)]
    lineage: Lineage,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    traits: PathBuf,
    #[arg(long, value_enum, default_value = "bm")]
    model: Model,
    /// OU selection strength (required with `--model ou`).
    #[arg(long)]
    alpha: Option<f64>,
    /// Stationary OU root instead of a fixed root state.
    #[arg(long)]
    stationary: bool,
    /// Also write the covariance matrix used by the fit to this CSV file.
    #[arg(long)]
    dump_cov: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct ShiftArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    traits: PathBuf,
    #[arg(long, required = true)]
    shift_node: String,
    #[arg(long, value_enum, default_value = "SB")]
    shift_mode: Mode,
    #[arg(long, value_enum, default_value = "mean")]
    t_policy: Policy,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long)]
    tree: PathBuf,
    /// Number of tips to keep (the largest size for the CSV band table).
    #[arg(long)]
    size: usize,
    #[arg(long, value_enum, default_value = "forward")]
    method: Method,
    /// Random subsets per size.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    traits: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    t_policy: Policy,
    #[command(flatten)]
    lineage: Lineage,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Experiment config (`key = value` lines).
    config: Option<PathBuf>,
    /// Draw one Brownian trait on this tree instead of running an experiment.
    #[arg(long, conflicts_with = "config")]
    tree: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    m_max: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct EigsArgs {
    /// Descendants per node at each level, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,
    /// Edge length below each level, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let err =
                commands::CliError::usage(msg.trim().lines().next().unwrap_or("invalid arguments"));
            eprintln!("{}", err.to_json());
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::run(cli.command)),
            Err(e) => Err(commands::CliError::usage(&format!(
                "cannot start {n} threads: {e}"
            ))),
        },
        None => commands::run(cli.command),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            if !out.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
