use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kahlerlab::{plot_data, run, CliError, ExperimentConfig, Kind};
use serde_json::json;

/// Environment variable overriding the output directory (below `--out`).
const OUT_ENV: &str = "KAHLERLAB_OUT";

#[derive(Parser)]
#[command(name = "kahlerlab", version, about = "Monge–Ampère and positivity experiments on flat complex tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one complex Monge–Ampère equation.
    Solve(RunArgs),
    /// Run every inequality check once.
    Verify(RunArgs),
    /// Solve a concentrating family and estimate Lelong numbers.
    Concentrate(RunArgs),
    /// Run the inequality checks on many random instances.
    Sweep(RunArgs),
    /// Search the Gauduchon-cone dual for a refuting witness.
    Probe(RunArgs),
    /// Evaluate the Seshadri-type infimum over subvariety records.
    Seshadri(RunArgs),
    /// Print the plot table (CSV) for a results directory.
    PlotData { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
}

fn execute(kind: Kind, args: &RunArgs) -> Result<i32, CliError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.experiment.kind() != kind {
        return Err(CliError::Config(format!(
            "config describes a {:?} experiment, not {kind:?}",
            config.experiment.kind()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(tol) = args.tol {
        config.tolerance = Some(tol);
    }
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| config.output_dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| PathBuf::from("results").join(format!("{kind:?}").to_lowercase()));
    let outcome = run(&config, &base, &out)?;
    println!("{}", serde_json::to_string(&outcome)?);
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Solve(a) => (Kind::Solve, a),
        Command::Verify(a) => (Kind::Verify, a),
        Command::Concentrate(a) => (Kind::Concentrate, a),
        Command::Sweep(a) => (Kind::Sweep, a),
        Command::Probe(a) => (Kind::Probe, a),
        Command::Seshadri(a) => (Kind::Seshadri, a),
        Command::PlotData { dir } => {
            return match plot_data(dir) {
                Ok(table) => {
                    print!("{table}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    };
    match execute(kind, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    println!("{}", json!({"exit_code": e.exit_code(), "error": e.to_string()}));
    ExitCode::from(e.exit_code() as u8)
}
