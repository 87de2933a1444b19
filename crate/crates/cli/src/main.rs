use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rydberg_rap::protocols::FidelityConvention;
use rydberg_rap_cli::{execute, CliError, Experiment, RunConfig};

#[derive(Parser)]
#[command(name = "rapsim", version, about = "Sequential RAP entanglement protocols for Rydberg arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol and record populations over time.
    Simulate(Common),
    /// Dissipation-free fidelity against the interaction strength.
    Saturation(Common),
    /// Fidelity against total protocol duration.
    Timescan(Common),
    /// Fidelity over a grid of amplitude scalings.
    Robustness(Common),
    /// Fidelity statistics under random atom displacements.
    Montecarlo(Common),
    /// Nelder-Mead search over pulse parameters.
    Optimize(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_convention)]
    convention: Option<FidelityConvention>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "RAPSIM_THREADS")]
    threads: Option<usize>,
}

fn parse_convention(s: &str) -> Result<FidelityConvention, String> {
    s.parse().map_err(|e: rydberg_rap::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (experiment, args) = match cli.command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Saturation(a) => (Experiment::Saturation, a),
        Command::Timescan(a) => (Experiment::Timescan, a),
        Command::Robustness(a) => (Experiment::Robustness, a),
        Command::Montecarlo(a) => (Experiment::Montecarlo, a),
        Command::Optimize(a) => (Experiment::Optimize, a),
    };
    let mut config = RunConfig::load(&args.config)?;
    match config.experiment {
        Some(e) if e != experiment => {
            return Err(CliError::Config(format!(
                "experiment: config says `{}` but the subcommand is `{}`",
                e.as_str(),
                experiment.as_str()
            )))
        }
        _ => config.experiment = Some(experiment),
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    if let Some(c) = args.convention {
        config.convention = c;
    }
    if args.out.is_some() {
        config.output_dir = args.out;
    }
    let out = config
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Config("output_dir: missing (set it in the config or pass --out)".into()))?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("threads: must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let report = execute(&config, &out)?;
    println!(
        "{} finished in {:.2}s; wrote {} to {}",
        experiment.as_str(),
        report.wall_time_s,
        report.files.join(", "),
        report.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rapsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
