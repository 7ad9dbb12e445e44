#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, Experiment};
use experiments::RunError;

#[derive(Parser)]
#[command(
    name = "hetero",
    about = "Leverage-map experiments: orbits, densities, Lyapunov scans, limit laws, spectra, extremes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write CSV tables, gnuplot scripts and a summary.
    Run(RunArgs),
    /// Check a configuration without running anything.
    Validate(ConfigArgs),
    /// Print version information.
    Version,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment kind, overriding `run.experiment`.
    #[arg(long, value_parser = parse_experiment)]
    experiment: Option<Experiment>,
    /// Override one setting, e.g. `--set noise.n=100` or `--set map.c=0.3`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    Experiment::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        format!("unknown experiment `{s}`; expected one of {}", names.join(", "))
    })
}

fn resolve(args: &ConfigArgs) -> Result<Config, RunError> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    if let Some(e) = args.experiment {
        overrides.push(format!("run.experiment=\"{e}\""));
    }
    Ok(Config::load(args.config.as_deref(), &overrides)?)
}

fn threads() -> Option<usize> {
    std::env::var("HETERO_THREADS").ok()?.trim().parse().ok().filter(|n| *n > 0)
}

fn run(args: &RunArgs) -> Result<(), RunError> {
    let cfg = resolve(&args.config)?;
    let report = match threads() {
        Some(n) => hetero_core::par::with_threads(n, || experiments::run(&cfg)),
        None => experiments::run(&cfg),
    }?;
    let written = output::write_report(&args.out, &cfg, &report)
        .map_err(|e| RunError::Invalid(format!("cannot write output: {e}")))?;
    for note in &report.notes {
        println!("{note}");
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn validate(args: &ConfigArgs) -> Result<(), RunError> {
    let cfg = resolve(args)?;
    cfg.validate()?;
    let map = cfg.leverage_map()?;
    let g = map.geometry;
    println!("configuration ok (sha256 {})", cfg.hash());
    println!("experiment {}, seed {}", cfg.run.experiment, cfg.run.seed);
    println!("critical point {}, peak {}, zero crossing {}", g.crit, g.delta, g.b);
    if !cfg.noise.deterministic {
        let spec = cfg.noise_spec(&map)?;
        let bound = hetero_core::noise::admissible_a(&map, spec.n, cfg.noise.mode)?;
        println!("noise n = {}, a = {} (admissible bound {bound})", spec.n, spec.a);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::Version => {
            println!("hetero {} (core {})", env!("CARGO_PKG_VERSION"), hetero_core::VERSION);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
