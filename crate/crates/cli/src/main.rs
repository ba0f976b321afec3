use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinlim_core::config::parse_config;
use kinlim_core::experiments;
use kinlim_core::{Error, RunConfig};
use log::info;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "kinlim", version, about = "Kinetic infinitesimal model and its macroscopic limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the kinetic model and write moments, diagnostics and the final density.
    SimulateSim(Common),
    /// Run the macroscopic system.
    SimulateKbm(Common),
    /// Run both models at one γ and record their distance.
    Compare(Common),
    /// Compare at every γ of `gamma_list` and fit power laws.
    GammaSweep(Common),
    /// Seeded property suite for the reproduction operator and Wasserstein code.
    CheckOperator(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing. Without it only the summary is printed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write snapshots as CSV instead of binary.
    #[arg(long)]
    text: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

enum Failure {
    Config(String),
    Runtime(String),
    Property,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(c: &Common) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.text |= c.text;
    Ok(cfg)
}

fn print<T: Serialize>(v: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    let c = match &command {
        Command::SimulateSim(c)
        | Command::SimulateKbm(c)
        | Command::Compare(c)
        | Command::GammaSweep(c)
        | Command::CheckOperator(c) => c,
    };
    if c.jobs == 0 {
        return Err(Failure::Config("--jobs must be at least 1".into()));
    }
    let cfg = load(c)?;
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    info!("dt = {}, snapshot every {} steps", cfg.dt(), cfg.snapshot_every());
    let out = c.out.as_deref();
    pool.install(|| match &command {
        Command::SimulateSim(_) => print(&experiments::simulate_sim(&cfg, out)?),
        Command::SimulateKbm(_) => print(&experiments::simulate_kbm(&cfg, out)?),
        Command::Compare(_) => print(&experiments::compare(&cfg, out)?.errors),
        Command::GammaSweep(_) => print(&experiments::gamma_sweep(&cfg, out)?),
        Command::CheckOperator(_) => {
            let report = experiments::check_operator(&cfg, out)?;
            for p in &report.properties {
                let mark = if p.passed { "ok  " } else { "FAIL" };
                println!("{mark} {:<30} {:.3e} (limit {:.1e})", p.name, p.value, p.threshold);
            }
            if report.all_passed {
                Ok(())
            } else {
                Err(Failure::Property)
            }
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Property) => {
            eprintln!("property suite failed");
            ExitCode::from(3)
        }
    }
}
