use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use hyperbranch_cli::commands::{cmd_cache, cmd_oracle, cmd_post, cmd_run, cmd_sweep};
use hyperbranch_cli::config::BasisSpec;
use hyperbranch_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "hyperbranch", version, about = "AB2 polymerization population balance solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker count for `sweep`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Basis preset, overriding the config (tiny, reduced, production, production-integer).
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build or reuse the operator cache.
    Cache,
    /// Integrate to the requested conversions.
    Run,
    /// Extract distributions from a finished run.
    Post,
    /// Run the lattice reference and compare with solver tables.
    Oracle,
    /// Run and post-process every rho x lambda pair.
    Sweep,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(p) = &cli.preset {
        cfg.basis = BasisSpec::preset(p);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Cache => {
            let hit = cmd_cache(&cfg)?;
            println!("{}", if hit { "cache hit" } else { "cache built" });
        }
        Command::Run => {
            let traj = cmd_run(&cfg)?;
            println!("{} steps written to {}", traj.snapshots.len(), cfg.output_dir.display());
        }
        Command::Post => {
            for p in cmd_post(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Oracle => {
            for p in cmd_oracle(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Sweep => {
            let mut first_err = None;
            for (dir, r) in cmd_sweep(&cfg, cli.jobs) {
                match r {
                    Ok(()) => println!("ok     {}", dir.display()),
                    Err(e) => {
                        println!("failed {}: {e}", dir.display());
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
