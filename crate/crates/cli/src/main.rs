use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mixedlattice_core::config::ExperimentConfig;
use mixedlattice_core::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "mixedlattice",
    version,
    about = "Floquet bands and resonance-induced hoppings of a modulated optical lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Large lattice (1079 cells) and long run (1500 periods).
    #[arg(long, global = true)]
    full: bool,

    /// Monte-Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stroboscopic portrait, orbit classification and island area.
    PhasePortrait,
    /// Effective regular band on the fine quasi-momentum grid.
    Band,
    /// Hoppings from the fine band.
    Hoppings,
    /// Wave-packet spreading from the central Wannier state.
    Dynamics {
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Avoided crossings of the fine band and the asymptotic hopping law.
    Resonances,
    /// Fluctuation statistics of `n |t_n|` pooled over the parameter sweep.
    Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Effective,
    Both,
}

fn build_config(cli: &Cli) -> mixedlattice_core::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if cli.full {
        config = config.full();
    }
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        config.apply_text(&text)?;
    }
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("--set expects key=value, got {kv:?}")))?;
        config.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::InvalidParams(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|config| {
        let ctx = commands::Context::new(config)?;
        let r = match cli.command {
            Command::PhasePortrait => ctx.phase_portrait(),
            Command::Band => ctx.band(),
            Command::Hoppings => ctx.hoppings(),
            Command::Dynamics { mode } => ctx.dynamics(mode),
            Command::Resonances => ctx.resonances(),
            Command::Stats => ctx.stats(),
        };
        ctx.log_cache();
        r
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
