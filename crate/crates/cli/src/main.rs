use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use netloss_cli::config::Axis;
use netloss_cli::{execute, Command, Options};

#[derive(Parser)]
#[command(name = "netloss", version, about = "Loss bounds, gain design and simulation for control over lossy shared channels")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print critical loss probabilities.
    Bounds(Common),
    /// Design gains and certify the closed loop.
    Design(Common),
    /// Certify the closed loop with supplied gains.
    Verify(Common),
    /// Sweep a loss probability and report feasibility, rho and the minimal norm.
    Sweep(Common),
    /// Monte Carlo simulation of the closed loop.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// Problem description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// start:stop:step
    #[arg(long)]
    grid: Option<String>,
    /// alpha1 or alpha2
    #[arg(long)]
    axis: Option<String>,
    /// none | zoh | leaky | leaky:<beta>
    #[arg(long)]
    decoder: Option<String>,
    /// Gains file (JSON) for verify and simulate.
    #[arg(long)]
    gains: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("NETLOSS_LOG")).init();
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Bounds(c) => (Command::Bounds, c),
        Cmd::Design(c) => (Command::Design, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
    };
    let axis = match common.axis.as_deref().map(str::parse::<Axis>).transpose() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(netloss_cli::EXIT_CONFIG);
        }
    };
    let opts = Options {
        out: common.out,
        seed: common.seed,
        grid: common.grid,
        axis,
        decoder: common.decoder,
        gains: common.gains,
    };
    let code = execute(cmd, &common.config, &opts, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
