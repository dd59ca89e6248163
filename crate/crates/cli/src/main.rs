use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcs_cli::{run, Command};

#[derive(Parser)]
#[command(name = "tcs", version, about = "Thermodynamic Cucker-Smale flocking: simulation and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Report N, arc count, roots and the smallest spanning-tree depth.
    GraphInfo(Common),
    /// Integrate the scenario and write trajectory and diagnostics CSVs.
    Simulate(Common),
    /// Evaluate the flocking certificate and write certificate.json.
    Certify(Common),
    /// Compare the discrete and continuous conditions as h shrinks.
    LimitCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides every seed in the scenario.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::GraphInfo(a) => (Command::GraphInfo, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Certify(a) => (Command::Certify, a),
        Cmd::LimitCheck(a) => (Command::LimitCheck, a),
    };
    match run(command, &args.scenario, args.out.as_deref(), args.seed) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
