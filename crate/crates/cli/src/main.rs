use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netsim_cli::commands::{self, EvalArgs, GenerateArgs, OptimizeArgs, ServeArgs, SimulateArgs, TrainArgs};

/// Radio-access-network simulator: behavior generation, KPI simulation and
/// antenna optimization.
///
/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
/// Scenario arguments accept a TOML path or preset:reference /
/// preset:off-boresight.
#[derive(Debug, Parser)]
#[command(name = "netsim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate user trajectories and sessions from a trained model.
    Generate(GenerateArgs),
    /// Run one episode and write per-tick KPIs plus a summary.
    Simulate(SimulateArgs),
    /// Search beam configurations and write the best as an override file.
    Optimize(OptimizeArgs),
    /// Train the trajectory model.
    TrainMobility(TrainArgs),
    /// Score a trained model against reference trajectories.
    EvalGen(EvalArgs),
    /// Serve the optimization environment over JSON lines on TCP.
    Serve(ServeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.cmd {
        Cmd::Generate(a) => commands::generate(a),
        Cmd::Simulate(a) => commands::simulate(a),
        Cmd::Optimize(a) => commands::optimize(a),
        Cmd::TrainMobility(a) => commands::train_mobility(a),
        Cmd::EvalGen(a) => commands::eval_gen(a),
        Cmd::Serve(a) => commands::serve(a).map(|_| String::new()),
    };
    match out {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
