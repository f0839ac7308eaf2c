mod commands;
mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{Command, CommandError, RunOptions};
use prodnet::game::TiePolicy;
use prodnet::ModelError;
use report::{Envelope, Format};

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum TieBreak {
    UniformOverArgmax,
    KeepCurrent,
    LowestIndex,
}

impl From<TieBreak> for TiePolicy {
    fn from(t: TieBreak) -> Self {
        match t {
            TieBreak::UniformOverArgmax => TiePolicy::UniformOverArgmax,
            TieBreak::KeepCurrent => TiePolicy::KeepCurrent,
            TieBreak::LowestIndex => TiePolicy::LowestIndex,
        }
    }
}

/// Equilibrium, network-formation and policy analyses of production economies.
#[derive(Debug, Parser)]
#[command(name = "prodnet-eq", version)]
struct Cli {
    command: Command,
    /// Scenario JSON file (not needed for `verify`).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory receiving the reports.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
    #[arg(long)]
    tol: Option<f64>,
    /// Profit share imposed on every firm in game commands.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    tie_break: Option<TieBreak>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest number of countries for partition scans.
    #[arg(long)]
    n_cap: Option<usize>,
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("prodnet-eq: {message}");
    ExitCode::from(code)
}

fn model_exit(e: &ModelError) -> u8 {
    match e {
        ModelError::CapExceeded { .. }
        | ModelError::Singular(_)
        | ModelError::Degenerate { .. }
        | ModelError::NotErgodic { .. }
        | ModelError::Inadmissible(_) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let scenario = match &cli.scenario {
        Some(path) => match scenario::load_scenario(path) {
            Ok(s) => Some(s),
            Err(e) => return fail(EXIT_USAGE, format!("{}: {e}", path.display())),
        },
        None => None,
    };
    let solver = scenario.as_ref().map(|s| s.solver.clone()).unwrap_or_default();
    let options = RunOptions {
        tol: cli.tol.unwrap_or(solver.tol),
        epsilon: cli.epsilon.or(solver.epsilon),
        tie_policy: cli.tie_break.map_or(solver.tie_policy, TiePolicy::from),
        seed: cli.seed.unwrap_or(solver.seed),
        n_cap: cli.n_cap.unwrap_or(solver.n_cap),
    };
    if !(options.tol > 0.0) {
        return fail(EXIT_USAGE, "--tol must be positive");
    }
    if let Some(eps) = options.epsilon {
        if !(0.0..1.0).contains(&eps) {
            return fail(EXIT_USAGE, "--epsilon must lie in [0, 1)");
        }
    }
    let outcome = match commands::run(cli.command, scenario.as_ref(), &options) {
        Ok(o) => o,
        Err(CommandError::Usage(m)) => return fail(EXIT_USAGE, m),
        Err(CommandError::Model(e)) => return fail(model_exit(&e), e),
    };
    let envelope = Envelope {
        command: cli.command.name(),
        options: &options,
        result: outcome.result,
    };
    match report::emit(&cli.out, cli.format, &envelope, &outcome.tables) {
        Ok(paths) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => return fail(EXIT_USAGE, format!("cannot write reports: {e}")),
    }
    if outcome.verification_failed {
        return ExitCode::from(EXIT_VERIFY);
    }
    ExitCode::SUCCESS
}
