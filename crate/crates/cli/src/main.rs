use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iobt_core::connectivity::check_prop1;
use iobt_core::harness::{run_checks, run_scenario, write_csv, write_dat, RunOptions};
use iobt_core::{generate_instance, ExperimentConfig, GameError, Mode, Scenario, Solver, SolverOptions};

#[derive(Parser)]
#[command(name = "iobt", about = "Multistage attacker-defender connectivity game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file; the shipped defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fraction applied to device counts, thresholds and aggregate costs.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Stages each decision looks ahead.
    #[arg(long)]
    lookahead: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the first stage of one instance and print the policy.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "fse")]
        mode: ModeArg,
        #[arg(long)]
        horizon: Option<usize>,
        /// Directory for the connectivity report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run scenario 1, 2 or 3 and write CSV and gnuplot data.
    Scenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: u8,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Fill the runtime column with wall-clock seconds.
        #[arg(long)]
        timings: bool,
    },
    /// Compare the solvers against their slow reference implementations.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Fse,
    Nfse,
    Equal,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Fse => Mode::Fse,
            ModeArg::Nfse => Mode::Nfse,
            ModeArg::Equal => Mode::EqualProbability,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Game(GameError),
    Io(String),
    Check,
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        Failure::Game(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn experiment(common: &Common) -> Result<ExperimentConfig, Failure> {
    let exp = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::paper(),
    };
    Ok(exp.scaled(common.scale)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { common, mode, horizon, out } => {
            let exp = experiment(&common)?;
            let seed = common.seed.unwrap_or(exp.scenario.seed);
            let psi = generate_instance(&exp, seed)?;
            let mut cfg = exp.game_config()?;
            if let Some(t) = horizon {
                cfg.horizon = t;
            }
            let lookahead = common.lookahead.or(exp.scenario.lookahead);
            let mut solver = Solver::with_options(&cfg, SolverOptions { lookahead, ..SolverOptions::default() });
            let policy = solver.policy(&psi, 1, mode.into())?;
            println!("{}", serde_json::to_string_pretty(&policy).map_err(|e| Failure::Io(e.to_string()))?);
            let (_, game, solution) = solver.solve_stage_full(&psi, 1)?;
            let report = check_prop1(&psi, &cfg, 1, &game, &solution);
            let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Io(e.to_string()))?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("connectivity.json"), text)?;
                }
                None => println!("{text}"),
            }
        }
        Command::Scenario { common, scenario, runs, out, timings } => {
            let exp = experiment(&common)?;
            let sc = Scenario::paper(scenario)?;
            let opts = RunOptions {
                seed: common.seed.unwrap_or(exp.scenario.seed),
                runs,
                lookahead: common.lookahead.or(exp.scenario.lookahead),
                timings,
            };
            let rows = run_scenario(&exp, &sc, &opts)?;
            std::fs::create_dir_all(&out)?;
            let csv = std::fs::File::create(out.join(format!("scenario{scenario}.csv")))?;
            write_csv(&rows, csv)?;
            let dat = std::fs::File::create(out.join(format!("scenario{scenario}.dat")))?;
            write_dat(&rows, &sc.parameter, dat)?;
        }
        Command::Check { seed } => {
            let outcomes = run_checks(seed)?;
            for o in &outcomes {
                let tag = if o.passed() { "PASS" } else { "FAIL" };
                println!("{tag} {} ({} cases, {} failures)", o.name, o.cases, o.failures);
            }
            if !outcomes.iter().all(|o| o.passed()) {
                return Err(Failure::Check);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = match &f {
                Failure::Game(GameError::Config(_)) => 2,
                Failure::Game(GameError::InfeasibleInstance(_) | GameError::EmptyFeasibleSet { .. }) => 3,
                _ => 1,
            };
            match f {
                Failure::Game(e) => eprintln!("error: {e}"),
                Failure::Io(e) => eprintln!("error: {e}"),
                Failure::Check => eprintln!("error: oracle mismatch"),
            }
            ExitCode::from(code)
        }
    }
}
