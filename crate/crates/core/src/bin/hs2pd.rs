use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hs2pd::domain::validate_scenario;
use hs2pd::engine::{render_text, run, validate_trace, RunStatus, Trace};
use hs2pd::oracle::{compare_instance, OracleKind, OracleOutcome};
use hs2pd::scenario::{load_scenario, load_scenario_file};

#[derive(Parser)]
#[command(
    name = "hs2pd",
    version,
    about = "Mixed robot/human pickup-and-delivery simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv and metrics.json
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override a scenario value, e.g. params.alpha=0.6
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, value_enum)]
        render: Option<Render>,
    },
    /// Re-check a recorded trace against its scenario
    Validate { trace: PathBuf, scenario: PathBuf },
    /// Compare a solver against exhaustive search on a small instance
    Oracle {
        instance: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
    },
    /// Scenario file utilities
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Parse and validate a scenario file
    Check { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Render {
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Pickup,
    Delivery,
    Mode,
    Path,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HS2PD_LOG", "warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            set,
            render,
        } => cmd_run(&scenario, &out, &set, render.is_some()),
        Command::Validate { trace, scenario } => cmd_validate(&trace, &scenario),
        Command::Oracle { instance, which } => cmd_oracle(&instance, which),
        Command::Scenario {
            command: ScenarioCommand::Check { file },
        } => cmd_check(&file),
    }
}

fn cmd_run(path: &Path, out: &Path, set: &[String], render: bool) -> ExitCode {
    let scenario = match load_scenario(path, set) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match run(&scenario) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(out)
        .and_then(|()| std::fs::write(out.join("trace.csv"), result.trace.to_csv()))
        .and_then(|()| {
            let json = serde_json::to_string_pretty(&result.metrics).expect("metrics serialize");
            std::fs::write(out.join("metrics.json"), json + "\n")
        })
    {
        eprintln!("error: cannot write to {}: {e}", out.display());
        return ExitCode::from(2);
    }
    if render {
        print!("{}", render_text(&scenario.map, &result.agents));
    }
    let m = &result.metrics;
    println!("status: {:?}", m.status);
    println!("completion_step: {}", m.completion_step);
    println!("all_assigned_step: {}", m.all_assigned_step);
    println!("collisions: {}", m.collisions);
    if !m.expired.is_empty() {
        println!("expired: {:?}", m.expired);
    }
    match m.status {
        RunStatus::Completed => ExitCode::SUCCESS,
        RunStatus::Incomplete | RunStatus::Timeout => ExitCode::FAILURE,
    }
}

fn cmd_validate(trace: &Path, scenario: &Path) -> ExitCode {
    let scenario = match load_scenario(scenario, &[]) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", trace.display());
            return ExitCode::from(2);
        }
    };
    let trace = match Trace::parse_csv(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let problems = validate_trace(&trace, &scenario);
    if problems.is_empty() {
        println!("trace ok: {} steps", trace.last_step());
        ExitCode::SUCCESS
    } else {
        for p in &problems {
            println!("{p}");
        }
        ExitCode::FAILURE
    }
}

fn cmd_oracle(instance: &Path, which: Which) -> ExitCode {
    let file = match load_scenario_file(instance, &[]) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let kind = match which {
        Which::Pickup => OracleKind::Pickup,
        Which::Delivery => OracleKind::Delivery,
        Which::Mode => OracleKind::Mode,
        Which::Path => OracleKind::Path,
    };
    match compare_instance(&file, kind) {
        Ok(OracleOutcome {
            solver,
            brute_force,
            matches,
        }) => {
            println!("solver: {solver}");
            println!("brute force: {brute_force}");
            println!("{}", if matches { "match" } else { "MISMATCH" });
            if matches {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("refused: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_check(file: &Path) -> ExitCode {
    let scenario = match load_scenario(file, &[]) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        println!(
            "ok: {}x{} map, {} agents, {} tasks, {} events",
            scenario.map.width(),
            scenario.map.height(),
            scenario.agents.len(),
            scenario.tasks.len(),
            scenario.events.len()
        );
        ExitCode::SUCCESS
    } else {
        for v in &violations {
            println!("{v}");
        }
        ExitCode::FAILURE
    }
}
