//! `fomes`: run scenarios and parameter sweeps from the command line.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fomes_core::scenario::{validate, EventMode, Severity, FIXTURE_NAMES};
use fomes_core::sweep::{apply_overrides, run_sweep, SweepSpec};
use fomes_core::{builtin_fixture, integrate, parse_scenario, IntegrationConfig, Scenario};

#[derive(Parser)]
#[command(
    name = "fomes",
    version,
    about = "Indoor virus transmission via fomites, close contact and aerosol"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario; writes timeseries.csv and summary.toml.
    Run(RunArgs),
    /// Run a two-axis parameter sweep; writes grid.csv.
    Sweep(SweepArgs),
    /// Built-in scenarios.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// List built-in scenario names.
    List,
    /// Print a built-in scenario as a scenario document.
    Dump { name: String },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario document, or the name of a built-in scenario.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    fixture: Option<String>,
    /// Override a scenario value, e.g. `setting.air_volume=40` (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Observation end, h.
    #[arg(long)]
    tend: Option<f64>,
}

#[derive(Args)]
struct SolverArgs {
    /// exact-jump or smoothed.
    #[arg(long)]
    mode: Option<EventMode>,
    /// Ramp and pulse width in smoothed mode, h.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    /// Output grid spacing, h.
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Sweep spec document.
    #[arg(long)]
    sweep: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Failure with its exit code: 1 for model errors, 2 for I/O.
#[derive(Debug)]
enum Failure {
    Model(String),
    Io(String),
}

impl Failure {
    fn model(e: impl std::fmt::Display) -> Self {
        Failure::Model(e.to_string())
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn parse_override(text: &str) -> Result<(String, toml::Value), Failure> {
    let (path, raw) = text
        .split_once('=')
        .ok_or_else(|| Failure::Model(format!("--set expects PATH=VALUE, got `{text}`")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path.trim().to_string(), value))
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let base = match (&args.scenario, &args.fixture) {
        (_, Some(name)) => builtin_fixture(name).map_err(Failure::model)?,
        (Some(path), None) => {
            let name = path.to_str().unwrap_or_default();
            if !path.exists() && FIXTURE_NAMES.contains(&name) {
                builtin_fixture(name).map_err(Failure::model)?
            } else {
                let text = read(path)?;
                parse_scenario(&text)
                    .map_err(|e| Failure::Model(format!("{}: {e}", path.display())))?
            }
        }
        (None, None) => unreachable!("clap requires --scenario or --fixture"),
    };
    let mut overrides = args
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(t) = args.tend {
        overrides.push(("setting.observation_end".into(), toml::Value::Float(t)));
    }
    let scenario = if overrides.is_empty() {
        base
    } else {
        apply_overrides(&base, &overrides).map_err(Failure::model)?
    };
    for finding in validate(&scenario) {
        if finding.severity == Severity::Warning {
            eprintln!("{finding}");
        }
    }
    Ok(scenario)
}

fn solver_config(scenario: &Scenario, args: &SolverArgs) -> IntegrationConfig {
    let mut config = IntegrationConfig::for_scenario(scenario);
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if let Some(e) = args.epsilon {
        config.epsilon = e;
    }
    if let Some(r) = args.rtol {
        config.rtol = r;
    }
    if let Some(a) = args.atol {
        config.atol = a;
    }
    if let Some(g) = args.grid_step {
        config.grid_step = g;
    }
    config
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&args.scenario)?;
    let config = solver_config(&scenario, &args.solver);
    let result = integrate(&scenario, &config).map_err(Failure::model)?;
    create_dir(&args.out_dir)?;
    let series = args.out_dir.join("timeseries.csv");
    output::write_timeseries(&result, &series).map_err(|e| Failure::io(&series, e))?;
    let summary = args.out_dir.join("summary.toml");
    fs::write(&summary, output::summary(&result)).map_err(|e| Failure::io(&summary, e))?;
    println!("wrote {} and {}", series.display(), summary.display());
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let spec_text = read(&args.sweep)?;
    let spec = SweepSpec::parse(&spec_text)
        .map_err(|e| Failure::Model(format!("{}: {e}", args.sweep.display())))?;
    let scenario = load_scenario(&args.scenario)?;
    let config = solver_config(&scenario, &args.solver);
    let grid = run_sweep(&scenario, &spec, &config, args.jobs).map_err(Failure::model)?;
    create_dir(&args.out_dir)?;
    let path = args.out_dir.join("grid.csv");
    output::write_grid(&grid, &path).map_err(|e| Failure::io(&path, e))?;
    println!("wrote {} ({} cells)", path.display(), grid.len());
    Ok(())
}

fn fixture(command: &FixtureCommand) -> Result<(), Failure> {
    match command {
        FixtureCommand::List => {
            for name in FIXTURE_NAMES {
                println!("{name}");
            }
        }
        FixtureCommand::Dump { name } => {
            let scenario = builtin_fixture(name).map_err(Failure::model)?;
            print!("{}", fomes_core::scenario::to_toml_string(&scenario));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Fixture(c) => fixture(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
