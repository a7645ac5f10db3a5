mod config;
mod error;
mod output;
mod run;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nambu_core::Method;

use config::{parse_list, Convention, FieldKind, MapKind, RunConfig, SystemKind};
use error::CliError;
use suites::{run_suite, Suite};

#[derive(Debug, Parser)]
#[command(name = "nambu", version, about = "Integrate vortex, Nambu and costate systems and check their invariants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Point vortices in the plane
    Vortex(RunArgs),
    /// Three-vortex reduced system in log-distance variables
    Reduced3(RunArgs),
    /// Nambu flow from polynomial or three-vortex Hamiltonians
    Nambu(RunArgs),
    /// Extended system with costate and tangent
    Costate(RunArgs),
    /// Iterated map with costate co-processor
    Discrete(RunArgs),
    /// Radial residual of the conformal potential
    Qmcheck(RunArgs),
    /// Run the built-in verification suites
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration; flags given here override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Circulations, comma separated
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    gammas: Option<List>,
    /// Initial state, comma separated
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    state: Option<List>,
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    costate: Option<List>,
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    tangent: Option<List>,
    #[arg(long, value_parser = parse_field)]
    field: Option<FieldKind>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// rk4 or midpoint
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    record_every: Option<usize>,
    /// cat, shear, fan_out or euler
    #[arg(long, value_parser = parse_map)]
    map: Option<MapKind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Iterate in exact rational arithmetic
    #[arg(long)]
    exact: bool,
    /// next_state or current_state
    #[arg(long, value_parser = parse_convention)]
    convention: Option<Convention>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// CSV trajectory output
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report output; printed to stdout when absent
    #[arg(long)]
    report: Option<PathBuf>,
    /// Leave runtime_seconds null so reports are reproducible byte for byte
    #[arg(long)]
    no_timing: bool,
}

/// One comma-separated list of numbers.
#[derive(Debug, Clone)]
struct List(Vec<f64>);

fn parse_values(s: &str) -> Result<List, String> {
    parse_list(s).map(List)
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_field(s: &str) -> Result<FieldKind, String> {
    parse_enum(s)
}

fn parse_map(s: &str) -> Result<MapKind, String> {
    parse_enum(s)
}

fn parse_convention(s: &str) -> Result<Convention, String> {
    parse_enum(s)
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: nambu_core::Error| e.to_string())
}

impl RunArgs {
    fn into_config(self, system: SystemKind) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = base.system {
            if s != system {
                return Err(CliError::Usage(format!(
                    "config is for `{}` but the `{}` command was used",
                    s.name(),
                    system.name()
                )));
            }
        }
        let flags = RunConfig {
            system: Some(system),
            gammas: self.gammas.map(|l| l.0),
            state: self.state.map(|l| l.0),
            costate: self.costate.map(|l| l.0),
            tangent: self.tangent.map(|l| l.0),
            field: self.field,
            map: self.map,
            steps: self.steps,
            tau: self.tau,
            exact: self.exact.then_some(true),
            convention: self.convention,
            d: self.d,
            r_min: self.r_min,
            r_max: self.r_max,
            points: self.points,
            levels: self.levels,
            method: self.method,
            dt: self.dt,
            t_end: self.t_end,
            record_every: self.record_every,
            out: self.out,
            report: self.report,
            timing: self.no_timing.then_some(false),
            ..Default::default()
        };
        Ok(base.overlay(flags))
    }
}

fn simulate(system: SystemKind, args: RunArgs) -> Result<(), CliError> {
    let job = args.into_config(system)?.validate()?;
    let out = run::run(&job)?;
    if job.outputs.report.is_none() {
        print!("{}", out.report.to_json());
    }
    match out.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn check(suite: Suite) -> Result<(), CliError> {
    let checks = run_suite(suite);
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{failed} checks failed")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Vortex(a) => simulate(SystemKind::Vortex, a),
        Command::Reduced3(a) => simulate(SystemKind::Reduced3, a),
        Command::Nambu(a) => simulate(SystemKind::Nambu, a),
        Command::Costate(a) => simulate(SystemKind::Costate, a),
        Command::Discrete(a) => simulate(SystemKind::Discrete, a),
        Command::Qmcheck(a) => simulate(SystemKind::Qmcheck, a),
        Command::Check { suite } => check(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
