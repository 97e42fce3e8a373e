use std::path::PathBuf;
use std::process::ExitCode;

use aggsync::scenario::{self, RunReport, Scenario, Solver};
use aggsync::Error;
use clap::{Parser, Subcommand};

/// Two-species aggregation scenarios: finite-volume, particle and kinetic runs.
#[derive(Parser)]
#[command(name = "aggsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// Write into this directory instead of the scenario's output_dir.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a built-in scenario.
    Preset {
        /// example1, example2, example3, example4 or hydro_limit.
        name: String,
        /// fv, particles, kinetic or compare.
        #[arg(long)]
        solver: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Kinetic ε sweep against the finite-volume solution.
    Limit {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the synchronising-condition table of a finished run.
    Report { run_dir: PathBuf },
}

fn error_json(err: &Error) -> serde_json::Value {
    let mut v = serde_json::json!({
        "error": err.kind(),
        "message": err.to_string(),
    });
    let mut inner = err;
    while let Error::Context { source, .. } = inner {
        inner = source;
    }
    if let Error::Config { key, .. } | Error::Validation { key, .. } = inner {
        v["key"] = key.clone().into();
    }
    v
}

fn summarize(report: &RunReport, dir: &std::path::Path) {
    println!("scenario `{}` ({}) written to {}", report.scenario.name, report.scenario.solver.name(), dir.display());
    for e in &report.events {
        let sync = match (e.sync_lhs, e.sync_rhs) {
            (Some(l), Some(r)) => format!("  LHS/m₀ = {:.4}, RHS/m₀ = {:.4}", l / aggsync::measures::m0(), r / aggsync::measures::m0()),
            _ => String::new(),
        };
        println!("  [{}] t = {:.4}  {} at x = {:.4}{}", e.solver, e.time, e.kind, e.position, sync);
    }
    for c in &report.conservation {
        let eps = c.epsilon.map_or(String::new(), |e| format!(" ε = {e}"));
        println!(
            "  {}{}: mass drift {:e}, {:e}",
            c.solver,
            eps,
            c.mass1_final - c.mass1_initial,
            c.mass2_final - c.mass2_initial
        );
    }
    for a in &report.comparison {
        let t = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("  {}: particles {}  fv {}", a.category, t(a.particles), t(a.fv));
    }
    for w in &report.warnings {
        println!("  warning: {w}");
    }
}

fn run_with(s: &Scenario, output: Option<PathBuf>) -> aggsync::Result<()> {
    let dir = output.unwrap_or_else(|| s.resolved_output_dir());
    let report = scenario::run_scenario_in(s, &dir)?;
    summarize(&report, &dir);
    Ok(())
}

fn execute(cli: Cli) -> aggsync::Result<()> {
    match cli.command {
        Command::Run { config, output } => run_with(&scenario::load_scenario(&config)?, output),
        Command::Preset { name, solver, output } => {
            let mut s = scenario::preset(&name)?;
            if let Some(tag) = solver {
                s.solver = tag.parse::<Solver>()?;
                s.output_dir = format!("runs/{}-{}", s.name, s.solver.name());
            }
            run_with(&s, output)
        }
        Command::Limit { config, output } => {
            let s = scenario::load_scenario(&config)?;
            let dir = output.unwrap_or_else(|| s.resolved_output_dir());
            let rows = scenario::run_limit(&s, &dir)?;
            println!("{:>10}  {:>14}  {:>14}", "epsilon", "w2_species1", "w2_species2");
            for r in &rows {
                println!("{:>10}  {:>14.6e}  {:>14.6e}", r.epsilon, r.w2_species1, r.w2_species2);
            }
            println!("written to {}", dir.join("limit.csv").display());
            Ok(())
        }
        Command::Report { run_dir } => {
            print!("{}", scenario::report_sync_analysis(&scenario::load_report(&run_dir)?));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let v = serde_json::json!({ "error": "usage", "message": e.to_string() });
            eprintln!("{v}");
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::FAILURE
        }
    }
}
