use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use renewal_cli::commands;
use renewal_cli::report::SummaryReport;
use renewal_cli::{CliError, Scenario, Status};
use renewal_core::batch;

#[derive(Parser)]
#[command(name = "renewal", version, about = "Renewal epidemic model with variable susceptibility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infection-free and endemic equilibria and R0, without simulating.
    Equilibrium(Common),
    /// Simulate and write trajectory.csv and summary.json.
    Run(Common),
    /// Simulate with both Lyapunov monitors and the applicable oracles.
    Certify(Common),
    /// Run every point of the [sweep] axes and write sweep_index.csv.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario, CliError> {
        Scenario::load(&self.config)?.with_overrides(self.dt, self.t_end)
    }

    fn require_out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::input("--out <dir> is required for this command"))
    }
}

fn print(report: &SummaryReport) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).map_err(CliError::output)?;
    println!("{text}");
    Ok(())
}

fn dispatch(command: Command) -> Result<Status, CliError> {
    match command {
        Command::Equilibrium(c) => {
            let report = commands::equilibrium(&c.scenario()?, c.out.as_deref())?;
            print(&report)?;
            Ok(Status::Ok)
        }
        Command::Run(c) => {
            let out = c.require_out()?;
            let report = commands::run(&c.scenario()?, out)?;
            print(&report)?;
            Ok(Status::Ok)
        }
        Command::Certify(c) => {
            let scenario = c.scenario()?;
            let (report, status) =
                batch::with_workers(Some(c.workers.unwrap_or(1)), || commands::certify(&scenario, c.out.as_deref()))?;
            print(&report)?;
            Ok(status)
        }
        Command::Sweep(c) => {
            let out = c.require_out()?;
            let text = std::fs::read_to_string(&c.config)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", c.config.display())))?;
            let points = batch::with_workers(c.workers, || commands::sweep(&text, out, (c.dt, c.t_end)))?;
            let failed = points.iter().filter(|p| p.error.is_some()).count();
            println!(
                "{} points, {} failed; index at {}",
                points.len(),
                failed,
                out.join("sweep_index.csv").display()
            );
            for p in points.iter().filter(|p| p.error.is_some()) {
                eprintln!("point {:04}: {}", p.index, p.error.as_deref().unwrap_or_default());
            }
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
