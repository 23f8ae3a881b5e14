use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wlansim::harness::{compare, run_detailed, to_csv, write_csv, HarnessError};
use wlansim::scenario::{parse_scenario, Scenario, Variant};

#[derive(Parser)]
#[command(
    name = "wlansim",
    version,
    about = "Discrete-event 802.11b MAC simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print or write its metrics as CSV.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the event trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the scenario once per variant, e.g. `--variants dcf,dcf+ica`.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
}

enum Failure {
    Usage(String),
    Scenario(String),
    Runtime(String),
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Scenario(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| Failure::Scenario(format!("{}: {e}", path.display())))
}

fn harness(e: HarnessError) -> Failure {
    match e {
        HarnessError::Scenario(e) => Failure::Scenario(e.to_string()),
        HarnessError::NoVariants => Failure::Usage(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    }
}

fn emit(table: &[(String, wlansim::harness::Metrics)], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => write_csv(table, p).map_err(harness),
        None => {
            print!("{}", to_csv(table));
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario,
            seed,
            out,
            trace,
        } => {
            let mut s = load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let (m, raw) = run_detailed(&s, trace.is_some()).map_err(harness)?;
            if let Some(t) = trace {
                std::fs::write(&t, raw.trace)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", t.display())))?;
            }
            let name = s
                .macs
                .first()
                .map_or("dcf".to_string(), |m| m.variant.to_string());
            emit(&[(name, m)], out.as_deref())
        }
        Command::Compare {
            scenario,
            variants,
            seed,
            out,
        } => {
            let mut s = load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let vs = variants
                .iter()
                .map(|v| Variant::parse(v).map_err(Failure::Usage))
                .collect::<Result<Vec<_>, _>>()?;
            let table = compare(&vs, &s).map_err(harness)?;
            emit(&table, out.as_deref())
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            s.network_config(false)
                .map_err(|e| Failure::Scenario(e.to_string()))?;
            println!(
                "ok: {} nodes, {} flows, {} us",
                s.topology.len(),
                s.flows.len(),
                s.duration
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Scenario(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
