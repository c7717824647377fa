use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use landau_cli::norms::{norms, NormsRequest};
use landau_cli::run::{run_scenario, CliError};
use landau_cli::scenario::parse_scenario;
use landau_cli::verify::{conv_suite, kernel_suite, print_table, DEFAULT_CONV_N, DEFAULT_NODES};
use landau_core::diagnostics::holder::DEFAULT_BUDGET;

#[derive(Parser)]
#[command(name = "landau", version, about = "Landau-Coulomb solver and verification workbench")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Kernel,
    Conv,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a verification suite and print a pass/fail table.
    Verify {
        suite: Suite,
        /// Grid points per axis (conv).
        #[arg(long, default_value_t = DEFAULT_CONV_N)]
        n: usize,
        /// Gauss nodes per angle (kernel).
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
    },
    /// Recompute diagnostics and norms from stored snapshots.
    Norms {
        dir: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 4.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config, output } => {
            let text = std::fs::read_to_string(&config)?;
            let scenario = parse_scenario(&text)?;
            let summary = run_scenario(&scenario, &output)?;
            eprintln!(
                "{} of {} steps, {} snapshots written to {}",
                summary.steps_completed,
                summary.steps_planned,
                summary.snapshots,
                output.display()
            );
            if let Some(e) = &summary.error {
                eprintln!("error: {e}");
            }
            Ok(summary.exit_code())
        }
        Command::Verify { suite, n, nodes } => {
            let checks = match suite {
                Suite::Kernel => {
                    let c = kernel_suite(nodes);
                    print_table(&format!("kernel identities ({nodes} nodes per angle)"), &c);
                    c
                }
                Suite::Conv => {
                    let c = conv_suite(n).map_err(CliError::Argument)?;
                    print_table(&format!("convolution paths (n = {n})"), &c);
                    c
                }
            };
            Ok(if checks.iter().all(|c| c.pass) { 0 } else { 1 })
        }
        Command::Norms { dir, alpha, q, radius, budget, seed } => {
            let doc = norms(&dir, &NormsRequest { alpha, q, radius, budget, seed })?;
            println!("{}", serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
