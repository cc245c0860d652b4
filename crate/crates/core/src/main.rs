use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use stochstab::scenario::{builtin_scenario, list_builtins, load_scenario, run, Overrides};

#[derive(Parser)]
#[command(
    name = "stochstab",
    version,
    about = "Verify, synthesize, simulate and certify almost-sure stabilization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a built-in scenario.
    Run {
        /// Scenario file (TOML).
        #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
        scenario: Option<PathBuf>,
        /// Built-in scenario id (see `list`).
        #[arg(long)]
        builtin: Option<String>,
        /// Master seed of the simulation.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of simulated paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Simulation horizon.
        #[arg(long)]
        horizon: Option<f64>,
        /// Output root; results go to <out-dir>/<scenario name>/.
        #[arg(long, env = "STOCHSTAB_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
    },
    /// List the built-in scenarios.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for b in list_builtins() {
                println!("{:<22} {}", b.id, b.description);
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            builtin,
            seed,
            paths,
            dt,
            horizon,
            out_dir,
        } => {
            let loaded = match (&scenario, &builtin) {
                (Some(path), _) => load_scenario(path),
                (None, Some(id)) => builtin_scenario(id),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let mut sc = match loaded {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            sc.apply(&Overrides {
                seed,
                paths,
                dt,
                horizon,
            });
            let mut outcome = match run(&sc) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dir = out_dir.join(&sc.name);
            if let Err(e) = outcome.write(&dir) {
                eprintln!("error: writing {}: {e}", dir.display());
                return ExitCode::from(2);
            }
            let r = &outcome.report;
            for s in &r.stage_errors {
                println!("stage error [{:?}]: {}", s.stage, s.message);
            }
            for c in &r.certificates {
                println!(
                    "{} {:<24} {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.summary
                );
            }
            println!(
                "{}: {} (report in {})",
                sc.name,
                if r.passed { "passed" } else { "failed" },
                dir.join("report.json").display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
    }
}
