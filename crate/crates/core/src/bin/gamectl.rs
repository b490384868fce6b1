use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gamectl::runner;
use gamectl::Error;

#[derive(Parser)]
#[command(
    name = "gamectl",
    version,
    about = "Steer a strongly monotone game onto target linear constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of realizations (overrides the config).
        #[arg(long)]
        realizations: Option<usize>,
        /// Horizon in turns (overrides the config).
        #[arg(long)]
        horizon: Option<u64>,
        /// controlled | uncontrolled | direct-global (overrides the config).
        #[arg(long)]
        mode: Option<String>,
        /// Worker threads; results are identical for any value.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            realizations,
            horizon,
            mode,
            threads,
        } => {
            let mut cfg = match runner::parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(runner::EXIT_CONFIG as u8);
                }
            };
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(r) = realizations {
                cfg.realizations = r;
            }
            if let Some(t) = horizon {
                cfg.horizon = t;
            }
            if let Some(m) = &mode {
                cfg.mode = match m.parse() {
                    Ok(m) => m,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(runner::EXIT_CONFIG as u8);
                    }
                };
            }
            if let Err(e) = cfg.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(runner::EXIT_CONFIG as u8);
            }

            let run = || runner::run_experiment(&cfg);
            let result = match threads {
                Some(w) => {
                    let pool = match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
                        Ok(p) => p,
                        Err(e) => {
                            eprintln!("error: {e}");
                            return ExitCode::FAILURE;
                        }
                    };
                    pool.install(run)
                }
                None => run(),
            };

            match result {
                Ok(summary) => {
                    let ok = summary.statuses.iter().filter(|s| s.ok).count();
                    println!(
                        "{}/{} realizations finished; outputs in {}",
                        ok,
                        summary.statuses.len(),
                        summary.out_dir.display()
                    );
                    for status in summary.statuses.iter().filter(|s| !s.ok) {
                        eprintln!(
                            "realization {} failed: {}",
                            status.index,
                            status.error.as_deref().unwrap_or("unknown")
                        );
                    }
                    if let Some(report) = &summary.diagnostics {
                        for check in &report.property_checks {
                            println!(
                                "check {}: {} (margin {:.3e}, {} samples)",
                                check.property,
                                if check.pass { "pass" } else { "FAIL" },
                                check.worst_margin,
                                check.samples
                            );
                        }
                        if let Some(fit) = &report.rate_fit {
                            println!(
                                "decay slope over [{}, {}]: {:.4} (R^2 {:.3})",
                                fit.t_min, fit.t_max, fit.slope, fit.r_squared
                            );
                        }
                    }
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    let code = match e {
                        Error::Config(_) | Error::Timescale(_) => runner::EXIT_CONFIG,
                        Error::Diverged { .. } => runner::EXIT_DIVERGED,
                        _ => 1,
                    };
                    ExitCode::from(code as u8)
                }
            }
        }
    }
}
