use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ipi_cli::verify::{self, VerifyOptions};
use ipi_cli::{cmd_compare, cmd_run};

#[derive(Parser)]
#[command(name = "ipi", version, about = "Integral policy iteration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run { config: PathBuf },
    /// Run the verification suite.
    Verify {
        /// Only run checks whose id contains this string.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, hide = true)]
        inject_gain_sign_bug: bool,
        #[arg(long, hide = true)]
        iqpi_table_literal: bool,
    },
    /// Compare two value_grid CSV dumps sampled on the same grid.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Relative tolerance per point.
        #[arg(long, default_value_t = 0.15)]
        rel_tol: f64,
        /// Fraction of points that must be within tolerance.
        #[arg(long, default_value_t = 1.0)]
        min_fraction: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => match cmd_run(&config) {
            Ok(dir) => {
                println!("wrote {}", dir.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Verify {
            filter,
            inject_gain_sign_bug,
            iqpi_table_literal,
        } => {
            let opts = VerifyOptions {
                filter,
                inject_gain_sign_bug,
                iqpi_table_literal,
            };
            println!("{}", verify::header());
            let results = verify::run_checks_with(&opts, |r| println!("{}", verify::format_row(r)));
            let failed: Vec<&str> = results
                .iter()
                .filter(|r| r.status == verify::Status::Fail)
                .map(|r| r.id)
                .collect();
            if results.is_empty() {
                eprintln!("no checks match the filter");
                1
            } else if failed.is_empty() {
                println!("{} checks, all passed", results.len());
                0
            } else {
                println!("failed: {}", failed.join(", "));
                1
            }
        }
        Command::Compare {
            a,
            b,
            rel_tol,
            min_fraction,
        } => match cmd_compare(&a, &b, rel_tol, min_fraction) {
            Ok((c, pass)) => {
                println!(
                    "max_rel {:e} mean_rel {:e} within {:.4} (rel_tol {rel_tol}, need {min_fraction}) {}",
                    c.max_rel,
                    c.mean_rel,
                    c.within,
                    if pass { "PASS" } else { "FAIL" }
                );
                if pass {
                    0
                } else {
                    1
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
