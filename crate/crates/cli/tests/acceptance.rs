//! One line per acceptance criterion; exits non-zero if any fails.

use std::process::ExitCode;

use ipi_cli::verify::{run_checks_with, Status, VerifyOptions, CHECK_IDS};

fn main() -> ExitCode {
    let mut failures = 0;
    run_checks_with(&VerifyOptions::default(), |r| {
        let label = match CHECK_IDS.iter().position(|id| *id == r.id) {
            Some(k) => format!("criterion {}", k + 1),
            None => "  info".to_string(),
        };
        if r.status == Status::Fail {
            failures += 1;
        }
        println!(
            "{label:<12} {} {:<24} {} [tol {}] ({:.1}s)",
            r.status, r.id, r.metric, r.tolerance, r.seconds
        );
    });
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
