//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//!
//! `ACCEPTANCE_FILTER` restricts the run (criterion numbers or experiment
//! ids, comma-separated). The process fails only on criteria that are not
//! listed as known-unattainable; those still print FAIL with the reason.

use std::process::ExitCode;
use std::time::Instant;

use iblab::harness::acceptance::{run_suite, select};
use iblab::optimizers::Fault;

fn main() -> ExitCode {
    // libtest flags such as `--nocapture` or `--test-threads` are accepted and ignored.
    let filter = std::env::var("ACCEPTANCE_FILTER")
        .ok()
        .filter(|f| !f.trim().is_empty());
    let selected = select(filter.as_deref());
    println!("\nrunning {} acceptance criteria", selected.len());
    let start = Instant::now();
    let results = run_suite(&selected, Fault::None, |r| {
        println!("{}", r.line());
        if let (false, Some(why)) = (r.passed, r.known_unattainable) {
            println!("       known unattainable: {why}");
        }
    });
    let passed = results.iter().filter(|r| r.passed).count();
    let known = results
        .iter()
        .filter(|r| !r.passed && r.known_unattainable.is_some())
        .count();
    let unexpected: Vec<_> = results
        .iter()
        .filter(|r| !r.passed && r.known_unattainable.is_none())
        .map(|r| r.id)
        .collect();
    println!(
        "\nacceptance: {passed} passed, {known} known-unattainable failed, {} unexpected failures; {:.1}s",
        unexpected.len(),
        start.elapsed().as_secs_f64()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
