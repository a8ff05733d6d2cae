//! End-to-end acceptance run: one PASS/FAIL line per criterion, full
//! settings, sequential so the timing criterion sees an idle machine.
//!
//! Tolerances live in `ergm_kabc::bench` (`AIS_MAE_TOLERANCE` and friends)
//! and are shared with `kabc bench`. The process exits non-zero when any
//! criterion fails.

use std::time::Instant;

use ergm_kabc::bench::{run_suite, SuiteSettings};

fn main() {
    // `cargo test -- --list` and filtered runs should not start the suite
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return;
        }
    }

    let start = Instant::now();
    println!("running acceptance criteria (full settings)");
    let results = run_suite(&SuiteSettings::full(), |r| println!("{}", r));
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({})", r.id, r.name))
        .collect();
    println!(
        "acceptance: {} passed, {} failed in {:.0}s",
        results.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
