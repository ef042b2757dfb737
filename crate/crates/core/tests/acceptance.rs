//! Runs every acceptance criterion and prints one status line each.

use std::process::ExitCode;

use hhe_its::acceptance::run_all;
use hhe_its::config::Catalog;

fn main() -> ExitCode {
    let results = run_all(&Catalog::default());
    for r in &results {
        let limit = r.limit.map(|l| format!(" (limit {} s)", l.as_secs_f64())).unwrap_or_default();
        println!("{}  [{:.3} s{limit}]", r.line(), r.elapsed.as_secs_f64());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
