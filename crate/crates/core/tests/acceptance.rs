//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed whether the
//! criterion passes or not. Pass criterion numbers to run a subset, e.g.
//! `cargo test --test acceptance -- 3 4`.

use std::process::ExitCode;

use tiltgait::acceptance::CRITERIA;

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|n| (1..=CRITERIA.len()).contains(n))
        .collect();
    let mut failed = Vec::new();
    for (i, check) in CRITERIA.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let outcome = check();
        println!("{outcome}");
        if !outcome.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
