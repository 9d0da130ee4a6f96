//! Planner comparison on generated street layouts, one layout per seed.
//!
//! `cargo run --release --example street_bench -- 10` runs ten seeds.

use mmd_planner::harness::{benchmark_cases, square_street_suite, PlannerKind, StreetLayout};

fn main() -> mmd_planner::Result<()> {
    let n: u64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(5);
    let seeds: Vec<u64> = (0..n).collect();
    let cases = square_street_suite(&seeds, &StreetLayout::default())?;
    let report = benchmark_cases(&cases, &PlannerKind::ALL, |r| {
        eprintln!(
            "{} seed {}: {}",
            r.planner,
            r.seed,
            if r.metrics.success { "ok" } else { "fail" }
        )
    })?;
    print!("{}", report.to_table());
    print!("{}", report.timing_table());
    Ok(())
}
