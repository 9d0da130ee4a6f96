//! Error bank calibrated from simulated views, compared with the synthetic one.

use mmd_planner::harness::{calibrate_scenario, generate_square_street, StreetLayout};
use mmd_planner::uncertainty::{default_bank, ErrorBank};

fn summary(name: &str, bank: &ErrorBank) {
    let n = bank.yaw_samples.len() as f64;
    let yaw = bank.yaw_samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let size = bank.size_samples.iter().map(|v| v.norm()).sum::<f64>() / n;
    let origin = bank.origin_samples.iter().map(|v| v.norm()).sum::<f64>() / n;
    println!("{name:>10}: {n:>4} samples, mean |yaw| {yaw:.4} rad, |size| {size:.3} m, |origin| {origin:.3} m");
}

fn main() -> mmd_planner::Result<()> {
    let s = generate_square_street(2, &StreetLayout::default())?;
    let seeds: Vec<u64> = (0..100).collect();
    summary("calibrated", &calibrate_scenario(&s, &seeds)?);
    summary("synthetic", &default_bank(0, 1000)?);
    Ok(())
}
