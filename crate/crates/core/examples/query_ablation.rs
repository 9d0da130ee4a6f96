//! Batched analytic distance queries against a voxel distance field.

use mmd_planner::harness::{generate_square_street, StreetLayout};
use mmd_planner::voxel::{query_bench, QueryBenchConfig};

fn main() -> mmd_planner::Result<()> {
    let world = generate_square_street(0, &StreetLayout::compact())?.buildings;
    let bench = query_bench(&world, &QueryBenchConfig::default())?;
    print!("{}", bench.to_table());
    println!(
        "field build {:.3} s at {} m, max |lookup - analytic| {:.3} m",
        bench.build_s, bench.resolution, bench.max_discrepancy
    );
    Ok(())
}
