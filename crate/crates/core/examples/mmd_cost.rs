//! MMD cost of query points near an uncertain facade, from far to touching.

use mmd_planner::geometry::Cuboid;
use mmd_planner::mmd::{median_bandwidth, KernelConfig, SafetyBand, UncertainWorld};
use mmd_planner::uncertainty::{default_bank, draw_grid, GridCounts, UncertainCuboid};
use nalgebra::Vector3;

fn main() -> mmd_planner::Result<()> {
    let facade = Cuboid::from_parts([0.0, 0.0], 0.0, 12.0, 20.0, 0.2)?;
    let u = UncertainCuboid::new(facade, default_bank(1, 300)?);
    let world = UncertainWorld::new(vec![draw_grid(&u, GridCounts::new(4, 4, 4), 2)?]);
    let band = SafetyBand::new(1.0, 100.0)?;
    let queries: Vec<Vector3<f64>> = [4.0, 2.0, 1.5, 1.0, 0.5, 0.1]
        .iter()
        .map(|x| Vector3::new(*x, 0.0, 10.0))
        .collect();
    let tensors: Vec<_> = queries
        .iter()
        .flat_map(|q| world.tensors_at(q, band))
        .flatten()
        .collect();
    let kernel = KernelConfig::uniform(median_bandwidth(&tensors));
    println!("bandwidth {:.3} m", kernel.bandwidth);
    for q in &queries {
        println!(
            "x = {:>4.1} m: mmd {:.5}",
            q.x,
            world.mmd_at(q, band, &kernel)?
        );
    }
    Ok(())
}
