//! Quantile inflation of an uncertain facade and its containment of fresh samples.

use mmd_planner::geometry::Cuboid;
use mmd_planner::planner_scp::inflate;
use mmd_planner::uncertainty::{default_bank, draw_independent, UncertainCuboid};

fn main() -> mmd_planner::Result<()> {
    let u = UncertainCuboid::new(
        Cuboid::from_parts([0.0, 0.0], 0.5, 12.0, 25.0, 0.2)?,
        default_bank(3, 500)?,
    );
    let fresh = draw_independent(&u, 2000, 99)?;
    for q in [0.5, 0.8, 0.95, 0.99] {
        let b = inflate(&u, q, 20_000, 1)?;
        let inside = fresh
            .iter()
            .filter(|c| c.vertices().iter().all(|v| b.signed_distance(v) <= 1e-9))
            .count();
        println!(
            "q {q:.2}: length {:.2} height {:.2} thickness {:.2}, contains {:.1}% of fresh samples",
            b.size.length,
            b.size.height,
            b.size.thickness,
            100.0 * inside as f64 / fresh.len() as f64
        );
    }
    Ok(())
}
