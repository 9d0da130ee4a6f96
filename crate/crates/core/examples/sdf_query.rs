//! Analytic distance from query points to a rotated facade.

use mmd_planner::geometry::{sdf_batch, Cuboid};
use nalgebra::Vector3;

fn main() -> mmd_planner::Result<()> {
    let facades = [
        Cuboid::from_parts([0.0, 0.0], 0.0, 10.0, 20.0, 0.2)?,
        Cuboid::from_parts([15.0, 5.0], std::f64::consts::FRAC_PI_4, 8.0, 30.0, 0.2)?,
    ];
    let queries = [
        Vector3::new(3.0, 0.0, 5.0),
        Vector3::new(0.0, 8.0, 25.0),
        Vector3::new(15.0, 5.0, 10.0),
    ];
    let d = sdf_batch(&facades, &queries)?;
    for (j, q) in queries.iter().enumerate() {
        println!(
            "q = {:?}: {:.3} m, {:.3} m",
            q.as_slice(),
            d[(0, j)],
            d[(1, j)]
        );
    }
    Ok(())
}
