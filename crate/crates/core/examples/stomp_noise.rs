//! Smooth STOMP perturbations of a straight line, written as CSV.

use mmd_planner::trajectory::{stomp_samples, WaypointTrajectory};
use nalgebra::Vector3;

fn main() -> mmd_planner::Result<()> {
    let base = WaypointTrajectory::straight_line(
        Vector3::new(0.0, 0.0, 5.0),
        Vector3::new(30.0, 0.0, 5.0),
        40,
        0.2,
    )?;
    let samples = stomp_samples(&base, 4, 2.0, 7)?;
    println!("sample,t,x,y,z");
    for (k, s) in samples.iter().enumerate() {
        for (i, p) in s.points.iter().enumerate() {
            println!(
                "{k},{:.1},{:.3},{:.3},{:.3}",
                i as f64 * s.dt,
                p.x,
                p.y,
                p.z
            );
        }
    }
    Ok(())
}
