//! SCP-MMD plan around one uncertain wall: inflated box, merit history, clearance.

use mmd_planner::harness::one_wall_scenario;
use mmd_planner::planner_scp::plan_scp;
use mmd_planner::trajectory::BoundaryState;
use mmd_planner::uncertainty::UncertainCuboid;

fn main() -> mmd_planner::Result<()> {
    let s = one_wall_scenario(0)?;
    let world = vec![UncertainCuboid::new(s.buildings[0], s.bank.load(None)?)];
    let plan = plan_scp(
        &world,
        &s.start,
        &BoundaryState::at_rest(s.goal),
        &s.config.scp,
        51,
        0.2,
    )?;
    println!("inflated wall: {:?}", plan.inflated.cuboids[0]);
    println!("merit per accepted iterate: {:?}", plan.merit);
    println!("QP solves: {}", plan.qp_solves);
    let min = plan
        .trajectory
        .points
        .iter()
        .map(|p| plan.inflated.clearance(p))
        .fold(f64::INFINITY, f64::min);
    println!("min clearance to inflated wall {min:.3} m");
    Ok(())
}
