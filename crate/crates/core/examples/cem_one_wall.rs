//! CEM plan around one uncertain wall, with the per-iteration cost profile.

use mmd_planner::harness::one_wall_scenario;
use mmd_planner::planner_cem::{default_duration, plan_cem};
use mmd_planner::uncertainty::UncertainCuboid;

fn main() -> mmd_planner::Result<()> {
    let s = one_wall_scenario(0)?;
    let bank = s.bank.load(None)?;
    let world: Vec<_> = s
        .buildings
        .iter()
        .map(|b| UncertainCuboid::new(*b, bank.clone()))
        .collect();
    let duration = default_duration(&s.start.position, &s.goal, s.limits);
    let plan = plan_cem(&world, &s.start, &s.goal, s.limits, duration, &s.config.cem)?;
    print!("{}", plan.trace.to_table());
    println!("monotone elite cost: {}", plan.trace.elite_cost_monotone());
    for t in plan.trajectory.sample_times(7) {
        let p = plan.trajectory.position(t);
        println!("t {t:>5.2} s: ({:.2}, {:.2}, {:.2})", p.x, p.y, p.z);
    }
    Ok(())
}
