//! One receding-horizon mission: perceive, plan, execute, audit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::min_sdf;
use crate::perception::{estimate_nominal, synthesize_cloud, CameraModel};
use crate::planner_cem::{default_duration, plan_cem};
use crate::planner_scp::plan_scp;
use crate::trajectory::{
    eval, BoundaryState, KinematicSamples, PolyTrajectory, WaypointTrajectory,
};
use crate::uncertainty::{ErrorBank, UncertainCuboid};

use super::scenario::Scenario;

/// Planner under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Cem,
    Scp,
    /// SCP on the nominal facades with no bank and no inflation.
    Det,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Cem, PlannerKind::Scp, PlannerKind::Det];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cem => "cem",
            Self::Scp => "scp",
            Self::Det => "det",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cem" => Ok(Self::Cem),
            "scp" => Ok(Self::Scp),
            "det" => Ok(Self::Det),
            other => Err(Error::InvalidInput(format!(
                "unknown planner {other:?}, expected cem, scp or det"
            ))),
        }
    }
}

/// Outcome of one mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Goal reached with positive ground-truth clearance throughout.
    pub success: bool,
    /// Executed smoothness: jerk energy (m²/s⁵) for CEM, acceleration energy
    /// (m²/s³) for the waypoint planners.
    pub smoothness: f64,
    /// Mean wall time per planning call.
    pub compute_seconds: f64,
    /// Path length flown before reaching the goal, colliding or failing.
    pub traversed_length: f64,
    pub min_gt_clearance: f64,
    pub replans: usize,
    /// Planning calls that failed while an earlier plan was still flown.
    pub planner_failures: usize,
    pub failure: Option<String>,
}

/// Metrics plus the executed path.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub metrics: RunMetrics,
    pub path: KinematicSamples,
}

impl TrialOutcome {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trajectory.csv"), self.path.to_table())?;
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&self.metrics)? + "\n",
        )?;
        Ok(())
    }
}

pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A planned segment ready for execution.
enum Plan {
    Poly(PolyTrajectory),
    Waypoints(WaypointTrajectory),
}

impl Plan {
    fn duration(&self) -> f64 {
        match self {
            Self::Poly(p) => p.duration,
            Self::Waypoints(w) => w.duration(),
        }
    }
}

/// Executed samples of `horizon` seconds starting `from` seconds into the
/// plan, timed from zero, and the state reached.
struct Executed {
    samples: KinematicSamples,
    smoothness: f64,
    end: BoundaryState,
}

fn execute(plan: &Plan, from: f64, horizon: f64, step: f64) -> Executed {
    match plan {
        Plan::Poly(p) => {
            let count = ((horizon / step).ceil() as usize).max(1) + 1;
            let times: Vec<f64> = (0..count)
                .map(|i| horizon * i as f64 / (count - 1) as f64)
                .collect();
            let shifted: Vec<f64> = times.iter().map(|t| from + t).collect();
            let mut samples = eval(p, &shifted);
            samples.times = times;
            let h = horizon / (count - 1) as f64;
            let smoothness = samples
                .jerks
                .windows(2)
                .map(|w| 0.5 * (w[0].norm_squared() + w[1].norm_squared()) * h)
                .sum();
            let last = samples.times.len() - 1;
            let end = BoundaryState {
                position: samples.positions[last],
                velocity: samples.velocities[last],
                acceleration: samples.accelerations[last],
            };
            Executed {
                samples,
                smoothness,
                end,
            }
        }
        Plan::Waypoints(w) => {
            let n = w.points.len();
            let dt = w.dt;
            // executed waypoint index; keep two more for the boundary state
            let k0 = ((from / dt).round() as usize).min(n - 1);
            let mut k = (k0 + (horizon / dt).round() as usize).min(n - 1);
            if k + 2 >= n {
                k = n - 1;
            }
            let end = if k + 2 < n {
                let (p0, p1, p2) = (w.points[k], w.points[k + 1], w.points[k + 2]);
                BoundaryState {
                    position: p0,
                    velocity: (p1 - p0) / dt,
                    acceleration: (p2 - 2.0 * p1 + p0) / (dt * dt),
                }
            } else {
                BoundaryState::at_rest(w.points[n - 1])
            };
            let t0 = k0 as f64 * dt;
            let t_end = (k - k0) as f64 * dt;
            let count = ((t_end / step).ceil() as usize).max(1) + 1;
            let times: Vec<f64> = (0..count)
                .map(|i| t_end * i as f64 / (count - 1) as f64)
                .collect();
            let kin = w.kinematics();
            let positions = times.iter().map(|&t| w.position_at(t0 + t)).collect();
            let at = |t: f64| ((t / dt).floor() as usize).min(n - 1);
            let samples = KinematicSamples {
                velocities: times.iter().map(|&t| kin.velocities[at(t0 + t)]).collect(),
                accelerations: times
                    .iter()
                    .map(|&t| kin.accelerations[at(t0 + t)])
                    .collect(),
                jerks: vec![Vector3::zeros(); times.len()],
                positions,
                times,
            };
            let smoothness = if k >= k0 + 2 {
                w.points[k0..=k]
                    .windows(3)
                    .map(|q| ((q[2] - 2.0 * q[1] + q[0]) / (dt * dt)).norm_squared() * dt)
                    .sum()
            } else {
                0.0
            };
            Executed {
                samples,
                smoothness,
                end,
            }
        }
    }
}

fn segment_distance(c: &UncertainCuboid, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let steps = ((b - a).norm() / 2.0).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|i| c.nominal.sdf(&(a + (b - a) * (i as f64 / steps as f64))))
        .fold(f64::INFINITY, f64::min)
}

/// Runs one mission of `planner` on `scenario`.
///
/// Perception and planning failures end the mission unsuccessfully; only an
/// invalid scenario is an error.
pub fn run_trial(scenario: &Scenario, planner: PlannerKind, seed: u64) -> Result<TrialOutcome> {
    run_trial_with_bank(scenario, planner, seed, None)
}

/// [`run_trial`] with an already loaded bank (`None` loads the scenario's).
pub fn run_trial_with_bank(
    scenario: &Scenario,
    planner: PlannerKind,
    seed: u64,
    bank: Option<&ErrorBank>,
) -> Result<TrialOutcome> {
    scenario.validate()?;
    let cfg = &scenario.config;
    let trial = &cfg.trial;
    let bank = match (planner, bank) {
        (PlannerKind::Det, _) => ErrorBank::zero(),
        (_, Some(b)) => b.clone(),
        (_, None) => scenario.bank.load(None)?,
    };
    let trial_seed = mix(scenario.rng_seed, seed, 0);
    let focal = scenario.focal();
    let goal = scenario.goal;

    let mut state = scenario.start;
    let mut known: BTreeMap<usize, UncertainCuboid> = BTreeMap::new();
    let mut path = KinematicSamples::default();
    let mut t_offset = 0.0;
    let mut metrics = RunMetrics {
        success: false,
        smoothness: 0.0,
        compute_seconds: 0.0,
        traversed_length: 0.0,
        min_gt_clearance: min_sdf(&scenario.buildings, &state.position),
        replans: 0,
        planner_failures: 0,
        failure: None,
    };
    let mut compute_total = 0.0;
    let mut active: Option<(Plan, f64)> = None;
    let mut reached = (state.position - goal).norm() <= trial.goal_tolerance;
    let mut collided = false;

    for replan in 0..trial.max_replans {
        if reached {
            break;
        }
        let round = replan as u64;
        // perception from the current position, looking toward the goal
        let pos = state.position;
        let mut target = Vector3::new(goal.x, goal.y, pos.z);
        if (target - pos).norm() < 1e-6 {
            target = pos + Vector3::x();
        }
        let camera = CameraModel::look_at(
            pos,
            target,
            focal,
            scenario.camera.image_width,
            scenario.camera.image_height,
        )?;
        let perceived = synthesize_cloud(
            &scenario.buildings,
            trial.nominal.facade_thickness,
            &camera,
            &trial.sensor,
            mix(trial_seed, round, 1),
        )
        .and_then(|cloud| {
            estimate_nominal(
                &cloud,
                &camera,
                &scenario.buildings,
                &trial.nominal,
                &bank,
                mix(trial_seed, round, 2),
            )
        });
        match perceived {
            Ok(est) => {
                for f in est.faces {
                    known.insert(f.face_id, f.nominal);
                }
            }
            Err(Error::NoVisibleFace) => {}
            Err(e) => {
                metrics.failure = Some(format!("perception: {e}"));
                break;
            }
        }
        let world: Vec<UncertainCuboid> = known
            .values()
            .filter(|c| segment_distance(c, &pos, &goal) <= trial.planning_radius)
            .cloned()
            .collect();

        let planner_seed = mix(trial_seed, round, 3);
        let t0 = Instant::now();
        let planned = match planner {
            PlannerKind::Cem => {
                let mut c = cfg.cem;
                c.rng_seed = planner_seed;
                c.band = scenario.band;
                let duration = default_duration(&pos, &goal, scenario.limits);
                plan_cem(&world, &state, &goal, scenario.limits, duration, &c)
                    .map(|p| Plan::Poly(p.trajectory))
            }
            PlannerKind::Scp | PlannerKind::Det => {
                let mut c = cfg.scp;
                c.rng_seed = planner_seed;
                c.band = scenario.band;
                c.limits = scenario.limits;
                let dt = trial.waypoint_dt;
                let left = active.as_ref().map_or(0.0, |(p, from)| p.duration() - from);
                let duration = ((goal - pos).norm()
                    / (trial.scp_speed_fraction * scenario.limits.v_max))
                    .max(left);
                let n = ((duration / dt).ceil() as usize + 1).max(8);
                plan_scp(&world, &state, &BoundaryState::at_rest(goal), &c, n, dt)
                    .map(|p| Plan::Waypoints(p.trajectory))
            }
        };
        compute_total += t0.elapsed().as_secs_f64();
        metrics.replans += 1;
        match planned {
            Ok(p) => active = Some((p, 0.0)),
            Err(e) => {
                // keep flying the previous plan while it lasts
                metrics.planner_failures += 1;
                let usable = active
                    .as_ref()
                    .is_some_and(|(p, from)| p.duration() - from > 1e-9);
                if !usable {
                    metrics.failure = Some(format!("planner: {e}"));
                    break;
                }
            }
        }
        let Some((plan, from)) = active.as_mut() else {
            break;
        };

        let remaining = plan.duration() - *from;
        let horizon = if remaining <= trial.replan_interval * 1.5 {
            remaining
        } else {
            trial.replan_interval
        };
        let exec = execute(plan, *from, horizon, trial.audit_step);
        *from += exec.samples.times.last().copied().unwrap_or(0.0);
        // audit against ground truth, stopping at the first contact
        let mut prev = exec.samples.positions[0];
        for (i, p) in exec.samples.positions.iter().enumerate() {
            if i == 0 && !path.times.is_empty() {
                continue;
            }
            let clearance = min_sdf(&scenario.buildings, p);
            metrics.traversed_length += (p - prev).norm();
            prev = *p;
            metrics.min_gt_clearance = metrics.min_gt_clearance.min(clearance);
            path.times.push(t_offset + exec.samples.times[i]);
            path.positions.push(*p);
            path.velocities.push(exec.samples.velocities[i]);
            path.accelerations.push(exec.samples.accelerations[i]);
            path.jerks.push(exec.samples.jerks[i]);
            if clearance <= 0.0 {
                collided = true;
                break;
            }
        }
        if collided {
            metrics.failure = Some("collision with ground truth".into());
            break;
        }
        metrics.smoothness += exec.smoothness;
        t_offset += exec.samples.times.last().copied().unwrap_or(0.0);
        state = exec.end;
        reached = (state.position - goal).norm() <= trial.goal_tolerance;
    }
    if !reached && metrics.failure.is_none() {
        metrics.failure = Some(format!(
            "goal not reached after {} replans",
            trial.max_replans
        ));
    }
    if metrics.min_gt_clearance.is_infinite() {
        metrics.min_gt_clearance = f64::MAX;
    }
    metrics.success = reached && !collided && metrics.min_gt_clearance > 0.0;
    metrics.compute_seconds = if metrics.replans > 0 {
        compute_total / metrics.replans as f64
    } else {
        0.0
    };
    Ok(TrialOutcome { metrics, path })
}
