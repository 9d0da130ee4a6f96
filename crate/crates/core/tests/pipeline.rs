use std::path::Path;
use std::process::Command;

use mmd_planner::geometry::Cuboid;
use mmd_planner::harness::{
    empty_scenario, generate_square_street, one_wall_scenario, run_trial, PlannerKind, RunMetrics,
    Scenario, StreetLayout,
};
use mmd_planner::perception::{
    estimate_nominal, synthesize_cloud, CameraModel, NominalConfig, SensorConfig,
};
use mmd_planner::planner_cem::{default_duration, plan_cem, CemConfig};
use mmd_planner::trajectory::{BoundaryState, Limits};
use mmd_planner::uncertainty::{default_bank, ErrorBank, UncertainCuboid};
use nalgebra::{Vector2, Vector3};

fn mmdplan(args: &[&str], out: &Path) -> std::process::Output {
    let output = Command::new(env!("CARGO_BIN_EXE_mmdplan"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn cli_gen_plan_and_banks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mmdplan(&["gen", "--kind", "one-wall", "--seed", "3"], d);
    let scenario = d.join("scenario.json");
    assert_eq!(
        Scenario::load(&scenario).unwrap(),
        one_wall_scenario(3).unwrap()
    );

    let plan_dir = d.join("plan");
    let sc = scenario.to_str().unwrap();
    mmdplan(
        &["plan", "--scenario", sc, "--planner", "scp", "--seed", "1"],
        &plan_dir,
    );
    let metrics: RunMetrics =
        serde_json::from_str(&std::fs::read_to_string(plan_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert!(metrics.success);
    let csv = std::fs::read_to_string(plan_dir.join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 10);

    mmdplan(
        &["bank-gen", "--seed", "4", "--size", "40"],
        &d.join("bank"),
    );
    let bank: ErrorBank =
        serde_json::from_str(&std::fs::read_to_string(d.join("bank/bank.json")).unwrap()).unwrap();
    assert_eq!(bank, default_bank(4, 40).unwrap());

    mmdplan(&["gen", "--seed", "2"], &d.join("street"));
    let street = d.join("street/scenario.json");
    mmdplan(
        &[
            "calibrate",
            "--scenario",
            street.to_str().unwrap(),
            "--seeds",
            "30",
        ],
        &d.join("cal"),
    );
    let cal: ErrorBank =
        serde_json::from_str(&std::fs::read_to_string(d.join("cal/bank.json")).unwrap()).unwrap();
    assert!(cal.validate().is_ok() && cal.yaw_samples.len() > 1);
}

#[test]
fn cli_config_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = one_wall_scenario(0).unwrap().config;
    cfg.trial.max_replans = 7;
    let cfg_path = d.join("cfg.json");
    cfg.save(&cfg_path).unwrap();
    mmdplan(
        &[
            "gen",
            "--kind",
            "one-wall",
            "--config",
            cfg_path.to_str().unwrap(),
        ],
        d,
    );
    let s = Scenario::load(&d.join("scenario.json")).unwrap();
    assert_eq!(s.config.trial.max_replans, 7);
}

#[test]
fn cli_rejects_unknown_planner() {
    let status = Command::new(env!("CARGO_BIN_EXE_mmdplan"))
        .args(["plan", "--scenario", "x.json", "--planner", "rrt"])
        .output()
        .unwrap()
        .status;
    assert!(!status.success());
}

#[test]
fn trials_are_deterministic() {
    let s = one_wall_scenario(5).unwrap();
    for planner in PlannerKind::ALL {
        let a = run_trial(&s, planner, 11).unwrap();
        let b = run_trial(&s, planner, 11).unwrap();
        assert_eq!(a.path, b.path, "{planner}");
        assert_eq!(a.metrics.success, b.metrics.success);
        assert_eq!(a.metrics.smoothness, b.metrics.smoothness);
        assert_eq!(a.metrics.min_gt_clearance, b.metrics.min_gt_clearance);
    }
}

#[test]
fn empty_world_missions_succeed() {
    let s = empty_scenario(Vector3::new(0.0, 0.0, 10.0), Vector3::new(40.0, 10.0, 12.0)).unwrap();
    for planner in PlannerKind::ALL {
        let out = run_trial(&s, planner, 0).unwrap();
        assert!(out.metrics.success, "{planner}: {:?}", out.metrics.failure);
        let end = *out.path.positions.last().unwrap();
        assert!((end - s.goal).norm() <= s.config.trial.goal_tolerance + 1e-9);
    }
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_square_street(9, &StreetLayout::default()).unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    s.save(&a).unwrap();
    Scenario::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn nominal_estimate_is_rigidly_equivariant() {
    let building = Cuboid::from_parts([20.0, 3.0], 0.3, 16.0, 25.0, 12.0).unwrap();
    let camera = CameraModel::look_at(
        Vector3::new(0.0, 0.0, 8.0),
        Vector3::new(20.0, 3.0, 8.0),
        320.0,
        640.0,
        480.0,
    )
    .unwrap();
    let sensor = SensorConfig {
        noise: 0.0,
        ..SensorConfig::default()
    };
    let cfg = NominalConfig {
        pixel_noise: 0.0,
        ..NominalConfig::default()
    };
    let estimate = |b: &[Cuboid], cam: &CameraModel| {
        let cloud = synthesize_cloud(b, cfg.facade_thickness, cam, &sensor, 1).unwrap();
        estimate_nominal(&cloud, cam, b, &cfg, &ErrorBank::zero(), 2).unwrap()
    };
    let base = estimate(&[building], &camera);
    assert!(!base.faces.is_empty());
    let (yaw, shift) = (1.1, Vector2::new(-35.0, 12.0));
    let moved = estimate(
        &[building.transformed(yaw, shift)],
        &camera.transformed(yaw, shift),
    );
    assert_eq!(base.faces.len(), moved.faces.len());
    for (a, b) in base.faces.iter().zip(&moved.faces) {
        let expect = a.nominal.nominal.transformed(yaw, shift);
        let got = b.nominal.nominal;
        assert!((expect.pose.origin - got.pose.origin).norm() < 1e-6);
        assert!((expect.pose.yaw - got.pose.yaw).sin().abs() < 1e-6);
        assert!((expect.size.length - got.size.length).abs() < 1e-6);
        assert!((expect.size.height - got.size.height).abs() < 1e-6);
        assert!(b.fit.normal.z.abs() < 1e-6);
    }
}

fn cem_case(world: &[UncertainCuboid], cfg: &CemConfig) -> mmd_planner::planner_cem::CemPlan {
    let start = BoundaryState::at_rest(Vector3::new(0.0, 0.0, 5.0));
    let goal = Vector3::new(30.0, 0.0, 5.0);
    let limits = Limits::new(5.0, 5.0).unwrap();
    let duration = default_duration(&start.position, &goal, limits);
    plan_cem(world, &start, &goal, limits, duration, cfg).unwrap()
}

#[test]
fn cem_trace_invariants() {
    let wall = Cuboid::from_parts([15.0, 0.0], 0.0, 20.0, 10.0, 0.2).unwrap();
    let world = vec![UncertainCuboid::new(wall, default_bank(7, 200).unwrap())];
    for seed in 0..10 {
        let cfg = CemConfig {
            rng_seed: seed,
            ..CemConfig::default()
        };
        let plan = cem_case(&world, &cfg);
        let tr = &plan.trace;
        assert!(tr.best_cost.windows(2).all(|w| w[1] <= w[0]));
        assert!(tr
            .cov_trace
            .iter()
            .skip(2)
            .all(|c| *c <= tr.cov_trace[0] * (1.0 + 1e-12)));
    }
}

#[test]
fn cem_without_mmd_ignores_obstacles() {
    let aside = Cuboid::from_parts([15.0, 25.0], 0.0, 10.0, 10.0, 0.2).unwrap();
    let world = vec![UncertainCuboid::new(aside, default_bank(7, 200).unwrap())];
    let cfg = CemConfig {
        mmd_weight: 0.0,
        rng_seed: 3,
        ..CemConfig::default()
    };
    let with = cem_case(&world, &cfg);
    let without = cem_case(&[], &cfg);
    assert!((with.cost - without.cost).abs() <= 1e-9 * without.cost.abs().max(1.0));
}
