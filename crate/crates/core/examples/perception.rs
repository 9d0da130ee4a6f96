//! Synthetic view of a street block, RANSAC facades, and estimation errors.

use mmd_planner::harness::{generate_square_street, StreetLayout};
use mmd_planner::perception::{building_faces, estimate_nominal, synthesize_cloud, CameraModel};
use mmd_planner::uncertainty::ErrorBank;
use nalgebra::Vector3;

fn main() -> mmd_planner::Result<()> {
    let s = generate_square_street(1, &StreetLayout::default())?;
    let trial = &s.config.trial;
    let camera = CameraModel::look_at(
        s.start.position,
        Vector3::new(s.goal.x, s.goal.y, s.start.position.z),
        s.focal(),
        s.camera.image_width,
        s.camera.image_height,
    )?;
    let cloud = synthesize_cloud(
        &s.buildings,
        trial.nominal.facade_thickness,
        &camera,
        &trial.sensor,
        5,
    )?;
    println!(
        "{} points on {} faces",
        cloud.points.len(),
        cloud.label_set().len()
    );
    let est = estimate_nominal(
        &cloud,
        &camera,
        &s.buildings,
        &trial.nominal,
        &ErrorBank::zero(),
        6,
    )?;
    let faces = building_faces(&s.buildings, trial.nominal.facade_thickness);
    for f in &est.faces {
        let truth = faces
            .iter()
            .find(|t| t.id == f.face_id)
            .expect("known face")
            .facade;
        let got = f.nominal.nominal;
        println!(
            "face {:>3}: {:>4} inliers, origin error {:.3} m, yaw error {:.4} rad, length error {:.3} m",
            f.face_id,
            f.fit.inliers.len(),
            (got.pose.origin - truth.pose.origin).norm(),
            (got.pose.yaw - truth.pose.yaw).sin().abs(),
            got.size.length - truth.size.length
        );
    }
    println!("skipped faces: {:?}", est.skipped);
    Ok(())
}
