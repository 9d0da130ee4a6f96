//! Error-bank calibration from simulated perception of a scenario.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Cuboid;
use crate::perception::{building_faces, estimate_nominal, synthesize_cloud, CameraModel};
use crate::uncertainty::{calibrate_bank, ErrorBank};

use super::scenario::Scenario;

/// `(estimated, truth)` facade pairs from one view per seed.
///
/// Each view sits at a uniform point of the start-goal segment at the start
/// altitude and looks in a uniform horizontal direction. Views that see no
/// face contribute nothing.
pub fn calibration_pairs(scenario: &Scenario, seeds: &[u64]) -> Result<Vec<(Cuboid, Cuboid)>> {
    let trial = &scenario.config.trial;
    let faces = building_faces(&scenario.buildings, trial.nominal.facade_thickness);
    let a = scenario.start.position;
    let b = Vector3::new(scenario.goal.x, scenario.goal.y, a.z);
    let mut pairs = Vec::new();
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let position = a + (b - a) * rng.random::<f64>();
        let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let target = position + Vector3::new(heading.cos(), heading.sin(), 0.0);
        let camera = CameraModel::look_at(
            position,
            target,
            scenario.focal(),
            scenario.camera.image_width,
            scenario.camera.image_height,
        )?;
        let cloud = match synthesize_cloud(
            &scenario.buildings,
            trial.nominal.facade_thickness,
            &camera,
            &trial.sensor,
            rng.random(),
        ) {
            Ok(c) => c,
            Err(Error::NoVisibleFace) => continue,
            Err(e) => return Err(e),
        };
        let estimate = estimate_nominal(
            &cloud,
            &camera,
            &scenario.buildings,
            &trial.nominal,
            &ErrorBank::zero(),
            rng.random(),
        )?;
        for f in estimate.faces {
            if let Some(truth) = faces.iter().find(|t| t.id == f.face_id) {
                pairs.push((f.nominal.nominal, truth.facade));
            }
        }
    }
    Ok(pairs)
}

/// Calibrates an error bank from [`calibration_pairs`].
pub fn calibrate_scenario(scenario: &Scenario, seeds: &[u64]) -> Result<ErrorBank> {
    calibrate_bank(&calibration_pairs(scenario, seeds)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_square_street, StreetLayout};

    #[test]
    fn noisy_views_give_non_degenerate_bank() {
        let s = generate_square_street(3, &StreetLayout::default()).unwrap();
        let seeds: Vec<u64> = (0..40).collect();
        let bank = calibrate_scenario(&s, &seeds).unwrap();
        assert!(bank.yaw_samples.len() >= 2);
        assert!(bank.yaw_samples.iter().any(|x| *x != bank.yaw_samples[0]));
        assert!(bank.size_samples.iter().any(|x| *x != bank.size_samples[0]));
        assert!(bank
            .origin_samples
            .iter()
            .any(|x| *x != bank.origin_samples[0]));
    }

    #[test]
    fn noiseless_views_give_zero_errors() {
        let mut s = generate_square_street(3, &StreetLayout::default()).unwrap();
        s.config.trial.sensor.noise = 0.0;
        s.config.trial.nominal.pixel_noise = 0.0;
        let pairs = calibration_pairs(&s, &(0..20).collect::<Vec<_>>()).unwrap();
        assert!(!pairs.is_empty());
        for (est, truth) in pairs {
            assert!((est.pose.origin - truth.pose.origin).norm() < 1e-6);
            assert!((est.size.length - truth.size.length).abs() < 1e-6);
        }
    }
}
