//! Scenario files and the SquareStreet generator.

use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_sdf, Cuboid, CuboidSize, GroundPose2D};
use crate::mmd::SafetyBand;
use crate::perception::{CameraModel, NominalConfig, SensorConfig};
use crate::planner_cem::CemConfig;
use crate::planner_scp::ScpConfig;
use crate::trajectory::{BoundaryState, Limits};
use crate::uncertainty::{default_bank, ErrorBank};

/// Where a scenario's error bank comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankSource {
    /// No uncertainty.
    Zero,
    /// The synthetic mixture bank.
    Synthetic {
        seed: u64,
        size: usize,
    },
    /// A bank JSON file, relative paths resolved against the scenario file.
    File {
        path: PathBuf,
    },
    Inline {
        bank: ErrorBank,
    },
}

impl BankSource {
    pub fn load(&self, base_dir: Option<&Path>) -> Result<ErrorBank> {
        match self {
            Self::Zero => Ok(ErrorBank::zero()),
            Self::Synthetic { seed, size } => default_bank(*seed, *size),
            Self::File { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let bank: ErrorBank = serde_json::from_str(&std::fs::read_to_string(full)?)?;
                bank.validate()?;
                Ok(bank)
            }
            Self::Inline { bank } => {
                bank.validate()?;
                Ok(bank.clone())
            }
        }
    }
}

/// Receding-horizon execution and perception settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// Executed time between replans, seconds.
    pub replan_interval: f64,
    /// Distance at which the goal counts as reached, meters.
    pub goal_tolerance: f64,
    pub max_replans: usize,
    /// Waypoint spacing of the SCP planners, seconds.
    pub waypoint_dt: f64,
    /// Average speed of SCP plans as a fraction of `v_max`.
    pub scp_speed_fraction: f64,
    /// Only facades this close to the segment from the current position to
    /// the goal are handed to the planner, meters.
    pub planning_radius: f64,
    /// Time step of the ground-truth collision audit, seconds.
    pub audit_step: f64,
    pub sensor: SensorConfig,
    pub nominal: NominalConfig,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            replan_interval: 2.0,
            goal_tolerance: 0.5,
            max_replans: 60,
            waypoint_dt: 0.2,
            scp_speed_fraction: 0.5,
            planning_radius: 60.0,
            audit_step: 0.05,
            sensor: SensorConfig::default(),
            nominal: NominalConfig::default(),
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("replan_interval", self.replan_interval),
            ("goal_tolerance", self.goal_tolerance),
            ("waypoint_dt", self.waypoint_dt),
            ("scp_speed_fraction", self.scp_speed_fraction),
            ("planning_radius", self.planning_radius),
            ("audit_step", self.audit_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_replans == 0 {
            return Err(Error::InvalidInput("max_replans must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Planner and execution settings, loadable on their own with `--config`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub cem: CemConfig,
    pub scp: ScpConfig,
    pub trial: TrialConfig,
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// A ground-truth world with the mission and every planner setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub buildings: Vec<Cuboid>,
    pub start: BoundaryState,
    pub goal: Vector3<f64>,
    pub limits: Limits,
    pub band: SafetyBand,
    pub bank: BankSource,
    /// Intrinsics and image size; the pose is reset at every replan.
    pub camera: CameraModel,
    pub rng_seed: u64,
    pub config: HarnessConfig,
}

impl Scenario {
    /// Checks that start and goal keep `r_min` from every building.
    pub fn validate(&self) -> Result<()> {
        self.config.trial.validate()?;
        SafetyBand::new(self.band.r_min, self.band.r_max)?;
        Limits::new(self.limits.v_max, self.limits.a_max)?;
        for (name, p) in [("start", self.start.position), ("goal", self.goal)] {
            let d = min_sdf(&self.buildings, &p);
            if d < self.band.r_min {
                return Err(Error::InvalidInput(format!(
                    "{name} {p:?} is {d:.3} m from a building, below r_min {}",
                    self.band.r_min
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn focal(&self) -> f64 {
        self.camera.intrinsics[(0, 0)]
    }
}

/// One generated SquareStreet per seed, paired with that seed as trial seed.
pub fn square_street_suite(seeds: &[u64], layout: &StreetLayout) -> Result<Vec<(Scenario, u64)>> {
    seeds
        .iter()
        .map(|&seed| Ok((generate_square_street(seed, layout)?, seed)))
        .collect()
}

/// Layout parameters of the SquareStreet generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreetLayout {
    pub n_buildings: usize,
    /// Square site area, m².
    pub area: f64,
    /// Street corridor width, meters.
    pub street_width: f64,
    /// Half-side of the street-centerline square as a fraction of the site side.
    pub ring_fraction: f64,
    pub height_range: [f64; 2],
    pub footprint_range: [f64; 2],
    /// Minimum gap between building footprints, meters.
    pub gap: f64,
    pub flight_altitude: f64,
    /// Distance of start and goal from the south-east street crossing, meters.
    pub mission_offset: f64,
    /// Lower safety band of the generated scenario, meters.
    pub r_min: f64,
    pub max_attempts: usize,
}

impl Default for StreetLayout {
    fn default() -> Self {
        Self {
            n_buildings: 47,
            area: 160_000.0,
            street_width: 24.0,
            ring_fraction: 0.3,
            height_range: [20.0, 80.0],
            footprint_range: [8.0, 25.0],
            gap: 2.0,
            flight_altitude: 10.0,
            mission_offset: 50.0,
            r_min: 0.25,
            max_attempts: 100_000,
        }
    }
}

impl StreetLayout {
    /// A small block that a 0.25 m voxel grid covers within the default cap.
    pub fn compact() -> Self {
        Self {
            n_buildings: 8,
            area: 10_000.0,
            street_width: 12.0,
            height_range: [20.0, 40.0],
            footprint_range: [6.0, 12.0],
            mission_offset: 20.0,
            ..Self::default()
        }
    }
}

/// Axis-aligned footprint `[min, max]` of a building with yaw a multiple of π/2.
fn footprint(c: &Cuboid) -> (Vector2<f64>, Vector2<f64>) {
    let (lo, hi) = c.vertices().iter().fold(
        (
            Vector2::repeat(f64::INFINITY),
            Vector2::repeat(f64::NEG_INFINITY),
        ),
        |(lo, hi), v| {
            let p = Vector2::new(v.x, v.y);
            (lo.inf(&p), hi.sup(&p))
        },
    );
    (lo, hi)
}

fn boxes_overlap(
    a: &(Vector2<f64>, Vector2<f64>),
    b: &(Vector2<f64>, Vector2<f64>),
    margin: f64,
) -> bool {
    (0..2).all(|k| a.0[k] < b.1[k] + margin && b.0[k] < a.1[k] + margin)
}

/// Default mission camera: 640×480 with a 500 px focal length.
pub fn default_camera(start: &Vector3<f64>, goal: &Vector3<f64>) -> Result<CameraModel> {
    let target = if (goal.xy() - start.xy()).norm() > 1e-6 {
        *goal
    } else {
        start + Vector3::x()
    };
    CameraModel::look_at(
        *start,
        Vector3::new(target.x, target.y, start.z),
        500.0,
        640.0,
        480.0,
    )
}

/// Buildings along both sides of a square street loop. The mission turns the
/// south-east corner: start on the south street, goal on the east street.
pub fn generate_square_street(seed: u64, layout: &StreetLayout) -> Result<Scenario> {
    if layout.n_buildings == 0 {
        return Err(Error::InvalidInput("n_buildings must be ≥ 1".into()));
    }
    if !(layout.area > 0.0) {
        return Err(Error::InvalidInput("area must be positive".into()));
    }
    let side = layout.area.sqrt();
    let center = Vector2::repeat(side / 2.0);
    let ring = layout.ring_fraction * side;
    let half_w = layout.street_width / 2.0;
    // street corridors as boxes, extended through the corners
    let streets: Vec<(Vector2<f64>, Vector2<f64>)> = [
        (
            Vector2::new(-ring - half_w, -ring - half_w),
            Vector2::new(ring + half_w, -ring + half_w),
        ),
        (
            Vector2::new(-ring - half_w, ring - half_w),
            Vector2::new(ring + half_w, ring + half_w),
        ),
        (
            Vector2::new(-ring - half_w, -ring - half_w),
            Vector2::new(-ring + half_w, ring + half_w),
        ),
        (
            Vector2::new(ring - half_w, -ring - half_w),
            Vector2::new(ring + half_w, ring + half_w),
        ),
    ]
    .into_iter()
    .map(|(lo, hi)| (lo + center, hi + center))
    .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buildings: Vec<Cuboid> = Vec::with_capacity(layout.n_buildings);
    let mut boxes = Vec::with_capacity(layout.n_buildings);
    let [f_lo, f_hi] = layout.footprint_range;
    let [h_lo, h_hi] = layout.height_range;
    let mut attempts = 0;
    while buildings.len() < layout.n_buildings {
        attempts += 1;
        if attempts > layout.max_attempts {
            return Err(Error::Placement(format!(
                "placed {} of {} buildings after {} attempts",
                buildings.len(),
                layout.n_buildings,
                layout.max_attempts
            )));
        }
        // street 0..4 (S, N, W, E), side -1 (outer) / +1 (inner)
        let street: usize = rng.random_range(0..4);
        let inner = rng.random::<bool>();
        let length = rng.random_range(f_lo..=f_hi);
        let depth = rng.random_range(f_lo..=f_hi);
        let height = rng.random_range(h_lo..=h_hi);
        let along = rng.random_range(-ring..=ring);
        let setback = rng.random_range(0.0..3.0);
        let offset = half_w + setback + depth / 2.0;
        // outward unit vector of each street, from the ring center
        let outward = match street {
            0 => Vector2::new(0.0, -1.0),
            1 => Vector2::new(0.0, 1.0),
            2 => Vector2::new(-1.0, 0.0),
            _ => Vector2::new(1.0, 0.0),
        };
        let tangent = Vector2::new(-outward.y, outward.x);
        let line = center + outward * ring + tangent * along;
        let (origin, facing) = if inner {
            (line - outward * offset, outward)
        } else {
            (line + outward * offset, -outward)
        };
        let yaw = facing.y.atan2(facing.x);
        let building = Cuboid::new(
            GroundPose2D::new(origin, yaw),
            CuboidSize::new(length, height, depth)?,
        );
        let fp = footprint(&building);
        let inside_site = fp.0.x >= 0.0 && fp.0.y >= 0.0 && fp.1.x <= side && fp.1.y <= side;
        if !inside_site
            || streets.iter().any(|s| boxes_overlap(&fp, s, 0.0))
            || boxes.iter().any(|b| boxes_overlap(&fp, b, layout.gap))
        {
            continue;
        }
        boxes.push(fp);
        buildings.push(building);
    }

    let z = layout.flight_altitude;
    let m = layout.mission_offset;
    let start = Vector3::new(center.x + ring - m, center.y - ring, z);
    let goal = Vector3::new(center.x + ring, center.y - ring + m, z);
    let band = SafetyBand::new(layout.r_min, 1000.0)?;
    let limits = Limits::new(5.0, 5.0)?;
    let mut config = HarnessConfig::default();
    config.cem.band = band;
    config.scp.band = band;
    config.scp.limits = limits;
    let scenario = Scenario {
        name: "square_street".into(),
        buildings,
        start: BoundaryState::at_rest(start),
        goal,
        limits,
        band,
        bank: BankSource::Synthetic { seed: 7, size: 200 },
        camera: default_camera(&start, &goal)?,
        rng_seed: seed,
        config,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// One facade-like wall across the straight line from start to goal.
pub fn one_wall_scenario(seed: u64) -> Result<Scenario> {
    let wall = Cuboid::from_parts([15.0, 0.0], 0.0, 20.0, 10.0, 0.2)?;
    let start = Vector3::new(0.0, 0.0, 5.0);
    let goal = Vector3::new(30.0, 0.0, 5.0);
    let band = SafetyBand::new(1.0, 100.0)?;
    let limits = Limits::new(5.0, 5.0)?;
    let mut config = HarnessConfig::default();
    config.cem.band = band;
    config.scp.band = band;
    config.scp.limits = limits;
    let scenario = Scenario {
        name: "one_wall".into(),
        buildings: vec![wall],
        start: BoundaryState::at_rest(start),
        goal,
        limits,
        band,
        bank: BankSource::Synthetic { seed: 7, size: 200 },
        camera: default_camera(&start, &goal)?,
        rng_seed: seed,
        config,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// No buildings at all.
pub fn empty_scenario(start: Vector3<f64>, goal: Vector3<f64>) -> Result<Scenario> {
    let band = SafetyBand::new(1.0, 100.0)?;
    let limits = Limits::new(5.0, 5.0)?;
    let mut config = HarnessConfig::default();
    config.cem.band = band;
    config.scp.band = band;
    config.scp.limits = limits;
    let scenario = Scenario {
        name: "empty".into(),
        buildings: Vec::new(),
        start: BoundaryState::at_rest(start),
        goal,
        limits,
        band,
        bank: BankSource::Synthetic { seed: 7, size: 200 },
        camera: default_camera(&start, &goal)?,
        rng_seed: 0,
        config,
    };
    scenario.validate()?;
    Ok(scenario)
}
