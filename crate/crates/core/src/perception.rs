//! Synthetic perception front end.
//!
//! Ground-truth building faces are sampled into a sparse, depth-noisy labeled
//! point cloud. Each label is fitted with RANSAC, the face corners are
//! back-projected from (noisy) pixel locations onto the fitted plane, and the
//! result is reduced to a nominal facade cuboid.

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cuboid, CuboidSize, GroundPose2D};
use crate::uncertainty::{ErrorBank, UncertainCuboid};

/// Pinhole camera with a world-from-camera pose.
///
/// Camera axes: x right, y down, z along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: Matrix3<f64>,
    /// Columns are the camera axes expressed in the world frame.
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub image_width: f64,
    pub image_height: f64,
}

impl CameraModel {
    /// Camera at `position` looking at `target` with the world z-axis up.
    pub fn look_at(
        position: Vector3<f64>,
        target: Vector3<f64>,
        focal: f64,
        image_width: f64,
        image_height: f64,
    ) -> Result<Self> {
        if !(focal > 0.0) {
            return Err(Error::InvalidInput("focal length must be positive".into()));
        }
        let forward = (target - position)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("camera target equals position".into()))?;
        let right = forward
            .cross(&Vector3::z())
            .try_normalize(1e-9)
            .ok_or_else(|| Error::Degenerate("camera looks straight up or down".into()))?;
        let down = forward.cross(&right);
        let intrinsics = Matrix3::new(
            focal,
            0.0,
            image_width / 2.0,
            0.0,
            focal,
            image_height / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Ok(Self {
            intrinsics,
            rotation: Matrix3::from_columns(&[right, down, forward]),
            position,
            image_width,
            image_height,
        })
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// World point expressed in the camera frame.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.position)
    }

    /// Pixel coordinates of a world point, `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        let pc = self.to_camera(p);
        if pc.z <= 1e-9 {
            return None;
        }
        let h = self.intrinsics * (pc / pc.z);
        Some(Vector2::new(h.x, h.y))
    }

    pub fn in_image(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.image_width && px.y <= self.image_height
    }

    /// `K⁻¹ x̃` for a pixel, rotated into the world frame (camera-z component 1).
    pub fn pixel_ray(&self, px: &Vector2<f64>) -> Vector3<f64> {
        let fx = self.intrinsics[(0, 0)];
        let fy = self.intrinsics[(1, 1)];
        let s = self.intrinsics[(0, 1)];
        let cx = self.intrinsics[(0, 2)];
        let cy = self.intrinsics[(1, 2)];
        let y = (px.y - cy) / fy;
        let x = (px.x - cx - s * y) / fx;
        self.rotation * Vector3::new(x, y, 1.0)
    }

    /// Applies a planar rigid motion to the camera pose.
    pub fn transformed(&self, yaw: f64, translation: Vector2<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let position = rot * self.position + Vector3::new(translation.x, translation.y, 0.0);
        Self {
            rotation: rot.matrix() * self.rotation,
            position,
            ..*self
        }
    }
}

/// One vertical face of a ground-truth building.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    /// `4 · building + side`.
    pub id: usize,
    pub building: usize,
    /// Thin facade cuboid: yaw is the outward normal, length the face width.
    pub facade: Cuboid,
    /// Bottom-left, bottom-right, top-right, top-left (seen from outside).
    pub corners: [Vector3<f64>; 4],
}

impl Face {
    pub fn normal(&self) -> Vector3<f64> {
        let n = self.facade.pose.normal();
        Vector3::new(n.x, n.y, 0.0)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.facade.center()
    }

    pub fn area(&self) -> f64 {
        self.facade.size.length * self.facade.size.height
    }
}

/// The four vertical faces of every building, as facades of `thickness`.
pub fn building_faces(buildings: &[Cuboid], thickness: f64) -> Vec<Face> {
    let mut faces = Vec::with_capacity(buildings.len() * 4);
    for (b, building) in buildings.iter().enumerate() {
        let n = building.pose.normal();
        let t = building.pose.tangent();
        let h = building.size.half_extents();
        let sides = [
            (n, building.size.length, h.x),
            (t, building.size.thickness, h.y),
            (-n, building.size.length, h.x),
            (-t, building.size.thickness, h.y),
        ];
        for (side, (normal, width, offset)) in sides.into_iter().enumerate() {
            let center = building.pose.origin + normal * offset;
            let yaw = normal.y.atan2(normal.x);
            let facade = Cuboid::new(
                GroundPose2D::new(center, yaw),
                CuboidSize {
                    length: width,
                    height: building.size.height,
                    thickness,
                },
            );
            let tangent = facade.pose.tangent();
            let left = center - tangent * (width / 2.0);
            let right = center + tangent * (width / 2.0);
            let hgt = building.size.height;
            faces.push(Face {
                id: 4 * b + side,
                building: b,
                facade,
                corners: [
                    Vector3::new(left.x, left.y, 0.0),
                    Vector3::new(right.x, right.y, 0.0),
                    Vector3::new(right.x, right.y, hgt),
                    Vector3::new(left.x, left.y, hgt),
                ],
            });
        }
    }
    faces
}

/// Sensor sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Triangulation noise std at the reference depth, meters.
    pub noise: f64,
    /// Std of the relative depth-scale error shared by one observation.
    pub scale_noise: f64,
    /// Expected key points per square meter of visible face.
    pub density: f64,
    /// Faces whose center is farther than this are not observed.
    pub max_range: f64,
    /// Faces seen at a larger angle between their normal and the horizontal
    /// line of sight are not observed, radians.
    pub max_incidence: f64,
    /// Depth at which `noise` applies; the std scales linearly with depth.
    pub reference_depth: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            noise: 0.05,
            scale_noise: 0.0,
            density: 0.05,
            max_range: 60.0,
            max_incidence: 75f64.to_radians(),
            reference_depth: 10.0,
        }
    }
}

/// Triangulated key points labeled with their source face id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCloud {
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledCloud {
    /// Points carrying `label`, in cloud order.
    pub fn cluster(&self, label: usize) -> Vec<Vector3<f64>> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Distinct labels in ascending order.
    pub fn label_set(&self) -> Vec<usize> {
        let mut labels = self.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

const VISIBILITY_GRID: usize = 8;

/// Faces observed by `camera`: facing it within `max_incidence`, in range,
/// entirely in front of the image plane and overlapping the image.
pub fn visible_faces<'a>(
    faces: &'a [Face],
    camera: &CameraModel,
    sensor: &SensorConfig,
) -> Vec<&'a Face> {
    faces
        .iter()
        .filter(|f| {
            let c = f.center();
            let to_cam = camera.position - c;
            let level = Vector3::new(to_cam.x, to_cam.y, 0.0);
            let facing = f.normal().dot(&level);
            if facing <= level.norm() * sensor.max_incidence.cos()
                || to_cam.norm() > sensor.max_range
            {
                return false;
            }
            if f.corners.iter().any(|p| camera.to_camera(p).z <= 0.5) {
                return false;
            }
            let [a, b, _, d] = f.corners;
            (0..=VISIBILITY_GRID).any(|i| {
                (0..=VISIBILITY_GRID).any(|j| {
                    let u = i as f64 / VISIBILITY_GRID as f64;
                    let v = j as f64 / VISIBILITY_GRID as f64;
                    let p = a + (b - a) * u + (d - a) * v;
                    camera.project(&p).is_some_and(|px| camera.in_image(&px))
                })
            })
        })
        .collect()
}

/// Samples depth-noisy key points on every face visible from `camera`.
///
/// Every point's depth is first scaled by one factor `1 + ε`,
/// `ε ~ N(0, scale_noise²)`, then perturbed independently along its ray.
pub fn synthesize_cloud(
    buildings: &[Cuboid],
    facade_thickness: f64,
    camera: &CameraModel,
    sensor: &SensorConfig,
    rng_seed: u64,
) -> Result<LabeledCloud> {
    if !(sensor.density > 0.0) {
        return Err(Error::InvalidInput("point density must be positive".into()));
    }
    if !(sensor.noise >= 0.0 && sensor.scale_noise >= 0.0) {
        return Err(Error::InvalidInput("noise must be non-negative".into()));
    }
    let faces = building_faces(buildings, facade_thickness);
    let visible = visible_faces(&faces, camera, sensor);
    if visible.is_empty() {
        return Err(Error::NoVisibleFace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let scale = if sensor.scale_noise > 0.0 {
        1.0 + sensor.scale_noise * unit.sample(&mut rng)
    } else {
        1.0
    };
    let mut cloud = LabeledCloud::default();
    for face in visible {
        let expected = sensor.density * face.area();
        let count = Poisson::new(expected)
            .map_err(|e| Error::InvalidInput(format!("point count: {e}")))?
            .sample(&mut rng) as usize;
        let tangent = face.facade.pose.tangent();
        let base = face.center();
        for _ in 0..count {
            let u = rng.random_range(-0.5..0.5) * face.facade.size.length;
            let z = rng.random_range(0.0..1.0) * face.facade.size.height;
            let p = Vector3::new(base.x + tangent.x * u, base.y + tangent.y * u, z);
            let ray = p - camera.position;
            let depth = ray.norm();
            let std = sensor.noise * depth / sensor.reference_depth;
            let offset: f64 = unit.sample(&mut rng) * std;
            let noisy = if std > 0.0 || scale != 1.0 {
                camera.position + ray * scale + ray / depth * offset
            } else {
                p
            };
            cloud.points.push(noisy);
            cloud.labels.push(face.id);
        }
    }
    Ok(cloud)
}

/// RANSAC hypothesis budget and inlier threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub threshold: f64,
    pub iterations: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            iterations: 200,
        }
    }
}

/// Plane `n·x + offset = 0` with its inliers and (optionally) its corners.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub inliers: Vec<usize>,
    pub corners: Option<[Vector3<f64>; 4]>,
}

impl PlaneFit {
    pub fn residual(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

fn plane_through(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let scale = (b - a).norm() * (c - a).norm();
    if scale == 0.0 || n.norm() <= 1e-12 * scale {
        return None;
    }
    let n = n.normalize();
    Some((n, -n.dot(a)))
}

/// Least-squares plane through `points` (smallest principal axis).
fn least_squares_plane(points: &[Vector3<f64>]) -> (Vector3<f64>, f64) {
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let idx = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(idx).into_owned().normalize();
    (n, -n.dot(&centroid))
}

fn inliers_of(
    points: &[Vector3<f64>],
    n: &Vector3<f64>,
    d: f64,
    threshold: f64,
) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut sq = 0.0;
    for (i, p) in points.iter().enumerate() {
        let r = n.dot(p) + d;
        if r.abs() <= threshold {
            idx.push(i);
            sq += r * r;
        }
    }
    let rms = if idx.is_empty() {
        f64::INFINITY
    } else {
        (sq / idx.len() as f64).sqrt()
    };
    (idx, rms)
}

fn all_collinear(points: &[Vector3<f64>]) -> bool {
    let a = points[0];
    let Some(b) = points.iter().find(|p| (*p - a).norm() > 1e-12) else {
        return true;
    };
    let dir = (b - a).normalize();
    points
        .iter()
        .all(|p| (p - a).cross(&dir).norm() <= 1e-9 * (1.0 + (p - a).norm()))
}

/// RANSAC plane fit with least-squares refinement over the inliers.
///
/// Hypotheses are ranked by inlier count, then by RMS inlier residual, then by
/// hypothesis index. The normal is oriented toward `viewpoint`.
pub fn ransac_plane(
    points: &[Vector3<f64>],
    cfg: &RansacConfig,
    viewpoint: &Vector3<f64>,
    rng_seed: u64,
) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "RANSAC needs ≥ 3 points, got {}",
            points.len()
        )));
    }
    if all_collinear(points) {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = points.len();
    let mut best: Option<(usize, f64, Vector3<f64>, f64)> = None;
    for _ in 0..cfg.iterations.max(1) {
        // draw indices unconditionally so the hypothesis stream depends only on the seed
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let Some((normal, offset)) = plane_through(&points[i], &points[j], &points[k]) else {
            continue;
        };
        let (inl, rms) = inliers_of(points, &normal, offset, cfg.threshold);
        let better = match &best {
            None => true,
            Some((count, best_rms, _, _)) => {
                inl.len() > *count || (inl.len() == *count && rms < *best_rms)
            }
        };
        if better {
            best = Some((inl.len(), rms, normal, offset));
        }
    }
    let (mut normal, mut offset) = match best {
        Some((_, _, n, d)) => (n, d),
        None => {
            // every random triple was degenerate: fall back to the global fit
            least_squares_plane(points)
        }
    };
    let (mut inliers, _) = inliers_of(points, &normal, offset, cfg.threshold);
    if inliers.len() >= 3 {
        let subset: Vec<Vector3<f64>> = inliers.iter().map(|&i| points[i]).collect();
        let (rn, rd) = least_squares_plane(&subset);
        let (refined, _) = inliers_of(points, &rn, rd, cfg.threshold);
        if refined.len() >= inliers.len() {
            normal = rn;
            offset = rd;
            inliers = refined;
        }
    }
    if normal.dot(viewpoint) + offset < 0.0 {
        normal = -normal;
        offset = -offset;
    }
    Ok(PlaneFit {
        normal,
        offset,
        inliers,
        corners: None,
    })
}

/// Back-projects mask corner pixels onto the fitted plane.
///
/// With `r = K⁻¹ x̃` in the world frame and the plane offset expressed relative
/// to the camera center, the depth is `|(n·C + d) / (n·r)|` and the corner is
/// `C + depth · r`.
pub fn back_project_corners(
    fit: &PlaneFit,
    camera: &CameraModel,
    mask_corners: &[Vector2<f64>; 4],
) -> Result<[Vector3<f64>; 4]> {
    let camera_offset = fit.normal.dot(&camera.position) + fit.offset;
    let mut out = [Vector3::zeros(); 4];
    for (slot, px) in out.iter_mut().zip(mask_corners) {
        let ray = camera.pixel_ray(px);
        let alignment = fit.normal.dot(&ray);
        if alignment.abs() <= 1e-6 * ray.norm() {
            return Err(Error::Degenerate(format!(
                "corner ray at pixel ({:.1}, {:.1}) is parallel to the plane",
                px.x, px.y
            )));
        }
        let depth = (camera_offset / alignment).abs();
        *slot = camera.position + ray * depth;
    }
    Ok(out)
}

/// Nominal-estimation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalConfig {
    pub ransac: RansacConfig,
    /// Std of the pixel noise added to projected mask corners.
    pub pixel_noise: f64,
    /// Thickness assigned to every estimated facade.
    pub facade_thickness: f64,
    /// Faces with a back-projected corner farther than this from the camera
    /// are rejected, meters.
    pub max_corner_depth: f64,
}

impl Default for NominalConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            pixel_noise: 2.0,
            facade_thickness: 0.2,
            max_corner_depth: 100.0,
        }
    }
}

/// A face estimate: its label, plane fit (with corners) and nominal cuboid.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceEstimate {
    pub face_id: usize,
    pub fit: PlaneFit,
    pub nominal: UncertainCuboid,
}

/// Result of nominal estimation, with labels skipped for lack of points or an
/// implausible reconstruction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NominalEstimate {
    pub faces: Vec<FaceEstimate>,
    pub skipped: Vec<usize>,
}

impl NominalEstimate {
    pub fn uncertain_cuboids(&self) -> Vec<UncertainCuboid> {
        self.faces.iter().map(|f| f.nominal.clone()).collect()
    }
}

/// Reduces back-projected corners and a fitted normal to a facade cuboid.
pub fn cuboid_from_corners(
    normal: &Vector3<f64>,
    corners: &[Vector3<f64>; 4],
    thickness: f64,
) -> Result<Cuboid> {
    let yaw = normal.y.atan2(normal.x);
    let centroid = corners.iter().sum::<Vector3<f64>>() / 4.0;
    let length = 0.5 * ((corners[1] - corners[0]).norm() + (corners[2] - corners[3]).norm());
    let height = 0.5 * ((corners[3] - corners[0]).norm() + (corners[2] - corners[1]).norm());
    Ok(Cuboid::new(
        GroundPose2D::new(Vector2::new(centroid.x, centroid.y), yaw),
        CuboidSize::new(length, height, thickness)?,
    ))
}

fn mix_seed(seed: u64, label: usize, stream: u64) -> u64 {
    seed ^ (label as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Fits every labeled cluster and builds its nominal facade.
///
/// Mask corners are simulated by projecting the ground-truth face corners and
/// adding Gaussian pixel noise; `bank` is attached to every nominal.
pub fn estimate_nominal(
    cloud: &LabeledCloud,
    camera: &CameraModel,
    buildings: &[Cuboid],
    cfg: &NominalConfig,
    bank: &ErrorBank,
    rng_seed: u64,
) -> Result<NominalEstimate> {
    let faces = building_faces(buildings, cfg.facade_thickness);
    let pixel = if cfg.pixel_noise > 0.0 {
        Some(
            Normal::new(0.0, cfg.pixel_noise)
                .map_err(|e| Error::InvalidInput(format!("pixel noise: {e}")))?,
        )
    } else {
        None
    };
    let mut out = NominalEstimate::default();
    for label in cloud.label_set() {
        let cluster = cloud.cluster(label);
        if cluster.len() < 3 {
            out.skipped.push(label);
            continue;
        }
        let face = faces
            .iter()
            .find(|f| f.id == label)
            .ok_or_else(|| Error::InvalidInput(format!("label {label} names no face")))?;
        let mut fit = ransac_plane(
            &cluster,
            &cfg.ransac,
            &camera.position,
            mix_seed(rng_seed, label, 1),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, label, 2));
        let mut mask = [Vector2::zeros(); 4];
        for (slot, corner) in mask.iter_mut().zip(&face.corners) {
            let px = camera.project(corner).ok_or_else(|| {
                Error::Degenerate(format!("corner of face {label} behind camera"))
            })?;
            let noise = match &pixel {
                Some(dist) => Vector2::new(dist.sample(&mut rng), dist.sample(&mut rng)),
                None => Vector2::zeros(),
            };
            *slot = px + noise;
        }
        let corners = match back_project_corners(&fit, camera, &mask) {
            Ok(c)
                if c.iter()
                    .all(|p| (p - camera.position).norm() <= cfg.max_corner_depth) =>
            {
                c
            }
            Ok(_) | Err(Error::Degenerate(_)) => {
                out.skipped.push(label);
                continue;
            }
            Err(e) => return Err(e),
        };
        fit.corners = Some(corners);
        let nominal = cuboid_from_corners(&fit.normal, &corners, cfg.facade_thickness)?;
        out.faces.push(FaceEstimate {
            face_id: label,
            fit,
            nominal: UncertainCuboid::new(nominal, bank.clone()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coplanar_points_fit_exactly() {
        let points: Vec<Vector3<f64>> = (0..50)
            .map(|i| Vector3::new((i % 7) as f64 * 1.3, (i / 7) as f64 * 0.9, 3.0))
            .collect();
        let fit = ransac_plane(&points, &RansacConfig::default(), &Vector3::zeros(), 4).unwrap();
        assert_abs_diff_eq!(fit.normal.z.abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.offset, -3.0 * fit.normal.z, epsilon = 1e-12);
        assert_eq!(fit.inliers.len(), 50);
    }

    #[test]
    fn minimal_sample() {
        let points = [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 0.0, 2.0),
            Vector3::new(0.0, 1.0, 1.0),
        ];
        let fit = ransac_plane(
            &points,
            &RansacConfig::default(),
            &Vector3::new(0.0, 0.0, 10.0),
            0,
        )
        .unwrap();
        for p in &points {
            assert_abs_diff_eq!(fit.residual(p), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        let two = [Vector3::zeros(), Vector3::x()];
        assert!(ransac_plane(&two, &RansacConfig::default(), &Vector3::zeros(), 0).is_err());
        let line: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0))
            .collect();
        assert!(matches!(
            ransac_plane(&line, &RansacConfig::default(), &Vector3::zeros(), 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn principal_ray_back_projection() {
        let cam = CameraModel::look_at(
            Vector3::new(0.0, 0.0, 5.0),
            Vector3::new(10.0, 0.0, 5.0),
            400.0,
            640.0,
            480.0,
        )
        .unwrap();
        // fronto-parallel plane x = 5, normal toward the camera
        let fit = PlaneFit {
            normal: -Vector3::x(),
            offset: 5.0,
            inliers: vec![],
            corners: None,
        };
        let pp = Vector2::new(320.0, 240.0);
        let c = back_project_corners(&fit, &cam, &[pp; 4]).unwrap();
        assert_abs_diff_eq!(c[0], Vector3::new(5.0, 0.0, 5.0), epsilon = 1e-12);
    }

    #[test]
    fn parallel_ray_is_degenerate() {
        let cam = CameraModel::look_at(
            Vector3::new(0.0, 0.0, 5.0),
            Vector3::new(10.0, 0.0, 5.0),
            400.0,
            640.0,
            480.0,
        )
        .unwrap();
        // plane y = 3 contains the optical axis direction
        let fit = PlaneFit {
            normal: Vector3::y(),
            offset: -3.0,
            inliers: vec![],
            corners: None,
        };
        let pp = Vector2::new(320.0, 240.0);
        assert!(matches!(
            back_project_corners(&fit, &cam, &[pp; 4]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn faces_of_axis_aligned_building() {
        let b = Cuboid::from_parts([0.0, 0.0], 0.0, 20.0, 30.0, 10.0).unwrap();
        let faces = building_faces(&[b], 0.2);
        assert_eq!(faces.len(), 4);
        // +x face at x = 5, 20 m wide
        assert_abs_diff_eq!(
            faces[0].facade.pose.origin,
            Vector2::new(5.0, 0.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(faces[0].facade.size.length, 20.0);
        // +y face at y = 10, 10 m wide
        assert_abs_diff_eq!(
            faces[1].facade.pose.origin,
            Vector2::new(0.0, 10.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(faces[1].facade.size.length, 10.0);
        for f in &faces {
            let c = cuboid_from_corners(&f.normal(), &f.corners, 0.2).unwrap();
            assert_abs_diff_eq!(c.pose.origin, f.facade.pose.origin, epsilon = 1e-12);
            assert_abs_diff_eq!(c.pose.yaw, f.facade.pose.yaw, epsilon = 1e-12);
            assert_abs_diff_eq!(c.size.length, f.facade.size.length, epsilon = 1e-12);
        }
    }
}
