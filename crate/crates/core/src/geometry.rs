//! Vertical cuboids posed in SE(2) and their analytical distance queries.
//!
//! Every obstacle is a cuboid standing on the ground plane `z = 0`. Its body
//! frame has the x-axis along the facade normal, the y-axis along the facade
//! tangent and the z-axis up, with the origin at the volumetric center.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let wrapped = angle.sin().atan2(angle.cos());
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Planar position and heading of a facade on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPose2D {
    pub origin: Vector2<f64>,
    pub yaw: f64,
}

impl GroundPose2D {
    pub fn new(origin: Vector2<f64>, yaw: f64) -> Self {
        Self {
            origin,
            yaw: wrap_angle(yaw),
        }
    }

    /// Direction of the body x-axis (the facade normal) on the ground plane.
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.yaw.cos(), self.yaw.sin())
    }

    /// Direction of the body y-axis (the facade tangent) on the ground plane.
    pub fn tangent(&self) -> Vector2<f64> {
        Vector2::new(-self.yaw.sin(), self.yaw.cos())
    }
}

/// Extents of a cuboid in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuboidSize {
    /// Extent along the facade tangent.
    pub length: f64,
    /// Vertical extent.
    pub height: f64,
    /// Extent along the facade normal.
    pub thickness: f64,
}

impl CuboidSize {
    pub fn new(length: f64, height: f64, thickness: f64) -> Result<Self> {
        for (name, v) in [
            ("length", length),
            ("height", height),
            ("thickness", thickness),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "cuboid {name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            length,
            height,
            thickness,
        })
    }

    /// Half-extents in body-frame order (normal, tangent, vertical).
    pub fn half_extents(&self) -> Vector3<f64> {
        Vector3::new(self.thickness, self.length, self.height) * 0.5
    }
}

/// A vertical cuboid resting on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub pose: GroundPose2D,
    pub size: CuboidSize,
}

impl Cuboid {
    pub fn new(pose: GroundPose2D, size: CuboidSize) -> Self {
        Self { pose, size }
    }

    /// Convenience constructor from raw numbers; fails on non-positive extents.
    pub fn from_parts(
        origin: [f64; 2],
        yaw: f64,
        length: f64,
        height: f64,
        thickness: f64,
    ) -> Result<Self> {
        Ok(Self {
            pose: GroundPose2D::new(Vector2::new(origin[0], origin[1]), yaw),
            size: CuboidSize::new(length, height, thickness)?,
        })
    }

    /// Volumetric center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            self.pose.origin.x,
            self.pose.origin.y,
            0.5 * self.size.height,
        )
    }

    pub fn local_transform(&self) -> LocalTransform {
        local_transform(self)
    }

    pub fn sdf(&self, q: &Vector3<f64>) -> f64 {
        sdf(self, q)
    }

    /// The eight corners in world coordinates.
    pub fn vertices(&self) -> [Vector3<f64>; 8] {
        let h = self.size.half_extents();
        let n = self.pose.normal();
        let t = self.pose.tangent();
        let c = self.center();
        let mut out = [Vector3::zeros(); 8];
        let mut idx = 0;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    out[idx] = Vector3::new(
                        c.x + sx * h.x * n.x + sy * h.y * t.x,
                        c.y + sx * h.x * n.y + sy * h.y * t.y,
                        c.z + sz * h.z,
                    );
                    idx += 1;
                }
            }
        }
        out
    }

    /// Distance with a negative interior: minus the depth to the nearest face
    /// inside the cuboid, the ordinary exterior distance outside.
    pub fn signed_distance(&self, q: &Vector3<f64>) -> f64 {
        let local = self.local_transform().apply(q);
        let d = local.abs() - self.size.half_extents();
        let outside = d.map(|v| v.max(0.0)).norm();
        let inside = d.x.max(d.y).max(d.z).min(0.0);
        outside + inside
    }

    /// Applies a planar rigid motion (rotation by `yaw` about the world z-axis
    /// followed by `translation`) to the cuboid.
    pub fn transformed(&self, yaw: f64, translation: Vector2<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        let o = self.pose.origin;
        let origin = Vector2::new(c * o.x - s * o.y, s * o.x + c * o.y) + translation;
        Self {
            pose: GroundPose2D::new(origin, self.pose.yaw + yaw),
            size: self.size,
        }
    }
}

/// Rigid map from world coordinates into a cuboid's body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl LocalTransform {
    pub fn apply(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * q + self.translation
    }

    /// Maps body-frame coordinates back into the world frame.
    pub fn inverse_apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

/// World-to-body transform of a cuboid.
///
/// The rotation is the transpose of the planar yaw rotation, so that the facade
/// normal `(cos ψ, sin ψ)` maps onto the body x-axis.
pub fn local_transform(cuboid: &Cuboid) -> LocalTransform {
    let (s, c) = cuboid.pose.yaw.sin_cos();
    let rotation = Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0);
    let translation = -(rotation * cuboid.center());
    LocalTransform {
        rotation,
        translation,
    }
}

/// Exterior Euclidean distance from `q` to the cuboid; zero on or inside it.
pub fn sdf(cuboid: &Cuboid, q: &Vector3<f64>) -> f64 {
    let local = local_transform(cuboid).apply(q);
    let h = cuboid.size.half_extents();
    let dx = (local.x.abs() - h.x).max(0.0);
    let dy = (local.y.abs() - h.y).max(0.0);
    let dz = (local.z.abs() - h.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Distance matrix with one row per cuboid and one column per query point.
pub fn sdf_batch(cuboids: &[Cuboid], queries: &[Vector3<f64>]) -> Result<DMatrix<f64>> {
    if cuboids.is_empty() {
        return Err(Error::Empty("sdf_batch cuboids"));
    }
    if queries.is_empty() {
        return Err(Error::Empty("sdf_batch queries"));
    }
    let mut out = DMatrix::zeros(cuboids.len(), queries.len());
    for (r, cuboid) in cuboids.iter().enumerate() {
        // one transform per cuboid, reused across the query column
        let tf = local_transform(cuboid);
        let h = cuboid.size.half_extents();
        for (c, q) in queries.iter().enumerate() {
            let local = tf.apply(q);
            let dx = (local.x.abs() - h.x).max(0.0);
            let dy = (local.y.abs() - h.y).max(0.0);
            let dz = (local.z.abs() - h.z).max(0.0);
            out[(r, c)] = (dx * dx + dy * dy + dz * dz).sqrt();
        }
    }
    Ok(out)
}

/// Smallest distance from `q` to any cuboid in `world` (infinite when empty).
pub fn min_sdf(world: &[Cuboid], q: &Vector3<f64>) -> f64 {
    world
        .iter()
        .map(|c| sdf(c, q))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn unit_box() -> Cuboid {
        Cuboid::from_parts([0.0, 0.0], 0.0, 2.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn zero_yaw_transform() {
        let c = Cuboid::from_parts([0.0, 0.0], 0.0, 4.0, 2.0, 1.0).unwrap();
        let tf = c.local_transform();
        assert_abs_diff_eq!(tf.rotation, Matrix3::identity(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            tf.translation,
            Vector3::new(0.0, 0.0, -1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quarter_turn_is_transpose_of_written_yaw_block() {
        let c = Cuboid::from_parts([0.0, 0.0], FRAC_PI_2, 4.0, 2.0, 1.0).unwrap();
        let tf = c.local_transform();
        let written = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(tf.rotation, written.transpose(), epsilon = 1e-15);
        // the normal (0, 1) lands on the body x-axis
        let n = tf.rotation * Vector3::new(0.0, 1.0, 0.0);
        assert_abs_diff_eq!(n, Vector3::x(), epsilon = 1e-15);
    }

    #[test]
    fn center_maps_to_origin() {
        let c = Cuboid::from_parts([3.0, -7.5], 0.7, 4.0, 9.0, 0.2).unwrap();
        let tf = c.local_transform();
        assert_abs_diff_eq!(tf.apply(&c.center()), Vector3::zeros(), epsilon = 1e-9);
        assert_abs_diff_eq!(tf.rotation.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sdf_examples() {
        let b = unit_box();
        assert_eq!(b.sdf(&b.center()), 0.0);
        assert_abs_diff_eq!(b.sdf(&Vector3::new(3.0, 0.0, 1.0)), 2.0, epsilon = 1e-15);
        // corner region
        let d = b.sdf(&Vector3::new(2.0, 2.0, 1.0));
        assert_abs_diff_eq!(d, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn signed_distance_is_negative_inside() {
        let b = unit_box();
        assert_abs_diff_eq!(b.signed_distance(&b.center()), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            b.signed_distance(&Vector3::new(3.0, 0.0, 1.0)),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn batch_rejects_empty() {
        assert!(sdf_batch(&[], &[Vector3::zeros()]).is_err());
        assert!(sdf_batch(&[unit_box()], &[]).is_err());
    }

    #[test]
    fn batch_single_entry() {
        let q = Vector3::new(4.0, 1.0, 0.5);
        let m = sdf_batch(&[unit_box()], &[q]).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m[(0, 0)], sdf(&unit_box(), &q));
    }

    #[test]
    fn rejects_non_positive_size() {
        assert!(CuboidSize::new(0.0, 1.0, 1.0).is_err());
        assert!(CuboidSize::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn wrap_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.1 - 2.0 * PI), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn vertices_lie_on_boundary() {
        let c = Cuboid::from_parts([1.0, 2.0], 0.4, 5.0, 3.0, 0.5).unwrap();
        for v in c.vertices() {
            assert_abs_diff_eq!(c.signed_distance(&v), 0.0, epsilon = 1e-12);
        }
    }
}
