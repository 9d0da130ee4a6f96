//! Polynomial and waypoint trajectories, derivative operators, smoothness and
//! limit penalties, and STOMP-style smooth noise.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Velocity and acceleration bounds, applied per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
}

impl Limits {
    pub fn new(v_max: f64, a_max: f64) -> Result<Self> {
        if !(v_max > 0.0 && a_max > 0.0) {
            return Err(Error::InvalidInput(format!(
                "limits must be positive, got v_max={v_max}, a_max={a_max}"
            )));
        }
        Ok(Self { v_max, a_max })
    }
}

/// Position, velocity and acceleration at a trajectory endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl BoundaryState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
        }
    }
}

/// Basis evaluation matrices `P`, `Ṗ`, `P̈` (and the jerk basis).
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub p: DMatrix<f64>,
    pub pd: DMatrix<f64>,
    pub pdd: DMatrix<f64>,
    pub pddd: DMatrix<f64>,
}

/// Monomial basis on normalized time `τ = t / T`.
///
/// Row `r` of `P` holds `τ_rᶜ`; the derivative matrices carry the chain-rule
/// factors `1/T`, `1/T²`, `1/T³`.
pub fn basis_matrices(times: &[f64], degree: usize, duration: f64) -> Basis {
    let cols = degree + 1;
    let rows = times.len();
    let mut p = DMatrix::zeros(rows, cols);
    let mut pd = DMatrix::zeros(rows, cols);
    let mut pdd = DMatrix::zeros(rows, cols);
    let mut pddd = DMatrix::zeros(rows, cols);
    let inv = 1.0 / duration;
    for (r, &t) in times.iter().enumerate() {
        let tau = t * inv;
        // powers[c] = τᶜ
        let mut powers = vec![1.0; cols];
        for c in 1..cols {
            powers[c] = powers[c - 1] * tau;
        }
        for c in 0..cols {
            let cf = c as f64;
            p[(r, c)] = powers[c];
            if c >= 1 {
                pd[(r, c)] = cf * powers[c - 1] * inv;
            }
            if c >= 2 {
                pdd[(r, c)] = cf * (cf - 1.0) * powers[c - 2] * inv * inv;
            }
            if c >= 3 {
                pddd[(r, c)] = cf * (cf - 1.0) * (cf - 2.0) * powers[c - 3] * inv * inv * inv;
            }
        }
    }
    Basis { p, pd, pdd, pddd }
}

/// Per-axis polynomial trajectory over `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTrajectory {
    pub coeffs: [Vec<f64>; 3],
    pub duration: f64,
}

impl PolyTrajectory {
    pub fn new(coeffs: [Vec<f64>; 3], duration: f64) -> Result<Self> {
        let n = coeffs[0].len();
        if n == 0 || coeffs.iter().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch(
                "coefficient vectors must share a non-zero length".into(),
            ));
        }
        if !(duration > 0.0) {
            return Err(Error::InvalidInput(format!(
                "duration must be positive, got {duration}"
            )));
        }
        Ok(Self { coeffs, duration })
    }

    pub fn degree(&self) -> usize {
        self.coeffs[0].len() - 1
    }

    /// `count` evenly spaced times covering `[0, duration]` inclusive.
    pub fn sample_times(&self, count: usize) -> Vec<f64> {
        uniform_times(self.duration, count)
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        let tau = t / self.duration;
        Vector3::from_fn(|axis, _| {
            self.coeffs[axis]
                .iter()
                .rev()
                .fold(0.0, |acc, c| acc * tau + c)
        })
    }
}

/// `count` evenly spaced times over `[0, duration]`.
pub fn uniform_times(duration: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|i| duration * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Kinematic samples of a trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KinematicSamples {
    pub times: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub accelerations: Vec<Vector3<f64>>,
    pub jerks: Vec<Vector3<f64>>,
}

impl KinematicSamples {
    /// Plain-text export: header `t,x,y,z,vx,vy,vz,ax,ay,az`, one row per sample.
    pub fn to_table(&self) -> String {
        let mut out = String::from("t,x,y,z,vx,vy,vz,ax,ay,az\n");
        for i in 0..self.times.len() {
            let p = self.positions[i];
            let v = self.velocities[i];
            let a = self.accelerations[i];
            let _ = writeln!(
                out,
                "{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                self.times[i], p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z
            );
        }
        out
    }
}

/// Positions, velocities, accelerations and jerks at `times`.
pub fn eval(traj: &PolyTrajectory, times: &[f64]) -> KinematicSamples {
    let basis = basis_matrices(times, traj.degree(), traj.duration);
    let apply = |m: &DMatrix<f64>| -> Vec<Vector3<f64>> {
        let cols: Vec<DVector<f64>> = traj
            .coeffs
            .iter()
            .map(|c| m * DVector::from_column_slice(c))
            .collect();
        (0..times.len())
            .map(|r| Vector3::new(cols[0][r], cols[1][r], cols[2][r]))
            .collect()
    };
    KinematicSamples {
        times: times.to_vec(),
        positions: apply(&basis.p),
        velocities: apply(&basis.pd),
        accelerations: apply(&basis.pdd),
        jerks: apply(&basis.pddd),
    }
}

/// Gram matrix `G` with `∫₀ᵀ jerk(t)² dt = cᵀ G c` for one axis.
pub fn jerk_gram(degree: usize, duration: f64) -> DMatrix<f64> {
    let n = degree + 1;
    let scale = duration.powi(-5);
    DMatrix::from_fn(n, n, |k, l| {
        if k < 3 || l < 3 {
            return 0.0;
        }
        let ak = (k * (k - 1) * (k - 2)) as f64;
        let al = (l * (l - 1) * (l - 2)) as f64;
        ak * al / (k + l - 5) as f64 * scale
    })
}

/// Integral of the squared jerk norm over the whole trajectory, in m²/s⁵.
pub fn poly_smoothness(traj: &PolyTrajectory) -> f64 {
    let g = jerk_gram(traj.degree(), traj.duration);
    traj.coeffs
        .iter()
        .map(|c| {
            let c = DVector::from_column_slice(c);
            (c.transpose() * &g * &c)[(0, 0)]
        })
        .sum()
}

/// Sum of squared per-axis limit excesses over the sampled times.
pub fn limit_penalty(traj: &PolyTrajectory, limits: Limits, times: &[f64]) -> f64 {
    let samples = eval(traj, times);
    samples_limit_penalty(&samples.velocities, &samples.accelerations, limits)
}

pub(crate) fn samples_limit_penalty(
    velocities: &[Vector3<f64>],
    accelerations: &[Vector3<f64>],
    limits: Limits,
) -> f64 {
    let mut total = 0.0;
    for v in velocities {
        for axis in 0..3 {
            let e = (v[axis].abs() - limits.v_max).max(0.0);
            total += e * e;
        }
    }
    for a in accelerations {
        for axis in 0..3 {
            let e = (a[axis].abs() - limits.a_max).max(0.0);
            total += e * e;
        }
    }
    total
}

/// Waypoints sampled at a fixed time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointTrajectory {
    pub points: Vec<Vector3<f64>>,
    pub dt: f64,
}

impl WaypointTrajectory {
    pub fn new(points: Vec<Vector3<f64>>, dt: f64) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "waypoint trajectory needs ≥ 4 points, got {}",
                points.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(Self { points, dt })
    }

    /// Evenly spaced waypoints on the segment from `a` to `b`.
    pub fn straight_line(a: Vector3<f64>, b: Vector3<f64>, n: usize, dt: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("straight line needs ≥ 2 points".into()));
        }
        let points = (0..n)
            .map(|i| a + (b - a) * (i as f64 / (n - 1) as f64))
            .collect();
        Self::new(points, dt)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.points.len() - 1) as f64
    }

    /// Second central differences at interior waypoints, divided by `dt²`.
    pub fn accelerations(&self) -> Vec<Vector3<f64>> {
        let inv = 1.0 / (self.dt * self.dt);
        self.points
            .windows(3)
            .map(|w| (w[2] - 2.0 * w[1] + w[0]) * inv)
            .collect()
    }

    /// Forward differences divided by `dt`.
    pub fn velocities(&self) -> Vec<Vector3<f64>> {
        self.points
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.dt)
            .collect()
    }

    /// Per-waypoint kinematics: forward-difference velocity (backward at the
    /// last point) and central-difference acceleration (one-sided at the ends).
    pub fn kinematics(&self) -> KinematicSamples {
        let n = self.points.len();
        let vel = self.velocities();
        let acc = self.accelerations();
        let times = (0..n).map(|i| i as f64 * self.dt).collect();
        let velocities = (0..n).map(|i| vel[i.min(n - 2)]).collect();
        let accelerations = (0..n)
            .map(|i| acc[i.saturating_sub(1).min(n - 3)])
            .collect();
        KinematicSamples {
            times,
            positions: self.points.clone(),
            velocities,
            accelerations,
            jerks: vec![Vector3::zeros(); n],
        }
    }

    /// Linear interpolation between waypoints at time `t` (clamped).
    pub fn position_at(&self, t: f64) -> Vector3<f64> {
        let s = (t / self.dt).clamp(0.0, (self.points.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.points.len() - 2);
        let f = s - i as f64;
        self.points[i] * (1.0 - f) + self.points[i + 1] * f
    }
}

/// `Σ_t ‖accel_t‖² · dt` over interior waypoints, in m²/s³.
pub fn waypoint_smoothness(traj: &WaypointTrajectory) -> f64 {
    traj.accelerations()
        .iter()
        .map(|a| a.norm_squared())
        .sum::<f64>()
        * traj.dt
}

/// Smoothness of either trajectory kind.
pub enum Smoothness<'a> {
    Poly(&'a PolyTrajectory),
    Waypoints(&'a WaypointTrajectory),
}

/// Jerk integral for polynomials, summed squared acceleration for waypoints.
pub fn smoothness_cost(traj: Smoothness<'_>) -> f64 {
    match traj {
        Smoothness::Poly(p) => poly_smoothness(p),
        Smoothness::Waypoints(w) => waypoint_smoothness(w),
    }
}

/// Second-difference operator `A` ((n−2)×n) divided by `dt²`.
pub fn second_difference(n: usize, dt: f64) -> DMatrix<f64> {
    let inv = 1.0 / (dt * dt);
    let mut a = DMatrix::zeros(n.saturating_sub(2), n);
    for r in 0..n.saturating_sub(2) {
        a[(r, r)] = inv;
        a[(r, r + 1)] = -2.0 * inv;
        a[(r, r + 2)] = inv;
    }
    a
}

/// Smooth correlated noise with covariance `R⁻¹`, `R = AᵀA`, on the interior
/// waypoints (endpoints held fixed). The Cholesky factor is computed once.
#[derive(Debug, Clone)]
pub struct StompNoise {
    n: usize,
    dt: f64,
    /// Lower-triangular `L` with `L Lᵀ = R_int⁻¹`.
    factor: DMatrix<f64>,
}

impl StompNoise {
    pub fn new(n: usize, dt: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidInput(format!(
                "STOMP noise needs ≥ 4 waypoints, got {n}"
            )));
        }
        let a = second_difference(n, dt);
        let interior = a.columns(1, n - 2).into_owned();
        let r = interior.transpose() * &interior;
        let cov = r
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("finite-difference matrix is singular".into()))?;
        // symmetrize before factoring to drop inversion round-off
        let cov = (&cov + cov.transpose()) * 0.5;
        let factor = cov
            .cholesky()
            .ok_or_else(|| Error::Degenerate("R⁻¹ is not positive definite".into()))?
            .l();
        Ok(Self { n, dt, factor })
    }

    pub fn waypoints(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Covariance `R_int⁻¹` of the interior noise on one axis.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// One noise draw per axis: rows are waypoints, endpoints zero.
    pub fn draw(&self, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        let m = self.n - 2;
        let mut out = vec![Vector3::zeros(); self.n];
        for axis in 0..3 {
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
            let eps: DVector<f64> = &self.factor * z * scale;
            for i in 0..m {
                out[i + 1][axis] = eps[i];
            }
        }
        out
    }
}

/// `k` noisy copies of `base`, each perturbed by `scale`-weighted STOMP noise.
pub fn stomp_samples(
    base: &WaypointTrajectory,
    k: usize,
    scale: f64,
    rng_seed: u64,
) -> Result<Vec<WaypointTrajectory>> {
    let noise = StompNoise::new(base.points.len(), base.dt)?;
    stomp_samples_with(&noise, base, k, scale, rng_seed)
}

/// As [`stomp_samples`], reusing a precomputed noise factor.
pub fn stomp_samples_with(
    noise: &StompNoise,
    base: &WaypointTrajectory,
    k: usize,
    scale: f64,
    rng_seed: u64,
) -> Result<Vec<WaypointTrajectory>> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one STOMP sample".into()));
    }
    if noise.n != base.points.len() {
        return Err(Error::ShapeMismatch(format!(
            "noise factor for {} waypoints, trajectory has {}",
            noise.n,
            base.points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..k)
        .map(|_| {
            let eps = noise.draw(scale, &mut rng);
            WaypointTrajectory {
                points: base.points.iter().zip(&eps).map(|(p, e)| p + e).collect(),
                dt: base.dt,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn basis_at_zero() {
        let b = basis_matrices(&[0.0], 5, 2.0);
        assert_eq!(
            b.p.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn constant_polynomial_has_no_derivatives() {
        let b = basis_matrices(&[0.0, 0.3, 1.1, 2.0], 7, 2.0);
        let mut c = DVector::zeros(8);
        c[0] = 4.2;
        assert!((&b.pd * &c).iter().all(|v| *v == 0.0));
        assert!((&b.pdd * &c).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn line_has_constant_velocity() {
        // x(t) = 1 + 2t over T = 3 → c = [1, 6]
        let traj = PolyTrajectory::new([vec![1.0, 6.0, 0.0, 0.0], vec![0.0; 4], vec![0.0; 4]], 3.0)
            .unwrap();
        let s = eval(&traj, &[0.0, 0.7, 0.7, 3.0]);
        for (v, a) in s.velocities.iter().zip(&s.accelerations) {
            assert_abs_diff_eq!(v.x, 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(a.x, 0.0, epsilon = 1e-12);
        }
        assert_eq!(s.positions[1], s.positions[2]);
        assert_eq!(poly_smoothness(&traj), 0.0);
    }

    #[test]
    fn cubic_jerk_integral() {
        let traj = PolyTrajectory::new([vec![0.0, 0.0, 0.0, 1.0], vec![0.0; 4], vec![0.0; 4]], 1.0)
            .unwrap();
        assert_abs_diff_eq!(poly_smoothness(&traj), 36.0, epsilon = 1e-12);
    }

    #[test]
    fn limit_penalty_examples() {
        let limits = Limits::new(2.0, 1.0).unwrap();
        // x(t) = 3t over T = 1: velocity 3 = v_max + 1
        let traj = PolyTrajectory::new([vec![0.0, 3.0, 0.0, 0.0], vec![0.0; 4], vec![0.0; 4]], 1.0)
            .unwrap();
        let times = uniform_times(1.0, 7);
        assert_abs_diff_eq!(limit_penalty(&traj, limits, &times), 7.0, epsilon = 1e-12);
        let relaxed = Limits::new(5.0, 1.0).unwrap();
        assert_eq!(limit_penalty(&traj, relaxed, &times), 0.0);
    }

    #[test]
    fn waypoint_line_is_smooth() {
        let w = WaypointTrajectory::straight_line(
            Vector3::zeros(),
            Vector3::new(9.0, 3.0, 1.0),
            10,
            0.5,
        )
        .unwrap();
        assert_abs_diff_eq!(waypoint_smoothness(&w), 0.0, epsilon = 1e-20);
    }

    #[test]
    fn stomp_zero_scale_and_fixed_endpoints() {
        let base = WaypointTrajectory::straight_line(
            Vector3::zeros(),
            Vector3::new(10.0, 0.0, 0.0),
            12,
            0.4,
        )
        .unwrap();
        let flat = stomp_samples(&base, 3, 0.0, 1).unwrap();
        assert!(flat.iter().all(|s| s.points == base.points));
        let noisy = stomp_samples(&base, 5, 0.3, 2).unwrap();
        for s in &noisy {
            assert_eq!(s.points[0], base.points[0]);
            assert_eq!(s.points[11], base.points[11]);
        }
        assert!(stomp_samples(&base, 0, 0.3, 2).is_err());
        let short = WaypointTrajectory {
            points: vec![Vector3::zeros(); 3],
            dt: 0.1,
        };
        assert!(stomp_samples(&short, 1, 0.3, 2).is_err());
    }

    #[test]
    fn table_header() {
        let w = WaypointTrajectory::straight_line(Vector3::zeros(), Vector3::x(), 4, 1.0).unwrap();
        let table = w.kinematics().to_table();
        assert!(table.starts_with("t,x,y,z,vx,vy,vz,ax,ay,az\n"));
        assert_eq!(table.lines().count(), 5);
    }
}
