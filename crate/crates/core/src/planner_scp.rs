//! SCP-MMD planner: MMD-ranked STOMP initialization refined by sequential
//! convex programming on waypoints against inflated obstacles.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cuboid, CuboidSize, GroundPose2D};
use crate::mmd::{median_bandwidth, KernelConfig, SafetyBand, UncertainWorld};
use crate::qp::{BandedQp, BandedSym, QpSettings, QpSolution, SparseRow};
use crate::trajectory::{
    stomp_samples_with, waypoint_smoothness, BoundaryState, Limits, StompNoise, WaypointTrajectory,
};
use crate::uncertainty::{draw_grid, draw_independent, GridCounts, UncertainCuboid};

/// Planner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScpConfig {
    /// STOMP candidates ranked by MMD, the straight line included.
    pub candidates: usize,
    pub scp_iterations: usize,
    /// Initial per-waypoint trust-region half-width, meters.
    pub trust_radius: f64,
    /// Fraction of sampled cuboids the inflated obstacle must contain.
    pub inflate_quantile: f64,
    pub band: SafetyBand,
    pub limits: Limits,
    pub rng_seed: u64,
    /// STOMP noise std at the most uncertain waypoint, meters. The noise
    /// covariance is `scale²·R⁻¹` with the scale chosen to hit this value.
    pub noise_std: f64,
    /// Sample grid for MMD ranking.
    pub grid_counts: GridCounts,
    /// Independent cuboid draws for the inflation quantiles.
    pub inflate_samples: usize,
    /// Weight of the clearance violation in the merit function.
    pub penalty: f64,
    /// Allowed flight altitudes `[z_min, z_max]`.
    pub altitude: [f64; 2],
    /// Stop once an accepted step lowers the merit by less than this fraction.
    pub merit_tolerance: f64,
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self {
            candidates: 32,
            scp_iterations: 30,
            trust_radius: 2.0,
            inflate_quantile: 0.95,
            band: SafetyBand {
                r_min: 1.0,
                r_max: 100.0,
            },
            limits: Limits {
                v_max: 5.0,
                a_max: 5.0,
            },
            rng_seed: 0,
            noise_std: 12.0,
            grid_counts: GridCounts::default(),
            inflate_samples: 20_000,
            penalty: 1e3,
            altitude: [1.0, 100.0],
            merit_tolerance: 1e-3,
        }
    }
}

impl ScpConfig {
    fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::InvalidInput("candidates must be ≥ 1".into()));
        }
        if !(self.inflate_quantile > 0.0 && self.inflate_quantile < 1.0) {
            return Err(Error::InvalidInput(format!(
                "inflate_quantile must lie in (0, 1), got {}",
                self.inflate_quantile
            )));
        }
        if !(self.trust_radius > 0.0) {
            return Err(Error::InvalidInput("trust_radius must be positive".into()));
        }
        if !(self.altitude[0] < self.altitude[1]) {
            return Err(Error::InvalidInput("altitude bounds are empty".into()));
        }
        Ok(())
    }
}

/// Deterministic obstacles used by the convex subproblems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflatedWorld {
    pub cuboids: Vec<Cuboid>,
}

impl InflatedWorld {
    /// Smallest signed distance to any obstacle (`+∞` for an empty world),
    /// with every obstacle extended below the ground plane.
    pub fn clearance(&self, q: &Vector3<f64>) -> f64 {
        self.cuboids
            .iter()
            .map(|c| grounded_sd(c, q))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Order statistic at fraction `q` (`q = 1` gives the maximum).
fn quantile(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    *v
}

/// Inflates the nominal cuboid to cover a `quantile` fraction of sampled
/// cuboids.
///
/// Vertex excursions are measured along the six face directions of the
/// nominal body frame. Each direction uses the level `1 − (1 − q)/6`, so by the
/// union bound a sample escapes the inflated cuboid with probability at most
/// `1 − q`. The inflated cuboid never shrinks below the nominal.
pub fn inflate(
    u: &UncertainCuboid,
    quantile_level: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<Cuboid> {
    if !(quantile_level > 0.0 && quantile_level <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "quantile must lie in (0, 1], got {quantile_level}"
        )));
    }
    let cuboids = draw_independent(u, samples, rng_seed)?;
    let nominal = u.nominal;
    let frame = nominal.local_transform();
    let h0 = nominal.size.half_extents();
    // excursions[2·axis] along +axis, [2·axis + 1] along −axis
    let mut excursions: [Vec<f64>; 6] = Default::default();
    for e in excursions.iter_mut() {
        e.reserve(cuboids.len());
    }
    for c in &cuboids {
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        let mut lo = Vector3::repeat(f64::INFINITY);
        for v in c.vertices() {
            let l = frame.apply(&v);
            hi = hi.sup(&l);
            lo = lo.inf(&l);
        }
        for axis in 0..3 {
            excursions[2 * axis].push(hi[axis]);
            excursions[2 * axis + 1].push(-lo[axis]);
        }
    }
    let level = 1.0 - (1.0 - quantile_level) / 6.0;
    let mut ext = [0.0; 6];
    for (k, e) in excursions.iter_mut().enumerate() {
        ext[k] = quantile(e, level).max(h0[k / 2]);
    }
    let (px, nx, py, ny, pz, nz) = (ext[0], ext[1], ext[2], ext[3], ext[4], ext[5]);
    let shift = Vector2::new((px - nx) / 2.0, (py - ny) / 2.0);
    let n = nominal.pose.normal();
    let t = nominal.pose.tangent();
    let origin = nominal.pose.origin + n * shift.x + t * shift.y;
    Ok(Cuboid::new(
        GroundPose2D::new(origin, nominal.pose.yaw),
        CuboidSize::new(py + ny, pz + nz, px + nx)?,
    ))
}

/// Inflates every obstacle of `world` with per-obstacle seeds.
pub fn inflate_world(world: &[UncertainCuboid], cfg: &ScpConfig) -> Result<InflatedWorld> {
    let cuboids = world
        .iter()
        .enumerate()
        .map(|(i, u)| {
            inflate(
                u,
                cfg.inflate_quantile,
                cfg.inflate_samples,
                obstacle_seed(cfg.rng_seed, i, 1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InflatedWorld { cuboids })
}

fn obstacle_seed(seed: u64, index: usize, stream: u64) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93)
        ^ stream.wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Returns the lowest-MMD trajectory among the straight line (candidate 0)
/// and `candidates − 1` STOMP perturbations of it.
///
/// Ties are broken by lower smoothness, then by candidate index.
pub fn mmd_rank_init(
    world: &[UncertainCuboid],
    start: &Vector3<f64>,
    goal: &Vector3<f64>,
    n_waypoints: usize,
    dt: f64,
    cfg: &ScpConfig,
) -> Result<WaypointTrajectory> {
    if cfg.candidates == 0 {
        return Err(Error::InvalidInput("candidates must be ≥ 1".into()));
    }
    let base = WaypointTrajectory::straight_line(*start, *goal, n_waypoints, dt)?;
    let mut candidates = vec![base.clone()];
    if cfg.candidates > 1 {
        let noise = StompNoise::new(n_waypoints, dt)?;
        let peak = noise.covariance().diagonal().max().sqrt();
        let scale = if peak > 0.0 {
            cfg.noise_std / peak
        } else {
            0.0
        };
        let mut samples = stomp_samples_with(
            &noise,
            &base,
            cfg.candidates - 1,
            scale,
            obstacle_seed(cfg.rng_seed, usize::MAX - 1, 2),
        )?;
        for s in &mut samples {
            for p in &mut s.points {
                p.z = p.z.clamp(cfg.altitude[0], cfg.altitude[1]);
            }
        }
        candidates.extend(samples);
    }
    if world.is_empty() {
        return Ok(base);
    }
    let grids = world
        .iter()
        .enumerate()
        .map(|(i, u)| draw_grid(u, cfg.grid_counts, obstacle_seed(cfg.rng_seed, i, 3)))
        .collect::<Result<Vec<_>>>()?;
    let uncertain = UncertainWorld::new(grids);
    let tensors: Vec<_> = base
        .points
        .iter()
        .flat_map(|q| uncertain.tensors_at(q, cfg.band))
        .flatten()
        .collect();
    let kernel = KernelConfig::uniform(median_bandwidth(&tensors));

    let mut best: Option<(f64, f64, usize)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let mmd = uncertain.mmd_trajectory(&cand.points, cfg.band, &kernel)?;
        let smooth = waypoint_smoothness(cand);
        let better = match best {
            None => true,
            Some((bm, bs, _)) => mmd < bm || (mmd == bm && smooth < bs),
        };
        if better {
            best = Some((mmd, smooth, idx));
        }
    }
    let (_, _, idx) = best.expect("at least one candidate");
    Ok(candidates.swap_remove(idx))
}

/// Waypoints pinned by the boundary conditions: `lead` at each end.
pub fn boundary_points(
    start: &BoundaryState,
    goal: &BoundaryState,
    n: usize,
    dt: f64,
) -> (usize, Vec<(usize, Vector3<f64>)>) {
    let lead = if n >= 7 { 3 } else { 2 };
    let p0 = start.position;
    let p1 = p0 + start.velocity * dt;
    let q0 = goal.position;
    let q1 = q0 - goal.velocity * dt;
    let mut fixed = vec![(0, p0), (1, p1), (n - 1, q0), (n - 2, q1)];
    if lead == 3 {
        fixed.push((2, 2.0 * p1 - p0 + start.acceleration * dt * dt));
        fixed.push((n - 3, 2.0 * q1 - q0 + goal.acceleration * dt * dt));
    }
    (lead, fixed)
}

/// `Σ ‖Δ²p‖² / dt³` over all interior waypoints.
pub fn accel_cost(points: &[Vector3<f64>], dt: f64) -> f64 {
    points
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).norm_squared())
        .sum::<f64>()
        / dt.powi(3)
}

fn merit(points: &[Vector3<f64>], dt: f64, world: &InflatedWorld, r_min: f64, penalty: f64) -> f64 {
    let violation: f64 = points
        .iter()
        .map(|p| (r_min - world.clearance(p)).max(0.0))
        .sum();
    accel_cost(points, dt) + penalty * violation
}

/// Signed distance to a cuboid extended downward without bound. Inside a
/// building the escape direction is then never through the ground.
fn grounded_sd(c: &Cuboid, q: &Vector3<f64>) -> f64 {
    let local = c.local_transform().apply(q);
    let h = c.size.half_extents();
    let d = Vector3::new(local.x.abs() - h.x, local.y.abs() - h.y, local.z - h.z);
    d.map(|v| v.max(0.0)).norm() + d.x.max(d.y).max(d.z).min(0.0)
}

/// Central-difference gradient of a signed distance, clamped to unit norm.
fn sd_gradient(c: &Cuboid, q: &Vector3<f64>, step: f64) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for axis in 0..3 {
        let mut e = Vector3::zeros();
        e[axis] = step;
        g[axis] = (grounded_sd(c, &(q + e)) - grounded_sd(c, &(q - e))) / (2.0 * step);
    }
    let norm = g.norm();
    if norm > 1.0 {
        g / norm
    } else {
        g
    }
}

const FD_STEP: f64 = 1e-4;
const MOVE_TOL: f64 = 1e-4;

/// Diagnostics of an SCP run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpPlan {
    pub trajectory: WaypointTrajectory,
    pub initial: WaypointTrajectory,
    pub inflated: InflatedWorld,
    /// Merit of every accepted iterate, starting with the initial guess.
    pub merit: Vec<f64>,
    pub qp_solves: usize,
    /// Waypoints pinned at each end by the boundary conditions.
    pub lead: usize,
}

impl ScpPlan {
    /// Lowest inflated clearance over the free waypoints and where it occurs.
    pub fn worst_clearance(&self) -> Option<(usize, f64)> {
        let n = self.trajectory.points.len();
        (self.lead..n - self.lead)
            .map(|t| (t, self.inflated.clearance(&self.trajectory.points[t])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Convex subproblem around the current iterate, with variables ordered
/// `[x, y, z, s]` per free waypoint.
struct Subproblem<'a> {
    n: usize,
    dt: f64,
    lead: usize,
    fixed: &'a [(usize, Vector3<f64>)],
    cfg: &'a ScpConfig,
    world: &'a InflatedWorld,
}

enum Pos {
    Fixed(Vector3<f64>),
    Free(usize),
}

impl Subproblem<'_> {
    fn free(&self) -> usize {
        self.n - 2 * self.lead
    }

    fn pos(&self, t: usize) -> Pos {
        if t >= self.lead && t < self.n - self.lead {
            Pos::Free(4 * (t - self.lead))
        } else {
            let p = self
                .fixed
                .iter()
                .find(|(i, _)| *i == t)
                .map(|(_, p)| *p)
                .expect("boundary waypoint");
            Pos::Fixed(p)
        }
    }

    /// Linear form `Σ coeffs·p_t` over `terms`, split into free variables and a
    /// constant, for one axis.
    fn linear(&self, terms: &[(usize, f64)], axis: usize) -> (Vec<usize>, Vec<f64>, f64) {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        let mut constant = 0.0;
        for &(t, c) in terms {
            match self.pos(t) {
                Pos::Fixed(p) => constant += c * p[axis],
                Pos::Free(base) => {
                    idx.push(base + axis);
                    val.push(c);
                }
            }
        }
        (idx, val, constant)
    }

    /// With a trust radius: the SCP subproblem. Without: the projection of
    /// `current` onto the kinematic constraints (no clearance rows).
    fn build(&self, current: &[Vector3<f64>], radius: Option<f64>) -> BandedQp {
        let nv = 4 * self.free();
        let mut h = BandedSym::zeros(nv, 8);
        let mut g = vec![0.0; nv];
        let mut rows = Vec::new();
        let k = if radius.is_some() {
            1.0 / self.dt.powi(3)
        } else {
            0.0
        };
        let (v_max, a_max) = (self.cfg.limits.v_max, self.cfg.limits.a_max);

        for t in 1..self.n - 1 {
            let terms = [(t - 1, 1.0), (t, -2.0), (t + 1, 1.0)];
            for axis in 0..3 {
                let (idx, val, c) = self.linear(&terms, axis);
                if idx.is_empty() {
                    continue;
                }
                let objective = if k > 0.0 { idx.len() } else { 0 };
                for a in 0..objective {
                    g[idx[a]] += 2.0 * k * c * val[a];
                    for b in 0..=a {
                        let v = 2.0 * k * val[a] * val[b];
                        if a == b {
                            h.add(idx[a], idx[a], v);
                        } else {
                            h.add(idx[a], idx[b], v);
                        }
                    }
                }
                // |Δ²p / dt²| ≤ a_max
                let s = 1.0 / (self.dt * self.dt);
                let scaled: Vec<f64> = val.iter().map(|v| v * s).collect();
                rows.push(SparseRow::new(idx.clone(), scaled.clone(), a_max - c * s));
                rows.push(SparseRow::new(
                    idx,
                    scaled.iter().map(|v| -v).collect(),
                    a_max + c * s,
                ));
            }
        }
        for t in 0..self.n - 1 {
            let terms = [(t, -1.0), (t + 1, 1.0)];
            for axis in 0..3 {
                let (idx, val, c) = self.linear(&terms, axis);
                if idx.is_empty() {
                    continue;
                }
                let s = 1.0 / self.dt;
                let scaled: Vec<f64> = val.iter().map(|v| v * s).collect();
                rows.push(SparseRow::new(idx.clone(), scaled.clone(), v_max - c * s));
                rows.push(SparseRow::new(
                    idx,
                    scaled.iter().map(|v| -v).collect(),
                    v_max + c * s,
                ));
            }
        }
        let relevance = self.cfg.band.r_min + 2.0 * radius.unwrap_or(0.0) * 3f64.sqrt();
        for t in self.lead..self.n - self.lead {
            let base = 4 * (t - self.lead);
            let q = current[t];
            for axis in 0..3 {
                match radius {
                    Some(r) => {
                        rows.push(SparseRow::new(vec![base + axis], vec![1.0], q[axis] + r));
                        rows.push(SparseRow::new(vec![base + axis], vec![-1.0], r - q[axis]));
                    }
                    None => {
                        // ‖x − q‖²
                        h.add(base + axis, base + axis, 2.0);
                        g[base + axis] -= 2.0 * q[axis];
                    }
                }
            }
            rows.push(SparseRow::new(
                vec![base + 2],
                vec![1.0],
                self.cfg.altitude[1],
            ));
            rows.push(SparseRow::new(
                vec![base + 2],
                vec![-1.0],
                -self.cfg.altitude[0],
            ));
            // slack: 0 ≤ s ≤ cap, linear penalty; the cap exceeds any optimal
            // slack and keeps the interior-point iterates bounded
            rows.push(SparseRow::new(vec![base + 3], vec![-1.0], 0.0));
            g[base + 3] += self.cfg.penalty;
            let Some(r) = radius else {
                rows.push(SparseRow::new(vec![base + 3], vec![1.0], 1.0));
                continue;
            };
            let worst = self
                .world
                .cuboids
                .iter()
                .map(|c| self.cfg.band.r_min - grounded_sd(c, &q))
                .fold(0.0, f64::max);
            rows.push(SparseRow::new(
                vec![base + 3],
                vec![1.0],
                worst + 2.0 * 3f64.sqrt() * r + 1.0,
            ));
            for c in &self.world.cuboids {
                let sd = grounded_sd(c, &q);
                if sd > relevance {
                    continue;
                }
                let grad = sd_gradient(c, &q, FD_STEP);
                // sd + ∇sd·(x − q) + s ≥ r_min
                rows.push(SparseRow::new(
                    vec![base, base + 1, base + 2, base + 3],
                    vec![-grad.x, -grad.y, -grad.z, -1.0],
                    sd - self.cfg.band.r_min - grad.dot(&q),
                ));
            }
        }
        let rows = rows.into_iter().map(SparseRow::normalized).collect();
        BandedQp { h, g, rows }
    }

    /// Model merit of a candidate: exact acceleration cost plus the
    /// linearized clearance violation.
    fn model_merit(
        &self,
        current: &[Vector3<f64>],
        candidate: &[Vector3<f64>],
        radius: f64,
    ) -> f64 {
        let relevance = self.cfg.band.r_min + 2.0 * radius * 3f64.sqrt();
        let mut violation = 0.0;
        for t in 0..self.n {
            let q = current[t];
            let mut worst: f64 = 0.0;
            for c in &self.world.cuboids {
                let sd = grounded_sd(c, &q);
                if t >= self.lead && t < self.n - self.lead {
                    if sd > relevance {
                        continue;
                    }
                    let lin = sd + sd_gradient(c, &q, FD_STEP).dot(&(candidate[t] - q));
                    worst = worst.max(self.cfg.band.r_min - lin);
                } else {
                    worst = worst.max(self.cfg.band.r_min - sd);
                }
            }
            violation += worst;
        }
        accel_cost(candidate, self.dt) + self.cfg.penalty * violation
    }
}

/// Solves for the displacement from `x0` and returns the absolute solution.
fn solve_centered(qp: &BandedQp, x0: &[f64], settings: &QpSettings) -> Result<QpSolution> {
    let mut sol = qp.shifted(x0).solve(&vec![0.0; x0.len()], settings)?;
    for (x, c) in sol.x.iter_mut().zip(x0) {
        *x += c;
    }
    sol.objective = qp.objective(&sol.x);
    Ok(sol)
}

/// Plans `n_waypoints` waypoints spaced by `dt` from `start` to `goal`.
///
/// Runs [`refine_scp`], then fails with [`Error::PlanFailed`] when the final
/// trajectory comes closer than `r_min·(1 − 10⁻³)` to an inflated obstacle.
pub fn plan_scp(
    world: &[UncertainCuboid],
    start: &BoundaryState,
    goal: &BoundaryState,
    cfg: &ScpConfig,
    n_waypoints: usize,
    dt: f64,
) -> Result<ScpPlan> {
    let plan = refine_scp(world, start, goal, cfg, n_waypoints, dt)?;
    if let Some((t, worst)) = plan.worst_clearance() {
        if worst < cfg.band.r_min * (1.0 - 1e-3) {
            return Err(Error::PlanFailed(format!(
                "waypoint {t} keeps only {worst:.3} m from an inflated obstacle"
            )));
        }
    }
    Ok(plan)
}

/// The SCP iterations of [`plan_scp`] without the final clearance check.
///
/// Fails with [`Error::Infeasible`] when the convex subproblem has no solution
/// after three consecutive trust-region shrinkages.
pub fn refine_scp(
    world: &[UncertainCuboid],
    start: &BoundaryState,
    goal: &BoundaryState,
    cfg: &ScpConfig,
    n_waypoints: usize,
    dt: f64,
) -> Result<ScpPlan> {
    cfg.validate()?;
    if n_waypoints < 4 {
        return Err(Error::InvalidInput(format!(
            "need ≥ 4 waypoints, got {n_waypoints}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let initial = mmd_rank_init(world, &start.position, &goal.position, n_waypoints, dt, cfg)?;
    let inflated = inflate_world(world, cfg)?;
    let (lead, fixed) = boundary_points(start, goal, n_waypoints, dt);

    let mut points = initial.points.clone();
    for &(t, p) in &fixed {
        points[t] = p;
    }
    let sub = Subproblem {
        n: n_waypoints,
        dt,
        lead,
        fixed: &fixed,
        cfg,
        world: &inflated,
    };
    let r_min = cfg.band.r_min;
    let mut current_merit = merit(&points, dt, &inflated, r_min, cfg.penalty);
    let mut merits = vec![current_merit];
    let mut radius = cfg.trust_radius;
    let mut shrinks = 0;
    let mut qp_solves = 0;
    let settings = QpSettings::default();

    if sub.free() > 0 {
        // start from a kinematically feasible iterate so every trust region
        // intersects the hard constraints
        let qp = sub.build(&points, None);
        let x0: Vec<f64> = (lead..n_waypoints - lead)
            .flat_map(|t| [points[t].x, points[t].y, points[t].z, 0.5])
            .collect();
        qp_solves += 1;
        let sol = solve_centered(&qp, &x0, &settings).map_err(|e| match e {
            Error::Infeasible(msg) => {
                Error::Infeasible(format!("kinematic limits cannot be met: {msg}"))
            }
            other => other,
        })?;
        for t in lead..n_waypoints - lead {
            let b = 4 * (t - lead);
            points[t] = Vector3::new(sol.x[b], sol.x[b + 1], sol.x[b + 2]);
        }
        current_merit = merit(&points, dt, &inflated, r_min, cfg.penalty);
        merits = vec![current_merit];

        for _ in 0..cfg.scp_iterations {
            let qp = sub.build(&points, Some(radius));
            let x0: Vec<f64> = (lead..n_waypoints - lead)
                .flat_map(|t| {
                    let p = points[t];
                    [
                        p.x,
                        p.y,
                        p.z,
                        (r_min - inflated.clearance(&p)).max(0.0) + 1.0,
                    ]
                })
                .collect();
            qp_solves += 1;
            let sol = match solve_centered(&qp, &x0, &settings) {
                Ok(sol) => sol,
                Err(Error::Infeasible(msg)) => {
                    shrinks += 1;
                    if shrinks >= 3 {
                        return Err(Error::Infeasible(format!(
                            "convex subproblem infeasible after {shrinks} trust-region shrinkages: {msg}"
                        )));
                    }
                    radius *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut candidate = points.clone();
            for t in lead..n_waypoints - lead {
                let b = 4 * (t - lead);
                candidate[t] = Vector3::new(sol.x[b], sol.x[b + 1], sol.x[b + 2]);
            }
            let step = candidate
                .iter()
                .zip(&points)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let new_merit = merit(&candidate, dt, &inflated, r_min, cfg.penalty);
            let predicted = current_merit - sub.model_merit(&points, &candidate, radius);
            let actual = current_merit - new_merit;
            let scale = 1e-12 * (1.0 + current_merit.abs());
            let ratio = if predicted > scale {
                actual / predicted
            } else {
                1.0
            };
            if actual >= 0.0 && ratio > 0.1 {
                points = candidate;
                current_merit = new_merit;
                merits.push(current_merit);
                shrinks = 0;
                if ratio > 0.75 && step > 0.9 * radius {
                    radius *= 2.0;
                }
                let feasible = (current_merit - accel_cost(&points, dt)) <= 0.0;
                if step < MOVE_TOL
                    || (feasible && actual <= cfg.merit_tolerance * current_merit.abs())
                {
                    break;
                }
            } else {
                radius *= 0.5;
                shrinks += 1;
                if radius < MOVE_TOL {
                    break;
                }
            }
        }
    }

    Ok(ScpPlan {
        trajectory: WaypointTrajectory::new(points, dt)?,
        initial,
        inflated,
        merit: merits,
        qp_solves,
        lead,
    })
}
