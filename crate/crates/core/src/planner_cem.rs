//! Cross-entropy-method planner over polynomial coefficients.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::min_sdf;
use crate::mmd::{median_bandwidth, KernelConfig, SafetyBand, UncertainWorld};
use crate::trajectory::{
    basis_matrices, jerk_gram, samples_limit_penalty, uniform_times, BoundaryState, Limits,
    PolyTrajectory,
};
use crate::uncertainty::{draw_grid, GridCounts, UncertainCuboid};

/// Population sizes and Gaussian refit settings of a CEM run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemParams {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Lower bound on every per-coordinate variance.
    pub cov_floor: f64,
    /// Weight of the elite variance in the blended variance update, in (0, 1].
    pub var_smoothing: f64,
    pub rng_seed: u64,
}

impl CemParams {
    fn validate(&self) -> Result<()> {
        if self.elites == 0 || self.elites > self.population {
            return Err(Error::InvalidInput(format!(
                "need 1 ≤ elites ≤ population, got {} of {}",
                self.elites, self.population
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be ≥ 1".into()));
        }
        if !(self.cov_floor > 0.0) {
            return Err(Error::InvalidInput("cov_floor must be positive".into()));
        }
        if !(self.var_smoothing > 0.0 && self.var_smoothing <= 1.0) {
            return Err(Error::InvalidInput(
                "var_smoothing must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CemTrace {
    pub elite_mean_cost: Vec<f64>,
    pub best_cost: Vec<f64>,
    pub mean_cost: Vec<f64>,
    pub cov_trace: Vec<f64>,
}

impl CemTrace {
    pub fn len(&self) -> usize {
        self.best_cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best_cost.is_empty()
    }

    /// Plain-text table `iteration,elite_mean_cost,best_cost,mean_cost,cov_trace`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("iteration,elite_mean_cost,best_cost,mean_cost,cov_trace\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{i},{:.9e},{:.9e},{:.9e},{:.9e}",
                self.elite_mean_cost[i], self.best_cost[i], self.mean_cost[i], self.cov_trace[i]
            );
        }
        out
    }

    /// True when the elite mean cost never increases.
    pub fn elite_cost_monotone(&self) -> bool {
        self.elite_mean_cost.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Outcome of [`cem_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct CemResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub mean: Vec<f64>,
    pub trace: CemTrace,
}

/// Minimizes `cost` with a diagonal-Gaussian cross-entropy method.
///
/// The elites of the previous iteration compete with every fresh population,
/// so the elite mean cost cannot increase. Variances are blended with the
/// elite variance, floored at `cov_floor` and capped at `init_std²`. The
/// current mean is also scored and takes part in best-ever tracking.
pub fn cem_minimize<F>(
    init_mean: &[f64],
    init_std: f64,
    params: &CemParams,
    mut cost: F,
) -> Result<CemResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    params.validate()?;
    if init_mean.is_empty() {
        return Err(Error::Empty("CEM decision vector"));
    }
    if !(init_std >= 0.0) {
        return Err(Error::InvalidInput("init_std must be non-negative".into()));
    }
    let dim = init_mean.len();
    let var_cap = (init_std * init_std).max(params.cov_floor);
    let mut mean = init_mean.to_vec();
    let mut var = vec![var_cap; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);

    let mut best = mean.clone();
    let mut best_cost = cost(&mean)?;
    let mut elites: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut trace = CemTrace::default();

    for _ in 0..params.iterations {
        let mut pool = std::mem::take(&mut elites);
        for _ in 0..params.population {
            let x: Vec<f64> = (0..dim)
                .map(|d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean[d] + var[d].sqrt() * z
                })
                .collect();
            let c = cost(&x)?;
            pool.push((c, x));
        }
        // stable sort keeps retained elites ahead of equal-cost newcomers
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        pool.truncate(params.elites);
        elites = pool;

        if elites[0].0 < best_cost {
            best_cost = elites[0].0;
            best = elites[0].1.clone();
        }
        let m = elites.len() as f64;
        for d in 0..dim {
            let mu = elites.iter().map(|e| e.1[d]).sum::<f64>() / m;
            let v = elites.iter().map(|e| (e.1[d] - mu).powi(2)).sum::<f64>() / m;
            mean[d] = mu;
            var[d] = (params.var_smoothing * v + (1.0 - params.var_smoothing) * var[d])
                .clamp(params.cov_floor, var_cap);
        }
        let mean_cost = cost(&mean)?;
        if mean_cost < best_cost {
            best_cost = mean_cost;
            best = mean.clone();
        }
        trace
            .elite_mean_cost
            .push(elites.iter().map(|e| e.0).sum::<f64>() / m);
        trace.best_cost.push(best_cost);
        trace.mean_cost.push(mean_cost);
        trace.cov_trace.push(var.iter().sum());
    }
    Ok(CemResult {
        best,
        best_cost,
        mean,
        trace,
    })
}

/// Planner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Initial search std, meters: the RMS per-axis displacement of the
    /// sampled positions. Search directions are shaped by the jerk and goal
    /// costs so cheap deformations dominate.
    pub init_std: f64,
    pub mmd_weight: f64,
    pub band: SafetyBand,
    pub cov_floor: f64,
    pub var_smoothing: f64,
    pub rng_seed: u64,
    pub degree: usize,
    pub goal_weight: f64,
    pub limit_weight: f64,
    /// Trajectory samples used for the MMD, limit and clearance terms.
    pub eval_samples: usize,
    pub grid_counts: GridCounts,
    /// Accepted relative shortfall of the nominal clearance below `r_min`.
    pub tolerance: f64,
    /// Soft altitude band `[z_min, z_max]`, weighted like the limit penalty.
    pub altitude: [f64; 2],
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elites: 8,
            iterations: 12,
            init_std: 16.0,
            mmd_weight: 1e4,
            band: SafetyBand {
                r_min: 1.0,
                r_max: 100.0,
            },
            cov_floor: 1e-6,
            var_smoothing: 0.6,
            rng_seed: 0,
            degree: 7,
            goal_weight: 1e3,
            limit_weight: 10.0,
            eval_samples: 60,
            grid_counts: GridCounts::default(),
            tolerance: 1e-3,
            altitude: [1.0, 100.0],
        }
    }
}

/// Duration giving an average speed of `0.6·v_max` along the straight line.
pub fn default_duration(start: &Vector3<f64>, goal: &Vector3<f64>, limits: Limits) -> f64 {
    ((goal - start).norm() / (0.6 * limits.v_max)).max(1e-3)
}

/// Coefficients `c0, c1, c2` fixing position, velocity and acceleration at `t = 0`.
fn start_coefficients(start: &BoundaryState, duration: f64) -> [Vector3<f64>; 3] {
    [
        start.position,
        start.velocity * duration,
        start.acceleration * (duration * duration / 2.0),
    ]
}

/// Free coefficients (degree ≥ 3) minimizing the jerk energy subject to the
/// start coefficients and `p(T) = goal`, solved per axis from the KKT system.
fn min_jerk_free(fixed: &[f64; 3], goal: f64, gram: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = gram.nrows();
    let free = n - 3;
    let g_ff = gram.view((3, 3), (free, free));
    let g_fx = gram.view((3, 0), (free, 3));
    let mut kkt = DMatrix::zeros(free + 1, free + 1);
    kkt.view_mut((0, 0), (free, free)).copy_from(&(g_ff * 2.0));
    for i in 0..free {
        kkt[(i, free)] = 1.0;
        kkt[(free, i)] = 1.0;
    }
    let fixed_v = DVector::from_column_slice(fixed);
    let mut rhs = DVector::zeros(free + 1);
    rhs.rows_mut(0, free).copy_from(&(-(g_fx * &fixed_v) * 2.0));
    rhs[free] = goal - fixed.iter().sum::<f64>();
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular least-norm system".into()))?;
    Ok(sol.rows(0, free).iter().copied().collect())
}

/// The minimum-jerk polynomial through the start state and the goal position.
pub fn least_norm_polynomial(
    start: &BoundaryState,
    goal: &Vector3<f64>,
    degree: usize,
    duration: f64,
) -> Result<PolyTrajectory> {
    if degree < 3 {
        return Err(Error::InvalidInput(format!(
            "degree must be ≥ 3, got {degree}"
        )));
    }
    if !(duration > 0.0) {
        return Err(Error::InvalidInput("duration must be positive".into()));
    }
    let gram = jerk_gram(degree, duration);
    let fixed = start_coefficients(start, duration);
    let mut coeffs: [Vec<f64>; 3] = Default::default();
    for (axis, c) in coeffs.iter_mut().enumerate() {
        let f = [fixed[0][axis], fixed[1][axis], fixed[2][axis]];
        let free = min_jerk_free(&f, goal[axis], &gram)?;
        *c = f.into_iter().chain(free).collect();
    }
    PolyTrajectory::new(coeffs, duration)
}

/// Cost evaluator shared by every CEM sample of one planning call.
struct PolyCost<'a> {
    start: [Vector3<f64>; 3],
    /// Free coefficients of the initial mean, per axis.
    base: [Vec<f64>; 3],
    /// Maps a search vector to a coefficient offset whose smoothness plus goal
    /// penalty equals its squared norm.
    whiten: DMatrix<f64>,
    goal: Vector3<f64>,
    limits: Limits,
    cfg: &'a CemConfig,
    gram: DMatrix<f64>,
    p: DMatrix<f64>,
    pd: DMatrix<f64>,
    pdd: DMatrix<f64>,
    world: UncertainWorld,
    kernel: KernelConfig,
    duration: f64,
}

impl PolyCost<'_> {
    fn free_len(&self) -> usize {
        self.cfg.degree + 1 - 3
    }

    fn coefficients(&self, x: &[f64]) -> [Vec<f64>; 3] {
        let free = self.free_len();
        std::array::from_fn(|axis| {
            let z = DVector::from_column_slice(&x[axis * free..(axis + 1) * free]);
            let offset = &self.whiten * z;
            let mut c = Vec::with_capacity(free + 3);
            c.extend((0..3).map(|k| self.start[k][axis]));
            c.extend(
                self.base[axis]
                    .iter()
                    .zip(offset.iter())
                    .map(|(b, o)| b + o),
            );
            c
        })
    }

    fn samples(&self, m: &DMatrix<f64>, coeffs: &[Vec<f64>; 3]) -> Vec<Vector3<f64>> {
        let cols: Vec<DVector<f64>> = coeffs
            .iter()
            .map(|c| m * DVector::from_column_slice(c))
            .collect();
        (0..m.nrows())
            .map(|r| Vector3::new(cols[0][r], cols[1][r], cols[2][r]))
            .collect()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let coeffs = self.coefficients(x);
        let mut smooth = 0.0;
        for c in &coeffs {
            let v = DVector::from_column_slice(c);
            smooth += (v.transpose() * &self.gram * &v)[(0, 0)];
        }
        let positions = self.samples(&self.p, &coeffs);
        let velocities = self.samples(&self.pd, &coeffs);
        let accelerations = self.samples(&self.pdd, &coeffs);
        let [z_lo, z_hi] = self.cfg.altitude;
        let limits = samples_limit_penalty(&velocities, &accelerations, self.limits)
            + positions
                .iter()
                .map(|p| (z_lo - p.z).max(0.0).powi(2) + (p.z - z_hi).max(0.0).powi(2))
                .sum::<f64>();
        let end: Vector3<f64> = Vector3::from_fn(|a, _| coeffs[a].iter().sum());
        let goal = (end - self.goal).norm_squared();
        let mmd = if self.cfg.mmd_weight > 0.0 && !self.world.is_empty() {
            self.world
                .mmd_trajectory(&positions, self.cfg.band, &self.kernel)?
        } else {
            0.0
        };
        Ok(smooth
            + self.cfg.limit_weight * limits
            + self.cfg.goal_weight * goal
            + self.cfg.mmd_weight * mmd)
    }
}

/// CEM plan with its convergence trace and the frozen sample world.
#[derive(Debug, Clone)]
pub struct CemPlan {
    pub trajectory: PolyTrajectory,
    pub trace: CemTrace,
    pub cost: f64,
    /// Grids drawn for this call, reusable for auditing.
    pub world: UncertainWorld,
    pub kernel: KernelConfig,
}

/// Plans a polynomial trajectory from `start` to `goal` over `duration`.
///
/// Fails when the best trajectory comes closer than `r_min·(1 − tolerance)`
/// to a nominal obstacle at any evaluation sample.
pub fn plan_cem(
    world: &[UncertainCuboid],
    start: &BoundaryState,
    goal: &Vector3<f64>,
    limits: Limits,
    duration: f64,
    cfg: &CemConfig,
) -> Result<CemPlan> {
    if cfg.eval_samples < 2 {
        return Err(Error::InvalidInput("eval_samples must be ≥ 2".into()));
    }
    if !(cfg.mmd_weight >= 0.0) {
        return Err(Error::InvalidInput(
            "mmd_weight must be non-negative".into(),
        ));
    }
    let init = least_norm_polynomial(start, goal, cfg.degree, duration)?;
    let grids = world
        .iter()
        .enumerate()
        .map(|(i, u)| {
            draw_grid(
                u,
                cfg.grid_counts,
                cfg.rng_seed ^ (i as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let uncertain = UncertainWorld::new(grids);
    let times = uniform_times(duration, cfg.eval_samples);
    let basis = basis_matrices(&times, cfg.degree, duration);

    let gram = jerk_gram(cfg.degree, duration);
    let free = cfg.degree + 1 - 3;
    let mut metric = gram.view((3, 3), (free, free)).into_owned();
    for i in 0..free {
        for j in 0..free {
            metric[(i, j)] += cfg.goal_weight;
        }
    }
    let chol = metric
        .cholesky()
        .ok_or_else(|| Error::Degenerate("jerk Gram matrix not positive definite".into()))?;
    let whiten = chol
        .l()
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(free, free))
        .ok_or_else(|| Error::Degenerate("singular whitening factor".into()))?;
    // rescale so a unit search vector moves the samples by 1 m RMS per axis
    let moved = basis.p.columns(3, free) * &whiten;
    let rms = (moved.norm_squared() / times.len() as f64).sqrt();
    let whiten = whiten / rms.max(1e-12);

    let mut cost = PolyCost {
        start: start_coefficients(start, duration),
        base: std::array::from_fn(|axis| init.coeffs[axis][3..].to_vec()),
        whiten,
        goal: *goal,
        limits,
        cfg,
        gram,
        p: basis.p,
        pd: basis.pd,
        pdd: basis.pdd,
        world: uncertain,
        kernel: KernelConfig::uniform(1.0),
        duration,
    };
    let init_positions = cost.samples(&cost.p, &init.coeffs);
    let tensors: Vec<_> = init_positions
        .iter()
        .flat_map(|q| cost.world.tensors_at(q, cfg.band))
        .flatten()
        .collect();
    cost.kernel = KernelConfig::uniform(median_bandwidth(&tensors));

    let init_mean = vec![0.0; 3 * free];
    let params = CemParams {
        population: cfg.population,
        elites: cfg.elites,
        iterations: cfg.iterations,
        cov_floor: cfg.cov_floor,
        var_smoothing: cfg.var_smoothing,
        rng_seed: cfg.rng_seed,
    };
    let result = cem_minimize(&init_mean, cfg.init_std, &params, |x| cost.evaluate(x))?;
    let trajectory = PolyTrajectory::new(cost.coefficients(&result.best), cost.duration)?;

    let nominal: Vec<_> = world.iter().map(|u| u.nominal).collect();
    if !nominal.is_empty() {
        let positions = cost.samples(&cost.p, &trajectory.coeffs);
        let worst = positions
            .iter()
            .map(|q| min_sdf(&nominal, q))
            .fold(f64::INFINITY, f64::min);
        if worst < cfg.band.r_min * (1.0 - cfg.tolerance) {
            return Err(Error::PlanFailed(format!(
                "nominal clearance {worst:.3} m below r_min {:.3} m",
                cfg.band.r_min
            )));
        }
    }
    Ok(CemPlan {
        trajectory,
        trace: result.trace,
        cost: result.best_cost,
        world: cost.world,
        kernel: cost.kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{eval, poly_smoothness};
    use approx::assert_abs_diff_eq;

    #[test]
    fn least_norm_hits_start_and_goal() {
        let start = BoundaryState {
            position: Vector3::new(1.0, 2.0, 3.0),
            velocity: Vector3::new(0.5, -0.2, 0.0),
            acceleration: Vector3::new(0.0, 0.1, -0.3),
        };
        let goal = Vector3::new(10.0, -4.0, 6.0);
        let traj = least_norm_polynomial(&start, &goal, 7, 8.0).unwrap();
        let s = eval(&traj, &[0.0, 8.0]);
        assert_abs_diff_eq!(s.positions[0], start.position, epsilon = 1e-9);
        assert_abs_diff_eq!(s.velocities[0], start.velocity, epsilon = 1e-9);
        assert_abs_diff_eq!(s.accelerations[0], start.acceleration, epsilon = 1e-9);
        assert_abs_diff_eq!(s.positions[1], goal, epsilon = 1e-9);
    }

    #[test]
    fn quadratic_surrogate_converges() {
        let target: Vec<f64> = (0..6).map(|i| i as f64 * 0.7 - 1.5).collect();
        let params = CemParams {
            population: 64,
            elites: 8,
            iterations: 30,
            cov_floor: 1e-12,
            var_smoothing: 0.6,
            rng_seed: 3,
        };
        let res = cem_minimize(&[0.0; 6], 1.0, &params, |x| {
            Ok(x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum())
        })
        .unwrap();
        for (m, t) in res.mean.iter().zip(&target) {
            assert!((m - t).abs() < 1e-2, "{m} vs {t}");
        }
        assert!(res.trace.elite_cost_monotone());
        assert!(res.trace.best_cost.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn empty_world_matches_least_norm() {
        let start = BoundaryState::at_rest(Vector3::new(0.0, 0.0, 5.0));
        let goal = Vector3::new(20.0, 5.0, 7.0);
        let limits = Limits::new(5.0, 5.0).unwrap();
        let duration = 12.0;
        let cfg = CemConfig::default();
        let plan = plan_cem(&[], &start, &goal, limits, duration, &cfg).unwrap();
        let reference =
            poly_smoothness(&least_norm_polynomial(&start, &goal, 7, duration).unwrap());
        let got = poly_smoothness(&plan.trajectory);
        assert!(
            (got - reference).abs() <= 0.01 * reference,
            "{got} vs {reference}"
        );
        assert_eq!(plan.trace.len(), cfg.iterations);
    }

    #[test]
    fn rejects_bad_params() {
        let bad = CemParams {
            population: 4,
            elites: 5,
            iterations: 1,
            cov_floor: 1e-6,
            var_smoothing: 1.0,
            rng_seed: 0,
        };
        assert!(cem_minimize(&[0.0], 1.0, &bad, |_| Ok(0.0)).is_err());
    }
}
