//! Constraint-violation distributions and their MMD distance to the Dirac
//! delta at zero.
//!
//! For every query point each perturbed facade yields one distance sample
//! `d_ijk`. The band violation `f_ijk = max(d - r_max, 0) + max(r_min - d, 0)`
//! is zero when the sample lies inside the safety band, so a perfectly safe
//! query produces a Dirac delta at zero. The squared RKHS distance between the
//! empirical violation distribution and that delta is the collision surrogate
//! minimized by the planners.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sdf, Cuboid};
use crate::uncertainty::{GridCounts, SampleGrid};

/// Desired distance corridor `[r_min, r_max]` to every obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyBand {
    pub r_min: f64,
    pub r_max: f64,
}

impl SafetyBand {
    pub fn new(r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min >= 0.0 && r_max > r_min) {
            return Err(Error::InvalidInput(format!(
                "safety band needs 0 ≤ r_min < r_max, got [{r_min}, {r_max}]"
            )));
        }
        Ok(Self { r_min, r_max })
    }
}

/// Band violation of a single distance sample.
pub fn violation(d: f64, band: SafetyBand) -> f64 {
    (d - band.r_max).max(0.0) + (band.r_min - d).max(0.0)
}

/// Violation samples for one query point, indexed `[yaw][size][origin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationTensor {
    values: Vec<f64>,
    shape: GridCounts,
}

impl ViolationTensor {
    pub fn new(values: Vec<f64>, shape: GridCounts) -> Result<Self> {
        if values.len() != shape.total() || values.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape:?}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput(
                "violations must be non-negative".into(),
            ));
        }
        Ok(Self { values, shape })
    }

    pub fn shape(&self) -> GridCounts {
        self.shape
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.shape.size + j) * self.shape.origin + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Violation tensor of a query point against every realization of a grid.
pub fn violation_tensor(grid: &SampleGrid, q: &Vector3<f64>, band: SafetyBand) -> ViolationTensor {
    let values = grid
        .as_slice()
        .iter()
        .map(|c| violation(sdf(c, q), band))
        .collect();
    ViolationTensor {
        values,
        shape: grid.counts(),
    }
}

/// Gaussian RBF kernel on scalars.
pub fn rbf_kernel(a: f64, b: f64, sigma: f64) -> f64 {
    let d = a - b;
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Per-axis mixture weights of the two kernel mean embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisWeights {
    pub psi: Vec<f64>,
    pub s: Vec<f64>,
    pub o: Vec<f64>,
}

impl AxisWeights {
    pub fn uniform(shape: GridCounts) -> Self {
        Self {
            psi: vec![1.0 / shape.yaw as f64; shape.yaw],
            s: vec![1.0 / shape.size as f64; shape.size],
            o: vec![1.0 / shape.origin as f64; shape.origin],
        }
    }

    fn shape(&self) -> GridCounts {
        GridCounts::new(self.psi.len(), self.s.len(), self.o.len())
    }

    fn validate(&self) -> Result<()> {
        for (name, w) in [("psi", &self.psi), ("s", &self.s), ("o", &self.o)] {
            if w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidInput(format!("negative {name} weight")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "{name} weights sum to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Weighting of the violation samples (`sample`) and of the Dirac samples
/// (`dirac`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `1/n` along every axis, for any tensor shape.
    Uniform,
    Explicit {
        sample: AxisWeights,
        dirac: AxisWeights,
    },
}

/// Kernel bandwidth and embedding weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub weights: WeightScheme,
}

impl KernelConfig {
    pub fn uniform(bandwidth: f64) -> Self {
        Self {
            bandwidth,
            weights: WeightScheme::Uniform,
        }
    }
}

/// Floor of the median-heuristic bandwidth, in meters.
pub const MIN_BANDWIDTH: f64 = 0.5;

/// Median heuristic: `max(median of positive entries, 0.5 m)`.
pub fn median_bandwidth<'a>(tensors: impl IntoIterator<Item = &'a ViolationTensor>) -> f64 {
    let mut positive: Vec<f64> = tensors
        .into_iter()
        .flat_map(|t| t.values.iter().copied())
        .filter(|&v| v > 0.0)
        .collect();
    if positive.is_empty() {
        return MIN_BANDWIDTH;
    }
    positive.sort_by(f64::total_cmp);
    let n = positive.len();
    let median = if n % 2 == 1 {
        positive[n / 2]
    } else {
        0.5 * (positive[n / 2 - 1] + positive[n / 2])
    };
    median.max(MIN_BANDWIDTH)
}

/// Squared MMD between the violation samples and the Dirac delta at zero.
///
/// Evaluated as `C K_ff Cᵀ - 2 C K_fδ C_δᵀ + C_δ K_δδ C_δᵀ` with the samples
/// blocked by origin index `k`: each block row pairs slice `k` against the
/// whole tensor, so the block sum covers every sample pair exactly once.
pub fn mmd_point(t: &ViolationTensor, cfg: &KernelConfig) -> Result<f64> {
    if !(cfg.bandwidth > 0.0) {
        return Err(Error::InvalidInput(
            "kernel bandwidth must be positive".into(),
        ));
    }
    let shape = t.shape;
    let (sample_w, dirac_w);
    let (sample, dirac) = match &cfg.weights {
        WeightScheme::Uniform => {
            sample_w = AxisWeights::uniform(shape);
            dirac_w = sample_w.clone();
            (&sample_w, &dirac_w)
        }
        WeightScheme::Explicit { sample, dirac } => {
            for w in [sample, dirac] {
                if w.shape() != shape {
                    return Err(Error::ShapeMismatch(format!(
                        "weights {:?} vs tensor {shape:?}",
                        w.shape()
                    )));
                }
                w.validate()?;
            }
            (sample, dirac)
        }
    };
    // an all-zero tensor is exactly the Dirac delta
    if t.is_zero() {
        return Ok(0.0);
    }

    let sigma = cfg.bandwidth;
    let plane = shape.yaw * shape.size;
    let n = t.values.len();

    // Flat weight vector C in [yaw][size][origin] order and its Dirac twin.
    let flat = |w: &AxisWeights| -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for a in &w.psi {
            for b in &w.s {
                for g in &w.o {
                    out.push(a * b * g);
                }
            }
        }
        out
    };
    let c = flat(sample);
    let c_delta = flat(dirac);
    let dirac_total: f64 = c_delta.iter().sum();

    // k(f, 0) for every sample; reused wherever one side of a pair is zero.
    let k0: Vec<f64> = t
        .values
        .iter()
        .map(|&f| rbf_kernel(f, 0.0, sigma))
        .collect();
    let positive: Vec<usize> = (0..n).filter(|&b| t.values[b] > 0.0).collect();
    let zero_weight: f64 = (0..n).filter(|&b| t.values[b] == 0.0).map(|b| c[b]).sum();
    // row sum for a zero sample: every pair reduces to k(f_b, 0)
    let zero_row: f64 = (0..n).map(|b| c[b] * k0[b]).sum();

    let mut ff = 0.0;
    let mut fd = 0.0;
    let mut dd = 0.0;
    for k in 0..shape.origin {
        // C_{αβ/γ_k}: the weights of slice k, ordered by (i, j)
        let block = (0..plane).map(|ij| ij * shape.origin + k);
        let mut dirac_slice = 0.0;
        for a in block {
            let fa = t.values[a];
            let row = if fa == 0.0 {
                zero_row
            } else {
                let mut row = zero_weight * k0[a];
                for &b in &positive {
                    row += c[b] * rbf_kernel(fa, t.values[b], sigma);
                }
                row
            };
            ff += c[a] * row;
            // K_fδ: every Dirac sample sits at zero
            fd += c[a] * k0[a] * dirac_total;
            dirac_slice += c_delta[a];
        }
        // K_δδ = 1
        dd += dirac_slice * dirac_total;
    }
    Ok((ff - 2.0 * fd + dd).max(0.0))
}

/// Conservative envelope of a sample grid used to skip queries whose
/// violation tensor is provably all-zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GridEnvelope {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    centroid: Vector3<f64>,
    radius: f64,
}

impl GridEnvelope {
    pub(crate) fn new(grid: &SampleGrid) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        let cuboids = grid.as_slice();
        for c in cuboids {
            for v in c.vertices() {
                lo = lo.inf(&v);
                hi = hi.sup(&v);
            }
        }
        let centroid =
            cuboids.iter().map(Cuboid::center).sum::<Vector3<f64>>() / cuboids.len() as f64;
        let radius = cuboids
            .iter()
            .map(|c| (c.center() - centroid).norm() + c.size.half_extents().norm())
            .fold(0.0, f64::max);
        Self {
            lo,
            hi,
            centroid,
            radius,
        }
    }

    /// True when every realization's distance to `q` lies inside the band.
    pub(crate) fn certainly_in_band(&self, q: &Vector3<f64>, band: SafetyBand) -> bool {
        let gap = (self.lo - q).sup(&(q - self.hi)).map(|v| v.max(0.0));
        // margins absorb the rounding of the exact per-sample distances
        let lower = gap.norm() * (1.0 - 1e-12) - 1e-9;
        if lower < band.r_min {
            return false;
        }
        let upper = (q - self.centroid).norm() + self.radius + 1e-9;
        upper <= band.r_max
    }
}

/// Sample grids of an uncertain world with precomputed envelopes.
#[derive(Debug, Clone)]
pub struct UncertainWorld {
    grids: Vec<SampleGrid>,
    envelopes: Vec<GridEnvelope>,
}

impl UncertainWorld {
    pub fn new(grids: Vec<SampleGrid>) -> Self {
        let envelopes = grids.iter().map(GridEnvelope::new).collect();
        Self { grids, envelopes }
    }

    pub fn grids(&self) -> &[SampleGrid] {
        &self.grids
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    /// Violation tensors of `q` against every obstacle, `None` where the
    /// tensor is provably all-zero.
    pub fn tensors_at(&self, q: &Vector3<f64>, band: SafetyBand) -> Vec<Option<ViolationTensor>> {
        self.grids
            .iter()
            .zip(&self.envelopes)
            .map(|(g, env)| {
                if env.certainly_in_band(q, band) {
                    None
                } else {
                    Some(violation_tensor(g, q, band))
                }
            })
            .collect()
    }

    /// Summed MMD of one query point over all obstacles.
    pub fn mmd_at(&self, q: &Vector3<f64>, band: SafetyBand, cfg: &KernelConfig) -> Result<f64> {
        let mut total = 0.0;
        for (g, env) in self.grids.iter().zip(&self.envelopes) {
            if env.certainly_in_band(q, band) {
                continue;
            }
            total += mmd_point(&violation_tensor(g, q, band), cfg)?;
        }
        Ok(total)
    }

    /// Summed MMD over query points (outer) and obstacles (inner), in order.
    pub fn mmd_trajectory(
        &self,
        queries: &[Vector3<f64>],
        band: SafetyBand,
        cfg: &KernelConfig,
    ) -> Result<f64> {
        if queries.is_empty() {
            return Err(Error::Empty("mmd_trajectory queries"));
        }
        let mut total = 0.0;
        for q in queries {
            total += self.mmd_at(q, band, cfg)?;
        }
        Ok(total)
    }
}

/// Summed MMD over every (query, obstacle) pair.
pub fn mmd_trajectory(
    world: &[SampleGrid],
    queries: &[Vector3<f64>],
    band: SafetyBand,
    cfg: &KernelConfig,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("mmd_trajectory queries"));
    }
    let mut total = 0.0;
    for q in queries {
        for g in world {
            total += mmd_point(&violation_tensor(g, q, band), cfg)?;
        }
    }
    Ok(total)
}
