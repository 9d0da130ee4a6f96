//! Occupancy grids with an exact Euclidean distance transform, the discrete
//! counterpart to the analytical cuboid distance.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_sdf, Cuboid};

/// Default cap on the number of voxels in one grid.
pub const DEFAULT_VOXEL_CAP: usize = 64_000_000;

/// Stand-in for an infinite squared distance that keeps the parabola
/// intersections finite.
const FAR: f64 = 1e20;

/// Axis-aligned boolean occupancy grid. Voxel `(i, j, k)` has its center at
/// `origin + (i + ½, j + ½, k + ½)·resolution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
    /// Row-major with `k` fastest.
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(
        origin: Vector3<f64>,
        resolution: f64,
        dims: [usize; 3],
        occupancy: Vec<bool>,
    ) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidInput(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        if occupancy.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::ShapeMismatch(format!(
                "occupancy has {} entries for dims {dims:?}",
                occupancy.len()
            )));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            occupancy,
        })
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn is_occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.index(i, j, k)]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.resolution
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Far corner of the grid bounds.
    pub fn extent(&self) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                self.dims[0] as f64,
                self.dims[1] as f64,
                self.dims[2] as f64,
            ) * self.resolution
    }
}

/// [`rasterize_with_cap`] with [`DEFAULT_VOXEL_CAP`].
pub fn rasterize(cuboids: &[Cuboid], resolution: f64, padding: f64) -> Result<VoxelGrid> {
    rasterize_with_cap(cuboids, resolution, padding, DEFAULT_VOXEL_CAP)
}

/// Marks every voxel whose center lies within `resolution/2` of a cuboid. The
/// grid covers the bounding box of all cuboids grown by `padding`; an empty
/// list yields the free box `[-padding, padding]³`.
pub fn rasterize_with_cap(
    cuboids: &[Cuboid],
    resolution: f64,
    padding: f64,
    cap: usize,
) -> Result<VoxelGrid> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidInput(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if !(padding >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "padding must be non-negative, got {padding}"
        )));
    }
    let (lo, hi) = bounds(cuboids);
    let lo = lo.add_scalar(-padding);
    let hi = hi.add_scalar(padding);
    let dims: [usize; 3] =
        std::array::from_fn(|a| (((hi[a] - lo[a]) / resolution).ceil() as usize).max(1));
    let voxels = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .unwrap_or(usize::MAX);
    if voxels > cap {
        return Err(Error::GridTooLarge { voxels, cap });
    }
    let mut grid = VoxelGrid::new(lo, resolution, dims, vec![false; voxels])?;
    let half = resolution / 2.0;
    for c in cuboids {
        let (clo, chi) = bounds(std::slice::from_ref(c));
        let range = |a: usize| {
            let first = ((clo[a] - half - lo[a]) / resolution - 0.5)
                .floor()
                .max(0.0) as usize;
            let last = ((chi[a] + half - lo[a]) / resolution - 0.5).ceil().max(0.0) as usize;
            first..(last + 1).min(dims[a])
        };
        for i in range(0) {
            for j in range(1) {
                for k in range(2) {
                    let idx = grid.index(i, j, k);
                    if !grid.occupancy[idx] && c.sdf(&grid.center(i, j, k)) <= half {
                        grid.occupancy[idx] = true;
                    }
                }
            }
        }
    }
    Ok(grid)
}

fn bounds(cuboids: &[Cuboid]) -> (Vector3<f64>, Vector3<f64>) {
    if cuboids.is_empty() {
        return (Vector3::zeros(), Vector3::zeros());
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in cuboids.iter().flat_map(|c| c.vertices()) {
        lo = lo.inf(&v);
        hi = hi.sup(&v);
    }
    (lo, hi)
}

/// Distances in meters from each voxel center to the nearest occupied center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
    pub distances: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.distances[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    /// Trilinear interpolation between voxel centers, clamped to the grid.
    pub fn lookup(&self, q: &Vector3<f64>) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (q[a] - self.origin[a]) / self.resolution - 0.5;
            let max = (self.dims[a] - 1) as f64;
            let u = u.clamp(0.0, max);
            let b = (u.floor() as usize).min(self.dims[a].saturating_sub(2));
            base[a] = b;
            frac[a] = if self.dims[a] > 1 { u - b as f64 } else { 0.0 };
        }
        let step = |a: usize, bit: usize| {
            if self.dims[a] > 1 {
                base[a] + bit
            } else {
                base[a]
            }
        };
        let mut value = 0.0;
        for corner in 0..8 {
            let bits = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if bits[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                value += w * self.get(step(0, bits[0]), step(1, bits[1]), step(2, bits[2]));
            }
        }
        value
    }
}

/// One-dimensional squared distance transform of `f` into `d` by the lower
/// envelope of parabolas.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] = -∞ stops the pop at k = 0
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Exact Euclidean distance transform, separable over the three axes.
pub fn edt(grid: &VoxelGrid) -> Result<DistanceField> {
    if !grid.occupancy.iter().any(|&o| o) {
        return Err(Error::EmptyGrid);
    }
    let [nx, ny, nz] = grid.dims;
    let mut sq: Vec<f64> = grid
        .occupancy
        .iter()
        .map(|&o| if o { 0.0 } else { FAR })
        .collect();
    let longest = nx.max(ny).max(nz);
    let mut f = vec![0.0; longest];
    let mut d = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    let stride = [ny * nz, nz, 1];
    for axis in 0..3 {
        let n = grid.dims[axis];
        let (oa, ob) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for a in 0..grid.dims[oa] {
            for b in 0..grid.dims[ob] {
                let start = a * stride[oa] + b * stride[ob];
                for t in 0..n {
                    f[t] = sq[start + t * stride[axis]];
                }
                edt_1d(&f[..n], &mut d[..n], &mut v[..n], &mut z[..n + 1]);
                for t in 0..n {
                    sq[start + t * stride[axis]] = d[t].min(FAR);
                }
            }
        }
    }
    let distances = sq.into_iter().map(|s| s.sqrt() * grid.resolution).collect();
    Ok(DistanceField {
        origin: grid.origin,
        resolution: grid.resolution,
        dims: grid.dims,
        distances,
    })
}

/// Distance from `q` to the nearest cuboid for every query.
pub fn analytic_batch(world: &[Cuboid], queries: &[Vector3<f64>]) -> Vec<f64> {
    queries.iter().map(|q| min_sdf(world, q)).collect()
}

/// Trilinear distance-field lookup for every query.
pub fn edt_batch(field: &DistanceField, queries: &[Vector3<f64>]) -> Vec<f64> {
    queries.iter().map(|q| field.lookup(q)).collect()
}

/// Query-bench settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBenchConfig {
    pub counts: Vec<usize>,
    pub resolution: f64,
    pub padding: f64,
    /// Timed repetitions per (method, count).
    pub repeats: usize,
    pub rng_seed: u64,
    pub voxel_cap: usize,
}

impl Default for QueryBenchConfig {
    fn default() -> Self {
        Self {
            counts: vec![50_000, 100_000, 150_000],
            resolution: 0.25,
            padding: 2.0,
            repeats: 3,
            rng_seed: 0,
            voxel_cap: DEFAULT_VOXEL_CAP,
        }
    }
}

/// Timing of one method at one query count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub count: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

/// Query timings plus the one-off distance-field build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBench {
    pub rows: Vec<BenchRow>,
    /// Rasterization plus transform.
    pub build_s: f64,
    /// Largest `|lookup − sdf|` seen over the benchmarked queries.
    pub max_discrepancy: f64,
    pub resolution: f64,
}

impl QueryBench {
    pub fn to_table(&self) -> String {
        let mut out = String::from("method,count,mean_s,std_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6e},{:.6e}",
                r.method, r.count, r.mean_s, r.std_s
            );
        }
        out
    }

    pub fn row(&self, method: &str, count: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.count == count)
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Times analytical and distance-field queries on uniform random points
/// inside the padded grid bounds.
pub fn query_bench(world: &[Cuboid], cfg: &QueryBenchConfig) -> Result<QueryBench> {
    if world.is_empty() {
        return Err(Error::Empty("query_bench world"));
    }
    if cfg.repeats == 0 {
        return Err(Error::InvalidInput("repeats must be ≥ 1".into()));
    }
    let t0 = Instant::now();
    let grid = rasterize_with_cap(world, cfg.resolution, cfg.padding, cfg.voxel_cap)?;
    let field = edt(&grid)?;
    let build_s = t0.elapsed().as_secs_f64();

    let lo = grid.origin;
    let hi = grid.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut rows = Vec::new();
    let mut max_discrepancy: f64 = 0.0;
    for &count in &cfg.counts {
        let queries: Vec<Vector3<f64>> = (0..count)
            .map(|_| Vector3::from_fn(|a, _| rng.random_range(lo[a]..hi[a])))
            .collect();
        let mut analytic_t = Vec::with_capacity(cfg.repeats);
        let mut edt_t = Vec::with_capacity(cfg.repeats);
        let mut analytic = Vec::new();
        let mut lookups = Vec::new();
        for _ in 0..cfg.repeats {
            let t = Instant::now();
            analytic = std::hint::black_box(analytic_batch(world, &queries));
            analytic_t.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            lookups = std::hint::black_box(edt_batch(&field, &queries));
            edt_t.push(t.elapsed().as_secs_f64());
        }
        for (a, b) in analytic.iter().zip(&lookups) {
            max_discrepancy = max_discrepancy.max((a - b).abs());
        }
        for (method, times) in [("analytic", &analytic_t), ("edt", &edt_t)] {
            let (mean_s, std_s) = mean_std(times);
            rows.push(BenchRow {
                method: method.to_string(),
                count,
                mean_s,
                std_s,
            });
        }
    }
    Ok(QueryBench {
        rows,
        build_s,
        max_discrepancy,
        resolution: cfg.resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(grid: &VoxelGrid) -> Vec<f64> {
        let [nx, ny, nz] = grid.dims;
        let occupied: Vec<[usize; 3]> = (0..nx)
            .flat_map(|i| (0..ny).flat_map(move |j| (0..nz).map(move |k| [i, j, k])))
            .filter(|&[i, j, k]| grid.is_occupied(i, j, k))
            .collect();
        let mut out = Vec::with_capacity(grid.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let best = occupied
                        .iter()
                        .map(|o| {
                            let d = [
                                i as i64 - o[0] as i64,
                                j as i64 - o[1] as i64,
                                k as i64 - o[2] as i64,
                            ];
                            d.iter().map(|x| x * x).sum::<i64>()
                        })
                        .min()
                        .unwrap();
                    out.push((best as f64).sqrt() * grid.resolution);
                }
            }
        }
        out
    }

    #[test]
    fn single_voxel_pythagoras() {
        let dims = [8, 8, 3];
        let mut occ = vec![false; 8 * 8 * 3];
        occ[0] = true;
        let grid = VoxelGrid::new(Vector3::zeros(), 0.5, dims, occ).unwrap();
        let field = edt(&grid).unwrap();
        assert_eq!(field.get(3, 4, 0), 2.5);
        assert_eq!(field.get(0, 0, 0), 0.0);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let dims = [7, 5, 6];
            let occ: Vec<bool> = (0..210).map(|_| rng.random::<f64>() < 0.05).collect();
            if !occ.iter().any(|&o| o) {
                continue;
            }
            let grid = VoxelGrid::new(Vector3::zeros(), 0.3, dims, occ).unwrap();
            assert_eq!(edt(&grid).unwrap().distances, brute(&grid));
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let grid = rasterize(&[], 1.0, 2.0).unwrap();
        assert_eq!(grid.dims, [4, 4, 4]);
        assert_eq!(grid.occupied_count(), 0);
        assert!(matches!(edt(&grid), Err(Error::EmptyGrid)));
    }

    #[test]
    fn cap_enforced() {
        let c = Cuboid::from_parts([0.0, 0.0], 0.0, 10.0, 10.0, 10.0).unwrap();
        assert!(matches!(
            rasterize_with_cap(&[c], 0.1, 0.0, 1000),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn lookup_at_centers_is_exact() {
        let c = Cuboid::from_parts([0.0, 0.0], 0.3, 2.0, 3.0, 1.0).unwrap();
        let grid = rasterize(&[c], 0.25, 1.0).unwrap();
        let field = edt(&grid).unwrap();
        for (i, j, k) in [
            (0, 0, 0),
            (3, 5, 2),
            (grid.dims[0] - 1, 1, grid.dims[2] - 1),
        ] {
            assert_eq!(field.lookup(&grid.center(i, j, k)), field.get(i, j, k));
        }
    }
}
