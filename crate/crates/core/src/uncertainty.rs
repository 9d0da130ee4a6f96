//! Empirical error banks for facade parameters and the perturbed sample grid.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Cuboid, CuboidSize, GroundPose2D};

/// Lower clamp applied to perturbed lengths and heights, in meters.
pub const MIN_PERTURBED_EXTENT: f64 = 0.05;

/// Non-parametric error samples: estimated minus ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBank {
    /// Yaw errors in radians.
    #[serde(rename = "yaw")]
    pub yaw_samples: Vec<f64>,
    /// `[length, height]` errors in meters.
    #[serde(rename = "size")]
    pub size_samples: Vec<Vector2<f64>>,
    /// Ground-plane origin errors in meters.
    #[serde(rename = "origin")]
    pub origin_samples: Vec<Vector2<f64>>,
}

impl ErrorBank {
    pub fn new(
        yaw_samples: Vec<f64>,
        size_samples: Vec<Vector2<f64>>,
        origin_samples: Vec<Vector2<f64>>,
    ) -> Result<Self> {
        let bank = Self {
            yaw_samples,
            size_samples,
            origin_samples,
        };
        bank.validate()?;
        Ok(bank)
    }

    /// A bank with a single zero sample per parameter (no uncertainty).
    pub fn zero() -> Self {
        Self {
            yaw_samples: vec![0.0],
            size_samples: vec![Vector2::zeros()],
            origin_samples: vec![Vector2::zeros()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.yaw_samples.is_empty() {
            return Err(Error::Empty("error bank yaw samples"));
        }
        if self.size_samples.is_empty() {
            return Err(Error::Empty("error bank size samples"));
        }
        if self.origin_samples.is_empty() {
            return Err(Error::Empty("error bank origin samples"));
        }
        let finite = self.yaw_samples.iter().all(|v| v.is_finite())
            && self
                .size_samples
                .iter()
                .chain(&self.origin_samples)
                .all(|v| v.x.is_finite() && v.y.is_finite());
        if !finite {
            return Err(Error::InvalidInput(
                "error bank holds non-finite samples".into(),
            ));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.yaw_samples.iter().all(|&v| v == 0.0)
            && self
                .size_samples
                .iter()
                .chain(&self.origin_samples)
                .all(|v| v.x == 0.0 && v.y == 0.0)
    }
}

/// A nominal facade cuboid together with its error bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainCuboid {
    pub nominal: Cuboid,
    pub bank: ErrorBank,
}

impl UncertainCuboid {
    pub fn new(nominal: Cuboid, bank: ErrorBank) -> Self {
        Self { nominal, bank }
    }

    pub fn certain(nominal: Cuboid) -> Self {
        Self {
            nominal,
            bank: ErrorBank::zero(),
        }
    }
}

/// Number of draws along the yaw, size and origin axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCounts {
    pub yaw: usize,
    pub size: usize,
    pub origin: usize,
}

impl GridCounts {
    pub const fn new(yaw: usize, size: usize, origin: usize) -> Self {
        Self { yaw, size, origin }
    }

    pub fn total(&self) -> usize {
        self.yaw * self.size * self.origin
    }
}

impl Default for GridCounts {
    fn default() -> Self {
        Self::new(4, 4, 4)
    }
}

/// Perturbed realizations of one facade, indexed `[yaw][size][origin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    cuboids: Vec<Cuboid>,
    counts: GridCounts,
}

impl SampleGrid {
    /// Builds a grid from a flat, row-major `[yaw][size][origin]` vector.
    pub fn from_flat(cuboids: Vec<Cuboid>, counts: GridCounts) -> Result<Self> {
        if counts.total() == 0 || cuboids.len() != counts.total() {
            return Err(Error::ShapeMismatch(format!(
                "{} cuboids for counts {:?}",
                cuboids.len(),
                counts
            )));
        }
        Ok(Self { cuboids, counts })
    }

    /// A 1×1×1 grid holding exactly `cuboid`.
    pub fn single(cuboid: Cuboid) -> Self {
        Self {
            cuboids: vec![cuboid],
            counts: GridCounts::new(1, 1, 1),
        }
    }

    pub fn counts(&self) -> GridCounts {
        self.counts
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &Cuboid {
        &self.cuboids[(i * self.counts.size + j) * self.counts.origin + k]
    }

    /// All realizations in row-major `[yaw][size][origin]` order.
    pub fn as_slice(&self) -> &[Cuboid] {
        &self.cuboids
    }
}

/// Draws the perturbed grid by bootstrap resampling of each bank array.
pub fn draw_grid(u: &UncertainCuboid, counts: GridCounts, rng_seed: u64) -> Result<SampleGrid> {
    if counts.yaw == 0 || counts.size == 0 || counts.origin == 0 {
        return Err(Error::InvalidInput(format!(
            "grid counts must be ≥ 1, got {counts:?}"
        )));
    }
    u.bank.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bank = &u.bank;
    let yaw: Vec<f64> = (0..counts.yaw)
        .map(|_| bank.yaw_samples[rng.random_range(0..bank.yaw_samples.len())])
        .collect();
    let size: Vec<Vector2<f64>> = (0..counts.size)
        .map(|_| bank.size_samples[rng.random_range(0..bank.size_samples.len())])
        .collect();
    let origin: Vec<Vector2<f64>> = (0..counts.origin)
        .map(|_| bank.origin_samples[rng.random_range(0..bank.origin_samples.len())])
        .collect();

    let mut cuboids = Vec::with_capacity(counts.total());
    for dyaw in &yaw {
        for ds in &size {
            for dp in &origin {
                cuboids.push(perturbed(&u.nominal, *dyaw, ds, dp));
            }
        }
    }
    SampleGrid::from_flat(cuboids, counts)
}

/// Draws `n` cuboids, each with its own independent yaw, size and origin
/// error from the bank.
pub fn draw_independent(u: &UncertainCuboid, n: usize, rng_seed: u64) -> Result<Vec<Cuboid>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    u.bank.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bank = &u.bank;
    Ok((0..n)
        .map(|_| {
            let dyaw = bank.yaw_samples[rng.random_range(0..bank.yaw_samples.len())];
            let ds = bank.size_samples[rng.random_range(0..bank.size_samples.len())];
            let dp = bank.origin_samples[rng.random_range(0..bank.origin_samples.len())];
            perturbed(&u.nominal, dyaw, &ds, &dp)
        })
        .collect())
}

fn perturbed(nominal: &Cuboid, dyaw: f64, ds: &Vector2<f64>, dp: &Vector2<f64>) -> Cuboid {
    Cuboid::new(
        GroundPose2D::new(nominal.pose.origin + dp, nominal.pose.yaw + dyaw),
        CuboidSize {
            length: (nominal.size.length + ds.x).max(MIN_PERTURBED_EXTENT),
            height: (nominal.size.height + ds.y).max(MIN_PERTURBED_EXTENT),
            thickness: nominal.size.thickness,
        },
    )
}

/// One Gaussian component `(weight, mean, std)` of a scalar mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

const fn comp(weight: f64, mean: f64, std: f64) -> MixtureComponent {
    MixtureComponent { weight, mean, std }
}

/// Mixture parameters for the synthetic stand-in bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankMixture {
    pub yaw: Vec<MixtureComponent>,
    pub size: Vec<MixtureComponent>,
    pub origin: Vec<MixtureComponent>,
}

impl Default for BankMixture {
    fn default() -> Self {
        Self {
            yaw: vec![comp(0.6, -0.05, 0.03), comp(0.4, 0.12, 0.05)],
            size: vec![comp(0.7, -0.8, 0.5), comp(0.3, 1.5, 0.8)],
            origin: vec![comp(0.5, -0.6, 0.4), comp(0.5, 0.9, 0.6)],
        }
    }
}

fn sample_mixture(components: &[MixtureComponent], rng: &mut ChaCha8Rng) -> Result<f64> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.is_empty() || total <= 0.0 {
        return Err(Error::InvalidInput(
            "mixture needs positive total weight".into(),
        ));
    }
    let mut u = rng.random::<f64>() * total;
    let mut chosen = components[components.len() - 1];
    for c in components {
        if u < c.weight {
            chosen = *c;
            break;
        }
        u -= c.weight;
    }
    let normal = Normal::new(chosen.mean, chosen.std)
        .map_err(|e| Error::InvalidInput(format!("mixture component: {e}")))?;
    Ok(normal.sample(rng))
}

/// Synthetic, deliberately non-Gaussian bank with the default mixtures.
///
/// This is a stand-in for a bank calibrated from real perception runs.
pub fn default_bank(rng_seed: u64, n: usize) -> Result<ErrorBank> {
    default_bank_with(&BankMixture::default(), rng_seed, n)
}

/// Synthetic bank drawn from arbitrary mixture parameters.
pub fn default_bank_with(mixture: &BankMixture, rng_seed: u64, n: usize) -> Result<ErrorBank> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "bank size must be ≥ 2, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut yaw = Vec::with_capacity(n);
    let mut size = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    for _ in 0..n {
        yaw.push(sample_mixture(&mixture.yaw, &mut rng)?);
    }
    for _ in 0..n {
        let l = sample_mixture(&mixture.size, &mut rng)?;
        let h = sample_mixture(&mixture.size, &mut rng)?;
        size.push(Vector2::new(l, h));
    }
    for _ in 0..n {
        let x = sample_mixture(&mixture.origin, &mut rng)?;
        let y = sample_mixture(&mixture.origin, &mut rng)?;
        origin.push(Vector2::new(x, y));
    }
    ErrorBank::new(yaw, size, origin)
}

/// Builds a bank from `(estimated, truth)` pairs.
pub fn calibrate_bank(pairs: &[(Cuboid, Cuboid)]) -> Result<ErrorBank> {
    if pairs.is_empty() {
        return Err(Error::Empty("calibration pairs"));
    }
    let yaw = pairs
        .iter()
        .map(|(est, truth)| wrap_angle(est.pose.yaw - truth.pose.yaw))
        .collect();
    let size = pairs
        .iter()
        .map(|(est, truth)| {
            Vector2::new(
                est.size.length - truth.size.length,
                est.size.height - truth.size.height,
            )
        })
        .collect();
    let origin = pairs
        .iter()
        .map(|(est, truth)| est.pose.origin - truth.pose.origin)
        .collect();
    ErrorBank::new(yaw, size, origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn nominal() -> Cuboid {
        Cuboid::from_parts([0.0, 0.0], 0.0, 10.0, 20.0, 0.2).unwrap()
    }

    #[test]
    fn zero_bank_reproduces_nominal() {
        let u = UncertainCuboid::certain(nominal());
        let grid = draw_grid(&u, GridCounts::new(2, 3, 2), 5).unwrap();
        assert!(grid.as_slice().iter().all(|c| *c == nominal()));
    }

    #[test]
    fn single_sample_arithmetic() {
        let bank = ErrorBank::new(
            vec![0.1],
            vec![Vector2::new(1.0, 0.0)],
            vec![Vector2::new(2.0, 0.0)],
        )
        .unwrap();
        let grid = draw_grid(
            &UncertainCuboid::new(nominal(), bank),
            GridCounts::new(1, 1, 1),
            0,
        )
        .unwrap();
        let c = grid.get(0, 0, 0);
        assert_abs_diff_eq!(c.pose.yaw, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.size.length, 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.pose.origin, Vector2::new(2.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rejects_zero_counts_and_empty_banks() {
        let u = UncertainCuboid::certain(nominal());
        assert!(draw_grid(&u, GridCounts::new(0, 1, 1), 0).is_err());
        let mut empty = u.clone();
        empty.bank.origin_samples.clear();
        assert!(draw_grid(&empty, GridCounts::new(1, 1, 1), 0).is_err());
    }

    #[test]
    fn clamps_degenerate_sizes() {
        let bank = ErrorBank::new(
            vec![0.0],
            vec![Vector2::new(-50.0, -50.0)],
            vec![Vector2::zeros()],
        )
        .unwrap();
        let grid = draw_grid(
            &UncertainCuboid::new(nominal(), bank),
            GridCounts::new(1, 2, 1),
            1,
        )
        .unwrap();
        for c in grid.as_slice() {
            assert_eq!(c.size.length, MIN_PERTURBED_EXTENT);
            assert_eq!(c.size.height, MIN_PERTURBED_EXTENT);
        }
    }

    #[test]
    fn default_bank_size_contract() {
        let bank = default_bank(3, 2).unwrap();
        assert_eq!(bank.yaw_samples.len(), 2);
        assert_eq!(bank.size_samples.len(), 2);
        assert_eq!(bank.origin_samples.len(), 2);
        assert!(default_bank(3, 1).is_err());
        assert_ne!(default_bank(1, 16).unwrap(), default_bank(2, 16).unwrap());
    }

    #[test]
    fn calibration_examples() {
        let t = nominal();
        let zero = calibrate_bank(&[(t, t), (t, t)]).unwrap();
        assert!(zero.is_zero());

        let mut est = t;
        est.pose.yaw = 0.2;
        let mut truth = t;
        truth.pose.yaw = 0.1;
        let bank = calibrate_bank(&[(est, truth)]).unwrap();
        assert_abs_diff_eq!(bank.yaw_samples[0], 0.1, epsilon = 1e-15);

        est.pose.yaw = 3.1;
        truth.pose.yaw = -3.1;
        let bank = calibrate_bank(&[(est, truth)]).unwrap();
        assert_abs_diff_eq!(
            bank.yaw_samples[0],
            6.2 - 2.0 * std::f64::consts::PI,
            epsilon = 1e-12
        );
        assert!(calibrate_bank(&[]).is_err());
    }
}
