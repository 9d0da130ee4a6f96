//! Primal-dual interior-point solver for banded convex QPs.
//!
//! Solves `min ½ xᵀHx + gᵀx  s.t.  A x ≤ b` where `H` is symmetric positive
//! semidefinite and banded, and every row of `A` touches a contiguous-ish set
//! of variables, so the normal matrix `H + Aᵀ D A` stays banded.

use crate::error::{Error, Result};

/// Symmetric banded matrix storing the diagonal and `bandwidth` sub-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bandwidth: usize,
    /// Row-major lower band: `data[i * (bw + 1) + (i - j)]` for `j ≤ i`.
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            return 0.0;
        }
        self.data[i * (self.bandwidth + 1) + (i - j)]
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)` (once on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bandwidth, "entry ({i}, {j}) outside the band");
        self.data[i * (self.bandwidth + 1) + (i - j)] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let bw = self.bandwidth;
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let v = self.data[i * (bw + 1) + (i - j)];
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// In-place banded Cholesky `L Lᵀ`; fails on a non-positive pivot.
    fn cholesky(self) -> Result<BandedCholesky> {
        self.factor(false)
    }

    /// Cholesky that replaces pivots lost to cancellation by a huge value,
    /// which freezes the corresponding direction instead of failing.
    fn cholesky_guarded(self) -> Result<BandedCholesky> {
        self.factor(true)
    }

    fn factor(mut self, guarded: bool) -> Result<BandedCholesky> {
        let bw = self.bandwidth;
        let w = bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[i * w + (i - j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if guarded && !(s > 1e-14 * self.data[i * w]) && s.is_finite() {
                        s = 1e64;
                    }
                    if !(s > 0.0) {
                        return Err(Error::Degenerate(format!(
                            "non-positive pivot {s:e} at {i}"
                        )));
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

struct BandedCholesky {
    l: BandedSym,
}

impl BandedCholesky {
    fn solve(&self, rhs: &mut [f64]) {
        let n = self.l.n;
        let bw = self.l.bandwidth;
        let w = bw + 1;
        let d = &self.l.data;
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(bw)..i {
                s -= d[i * w + (i - k)] * rhs[k];
            }
            rhs[i] = s / d[i * w];
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= d[k * w + (k - i)] * rhs[k];
            }
            rhs[i] = s / d[i * w];
        }
    }
}

/// One inequality row `Σ coeffs[k]·x[index[k]] ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub index: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn new(index: Vec<usize>, coeffs: Vec<f64>, rhs: f64) -> Self {
        debug_assert_eq!(index.len(), coeffs.len());
        Self { index, coeffs, rhs }
    }

    /// The same half-space with unit largest coefficient.
    pub fn normalized(mut self) -> Self {
        let scale = self.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if scale > 0.0 {
            for c in &mut self.coeffs {
                *c /= scale;
            }
            self.rhs /= scale;
        }
        self
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.index
            .iter()
            .zip(&self.coeffs)
            .map(|(&i, c)| c * x[i])
            .sum()
    }

    fn span(&self) -> usize {
        match (self.index.iter().min(), self.index.iter().max()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0,
        }
    }
}

/// Convex QP `min ½ xᵀHx + gᵀx  s.t.  rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedQp {
    pub h: BandedSym,
    pub g: Vec<f64>,
    pub rows: Vec<SparseRow>,
}

/// Stopping rule of the interior-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

/// Primal solution and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl BandedQp {
    /// The same problem in the displacement `δ = x − x0`. Solving near the
    /// optimum in displacement form avoids cancellation in the objective.
    pub fn shifted(&self, x0: &[f64]) -> BandedQp {
        let hx = self.h.mul_vec(x0);
        let g = self.g.iter().zip(&hx).map(|(g, h)| g + h).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| SparseRow::new(r.index.clone(), r.coeffs.clone(), r.rhs - r.dot(x0)))
            .collect();
        BandedQp {
            h: self.h.clone(),
            g,
            rows,
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.mul_vec(x);
        x.iter()
            .zip(&hx)
            .zip(&self.g)
            .map(|((xi, hi), gi)| 0.5 * xi * hi + gi * xi)
            .sum()
    }

    fn normal_bandwidth(&self) -> usize {
        self.rows
            .iter()
            .map(SparseRow::span)
            .fold(self.h.bandwidth(), usize::max)
    }

    /// Mehrotra predictor-corrector iteration started from `x0`.
    pub fn solve(&self, x0: &[f64], settings: &QpSettings) -> Result<QpSolution> {
        let n = self.h.dim();
        if x0.len() != n || self.g.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "QP of dimension {n} with x0 {} and g {}",
                x0.len(),
                self.g.len()
            )));
        }
        let m = self.rows.len();
        let mut x = x0.to_vec();
        if m == 0 {
            // unconstrained: a single Newton step
            let chol = self.h.clone().cholesky()?;
            let mut rhs: Vec<f64> = self.g.iter().map(|v| -v).collect();
            chol.solve(&mut rhs);
            return Ok(QpSolution {
                objective: self.objective(&rhs),
                x: rhs,
                iterations: 1,
            });
        }
        let bw = self.normal_bandwidth();
        let scale_b = 1.0 + self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let scale_g = 1.0 + self.g.iter().map(|v| v.abs()).fold(0.0, f64::max);

        let mut w: Vec<f64> = self
            .rows
            .iter()
            .map(|r| (r.rhs - r.dot(&x)).max(1.0))
            .collect();
        let mut z = vec![1.0; m];
        let mut fallback = None;

        for iter in 0..settings.max_iterations {
            // residuals, with scales for relative stopping tests
            let hx = self.h.mul_vec(&x);
            let mut atz = vec![0.0; n];
            for (row, zi) in self.rows.iter().zip(&z) {
                for (&i, c) in row.index.iter().zip(&row.coeffs) {
                    atz[i] += c * zi;
                }
            }
            let rd: Vec<f64> = (0..n).map(|i| hx[i] + self.g[i] + atz[i]).collect();
            let rp: Vec<f64> = self
                .rows
                .iter()
                .zip(&w)
                .map(|(r, wi)| r.dot(&x) + wi - r.rhs)
                .collect();
            let mu = w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / m as f64;
            let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let scale_d = scale_g.max(inf(&hx)).max(inf(&atz));
            let objective: f64 = x
                .iter()
                .zip(&hx)
                .zip(&self.g)
                .map(|((xi, hi), gi)| 0.5 * xi * hi + gi * xi)
                .sum();
            if inf(&rd) <= settings.tolerance * scale_d
                && inf(&rp) <= settings.tolerance * scale_b
                && mu <= settings.tolerance * (1.0 + objective.abs())
            {
                return Ok(QpSolution {
                    objective,
                    x,
                    iterations: iter,
                });
            }
            let acceptable = settings.tolerance.sqrt();
            if inf(&rd) <= acceptable * scale_d
                && inf(&rp) <= acceptable * scale_b
                && mu <= acceptable * (1.0 + objective.abs())
            {
                fallback = Some(QpSolution {
                    objective,
                    x: x.clone(),
                    iterations: iter,
                });
                if mu <= 1e-30 {
                    // complementarity is exhausted; residuals cannot improve further
                    break;
                }
            }

            // normal matrix H + Aᵀ D A with D = Z / W
            let d: Vec<f64> = z.iter().zip(&w).map(|(zi, wi)| zi / wi).collect();
            let mut normal = BandedSym::zeros(n, bw);
            for i in 0..n {
                let lo = i.saturating_sub(self.h.bandwidth());
                for j in lo..=i {
                    let v = self.h.get(i, j);
                    if v != 0.0 {
                        normal.add(i, j, v);
                    }
                }
            }
            for (row, di) in self.rows.iter().zip(&d) {
                for (a, (&i, ci)) in row.index.iter().zip(&row.coeffs).enumerate() {
                    for (&j, cj) in row.index[..=a].iter().zip(&row.coeffs[..=a]) {
                        normal.add(i, j, di * ci * cj);
                    }
                }
            }
            for i in 0..n {
                normal.add(i, i, 1e-12 * (1.0 + self.h.get(i, i)));
            }
            let Ok(chol) = normal.cholesky_guarded() else {
                break;
            };

            let solve_dir = |rc: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
                // rhs = -rd - Aᵀ (D rp - W⁻¹ rc)
                let mut rhs: Vec<f64> = rd.iter().map(|v| -v).collect();
                for (k, row) in self.rows.iter().enumerate() {
                    let s = d[k] * rp[k] - rc[k] / w[k];
                    for (&i, c) in row.index.iter().zip(&row.coeffs) {
                        rhs[i] -= c * s;
                    }
                }
                chol.solve(&mut rhs);
                let dx = rhs;
                let mut dz = vec![0.0; m];
                let mut dw = vec![0.0; m];
                for (k, row) in self.rows.iter().enumerate() {
                    let adx = row.dot(&dx);
                    dz[k] = d[k] * (adx + rp[k]) - rc[k] / w[k];
                    dw[k] = -rp[k] - adx;
                }
                (dx, dw, dz)
            };
            let step_to_boundary = |v: &[f64], dv: &[f64]| -> f64 {
                v.iter()
                    .zip(dv)
                    .filter(|(_, d)| **d < 0.0)
                    .map(|(a, d)| -a / d)
                    .fold(1.0, f64::min)
            };

            // predictor
            let rc_aff: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a * b).collect();
            let (_, dw_a, dz_a) = solve_dir(&rc_aff);
            let alpha_p = step_to_boundary(&w, &dw_a);
            let alpha_d = step_to_boundary(&z, &dz_a);
            let mu_aff = w
                .iter()
                .zip(&dw_a)
                .zip(z.iter().zip(&dz_a))
                .map(|((wi, dwi), (zi, dzi))| (wi + alpha_p * dwi) * (zi + alpha_d * dzi))
                .sum::<f64>()
                / m as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

            // corrector
            let rc: Vec<f64> = (0..m)
                .map(|k| w[k] * z[k] + dw_a[k] * dz_a[k] - sigma * mu)
                .collect();
            let (dx, dw, dz) = solve_dir(&rc);
            let alpha_p = 0.99 * step_to_boundary(&w, &dw);
            let alpha_d = 0.99 * step_to_boundary(&z, &dz);
            let alpha = alpha_p.min(alpha_d).min(1.0);
            for (xi, dxi) in x.iter_mut().zip(&dx) {
                *xi += alpha * dxi;
            }
            for k in 0..m {
                w[k] += alpha * dw[k];
                z[k] += alpha * dz[k];
            }
            if x.iter().any(|v| !v.is_finite()) {
                break;
            }
        }
        fallback
            .ok_or_else(|| Error::Infeasible("interior-point iteration did not converge".into()))
    }
}
