//! Synthetic dataset generators with known moments, plus CSV ingestion.
//!
//! The analytic kinds double as oracles: isotropic Gaussians and Gaussian
//! mixtures expose closed-form second moments, densities, and exact Bayes
//! conditionals, which the evaluation module leans on heavily.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// What to draw `x_0` from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// `N(0, sigma^2 I)` in `dim` dimensions.
    Gaussian { dim: usize, sigma: f64 },
    /// Isotropic Gaussian mixture.
    Gmm {
        dim: usize,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
    },
    /// Two interleaved half-circles in 2D with isotropic noise.
    TwoMoons { noise: f64 },
    /// Uniform over the 8 dark cells of a 4x4 board on [-2, 2]^2.
    Checkerboard,
    /// Points loaded from a CSV file.
    Csv { points: Vec<Vec<f64>>, dim: usize },
}

/// Mixture-of-isotropic-Gaussians view of a dataset, where one exists.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoGaussMixture {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-component variance (isotropic).
    pub vars: Vec<f64>,
}

impl DatasetSpec {
    pub fn gaussian(dim: usize, sigma: f64) -> Result<Self> {
        if dim == 0 || !(sigma > 0.0) {
            return Err(Error::config(format!(
                "gaussian dataset needs dim >= 1 and sigma > 0, got ({dim}, {sigma})"
            )));
        }
        Ok(DatasetSpec::Gaussian { dim, sigma })
    }

    pub fn gmm(weights: Vec<f64>, means: Vec<Vec<f64>>, scales: Vec<f64>) -> Result<Self> {
        if means.is_empty() || weights.len() != means.len() || scales.len() != means.len() {
            return Err(Error::config(
                "gmm needs matching nonempty weights/means/scales".to_string(),
            ));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::config("gmm means must share a positive dim".to_string()));
        }
        if scales.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::config("gmm scales must be >= 0".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "gmm weights must be nonnegative and sum to 1, got sum {total}"
            )));
        }
        Ok(DatasetSpec::Gmm {
            dim,
            weights,
            means,
            scales,
        })
    }

    /// `k` equally weighted components on a circle of radius `radius`.
    pub fn ring_gmm(k: usize, radius: f64, sigma: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("ring gmm needs k >= 1".to_string()));
        }
        let means = (0..k)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                vec![radius * theta.cos(), radius * theta.sin()]
            })
            .collect();
        Self::gmm(vec![1.0 / k as f64; k], means, vec![sigma; k])
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let (points, dim) = read_csv(path)?;
        Ok(DatasetSpec::Csv { points, dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetSpec::Gaussian { dim, .. } => *dim,
            DatasetSpec::Gmm { dim, .. } => *dim,
            DatasetSpec::TwoMoons { .. } => 2,
            DatasetSpec::Checkerboard => 2,
            DatasetSpec::Csv { dim, .. } => *dim,
        }
    }

    /// One i.i.d. draw.
    pub fn draw(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        match self {
            DatasetSpec::Gaussian { dim, sigma } => (0..*dim)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            DatasetSpec::Gmm {
                dim,
                weights,
                means,
                scales,
            } => {
                let k = pick_weighted(weights, rng);
                (0..*dim)
                    .map(|d| means[k][d] + scales[k] * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            DatasetSpec::TwoMoons { noise } => {
                let theta = rng.gen_range(0.0..std::f64::consts::PI);
                let (mut px, mut py) = if rng.gen_bool(0.5) {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                px += noise * rng.sample::<f64, _>(StandardNormal);
                py += noise * rng.sample::<f64, _>(StandardNormal);
                vec![px, py]
            }
            DatasetSpec::Checkerboard => {
                // Dark cells of the 4x4 board: (i + j) even.
                let cell = rng.gen_range(0..8u32);
                let (i, j) = CHECKER_CELLS[cell as usize];
                vec![
                    -2.0 + i as f64 + rng.gen_range(0.0..1.0),
                    -2.0 + j as f64 + rng.gen_range(0.0..1.0),
                ]
            }
            DatasetSpec::Csv { points, .. } => {
                points[rng.gen_range(0..points.len())].clone()
            }
        }
    }

    /// `n` i.i.d. draws.
    pub fn sample(&self, n: usize, rng: &mut ChaCha20Rng) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::domain("need n >= 1 samples".to_string()));
        }
        Ok((0..n).map(|_| self.draw(rng)).collect())
    }

    /// `m2 = E[|x_0|^2]`, closed form for analytic kinds, empirical for CSV.
    pub fn second_moment(&self) -> f64 {
        match self {
            DatasetSpec::Gaussian { dim, sigma } => *dim as f64 * sigma * sigma,
            DatasetSpec::Gmm {
                dim,
                weights,
                means,
                scales,
            } => weights
                .iter()
                .zip(means)
                .zip(scales)
                .map(|((w, m), s)| {
                    w * (m.iter().map(|v| v * v).sum::<f64>() + *dim as f64 * s * s)
                })
                .sum(),
            DatasetSpec::TwoMoons { noise } => {
                // Outer moon has E|x|^2 = 1; inner moon 2.25 - 2/pi.
                0.5 * 1.0 + 0.5 * (2.25 - 2.0 / std::f64::consts::PI) + 2.0 * noise * noise
            }
            // Both marginals are uniform on [-2, 2].
            DatasetSpec::Checkerboard => 8.0 / 3.0,
            DatasetSpec::Csv { points, .. } => {
                points
                    .iter()
                    .map(|p| p.iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>()
                    / points.len() as f64
            }
        }
    }

    /// Mixture view for kinds with one (Gaussian and GMM only).
    pub fn as_mixture(&self) -> Option<IsoGaussMixture> {
        match self {
            DatasetSpec::Gaussian { dim, sigma } => Some(IsoGaussMixture {
                dim: *dim,
                weights: vec![1.0],
                means: vec![vec![0.0; *dim]],
                vars: vec![sigma * sigma],
            }),
            DatasetSpec::Gmm {
                dim,
                weights,
                means,
                scales,
            } => Some(IsoGaussMixture {
                dim: *dim,
                weights: weights.clone(),
                means: means.clone(),
                vars: scales.iter().map(|s| s * s).collect(),
            }),
            _ => None,
        }
    }
}

const CHECKER_CELLS: [(u32, u32); 8] = [
    (0, 0),
    (0, 2),
    (1, 1),
    (1, 3),
    (2, 0),
    (2, 2),
    (3, 1),
    (3, 3),
];

fn pick_weighted(weights: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

/// Exact Bayes conditional of the unobserved coordinate of a 2D GMM given
/// the other coordinate, discretized on `grid` (cell midpoints, uniform
/// spacing) and normalized to sum to 1.
pub fn gmm_conditional_grid(
    spec: &DatasetSpec,
    observed_coord: usize,
    value: f64,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let mix = spec
        .as_mixture()
        .ok_or_else(|| Error::config("conditional grid needs a gaussian/gmm dataset".to_string()))?;
    if mix.dim != 2 || observed_coord > 1 {
        return Err(Error::config(
            "conditional grid is defined for 2D mixtures and coord in {0, 1}".to_string(),
        ));
    }
    if grid.len() < 2 {
        return Err(Error::domain("grid needs at least 2 points".to_string()));
    }
    let free = 1 - observed_coord;
    // Component responsibilities given the observed coordinate.
    let log_post: Vec<f64> = (0..mix.weights.len())
        .map(|k| {
            mix.weights[k].ln()
                + log_normal_pdf(value, mix.means[k][observed_coord], mix.vars[k])
        })
        .collect();
    let lse = log_sum_exp(&log_post);
    if !lse.is_finite() {
        return Err(Error::numeric(format!(
            "conditional density underflow at observed value {value}"
        )));
    }
    let mut out: Vec<f64> = grid
        .iter()
        .map(|&y| {
            let terms: Vec<f64> = (0..mix.weights.len())
                .map(|k| log_post[k] - lse + log_normal_pdf(y, mix.means[k][free], mix.vars[k]))
                .collect();
            log_sum_exp(&terms).exp()
        })
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::numeric("conditional grid mass underflow".to_string()));
    }
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// Draw from a piecewise-constant density on uniform grid cells: pick a cell
/// by its probability, then jitter uniformly within it.
pub fn sample_grid_density(
    grid: &[f64],
    probs: &[f64],
    n: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<f64>> {
    if grid.len() != probs.len() || grid.len() < 2 {
        return Err(Error::shape("grid/probs mismatch".to_string()));
    }
    let h = grid[1] - grid[0];
    Ok((0..n)
        .map(|_| {
            let k = pick_weighted(probs, rng);
            grid[k] + h * (rng.gen_range(0.0..1.0) - 0.5)
        })
        .collect())
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Write points as CSV: header `x0,x1,...`, 17 significant digits so the
/// round trip is bit-exact.
pub fn write_csv(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::domain("no points to write".to_string()));
    }
    let dim = points[0].len();
    let mut out = String::new();
    for d in 0..dim {
        if d > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{d}");
    }
    out.push('\n');
    for p in points {
        for (d, v) in p.iter().enumerate() {
            if d > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<(Vec<Vec<f64>>, usize)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty CSV".to_string()))?;
    let dim = header.split(',').count();
    if dim == 0 {
        return Err(Error::format("CSV header has no columns".to_string()));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::format(format!("bad float {f:?} on line {}", i + 2)))
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::format(format!(
                "line {} has {} fields, expected {dim}",
                i + 2,
                row.len()
            )));
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::format("CSV has a header but no rows".to_string()));
    }
    Ok((points, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gaussian_moments_match() {
        let spec = DatasetSpec::gaussian(2, 1.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let n = 100_000;
        let pts = spec.sample(n, &mut rng).unwrap();
        let mean: Vec<f64> = (0..2)
            .map(|d| pts.iter().map(|p| p[d]).sum::<f64>() / n as f64)
            .collect();
        for m in &mean {
            assert!(m.abs() < 3.0 / (n as f64).sqrt());
        }
        let m2: f64 = pts.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / n as f64;
        // Var(|x|^2) = 2d for the standard normal.
        let se = (2.0 * 2.0f64 / n as f64).sqrt();
        assert!((m2 - spec.second_moment()).abs() < 3.0 * se);
        assert_eq!(spec.second_moment(), 2.0);
    }

    #[test]
    fn single_component_gmm_equals_gaussian() {
        let gmm = DatasetSpec::gmm(vec![1.0], vec![vec![0.0, 0.0]], vec![1.5]).unwrap();
        let gauss = DatasetSpec::gaussian(2, 1.5).unwrap();
        let mut a = ChaCha20Rng::seed_from_u64(42);
        let mut b = ChaCha20Rng::seed_from_u64(42);
        // The gmm path draws one extra uniform for component choice, so
        // compare moments rather than streams.
        let pa = gmm.sample(50_000, &mut a).unwrap();
        let pb = gauss.sample(50_000, &mut b).unwrap();
        let m2a: f64 = pa.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / 50_000.0;
        let m2b: f64 = pb.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / 50_000.0;
        assert!((m2a - m2b).abs() < 0.1);
        assert_eq!(gmm.second_moment(), gauss.second_moment());
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let spec = DatasetSpec::ring_gmm(8, 2.0, 0.3).unwrap();
        let mut a = ChaCha20Rng::seed_from_u64(9);
        let mut b = ChaCha20Rng::seed_from_u64(9);
        assert_eq!(spec.sample(100, &mut a).unwrap(), spec.sample(100, &mut b).unwrap());
    }

    #[test]
    fn second_moment_closed_forms() {
        let two_point = DatasetSpec::gmm(
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert!((two_point.second_moment() - 1.0).abs() < 1e-15);

        let ring = DatasetSpec::ring_gmm(8, 2.0, 0.3).unwrap();
        assert!((ring.second_moment() - (4.0 + 2.0 * 0.09)).abs() < 1e-12);
    }

    #[test]
    fn analytic_second_moments_match_monte_carlo() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let specs = [
            DatasetSpec::ring_gmm(8, 2.0, 0.3).unwrap(),
            DatasetSpec::TwoMoons { noise: 0.05 },
            DatasetSpec::Checkerboard,
        ];
        for spec in &specs {
            let n = 1_000_000;
            let pts = spec.sample(n, &mut rng).unwrap();
            let sq: Vec<f64> = pts.iter().map(|p| p.iter().map(|v| v * v).sum()).collect();
            let m2_hat: f64 = sq.iter().sum::<f64>() / n as f64;
            let var: f64 =
                sq.iter().map(|v| (v - m2_hat).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            let m2 = spec.second_moment();
            assert!(
                (m2_hat - m2).abs() < 3.0 * se,
                "{spec:?}: m2 {m2} vs MC {m2_hat} (se {se})"
            );
        }
    }

    #[test]
    fn conditional_grid_is_normalized_and_symmetric() {
        // Two components straddling x = 0: conditioning there must give a
        // symmetric bimodal conditional in y.
        let spec = DatasetSpec::gmm(
            vec![0.5, 0.5],
            vec![vec![0.0, 2.0], vec![0.0, -2.0]],
            vec![0.4, 0.4],
        )
        .unwrap();
        let grid: Vec<f64> = (0..400).map(|i| -4.0 + 8.0 * (i as f64 + 0.5) / 400.0).collect();
        let probs = gmm_conditional_grid(&spec, 0, 0.0, &grid).unwrap();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        for i in 0..200 {
            let j = 399 - i;
            assert!(
                (probs[i] - probs[j]).abs() < 1e-9,
                "asymmetry at cell {i}: {} vs {}",
                probs[i],
                probs[j]
            );
        }
        // Bimodal: mass near +-2 well above mass at 0.
        let at = |y: f64| {
            let idx = ((y + 4.0) / 8.0 * 400.0) as usize;
            probs[idx.min(399)]
        };
        assert!(at(2.0) > 10.0 * at(0.0));
        assert!(at(-2.0) > 10.0 * at(0.0));
    }

    #[test]
    fn single_component_conditional_is_textbook_gaussian() {
        let spec = DatasetSpec::gmm(vec![1.0], vec![vec![1.0, -1.0]], vec![0.7]).unwrap();
        let grid: Vec<f64> = (0..800).map(|i| -5.0 + 10.0 * (i as f64 + 0.5) / 800.0).collect();
        let probs = gmm_conditional_grid(&spec, 0, 0.3, &grid).unwrap();
        // Isotropic component: conditional of y given x is N(mean_y, var).
        let h = grid[1] - grid[0];
        let mean: f64 = grid.iter().zip(&probs).map(|(y, p)| y * p).sum();
        let var: f64 = grid
            .iter()
            .zip(&probs)
            .map(|(y, p)| (y - mean).powi(2) * p)
            .sum();
        assert!((mean - (-1.0)).abs() < 1e-3);
        assert!((var - 0.49).abs() < 2e-2, "var {var}");
        assert!(h > 0.0);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("stmd_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pts.csv");
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let spec = DatasetSpec::gaussian(3, 2.0).unwrap();
        let pts = spec.sample(50, &mut rng).unwrap();
        write_csv(&path, &pts).unwrap();
        let (back, dim) = read_csv(&path).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(pts, back);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        let dir = std::env::temp_dir().join("stmd_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "x0,x1\n1.0\n").unwrap();
        assert!(read_csv(&path).is_err());
        std::fs::write(&path, "x0,x1\n1.0,abc\n").unwrap();
        assert!(read_csv(&path).is_err());
    }

    #[test]
    fn gmm_config_validation() {
        assert!(DatasetSpec::gmm(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).is_err());
        assert!(DatasetSpec::gmm(vec![1.0], vec![vec![0.0, 1.0]], vec![-1.0]).is_err());
        assert!(DatasetSpec::gaussian(0, 1.0).is_err());
    }
}
