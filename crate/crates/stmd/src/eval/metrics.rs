//! Squared 2-Wasserstein distance (exact assignment and Gaussian closed
//! form) and the energy distance.

use crate::error::{Error, Result};

use super::assignment::solve_dense;

/// Largest sample count the exact assignment route accepts.
pub const W2_EXACT_MAX_N: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W2Method {
    ExactAssignment,
    GaussianClosedForm,
}

/// Squared 2-Wasserstein value with provenance.
#[derive(Debug, Clone, Copy)]
pub struct W2Report {
    /// Squared distance.
    pub value: f64,
    /// Sample count (0 for closed forms).
    pub n: usize,
    pub method: W2Method,
}

/// Exact squared 2-Wasserstein distance between two equal-size empirical
/// measures with uniform weights, via the optimal assignment on squared
/// Euclidean costs.
pub fn w2_exact(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<W2Report> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "w2_exact needs equal nonempty sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n > W2_EXACT_MAX_N {
        return Err(Error::domain(format!(
            "w2_exact capacity is {W2_EXACT_MAX_N} points, got {n}"
        )));
    }
    let dim = a[0].len();
    if a.iter().chain(b.iter()).any(|p| p.len() != dim) {
        return Err(Error::shape("w2_exact points must share one dim".to_string()));
    }
    let mut cost = vec![0.0f64; n * n];
    for (i, pa) in a.iter().enumerate() {
        let row = &mut cost[i * n..(i + 1) * n];
        for (j, pb) in b.iter().enumerate() {
            let mut acc = 0.0;
            for d in 0..dim {
                let diff = pa[d] - pb[d];
                acc += diff * diff;
            }
            row[j] = acc;
        }
    }
    let (_, total) = solve_dense(n, &cost);
    Ok(W2Report {
        value: total / n as f64,
        n,
        method: W2Method::ExactAssignment,
    })
}

/// Closed-form squared 2-Wasserstein distance between isotropic Gaussians
/// `N(m1, s1^2 I)` and `N(m2, s2^2 I)`.
pub fn w2_gaussian(m1: &[f64], s1: f64, m2: &[f64], s2: f64) -> Result<W2Report> {
    if m1.len() != m2.len() || m1.is_empty() {
        return Err(Error::shape("w2_gaussian means must share one dim".to_string()));
    }
    if s1 < 0.0 || s2 < 0.0 {
        return Err(Error::domain(format!(
            "w2_gaussian scales must be >= 0, got ({s1}, {s2})"
        )));
    }
    let d = m1.len() as f64;
    let mean_gap: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(W2Report {
        value: mean_gap + d * (s1 - s2) * (s1 - s2),
        n: 0,
        method: W2Method::GaussianClosedForm,
    })
}

/// Energy distance `2 E|a-b| - E|a-a'| - E|b-b'|` via U-statistics.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::shape("energy_distance needs nonempty sets".to_string()));
    }
    let dist = |p: &[f64], q: &[f64]| -> f64 {
        p.iter()
            .zip(q)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let n = a.len() as f64;
    let m = b.len() as f64;
    let mut cross = 0.0;
    for pa in a {
        for pb in b {
            cross += dist(pa, pb);
        }
    }
    cross /= n * m;
    let within = |set: &[Vec<f64>]| -> f64 {
        let k = set.len();
        if k < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                acc += dist(&set[i], &set[j]);
            }
        }
        2.0 * acc / (k as f64 * (k as f64 - 1.0))
    };
    Ok(2.0 * cross - within(a) - within(b))
}
