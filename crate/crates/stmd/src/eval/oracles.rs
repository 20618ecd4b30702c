//! Closed-form velocity and average-velocity fields for isotropic Gaussian
//! (and mixture-of-Gaussian) data under the straight-line interpolant
//! `z_s = (1 - s) x_0 + s z_1`, plus exact posterior machinery for the
//! forward noise kernel. These drive every oracle-backed check in the crate.
//!
//! For a single component `x_0 ~ N(m, var I)` and `z_1 ~ N(0, I)`:
//!   g(s)   = (1-s)^2 var + s^2           (marginal variance of z_s)
//!   mu(s)  = (1-s) m                     (marginal mean of z_s)
//!   v(z,s) = -m + k(s) (z - mu(s)),  k(s) = g'(s) / (2 g(s))
//! and the flow map of `dz/ds = v` is the affine quantile map
//!   z_r = mu(r) + sqrt(g(r)/g(s)) (z_s - mu(s)),
//! which gives the average velocity u = (z_s - z_r)/(s - r) in closed form.

use crate::data::IsoGaussMixture;
use crate::error::{Error, Result};
use crate::model::{EpsModel, MeanFlowModel, VelocityModel};
use crate::schedule::NoiseSchedule;

fn g_fn(var: f64, s: f64) -> f64 {
    (1.0 - s) * (1.0 - s) * var + s * s
}

fn g_prime(var: f64, s: f64) -> f64 {
    -2.0 * (1.0 - s) * var + 2.0 * s
}

fn k_fn(var: f64, s: f64) -> f64 {
    g_prime(var, s) / (2.0 * g_fn(var, s))
}

/// Velocity of the single-component interpolant at `z`, time `s`.
fn affine_velocity(mean: &[f64], var: f64, s: f64, z: &[f64]) -> Result<Vec<f64>> {
    let g = g_fn(var, s);
    if g < 1e-300 {
        return Err(Error::domain(format!(
            "degenerate interpolant variance at s = {s} with var = {var}"
        )));
    }
    let k = g_prime(var, s) / (2.0 * g);
    Ok(z.iter()
        .zip(mean)
        .map(|(&zi, &mi)| -mi + k * (zi - (1.0 - s) * mi))
        .collect())
}

/// Average velocity of the single-component flow between times `r <= s`.
fn affine_meanflow_u(mean: &[f64], var: f64, r: f64, s: f64, z: &[f64]) -> Result<Vec<f64>> {
    if r > s {
        return Err(Error::domain(format!("need r <= s, got r = {r}, s = {s}")));
    }
    if s - r < 1e-12 {
        return affine_velocity(mean, var, s, z);
    }
    let q = (g_fn(var, r) / g_fn(var, s)).sqrt();
    Ok(z.iter()
        .zip(mean)
        .map(|(&zi, &mi)| {
            let n = zi - (1.0 - r) * mi - q * (zi - (1.0 - s) * mi);
            n / (s - r)
        })
        .collect())
}

/// `(u, du)` where `du = (du/dz) dz + (du/dr) dr + (du/ds) ds` for the
/// single-component average velocity.
#[allow(clippy::too_many_arguments)]
fn affine_meanflow_jvp(
    mean: &[f64],
    var: f64,
    r: f64,
    s: f64,
    z: &[f64],
    dz: &[f64],
    dr: f64,
    ds: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if r > s {
        return Err(Error::domain(format!("need r <= s, got r = {r}, s = {s}")));
    }
    if s - r < 1e-12 {
        // Targets multiply du by (s - r), so its value at r = s is unused.
        let u = affine_velocity(mean, var, s, z)?;
        let du = vec![0.0; z.len()];
        return Ok((u, du));
    }
    let gap = s - r;
    let q = (g_fn(var, r) / g_fn(var, s)).sqrt();
    let kr = k_fn(var, r);
    let ks = k_fn(var, s);
    let mut u = Vec::with_capacity(z.len());
    let mut du = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let (zi, mi) = (z[i], mean[i]);
        let dev_s = zi - (1.0 - s) * mi;
        let n = zi - (1.0 - r) * mi - q * dev_s;
        let ui = n / gap;
        u.push(ui);
        let dn_dr = mi - q * kr * dev_s;
        let dn_ds = q * ks * dev_s - q * mi;
        let du_dr = (dn_dr * gap + n) / (gap * gap);
        let du_ds = (dn_ds * gap - n) / (gap * gap);
        du.push((1.0 - q) / gap * dz[i] + du_dr * dr + du_ds * ds);
    }
    Ok((u, du))
}

/// Marginal velocity `E[z_1 - z_0 | z_s = z]` for a centered isotropic
/// Gaussian data distribution `N(0, sigma0^2 I)`:
/// `v = (s - (1-s) sigma0^2) z / ((1-s)^2 sigma0^2 + s^2)`.
pub fn gauss_velocity(sigma0: f64, s: f64, z: &[f64]) -> Result<Vec<f64>> {
    if !(sigma0 > 0.0) {
        return Err(Error::domain(format!("need sigma0 > 0, got {sigma0}")));
    }
    let zeros = vec![0.0; z.len()];
    affine_velocity(&zeros, sigma0 * sigma0, s, z)
}

/// Average velocity along the flow lines of the Gaussian marginal velocity
/// field; `r = s` returns the instantaneous velocity.
pub fn gauss_meanflow_u(sigma0: f64, r: f64, s: f64, z: &[f64]) -> Result<Vec<f64>> {
    if !(sigma0 > 0.0) {
        return Err(Error::domain(format!("need sigma0 > 0, got {sigma0}")));
    }
    let zeros = vec![0.0; z.len()];
    affine_meanflow_u(&zeros, sigma0 * sigma0, r, s, z)
}

fn log_gauss(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * (sq / var + d * (var.ln() + (2.0 * std::f64::consts::PI).ln()))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Marginal velocity for mixture data: responsibilities over components at
/// `(z, s)` weight the per-component affine velocities.
pub fn marginal_velocity(mix: &IsoGaussMixture, s: f64, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != mix.dim {
        return Err(Error::shape(format!(
            "point has dim {}, mixture has dim {}",
            z.len(),
            mix.dim
        )));
    }
    let logs: Vec<f64> = (0..mix.weights.len())
        .map(|kc| {
            let g = g_fn(mix.vars[kc], s);
            let mu: Vec<f64> = mix.means[kc].iter().map(|m| (1.0 - s) * m).collect();
            mix.weights[kc].ln() + log_gauss(z, &mu, g)
        })
        .collect();
    let lse = log_sum_exp(&logs);
    if !lse.is_finite() {
        return Err(Error::numeric(format!(
            "mixture responsibility underflow at s = {s}"
        )));
    }
    let mut v = vec![0.0; mix.dim];
    for kc in 0..mix.weights.len() {
        let resp = (logs[kc] - lse).exp();
        if resp == 0.0 {
            continue;
        }
        let vk = affine_velocity(&mix.means[kc], mix.vars[kc], s, z)?;
        for d in 0..mix.dim {
            v[d] += resp * vk[d];
        }
    }
    Ok(v)
}

/// Exact posterior mixture of `x_0` given `x_t = alpha x_0 + sigma eps` with
/// mixture prior: per-component Gaussian posteriors with reweighted
/// components.
pub fn posterior_mixture(
    mix: &IsoGaussMixture,
    sched: &NoiseSchedule,
    t: f64,
    x_t: &[f64],
) -> Result<IsoGaussMixture> {
    if x_t.len() != mix.dim {
        return Err(Error::shape(format!(
            "x_t has dim {}, mixture has dim {}",
            x_t.len(),
            mix.dim
        )));
    }
    let (alpha, _) = sched.alpha_sigma(t)?;
    let sigma_sq = sched.sigma_sq(t)?;
    let mut log_w = Vec::with_capacity(mix.weights.len());
    let mut means = Vec::with_capacity(mix.weights.len());
    let mut vars = Vec::with_capacity(mix.weights.len());
    for kc in 0..mix.weights.len() {
        let var = mix.vars[kc];
        let marg_var = alpha * alpha * var + sigma_sq;
        let marg_mean: Vec<f64> = mix.means[kc].iter().map(|m| alpha * m).collect();
        log_w.push(mix.weights[kc].ln() + log_gauss(x_t, &marg_mean, marg_var));
        let m_post: Vec<f64> = x_t
            .iter()
            .zip(&mix.means[kc])
            .map(|(&xt, &m)| (alpha * var * xt + sigma_sq * m) / marg_var)
            .collect();
        means.push(m_post);
        vars.push(var * sigma_sq / marg_var);
    }
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::numeric("posterior weight underflow".to_string()));
    }
    Ok(IsoGaussMixture {
        dim: mix.dim,
        weights: log_w.iter().map(|l| (l - lse).exp()).collect(),
        means,
        vars,
    })
}

/// Conditional velocity `E[z_1 - x_0 | z_s = z, x_t, t]`: the marginal
/// velocity of the posterior mixture.
pub fn conditional_velocity(
    mix: &IsoGaussMixture,
    sched: &NoiseSchedule,
    t: f64,
    x_t: &[f64],
    s: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    let post = posterior_mixture(mix, sched, t, x_t)?;
    marginal_velocity(&post, s, z)
}

/// Exact unconditional mean-flow field for `N(0, sigma0^2 I)` data.
/// Ignores the conditioning slots, like a network trained unconditionally
/// with zero-filled conditioning.
#[derive(Debug, Clone)]
pub struct GaussMeanFlow {
    pub sigma0: f64,
    pub dim: usize,
}

impl MeanFlowModel for GaussMeanFlow {
    fn dim(&self) -> usize {
        self.dim
    }

    fn u(&self, z: &[f64], r: f64, s: f64, _x: &[f64], _t: f64) -> Vec<f64> {
        gauss_meanflow_u(self.sigma0, r, s, z).expect("valid (r, s)")
    }

    fn u_jvp(
        &self,
        z: &[f64],
        r: f64,
        s: f64,
        _x: &[f64],
        _t: f64,
        dz: &[f64],
        dr: f64,
        ds: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let zeros = vec![0.0; self.dim];
        affine_meanflow_jvp(&zeros, self.sigma0 * self.sigma0, r, s, z, dz, dr, ds)
            .expect("valid (r, s)")
    }
}

impl VelocityModel for GaussMeanFlow {
    fn dim(&self) -> usize {
        self.dim
    }

    fn v(&self, z: &[f64], s: f64) -> Vec<f64> {
        gauss_velocity(self.sigma0, s, z).expect("valid s")
    }
}

/// Exact conditional mean-flow field for `N(0, sigma0^2 I)` data: given
/// `(x_t, t)` it transports the prior to the exact Gaussian posterior
/// `p(x_0 | x_t)`.
#[derive(Debug, Clone)]
pub struct GaussPosteriorMeanFlow {
    pub sigma0: f64,
    pub sched: NoiseSchedule,
    pub dim: usize,
}

impl GaussPosteriorMeanFlow {
    /// Posterior mean vector and (isotropic) variance of `x_0` given `x_t`.
    pub fn posterior(&self, x_t: &[f64], t: f64) -> (Vec<f64>, f64) {
        let (alpha, _) = self.sched.alpha_sigma(t).expect("valid t");
        let sigma_sq = self.sched.sigma_sq(t).expect("valid t");
        let var0 = self.sigma0 * self.sigma0;
        let marg = alpha * alpha * var0 + sigma_sq;
        let mean = x_t.iter().map(|&x| alpha * var0 * x / marg).collect();
        (mean, var0 * sigma_sq / marg)
    }
}

impl MeanFlowModel for GaussPosteriorMeanFlow {
    fn dim(&self) -> usize {
        self.dim
    }

    fn u(&self, z: &[f64], r: f64, s: f64, x_cond: &[f64], t: f64) -> Vec<f64> {
        let (mean, var) = self.posterior(x_cond, t);
        affine_meanflow_u(&mean, var, r, s, z).expect("valid (r, s)")
    }

    fn u_jvp(
        &self,
        z: &[f64],
        r: f64,
        s: f64,
        x_cond: &[f64],
        t: f64,
        dz: &[f64],
        dr: f64,
        ds: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let (mean, var) = self.posterior(x_cond, t);
        affine_meanflow_jvp(&mean, var, r, s, z, dz, dr, ds).expect("valid (r, s)")
    }
}

/// Analytically optimal noise predictor for `N(0, sigma0^2 I)` data:
/// `eps(x_t, t) = (x_t - alpha_t E[x_0 | x_t]) / sigma_t`.
#[derive(Debug, Clone)]
pub struct GaussPosteriorEps {
    pub sigma0: f64,
    pub sched: NoiseSchedule,
    pub dim: usize,
}

impl EpsModel for GaussPosteriorEps {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eps(&self, x: &[f64], t: f64) -> Vec<f64> {
        let (alpha, sigma) = self.sched.alpha_sigma(t).expect("valid t");
        if sigma < 1e-12 {
            // x_t = x_0 exactly; there is no noise to predict.
            return vec![0.0; self.dim];
        }
        let var0 = self.sigma0 * self.sigma0;
        let marg = alpha * alpha * var0 + sigma * sigma;
        x.iter()
            .map(|&xi| (xi - alpha * alpha * var0 * xi / marg) / sigma)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn gauss_velocity_reference_values() {
        // sigma0 = 1 at the midpoint: the interpolant is symmetric, v = 0.
        let v = gauss_velocity(1.0, 0.5, &[3.0, -2.0]).unwrap();
        assert!(v.iter().all(|&x| x.abs() < 1e-15));
        // sigma0 = 2, s = 0.5, z = 1 in 1D.
        let v = gauss_velocity(2.0, 0.5, &[1.0]).unwrap();
        assert!((v[0] + 1.2).abs() < 1e-12, "got {}", v[0]);
        assert!(gauss_velocity(0.0, 0.5, &[1.0]).is_err());
    }

    #[test]
    fn gauss_velocity_matches_monte_carlo_regression() {
        // Slope of (z1 - z0) on z_s equals k(s); intercept is zero.
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let sigma0 = 2.0;
        for &s in &[0.3, 0.7, 1.0] {
            let n = 1_000_000;
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            for _ in 0..n {
                let z0 = sigma0 * rng.sample::<f64, _>(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                let zs = (1.0 - s) * z0 + s * z1;
                sxy += zs * (z1 - z0);
                sxx += zs * zs;
            }
            let slope = sxy / sxx;
            let k = gauss_velocity(sigma0, s, &[1.0]).unwrap()[0];
            // Crude slope standard error at this sample size.
            let se = 3.0 / (n as f64).sqrt() * (1.0 + sigma0);
            assert!((slope - k).abs() < 3.0 * se, "s = {s}: slope {slope} vs k {k}");
        }
    }

    #[test]
    fn meanflow_u_reduces_to_velocity_at_equal_times() {
        let z = [0.7, -1.1];
        let u = gauss_meanflow_u(2.0, 0.6, 0.6, &z).unwrap();
        let v = gauss_velocity(2.0, 0.6, &z).unwrap();
        assert_eq!(u, v);
        assert!(gauss_meanflow_u(2.0, 0.9, 0.2, &z).is_err());
    }

    #[test]
    fn symmetric_case_one_step_map_is_identity() {
        // sigma0 = 1: rho_0 = rho_1, so u(z, 0, 1) = 0.
        let u = gauss_meanflow_u(1.0, 0.0, 1.0, &[2.5, -0.5]).unwrap();
        assert!(u.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn meanflow_u_matches_rk4_integration() {
        // Integrate dz/ds = v(z, s) from s down to r with RK4 and compare
        // u = (z_s - z_r)/(s - r) against the closed form.
        let sigma0 = 2.0;
        let (r, s) = (0.2, 0.9);
        let z_s = 1.0;
        let steps = 7000; // step length 1e-4
        let h = (s - r) / steps as f64;
        let f = |z: f64, tau: f64| gauss_velocity(sigma0, tau, &[z]).unwrap()[0];
        let mut z = z_s;
        let mut tau = s;
        for _ in 0..steps {
            // Integrating backwards in s.
            let k1 = f(z, tau);
            let k2 = f(z - 0.5 * h * k1, tau - 0.5 * h);
            let k3 = f(z - 0.5 * h * k2, tau - 0.5 * h);
            let k4 = f(z - h * k3, tau - h);
            z -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            tau -= h;
        }
        let u_ref = (z_s - z) / (s - r);
        let u = gauss_meanflow_u(sigma0, r, s, &[z_s]).unwrap()[0];
        assert!(
            (u - u_ref).abs() <= 1e-6 * u_ref.abs().max(1e-3),
            "closed form {u} vs rk4 {u_ref}"
        );
    }

    #[test]
    fn meanflow_identity_holds_by_finite_differences() {
        // u(z_s, r, s) = v_s(z_s) - (s - r) d/ds u along the flow.
        let sigma0 = 2.0;
        let model = GaussMeanFlow { sigma0, dim: 1 };
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..50 {
            let r = rng.gen_range(0.0..0.5);
            let s = rng.gen_range(0.55..0.95);
            let z = rng.gen_range(-3.0..3.0);
            let v = gauss_velocity(sigma0, s, &[z]).unwrap()[0];
            let h = 1e-5;
            let vp = gauss_velocity(sigma0, s, &[z]).unwrap()[0];
            let up = gauss_meanflow_u(sigma0, r, s + h, &[z + h * vp]).unwrap()[0];
            let um = gauss_meanflow_u(sigma0, r, s - h, &[z - h * vp]).unwrap()[0];
            let du_fd = (up - um) / (2.0 * h);
            let u = model.u(&[z], r, s, &[0.0], 0.0)[0];
            let rhs = v - (s - r) * du_fd;
            assert!(
                (u - rhs).abs() <= 1e-5 * u.abs().max(1.0),
                "identity violated: u = {u}, rhs = {rhs}"
            );
        }
    }

    #[test]
    fn analytic_jvp_matches_finite_differences() {
        let model = GaussMeanFlow { sigma0: 2.0, dim: 1 };
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..50 {
            let r = rng.gen_range(0.0..0.4);
            let s = rng.gen_range(0.5..0.95);
            let z = rng.gen_range(-2.0..2.0);
            let (dz, dr, ds): (f64, f64, f64) = (
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let (_, du) = model.u_jvp(&[z], r, s, &[0.0], 0.0, &[dz], dr, ds);
            let h = 1e-6;
            let up = gauss_meanflow_u(2.0, r + h * dr, s + h * ds, &[z + h * dz]).unwrap()[0];
            let um = gauss_meanflow_u(2.0, r - h * dr, s - h * ds, &[z - h * dz]).unwrap()[0];
            let fd = (up - um) / (2.0 * h);
            assert!(
                (du[0] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "jvp {} vs fd {fd}",
                du[0]
            );
        }
    }

    #[test]
    fn posterior_regression_slope() {
        // E[x0 | x_t] = alpha var0 x_t / (alpha^2 var0 + sigma^2).
        let sched = NoiseSchedule::default();
        let model = GaussPosteriorMeanFlow {
            sigma0: 2.0,
            sched,
            dim: 1,
        };
        let t = 0.4;
        let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let n = 500_000;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for _ in 0..n {
            let x0 = 2.0 * rng.sample::<f64, _>(StandardNormal);
            let xt = alpha * x0 + sigma * rng.sample::<f64, _>(StandardNormal);
            sxy += xt * x0;
            sxx += xt * xt;
        }
        let slope_mc = sxy / sxx;
        let (mean, _) = model.posterior(&[1.0], t);
        assert!(
            (slope_mc - mean[0]).abs() < 5e-3,
            "MC slope {slope_mc} vs analytic {}",
            mean[0]
        );
    }

    #[test]
    fn mixture_velocity_reduces_to_single_component() {
        let spec = DatasetSpec::gaussian(2, 2.0).unwrap();
        let mix = spec.as_mixture().unwrap();
        let z = [0.8, -0.3];
        let v_mix = marginal_velocity(&mix, 0.6, &z).unwrap();
        let v_direct = gauss_velocity(2.0, 0.6, &z).unwrap();
        for (a, b) in v_mix.iter().zip(&v_direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_velocity_far_from_one_mode_tracks_the_other() {
        // Two well-separated components; x_t pinned near one of them at a
        // small time makes the posterior concentrate there.
        let spec = DatasetSpec::gmm(
            vec![0.5, 0.5],
            vec![vec![3.0, 0.0], vec![-3.0, 0.0]],
            vec![0.2, 0.2],
        )
        .unwrap();
        let mix = spec.as_mixture().unwrap();
        let sched = NoiseSchedule::default();
        let t = 0.05;
        let (alpha, _) = sched.alpha_sigma(t).unwrap();
        let x_t: Vec<f64> = vec![alpha * 3.0, 0.0];
        let post = posterior_mixture(&mix, &sched, t, &x_t).unwrap();
        assert!(post.weights[0] > 0.999, "weights {:?}", post.weights);
        // Conditional velocity should match the single-component formula.
        let z = [0.4, 0.1];
        let v = conditional_velocity(&mix, &sched, t, &x_t, 0.5, &z).unwrap();
        let v_single = affine_velocity(&post.means[0], post.vars[0], 0.5, &z).unwrap();
        for (a, b) in v.iter().zip(&v_single) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn eps_oracle_recovers_injected_noise_statistics() {
        // For Gaussian data the optimal predictor is linear in x_t; its
        // residual against the true eps has the known conditional variance.
        let sched = NoiseSchedule::default();
        let oracle = GaussPosteriorEps {
            sigma0: 2.0,
            sched,
            dim: 1,
        };
        let t = 0.5;
        let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        let n = 200_000;
        let mut mse_pred = 0.0;
        for _ in 0..n {
            let x0 = 2.0 * rng.sample::<f64, _>(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let xt = alpha * x0 + sigma * e;
            let pred = oracle.eps(&[xt], t)[0];
            mse_pred += (pred - e) * (pred - e);
        }
        mse_pred /= n as f64;
        // Optimal MSE = Var(eps | x_t) = alpha^2 var0 / (alpha^2 var0 + sigma^2).
        let var0 = 4.0;
        let opt = alpha * alpha * var0 / (alpha * alpha * var0 + sigma * sigma);
        assert!(
            (mse_pred - opt).abs() < 0.01,
            "predictor mse {mse_pred} vs optimal {opt}"
        );
    }
}
