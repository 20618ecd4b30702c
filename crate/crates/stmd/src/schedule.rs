//! Variance-preserving noise schedule, forward perturbation kernel, and the
//! closed-form bridge posterior between two diffusion times.
//!
//! The forward process is `dx = -1/2 beta_t x dt + sqrt(beta_t) dw` on t in
//! [0,1], whose marginal kernel is `x_t = alpha_t x_0 + sigma_t eps` with
//! `alpha_t^2 = exp(-int_0^t beta)` and `sigma_t^2 = 1 - alpha_t^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the rate function `beta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `beta_t = beta_min + t (beta_max - beta_min)`.
    Linear,
}

/// Variance-preserving SDE coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    pub kind: ScheduleKind,
}

/// Coefficients of the Gaussian bridge posterior `p(x_{t'} | x_0, x_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeParams {
    pub mean_coeff_x0: f64,
    pub mean_coeff_xt: f64,
    pub std: f64,
}

/// Bridge calls with `sigma_t^2` below this are rejected as degenerate.
const SIGMA_SQ_FLOOR: f64 = 1e-12;

impl Default for NoiseSchedule {
    fn default() -> Self {
        // alpha_1 ~ 6.5e-3, so p_1 is close to a standard normal.
        NoiseSchedule {
            beta_min: 0.1,
            beta_max: 20.0,
            kind: ScheduleKind::Linear,
        }
    }
}

impl NoiseSchedule {
    pub fn new(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !beta_min.is_finite() || !beta_max.is_finite() || beta_min < 0.0 || beta_max < beta_min
        {
            return Err(Error::config(format!(
                "need 0 <= beta_min <= beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        Ok(NoiseSchedule {
            beta_min,
            beta_max,
            kind: ScheduleKind::Linear,
        })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, 1]")));
        }
        Ok(())
    }

    /// `beta_t` itself.
    pub fn beta(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        match self.kind {
            ScheduleKind::Linear => Ok(self.beta_min + t * (self.beta_max - self.beta_min)),
        }
    }

    /// `int_0^t beta_tau dtau`, in closed form for the linear schedule.
    pub fn integral_beta(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        match self.kind {
            ScheduleKind::Linear => {
                Ok(self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t)
            }
        }
    }

    /// `(alpha_t, sigma_t)` with `alpha_t^2 + sigma_t^2 = 1`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        let alpha = (-0.5 * self.integral_beta(t)?).exp();
        let sigma = (1.0 - alpha * alpha).max(0.0).sqrt();
        Ok((alpha, sigma))
    }

    /// `sigma_t^2 = 1 - alpha_t^2` without the square root.
    pub fn sigma_sq(&self, t: f64) -> Result<f64> {
        let alpha = (-0.5 * self.integral_beta(t)?).exp();
        Ok((1.0 - alpha * alpha).max(0.0))
    }

    /// Forward kernel sample `x_t = alpha_t x_0 + sigma_t eps`.
    ///
    /// The caller supplies `eps ~ N(0, I)` so the draw stays deterministic
    /// under the caller's RNG stream.
    pub fn perturb(&self, x0: &[f64], t: f64, eps: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != eps.len() {
            return Err(Error::shape(format!(
                "perturb: x0 has dim {}, eps has dim {}",
                x0.len(),
                eps.len()
            )));
        }
        let (alpha, sigma) = self.alpha_sigma(t)?;
        Ok(x0
            .iter()
            .zip(eps)
            .map(|(&x, &e)| alpha * x + sigma * e)
            .collect())
    }

    /// Coefficients of the bridge posterior `p(x_{t'} | x_0, x_t)` for
    /// `0 <= t' <= t <= 1`.
    ///
    /// At `t' = t` the bridge is a point mass at `x_t`; at `t' = 0` it is a
    /// point mass at `x_0`. Calls with `t' < t` and `sigma_t^2 < 1e-12` are
    /// rejected rather than regularized.
    pub fn bridge_params(&self, t_prime: f64, t: f64) -> Result<BridgeParams> {
        self.check_time(t_prime)?;
        self.check_time(t)?;
        if t_prime > t {
            return Err(Error::domain(format!(
                "bridge ordering violated: t' = {t_prime} > t = {t}"
            )));
        }
        if t_prime == t {
            return Ok(BridgeParams {
                mean_coeff_x0: 0.0,
                mean_coeff_xt: 1.0,
                std: 0.0,
            });
        }
        let alpha_p = (-0.5 * self.integral_beta(t_prime)?).exp();
        let alpha_t = (-0.5 * self.integral_beta(t)?).exp();
        let sigma_p_sq = (1.0 - alpha_p * alpha_p).max(0.0);
        let sigma_t_sq = (1.0 - alpha_t * alpha_t).max(0.0);
        if sigma_t_sq < SIGMA_SQ_FLOOR {
            return Err(Error::domain(format!(
                "bridge degenerate: sigma_t^2 = {sigma_t_sq} at t = {t}"
            )));
        }
        let gap = (alpha_p * alpha_p - alpha_t * alpha_t).max(0.0);
        let denom = alpha_p * sigma_t_sq;
        Ok(BridgeParams {
            mean_coeff_x0: gap / denom,
            mean_coeff_xt: alpha_t * sigma_p_sq / denom,
            std: (sigma_p_sq * gap / (alpha_p * alpha_p * sigma_t_sq)).sqrt(),
        })
    }

    /// Draw `x_{t'} ~ p(x_{t'} | x_0, x_t)` using caller-supplied
    /// `eps ~ N(0, I)`.
    pub fn bridge_sample(
        &self,
        t_prime: f64,
        t: f64,
        x0: &[f64],
        xt: &[f64],
        eps: &[f64],
    ) -> Result<Vec<f64>> {
        if x0.len() != xt.len() || x0.len() != eps.len() {
            return Err(Error::shape(format!(
                "bridge_sample: dims x0 = {}, xt = {}, eps = {}",
                x0.len(),
                xt.len(),
                eps.len()
            )));
        }
        let p = self.bridge_params(t_prime, t)?;
        Ok((0..x0.len())
            .map(|i| p.mean_coeff_x0 * x0[i] + p.mean_coeff_xt * xt[i] + p.std * eps[i])
            .collect())
    }
}
