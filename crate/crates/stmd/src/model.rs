//! Model interfaces shared by training objectives, samplers, and bound
//! checks. Trained [`MlpNet`]s and closed-form oracles implement the same
//! traits, so every sampler and every bound estimator can be driven by
//! either.

use crate::error::Result;
use crate::network::MlpNet;

/// Average-velocity field `u(z, r, s, x_cond, t)`.
///
/// Unconditional models receive `x_cond = 0` and `t = 0` by convention.
pub trait MeanFlowModel {
    fn dim(&self) -> usize;

    fn u(&self, z: &[f64], r: f64, s: f64, x_cond: &[f64], t: f64) -> Vec<f64>;

    /// Primal output together with the directional derivative
    /// `du = (du/dz) dz + (du/dr) dr + (du/ds) ds`, with `x_cond` and `t`
    /// held fixed.
    #[allow(clippy::too_many_arguments)]
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
    ) -> (Vec<f64>, Vec<f64>);
}

/// Instantaneous velocity field `v(z, s)` for ODE-based sampling.
pub trait VelocityModel {
    fn dim(&self) -> usize;
    fn v(&self, z: &[f64], s: f64) -> Vec<f64>;
}

/// Noise predictor `eps(x_t, t)` for the ancestral baseline.
pub trait EpsModel {
    fn dim(&self) -> usize;
    fn eps(&self, x: &[f64], t: f64) -> Vec<f64>;
}

impl MeanFlowModel for MlpNet {
    fn dim(&self) -> usize {
        self.data_dim()
    }

    fn u(&self, z: &[f64], r: f64, s: f64, x_cond: &[f64], t: f64) -> Vec<f64> {
        self.forward(z, &[r], &[s], x_cond, &[t])
            .expect("single-row forward on congruent shapes")
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
        let zero = vec![0.0; self.data_dim()];
        let out = self
            .jvp(z, &[r], &[s], x_cond, &[t], dz, &[dr], &[ds], &zero, &[0.0])
            .expect("single-row jvp on congruent shapes");
        (out.value, out.tangent)
    }
}

/// A network trained with the CFM objective, viewed as a velocity field.
/// By the `r = s` convention the model's instantaneous output is
/// `u(z, s, s, 0, 0)`.
pub struct CfmVelocity<'a>(pub &'a MlpNet);

impl VelocityModel for CfmVelocity<'_> {
    fn dim(&self) -> usize {
        self.0.data_dim()
    }

    fn v(&self, z: &[f64], s: f64) -> Vec<f64> {
        let zero = vec![0.0; self.0.data_dim()];
        self.0.u(z, s, s, &zero, 0.0)
    }
}

/// A network trained with the noise-prediction objective. The noisy state
/// rides in the `z` slot with `r = s = 0` and the diffusion time in `t`.
pub struct EpsNet<'a>(pub &'a MlpNet);

impl EpsModel for EpsNet<'_> {
    fn dim(&self) -> usize {
        self.0.data_dim()
    }

    fn eps(&self, x: &[f64], t: f64) -> Vec<f64> {
        let zero = vec![0.0; self.0.data_dim()];
        self.0
            .forward(x, &[0.0], &[0.0], &zero, &[t])
            .expect("single-row forward on congruent shapes")
    }
}

/// The all-zero field; useful as a degenerate reference in tests and bound
/// estimates.
pub struct ZeroModel {
    pub dim: usize,
}

impl MeanFlowModel for ZeroModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn u(&self, _z: &[f64], _r: f64, _s: f64, _x: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn u_jvp(
        &self,
        _z: &[f64],
        _r: f64,
        _s: f64,
        _x: &[f64],
        _t: f64,
        _dz: &[f64],
        _dr: f64,
        _ds: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.dim], vec![0.0; self.dim])
    }
}

/// Wraps a model so every forward evaluation is counted; samplers use this
/// to report the exact number of network function evaluations.
pub struct CountingModel<'a, M: ?Sized> {
    inner: &'a M,
    calls: std::cell::Cell<usize>,
}

impl<'a, M: ?Sized> CountingModel<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        CountingModel {
            inner,
            calls: std::cell::Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    fn bump(&self) {
        self.calls.set(self.calls.get() + 1);
    }
}

impl<M: MeanFlowModel + ?Sized> MeanFlowModel for CountingModel<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn u(&self, z: &[f64], r: f64, s: f64, x: &[f64], t: f64) -> Vec<f64> {
        self.bump();
        self.inner.u(z, r, s, x, t)
    }

    fn u_jvp(
        &self,
        z: &[f64],
        r: f64,
        s: f64,
        x: &[f64],
        t: f64,
        dz: &[f64],
        dr: f64,
        ds: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        self.bump();
        self.inner.u_jvp(z, r, s, x, t, dz, dr, ds)
    }
}

impl<M: VelocityModel + ?Sized> VelocityModel for CountingModel<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn v(&self, z: &[f64], s: f64) -> Vec<f64> {
        self.bump();
        self.inner.v(z, s)
    }
}

impl<M: EpsModel + ?Sized> EpsModel for CountingModel<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eps(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.bump();
        self.inner.eps(x, t)
    }
}

/// Sanity guard used by samplers before touching a trained model.
pub fn check_finite_params(net: &MlpNet) -> Result<()> {
    if net.params().iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(crate::error::Error::numeric(
            "network parameters contain non-finite values".to_string(),
        ))
    }
}
