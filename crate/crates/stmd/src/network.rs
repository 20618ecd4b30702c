//! Fully-connected network with sinusoidal scalar embeddings and the three
//! evaluation modes the training objectives need: plain forward, forward-mode
//! JVP (dual propagation through every layer), and reverse-mode parameter
//! gradients.
//!
//! Inputs are laid out as `concat(z, x_cond, embed(s - r), embed(s), embed(t))`
//! where each embedded scalar gets `embed_dim` sinusoidal features with
//! frequencies geometric between 1 and 1e4. Hidden activations are SiLU, the
//! output layer is linear, and everything is f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

const FREQ_MAX: f64 = 1e4;
/// Scalars embedded into the input: `s - r`, `s`, `t`.
const N_EMBEDDED: usize = 3;

/// Batch of primal values and matching forward-mode tangents.
#[derive(Debug, Clone)]
pub struct DualBatch {
    pub value: Vec<f64>,
    pub tangent: Vec<f64>,
}

/// Per-parameter gradient accumulator, shape-congruent with [`MlpNet`].
#[derive(Debug, Clone)]
pub struct GradBuffer {
    data: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros(len: usize) -> Self {
        GradBuffer {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scale(&mut self, c: f64) {
        for g in &mut self.data {
            *g *= c;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.data.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// Gradients of a scalar functional with respect to one input row,
/// mapped back through the embeddings. Test support for JVP/VJP checks.
#[derive(Debug, Clone)]
pub struct InputGrads {
    pub dz: Vec<f64>,
    pub dr: f64,
    pub ds: f64,
    pub dx: Vec<f64>,
    pub dt: f64,
}

/// MLP over `(z, r, s, x_cond, t)` producing a `data_dim` output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    data_dim: usize,
    hidden: Vec<usize>,
    embed_dim: usize,
    widths: Vec<usize>,
    freqs: Vec<f64>,
    params: Vec<f64>,
}

impl MlpNet {
    /// Deterministic scaled-uniform fan-in initialization from `seed`.
    pub fn init(seed: u64, data_dim: usize, hidden: &[usize], embed_dim: usize) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::config("data_dim must be positive".to_string()));
        }
        if hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden widths must be positive".to_string()));
        }
        if embed_dim == 0 || embed_dim % 2 != 0 {
            return Err(Error::config(format!(
                "embed_dim must be even and positive, got {embed_dim}"
            )));
        }
        let input_dim = 2 * data_dim + N_EMBEDDED * embed_dim;
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(data_dim);

        let half = embed_dim / 2;
        let freqs: Vec<f64> = (0..half)
            .map(|k| {
                if half == 1 {
                    1.0
                } else {
                    FREQ_MAX.powf(k as f64 / (half - 1) as f64)
                }
            })
            .collect();

        let n_params: usize = widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let mut params = vec![0.0; n_params];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            for p in params[off..off + fan_in * fan_out].iter_mut() {
                *p = rng.gen_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out; // biases stay zero
        }

        Ok(MlpNet {
            data_dim,
            hidden: hidden.to_vec(),
            embed_dim,
            widths,
            freqs,
            params,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Same architecture with a different parameter vector (EMA weights).
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut net = self.clone();
        net.set_params(params)?;
        Ok(net)
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.widths[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn embed_into(&self, q: f64, out: &mut [f64]) {
        let half = self.embed_dim / 2;
        for (k, &f) in self.freqs.iter().enumerate() {
            let (sin, cos) = (f * q).sin_cos();
            out[k] = sin;
            out[half + k] = cos;
        }
    }

    /// Tangent of the embedding: `d embed(q)/dq * dq`.
    fn embed_tangent_into(&self, q: f64, dq: f64, out: &mut [f64]) {
        let half = self.embed_dim / 2;
        for (k, &f) in self.freqs.iter().enumerate() {
            let (sin, cos) = (f * q).sin_cos();
            out[k] = f * cos * dq;
            out[half + k] = -f * sin * dq;
        }
    }

    /// Adjoint of the embedding: `sum_k g_k * d feature_k / dq`.
    fn embed_adjoint(&self, q: f64, g: &[f64]) -> f64 {
        let half = self.embed_dim / 2;
        let mut acc = 0.0;
        for (k, &f) in self.freqs.iter().enumerate() {
            let (sin, cos) = (f * q).sin_cos();
            acc += g[k] * f * cos - g[half + k] * f * sin;
        }
        acc
    }

    fn assemble_input(&self, z: &[f64], r: f64, s: f64, x: &[f64], t: f64, out: &mut [f64]) {
        let d = self.data_dim;
        let e = self.embed_dim;
        out[..d].copy_from_slice(z);
        out[d..2 * d].copy_from_slice(x);
        self.embed_into(s - r, &mut out[2 * d..2 * d + e]);
        self.embed_into(s, &mut out[2 * d + e..2 * d + 2 * e]);
        self.embed_into(t, &mut out[2 * d + 2 * e..2 * d + 3 * e]);
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble_tangent(
        &self,
        r: f64,
        s: f64,
        t: f64,
        dz: &[f64],
        dr: f64,
        ds: f64,
        dx: &[f64],
        dt: f64,
        out: &mut [f64],
    ) {
        let d = self.data_dim;
        let e = self.embed_dim;
        out[..d].copy_from_slice(dz);
        out[d..2 * d].copy_from_slice(dx);
        self.embed_tangent_into(s - r, ds - dr, &mut out[2 * d..2 * d + e]);
        self.embed_tangent_into(s, ds, &mut out[2 * d + e..2 * d + 2 * e]);
        self.embed_tangent_into(t, dt, &mut out[2 * d + 2 * e..2 * d + 3 * e]);
    }

    fn affine(&self, layer: usize, input: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.layer_offset(layer);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        out.clear();
        for i in 0..n_out {
            let row = &w[i * n_in..(i + 1) * n_in];
            let mut acc = b[i];
            for (wij, xj) in row.iter().zip(input) {
                acc += wij * xj;
            }
            out.push(acc);
        }
    }

    /// Tangent-only affine pass (no bias).
    fn affine_tangent(&self, layer: usize, din: &[f64], out: &mut Vec<f64>) {
        let (n_in, n_out) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.layer_offset(layer);
        let w = &self.params[off..off + n_in * n_out];
        out.clear();
        for i in 0..n_out {
            let row = &w[i * n_in..(i + 1) * n_in];
            let mut acc = 0.0;
            for (wij, xj) in row.iter().zip(din) {
                acc += wij * xj;
            }
            out.push(acc);
        }
    }

    fn forward_from_input(&self, input: &[f64]) -> Vec<f64> {
        let mut act = input.to_vec();
        let mut next = Vec::new();
        for l in 0..self.n_layers() {
            self.affine(l, &act, &mut next);
            if l + 1 < self.n_layers() {
                for v in next.iter_mut() {
                    *v = silu(*v);
                }
            }
            std::mem::swap(&mut act, &mut next);
        }
        act
    }

    fn check_batch(
        &self,
        z: &[f64],
        r: &[f64],
        s: &[f64],
        x: &[f64],
        t: &[f64],
    ) -> Result<usize> {
        let n = r.len();
        let d = self.data_dim;
        if s.len() != n || t.len() != n || z.len() != n * d || x.len() != n * d {
            return Err(Error::shape(format!(
                "batch mismatch: r = {}, s = {}, t = {}, z = {}, x = {} (data_dim {d})",
                r.len(),
                s.len(),
                t.len(),
                z.len(),
                x.len()
            )));
        }
        Ok(n)
    }

    /// Batched forward pass. Rows are independent, so the output of row `i`
    /// depends only on the inputs of row `i`.
    pub fn forward(
        &self,
        z: &[f64],
        r: &[f64],
        s: &[f64],
        x: &[f64],
        t: &[f64],
    ) -> Result<Vec<f64>> {
        let n = self.check_batch(z, r, s, x, t)?;
        let d = self.data_dim;
        let mut input = vec![0.0; self.input_dim()];
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            self.assemble_input(&z[i * d..(i + 1) * d], r[i], s[i], &x[i * d..(i + 1) * d], t[i], &mut input);
            out.extend_from_slice(&self.forward_from_input(&input));
        }
        Ok(out)
    }

    /// Forward-mode JVP: returns the primal output and
    /// `du = du/dz dz + du/dr dr + du/ds ds + du/dx dx + du/dt dt`
    /// propagated as dual numbers through every layer, including the
    /// analytic derivative of the sinusoidal embeddings.
    #[allow(clippy::too_many_arguments)]
    pub fn jvp(
        &self,
        z: &[f64],
        r: &[f64],
        s: &[f64],
        x: &[f64],
        t: &[f64],
        dz: &[f64],
        dr: &[f64],
        ds: &[f64],
        dx: &[f64],
        dt: &[f64],
    ) -> Result<DualBatch> {
        let n = self.check_batch(z, r, s, x, t)?;
        self.check_batch(dz, dr, ds, dx, dt)?;
        if dr.len() != n {
            return Err(Error::shape("tangent batch size differs".to_string()));
        }
        let d = self.data_dim;
        let mut input = vec![0.0; self.input_dim()];
        let mut tangent = vec![0.0; self.input_dim()];
        let mut value = Vec::with_capacity(n * d);
        let mut value_t = Vec::with_capacity(n * d);
        let mut next = Vec::new();
        let mut next_t = Vec::new();
        for i in 0..n {
            let zi = &z[i * d..(i + 1) * d];
            let xi = &x[i * d..(i + 1) * d];
            self.assemble_input(zi, r[i], s[i], xi, t[i], &mut input);
            self.assemble_tangent(
                r[i],
                s[i],
                t[i],
                &dz[i * d..(i + 1) * d],
                dr[i],
                ds[i],
                &dx[i * d..(i + 1) * d],
                dt[i],
                &mut tangent,
            );
            let mut act = input.clone();
            let mut act_t = tangent.clone();
            for l in 0..self.n_layers() {
                self.affine(l, &act, &mut next);
                self.affine_tangent(l, &act_t, &mut next_t);
                if l + 1 < self.n_layers() {
                    for (v, dv) in next.iter_mut().zip(next_t.iter_mut()) {
                        *dv *= silu_prime(*v);
                        *v = silu(*v);
                    }
                }
                std::mem::swap(&mut act, &mut next);
                std::mem::swap(&mut act_t, &mut next_t);
            }
            value.extend_from_slice(&act);
            value_t.extend_from_slice(&act_t);
        }
        Ok(DualBatch {
            value,
            tangent: value_t,
        })
    }

    /// Reverse-mode gradients of `sum_i <upstream_i, forward(row_i)>` with
    /// respect to all parameters, accumulated over the batch in row order.
    ///
    /// Stop-gradient targets are realized by the caller: anything folded into
    /// `upstream` is already a constant.
    pub fn backward(
        &self,
        z: &[f64],
        r: &[f64],
        s: &[f64],
        x: &[f64],
        t: &[f64],
        upstream: &[f64],
    ) -> Result<GradBuffer> {
        let n = self.check_batch(z, r, s, x, t)?;
        let d = self.data_dim;
        if upstream.len() != n * d {
            return Err(Error::shape(format!(
                "upstream has len {}, expected {}",
                upstream.len(),
                n * d
            )));
        }
        let mut grad = GradBuffer::zeros(self.param_count());
        let mut input = vec![0.0; self.input_dim()];
        for i in 0..n {
            self.assemble_input(
                &z[i * d..(i + 1) * d],
                r[i],
                s[i],
                &x[i * d..(i + 1) * d],
                t[i],
                &mut input,
            );
            self.backprop_sample(&input, &upstream[i * d..(i + 1) * d], &mut grad, None);
        }
        Ok(grad)
    }

    /// Gradients of `<upstream, forward(row)>` with respect to the raw inputs
    /// of a single row, mapped back through the embeddings.
    pub fn input_gradients(
        &self,
        z: &[f64],
        r: f64,
        s: f64,
        x: &[f64],
        t: f64,
        upstream: &[f64],
    ) -> Result<InputGrads> {
        let d = self.data_dim;
        if z.len() != d || x.len() != d || upstream.len() != d {
            return Err(Error::shape("input_gradients expects single rows".to_string()));
        }
        let mut input = vec![0.0; self.input_dim()];
        self.assemble_input(z, r, s, x, t, &mut input);
        let mut grad = GradBuffer::zeros(self.param_count());
        let mut g_input = vec![0.0; self.input_dim()];
        self.backprop_sample(&input, upstream, &mut grad, Some(&mut g_input));

        let e = self.embed_dim;
        let g_q1 = self.embed_adjoint(s - r, &g_input[2 * d..2 * d + e]);
        let g_q2 = self.embed_adjoint(s, &g_input[2 * d + e..2 * d + 2 * e]);
        let g_q3 = self.embed_adjoint(t, &g_input[2 * d + 2 * e..2 * d + 3 * e]);
        Ok(InputGrads {
            dz: g_input[..d].to_vec(),
            dr: -g_q1,
            ds: g_q1 + g_q2,
            dx: g_input[d..2 * d].to_vec(),
            dt: g_q3,
        })
    }

    fn backprop_sample(
        &self,
        input: &[f64],
        upstream: &[f64],
        grad: &mut GradBuffer,
        input_grad: Option<&mut [f64]>,
    ) {
        let n_layers = self.n_layers();
        // Forward pass caching layer inputs and pre-activations.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let mut pre = Vec::new();
            self.affine(l, &acts[l], &mut pre);
            let act = if l + 1 < n_layers {
                pre.iter().map(|&v| silu(v)).collect()
            } else {
                pre.clone()
            };
            pres.push(pre);
            acts.push(act);
        }

        let g = grad.as_mut_slice();
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.layer_offset(l);
            let a = &acts[l];
            // dW = delta outer a; db = delta.
            for i in 0..n_out {
                let gi = delta[i];
                let row = &mut g[off + i * n_in..off + (i + 1) * n_in];
                for (gw, aj) in row.iter_mut().zip(a) {
                    *gw += gi * aj;
                }
            }
            for i in 0..n_out {
                g[off + n_in * n_out + i] += delta[i];
            }
            if l == 0 && input_grad.is_none() {
                break;
            }
            // delta_prev = W^T delta, through the activation derivative.
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for i in 0..n_out {
                let gi = delta[i];
                let row = &w[i * n_in..(i + 1) * n_in];
                for (pj, wij) in prev.iter_mut().zip(row) {
                    *pj += gi * wij;
                }
            }
            if l > 0 {
                for (pj, &pre) in prev.iter_mut().zip(&pres[l - 1]) {
                    *pj *= silu_prime(pre);
                }
            }
            delta = prev;
        }
        if let Some(gi) = input_grad {
            gi.copy_from_slice(&delta);
        }
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_prime(x: f64) -> f64 {
    let sig = 1.0 / (1.0 + (-x).exp());
    sig * (1.0 + x * (1.0 - sig))
}
