//! Dense networks with reverse-mode gradients.
//!
//! A network is `hidden_layers` blocks of linear -> layer norm -> ReLU
//! followed by a plain linear output layer; heads (argmax, sigmoid squash,
//! Gaussian parameters) are interpreted by the callers. Parameters live in
//! one flat `Vec<f64>` so the optimizer, soft target updates, and
//! checkpoints are simple slice operations; matrix views are borrowed from
//! the flat storage per layer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_width: usize, hidden_layers: usize, output_dim: usize) -> Self {
        MlpSpec { input_dim, hidden_width, hidden_layers, output_dim }
    }

    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut in_dim = self.input_dim;
        for _ in 0..self.hidden_layers {
            count += in_dim * self.hidden_width + 3 * self.hidden_width;
            in_dim = self.hidden_width;
        }
        count + in_dim * self.output_dim + self.output_dim
    }
}

#[derive(Debug, Clone)]
struct HiddenSegment {
    in_dim: usize,
    w: Range<usize>,
    b: Range<usize>,
    gain: Range<usize>,
    bias: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    hidden: Vec<HiddenSegment>,
    out_w: Range<usize>,
    out_b: Range<usize>,
}

/// Intermediates of one forward pass, consumed by [`Mlp::backward`].
pub struct ForwardCache {
    /// Input to each hidden linear; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Normalized pre-activations per hidden layer.
    pub xhat: Vec<Array2<f64>>,
    inv_std: Vec<Array1<f64>>,
    /// ReLU outputs per hidden layer.
    act: Vec<Array2<f64>>,
}

impl Mlp {
    fn layout(spec: MlpSpec) -> (Vec<HiddenSegment>, Range<usize>, Range<usize>) {
        let mut hidden = Vec::with_capacity(spec.hidden_layers);
        let mut offset = 0usize;
        let mut in_dim = spec.input_dim;
        let h = spec.hidden_width;
        for _ in 0..spec.hidden_layers {
            let w = offset..offset + in_dim * h;
            offset = w.end;
            let b = offset..offset + h;
            offset = b.end;
            let gain = offset..offset + h;
            offset = gain.end;
            let bias = offset..offset + h;
            offset = bias.end;
            hidden.push(HiddenSegment { in_dim, w, b, gain, bias });
            in_dim = h;
        }
        let out_w = offset..offset + in_dim * spec.output_dim;
        offset = out_w.end;
        let out_b = offset..offset + spec.output_dim;
        (hidden, out_w, out_b)
    }

    /// Fresh network: weights uniform in +/- 1/sqrt(fan_in), zero biases,
    /// identity layer norm.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let (hidden, out_w, out_b) = Self::layout(spec);
        let mut params = vec![0.0; spec.param_count()];
        for seg in &hidden {
            let bound = 1.0 / (seg.in_dim as f64).sqrt();
            for p in &mut params[seg.w.clone()] {
                *p = rng.gen_range(-bound..bound);
            }
            for p in &mut params[seg.b.clone()] {
                *p = rng.gen_range(-bound..bound);
            }
            for p in &mut params[seg.gain.clone()] {
                *p = 1.0;
            }
        }
        let in_dim = hidden.last().map_or(spec.input_dim, |_| spec.hidden_width);
        let bound = 1.0 / (in_dim as f64).sqrt();
        for p in &mut params[out_w.clone()] {
            *p = rng.gen_range(-bound..bound);
        }
        for p in &mut params[out_b.clone()] {
            *p = rng.gen_range(-bound..bound);
        }
        Mlp { spec, params, hidden, out_w, out_b }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), spec.param_count());
        let (hidden, out_w, out_b) = Self::layout(spec);
        Mlp { spec, params, hidden, out_w, out_b }
    }

    pub fn spec(&self) -> MlpSpec {
        self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w_view(&self, range: &Range<usize>, in_dim: usize, out_dim: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((in_dim, out_dim), &self.params[range.clone()]).unwrap()
    }

    fn row(&self, range: &Range<usize>) -> ndarray::ArrayView1<'_, f64> {
        ndarray::ArrayView1::from(&self.params[range.clone()])
    }

    /// Forward pass keeping every intermediate needed for gradients.
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        assert_eq!(x.ncols(), self.spec.input_dim);
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.hidden.len()),
            xhat: Vec::with_capacity(self.hidden.len()),
            inv_std: Vec::with_capacity(self.hidden.len()),
            act: Vec::with_capacity(self.hidden.len()),
        };
        let mut cur = x.to_owned();
        for seg in &self.hidden {
            let z = cur.dot(&self.w_view(&seg.w, seg.in_dim, self.spec.hidden_width))
                + self.row(&seg.b);
            let mu = z.mean_axis(Axis(1)).unwrap();
            let centered = &z - &mu.view().insert_axis(Axis(1));
            let var = centered.mapv(|v| v * v).mean_axis(Axis(1)).unwrap();
            let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
            let xhat = &centered * &inv_std.view().insert_axis(Axis(1));
            let pre = &xhat * &self.row(&seg.gain) + self.row(&seg.bias);
            let act = pre.mapv(|v| v.max(0.0));
            cache.inputs.push(cur);
            cache.xhat.push(xhat);
            cache.inv_std.push(inv_std);
            cache.act.push(act.clone());
            cur = act;
        }
        let in_dim = self.hidden.last().map_or(self.spec.input_dim, |_| self.spec.hidden_width);
        let out = cur.dot(&self.w_view(&self.out_w, in_dim, self.spec.output_dim))
            + self.row(&self.out_b);
        (out, cache)
    }

    /// Forward pass without caching, for inference and target networks.
    pub fn output(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x).0
    }

    /// Backpropagate `dout` (dL/d_output, already scaled by any batch-mean
    /// factor). Returns the flat parameter gradient and dL/d_input.
    pub fn backward(&self, cache: &ForwardCache, dout: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
        let mut grads = vec![0.0; self.params.len()];
        let last_act: &Array2<f64> =
            cache.act.last().unwrap_or_else(|| panic!("backward needs at least one hidden layer"));
        let in_dim = self.spec.hidden_width;

        let dw_out = last_act.t().dot(&dout);
        grads[self.out_w.clone()].copy_from_slice(dw_out.as_standard_layout().as_slice().unwrap());
        for (g, v) in grads[self.out_b.clone()].iter_mut().zip(dout.sum_axis(Axis(0))) {
            *g = v;
        }
        let mut dact = dout.dot(&self.w_view(&self.out_w, in_dim, self.spec.output_dim).t());

        for (l, seg) in self.hidden.iter().enumerate().rev() {
            let act = &cache.act[l];
            let xhat = &cache.xhat[l];
            let inv_std = &cache.inv_std[l];
            let input = &cache.inputs[l];
            let h = self.spec.hidden_width as f64;

            let dpre = &dact * &act.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            for (g, v) in grads[seg.gain.clone()].iter_mut().zip((&dpre * xhat).sum_axis(Axis(0))) {
                *g = v;
            }
            for (g, v) in grads[seg.bias.clone()].iter_mut().zip(dpre.sum_axis(Axis(0))) {
                *g = v;
            }
            let dxhat = &dpre * &self.row(&seg.gain);
            let m1 = dxhat.mean_axis(Axis(1)).unwrap();
            let m2 = (&dxhat * xhat).sum_axis(Axis(1)).mapv(|v| v / h);
            let dz = (&dxhat - &m1.view().insert_axis(Axis(1)) - &(xhat * &m2.view().insert_axis(Axis(1))))
                * &inv_std.view().insert_axis(Axis(1));

            let dw = input.t().dot(&dz);
            grads[seg.w.clone()].copy_from_slice(dw.as_standard_layout().as_slice().unwrap());
            for (g, v) in grads[seg.b.clone()].iter_mut().zip(dz.sum_axis(Axis(0))) {
                *g = v;
            }
            dact = dz.dot(&self.w_view(&seg.w, seg.in_dim, self.spec.hidden_width).t());
        }
        (grads, dact)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.params.len());
        out.extend_from_slice(b"MLP1");
        for dim in [self.spec.input_dim, self.spec.hidden_width, self.spec.hidden_layers, self.spec.output_dim] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parse a network serialized by [`Mlp::to_bytes`]; returns the network
    /// and the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), NnError> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != b"MLP1" {
            return Err(NnError::BadMagic);
        }
        let spec = MlpSpec {
            input_dim: r.u32()? as usize,
            hidden_width: r.u32()? as usize,
            hidden_layers: r.u32()? as usize,
            output_dim: r.u32()? as usize,
        };
        let count = r.u64()? as usize;
        if count != spec.param_count() {
            return Err(NnError::Inconsistent);
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(r.f64()?);
        }
        Ok((Mlp::from_params(spec, params), r.consumed()))
    }
}

/// First-moment/second-moment adaptive gradient steps over flat slices.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 16 * self.m.len());
        out.extend_from_slice(b"ADM1");
        out.extend_from_slice(&self.lr.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&(self.m.len() as u64).to_le_bytes());
        for x in self.m.iter().chain(&self.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), NnError> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != b"ADM1" {
            return Err(NnError::BadMagic);
        }
        let lr = r.f64()?;
        let t = r.u64()?;
        let n = r.u64()? as usize;
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            m.push(r.f64()?);
        }
        for _ in 0..n {
            v.push(r.f64()?);
        }
        Ok((Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t, m, v }, r.consumed()))
    }
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Polyak-average the online parameters into the target network.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

pub fn hard_update(target: &mut Mlp, online: &Mlp) {
    target.params_mut().copy_from_slice(online.params());
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ln(1 + e^x) computed without overflow for large |x|.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("byte stream ended early")]
    Truncated,
    #[error("unrecognized blob header")]
    BadMagic,
    #[error("dimensions and parameter count disagree")]
    Inconsistent,
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}
