//! Small tanh MLP velocity field with hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{implicit_velocities, VelocityField};

/// Flat parameter vector for `in -> width -> width -> 2` with tanh hidden
/// activations. Layout: `W1 (width x in), b1, W2 (width x width), b2,
/// W3 (2 x width), b3`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    in_dim: usize,
    width: usize,
    params: Vec<f64>,
}

/// Hidden activations kept for the backward pass.
struct Trace {
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl Mlp {
    pub fn param_count(in_dim: usize, width: usize) -> usize {
        width * in_dim + width + width * width + width + 2 * width + 2
    }

    pub fn random(in_dim: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count(in_dim, width));
        let mut layer = |fan_in: usize, fan_out: usize, params: &mut Vec<f64>| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        };
        layer(in_dim, width, &mut params);
        layer(width, width, &mut params);
        layer(width, 2, &mut params);
        Self { in_dim, width, params }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 6] {
        let (i, w) = (self.in_dim, self.width);
        let w1 = 0;
        let b1 = w1 + w * i;
        let w2 = b1 + w;
        let b2 = w2 + w * w;
        let w3 = b2 + w;
        let b3 = w3 + 2 * w;
        [w1, b1, w2, b2, w3, b3]
    }

    fn forward_traced(&self, input: &[f64]) -> ([f64; 2], Trace) {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let (n_in, w) = (self.in_dim, self.width);
        let p = &self.params;

        let h1: Vec<f64> = (0..w)
            .map(|j| {
                let row = &p[w1 + j * n_in..w1 + (j + 1) * n_in];
                (p[b1 + j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()).tanh()
            })
            .collect();
        let h2: Vec<f64> = (0..w)
            .map(|j| {
                let row = &p[w2 + j * w..w2 + (j + 1) * w];
                (p[b2 + j] + row.iter().zip(&h1).map(|(a, b)| a * b).sum::<f64>()).tanh()
            })
            .collect();
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &p[w3 + k * w..w3 + (k + 1) * w];
            *o = p[b3 + k] + row.iter().zip(&h2).map(|(a, b)| a * b).sum::<f64>();
        }
        (out, Trace { h1, h2 })
    }

    pub fn forward(&self, input: &[f64]) -> [f64; 2] {
        self.forward_traced(input).0
    }

    /// Accumulate `d(output)/d(params)^T * dout` into `grad`.
    fn backward(&self, input: &[f64], trace: &Trace, dout: [f64; 2], grad: &mut [f64]) {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let (n_in, w) = (self.in_dim, self.width);
        let p = &self.params;

        let mut dh2 = vec![0.0; w];
        for (k, &g) in dout.iter().enumerate() {
            grad[b3 + k] += g;
            for j in 0..w {
                grad[w3 + k * w + j] += g * trace.h2[j];
                dh2[j] += g * p[w3 + k * w + j];
            }
        }
        let dz2: Vec<f64> = dh2.iter().zip(&trace.h2).map(|(d, h)| d * (1.0 - h * h)).collect();
        let mut dh1 = vec![0.0; w];
        for (j, &g) in dz2.iter().enumerate() {
            grad[b2 + j] += g;
            for i in 0..w {
                grad[w2 + j * w + i] += g * trace.h1[i];
                dh1[i] += g * p[w2 + j * w + i];
            }
        }
        for (j, (&d, &h)) in dh1.iter().zip(&trace.h1).enumerate() {
            let g = d * (1.0 - h * h);
            grad[b1 + j] += g;
            for i in 0..n_in {
                grad[w1 + j * n_in + i] += g * input[i];
            }
        }
    }
}

/// Velocity network `v(x, t, c)` plus the frozen old-policy snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyFlowModel {
    current: Mlp,
    old: Mlp,
    use_cond: bool,
}

impl ToyFlowModel {
    pub fn new(width: usize, use_cond: bool, seed: u64) -> Self {
        let in_dim = if use_cond { 4 } else { 3 };
        let current = Mlp::random(in_dim, width, seed);
        Self {
            old: current.clone(),
            current,
            use_cond,
        }
    }

    pub fn param_count(&self) -> usize {
        self.current.params.len()
    }

    pub fn params(&self) -> &[f64] {
        self.current.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.current.params_mut()
    }

    pub fn old_params(&self) -> &[f64] {
        self.old.params()
    }

    pub fn uses_conditioning(&self) -> bool {
        self.use_cond
    }

    /// Freeze the current parameters as the old policy.
    pub fn snapshot(&mut self) {
        self.old = self.current.clone();
    }

    fn input(&self, x: [f64; 2], t: f64, c: f64) -> ([f64; 4], usize) {
        if self.use_cond {
            ([x[0], x[1], t, c], 4)
        } else {
            ([x[0], x[1], t, 0.0], 3)
        }
    }

    pub fn velocity_current(&self, x: [f64; 2], t: f64, c: f64) -> [f64; 2] {
        let (inp, n) = self.input(x, t, c);
        self.current.forward(&inp[..n])
    }

    pub fn velocity_old(&self, x: [f64; 2], t: f64, c: f64) -> [f64; 2] {
        let (inp, n) = self.input(x, t, c);
        self.old.forward(&inp[..n])
    }

    /// The frozen old policy as a standalone velocity field.
    pub fn old_policy(&self) -> OldPolicy<'_> {
        OldPolicy(self)
    }
}

impl VelocityField for ToyFlowModel {
    fn velocity(&self, x: [f64; 2], t: f64, c: f64) -> [f64; 2] {
        self.velocity_current(x, t, c)
    }
}

pub struct OldPolicy<'a>(&'a ToyFlowModel);

impl VelocityField for OldPolicy<'_> {
    fn velocity(&self, x: [f64; 2], t: f64, c: f64) -> [f64; 2] {
        self.0.velocity_old(x, t, c)
    }
}

/// One training point: noised sample, time, conditioning, target velocity
/// `eps - x0`, and optimality reward `r` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NftSample {
    pub x_t: [f64; 2],
    pub t: f64,
    pub c: f64,
    pub target: [f64; 2],
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Batch-mean negative-aware objective
/// `r |v+ - v|^2 + (1 - r) |v- - v|^2 + kl |v_theta - v_old|^2`
/// with its exact gradient in the current parameters.
pub fn nft_loss(batch: &[NftSample], model: &ToyFlowModel, beta_mix: f64, kl_weight: f64) -> LossGrad {
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    if batch.is_empty() {
        return LossGrad { loss, grad };
    }
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let (inp, n) = model.input(s.x_t, s.t, s.c);
        let (v_theta, trace) = model.current.forward_traced(&inp[..n]);
        let v_old = model.old.forward(&inp[..n]);
        let (v_plus, v_minus) = implicit_velocities(v_old, v_theta, beta_mix);

        loss += scale
            * (s.r * sq_dist(v_plus, s.target)
                + (1.0 - s.r) * sq_dist(v_minus, s.target)
                + kl_weight * sq_dist(v_theta, v_old));

        let mut dout = [0.0; 2];
        for k in 0..2 {
            dout[k] = scale
                * (2.0 * s.r * beta_mix * (v_plus[k] - s.target[k])
                    - 2.0 * (1.0 - s.r) * beta_mix * (v_minus[k] - s.target[k])
                    + 2.0 * kl_weight * (v_theta[k] - v_old[k]));
        }
        model.current.backward(&inp[..n], &trace, dout, &mut grad);
    }
    LossGrad { loss, grad }
}

/// Plain flow-matching regression `|v_theta - v|^2`, batch mean.
pub fn fm_loss(batch: &[NftSample], model: &ToyFlowModel) -> LossGrad {
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    if batch.is_empty() {
        return LossGrad { loss, grad };
    }
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let (inp, n) = model.input(s.x_t, s.t, s.c);
        let (v, trace) = model.current.forward_traced(&inp[..n]);
        loss += scale * sq_dist(v, s.target);
        let dout = [2.0 * scale * (v[0] - s.target[0]), 2.0 * scale * (v[1] - s.target[1])];
        model.current.backward(&inp[..n], &trace, dout, &mut grad);
    }
    LossGrad { loss, grad }
}
