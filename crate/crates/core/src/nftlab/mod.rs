//! Desk-scale negative-aware finetuning (NFT) on a 2-D flow-matching model.
//!
//! The schedule is rectified: `z_t = (1 - t) x0 + t eps`, so the target
//! velocity is the constant `eps - x0` and sampling integrates from noise at
//! `t = 1` down to data at `t = 0`.

mod model;
mod train;

pub use model::{fm_loss, nft_loss, LossGrad, Mlp, NftSample, OldPolicy, ToyFlowModel};
pub use train::{
    fm_pretrain, mode_fraction, train_nft, two_mode_data, Adam, MotionProxyReward, NftConfig, PretrainConfig,
    RoundRecord, TrainReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to the normalizing deviation `Z_c`.
pub const MIN_REWARD_STD: f64 = 1e-6;

/// Anything that can be integrated as `dz/dt = v(z, t, c)`.
pub trait VelocityField {
    fn velocity(&self, x: [f64; 2], t: f64, c: f64) -> [f64; 2];
}

impl<F> VelocityField for F
where
    F: Fn([f64; 2], f64, f64) -> [f64; 2],
{
    fn velocity(&self, x: [f64; 2], t: f64, c: f64) -> [f64; 2] {
        self(x, t, c)
    }
}

/// Rectified-flow schedule `alpha_t = 1 - t`, `sigma_t = t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FmSchedule;

impl FmSchedule {
    pub fn alpha(&self, t: f64) -> f64 {
        1.0 - t
    }

    pub fn sigma(&self, t: f64) -> f64 {
        t
    }

    pub fn interpolate(&self, x0: [f64; 2], noise: [f64; 2], t: f64) -> [f64; 2] {
        [
            self.alpha(t) * x0[0] + self.sigma(t) * noise[0],
            self.alpha(t) * x0[1] + self.sigma(t) * noise[1],
        ]
    }

    /// `d alpha/dt * x0 + d sigma/dt * eps`.
    pub fn target_velocity(&self, x0: [f64; 2], noise: [f64; 2]) -> [f64; 2] {
        [noise[0] - x0[0], noise[1] - x0[1]]
    }
}

/// Euler integration from `z_1 = noise` to `t = 0` in `steps` equal steps.
pub fn sample_ode(field: &impl VelocityField, c: f64, steps: usize, noise: [f64; 2]) -> [f64; 2] {
    let steps = steps.max(1);
    let dt = 1.0 / steps as f64;
    let mut z = noise;
    for k in 0..steps {
        let t = 1.0 - k as f64 * dt;
        let v = field.velocity(z, t, c);
        z = [z[0] - dt * v[0], z[1] - dt * v[1]];
    }
    z
}

/// Implicit positive and negative policies
/// `v+ = (1 - b) v_old + b v`, `v- = (1 + b) v_old - b v`.
pub fn implicit_velocities(v_old: [f64; 2], v_theta: [f64; 2], beta_mix: f64) -> ([f64; 2], [f64; 2]) {
    let mut plus = [0.0; 2];
    let mut minus = [0.0; 2];
    for k in 0..2 {
        plus[k] = (1.0 - beta_mix) * v_old[k] + beta_mix * v_theta[k];
        minus[k] = (1.0 + beta_mix) * v_old[k] - beta_mix * v_theta[k];
    }
    (plus, minus)
}

/// Arithmetic mean; exact for constant inputs, so constant groups have zero
/// deviation.
pub fn mean(values: &[f64]) -> f64 {
    match values {
        [] => 0.0,
        [first, rest @ ..] if rest.iter().all(|v| v == first) => *first,
        _ => values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// `Z_c`: deviation of every raw reward in the step, floored.
pub fn global_reward_std(all_raw: &[f64]) -> f64 {
    std_dev(all_raw).max(MIN_REWARD_STD)
}

/// Map a group's raw rewards to `1/2 + 1/2 clip((r - mean) / Z_c, -1, 1)`.
pub fn optimality_reward(raw: &[f64], z_c: f64) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(Error::DegenerateGroup(raw.len()));
    }
    let z = z_c.max(MIN_REWARD_STD);
    let m = mean(raw);
    Ok(raw.iter().map(|r| 0.5 + 0.5 * ((r - m) / z).clamp(-1.0, 1.0)).collect())
}

/// Samples drawn from the old policy for one conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub cond: f64,
    pub samples: Vec<[f64; 2]>,
    pub raw_rewards: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl SampleGroup {
    pub fn raw_mean(&self) -> f64 {
        mean(&self.raw_rewards)
    }

    pub fn raw_std(&self) -> f64 {
        std_dev(&self.raw_rewards)
    }
}

/// Drop groups with no learning signal: raw mean at or above `ban_mean`, or
/// raw deviation at or below `ban_std`.
pub fn group_filter(groups: Vec<SampleGroup>, ban_mean: f64, ban_std: f64) -> Vec<SampleGroup> {
    groups
        .into_iter()
        .filter(|g| g.raw_mean() < ban_mean && g.raw_std() > ban_std)
        .collect()
}
