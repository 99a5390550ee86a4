use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{fm_loss, nft_loss, NftSample, ToyFlowModel};
use super::{
    global_reward_std, group_filter, mean, optimality_reward, sample_ode, FmSchedule, SampleGroup, VelocityField,
};
use crate::error::{Error, Result};
use crate::flowfield::NormalizedFlow;
use crate::reward::{reward_from_normalized, RewardConfig};

// Stream tags keep the sampling, training and evaluation draws independent.
const STREAM_PRETRAIN: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_EVAL: u64 = 4;

/// Counter-based generator for one (purpose, round, index) cell.
fn stream_rng(seed: u64, tag: u64, round: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 56) ^ (round << 28) ^ index);
    rng
}

fn normal2(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 128,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

/// Fit `v(z_t, t) ~ eps - x0` on `data` with Adam, then snapshot the result
/// as the old policy.
pub fn fm_pretrain(mut model: ToyFlowModel, data: &[[f64; 2]], cfg: &PretrainConfig) -> Result<ToyFlowModel> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("pretraining data is empty".into()));
    }
    let schedule = FmSchedule;
    let mut opt = Adam::new(model.param_count(), cfg.learning_rate);
    for step in 0..cfg.steps {
        let mut rng = stream_rng(cfg.seed, STREAM_PRETRAIN, 0, step as u64);
        let batch: Vec<NftSample> = (0..cfg.batch_size)
            .map(|_| {
                let x0 = data[rng.random_range(0..data.len())];
                let noise = normal2(&mut rng);
                let t: f64 = rng.random_range(0.0..1.0);
                NftSample {
                    x_t: schedule.interpolate(x0, noise, t),
                    t,
                    c: 0.0,
                    target: schedule.target_velocity(x0, noise),
                    r: 1.0,
                }
            })
            .collect();
        let out = fm_loss(&batch, &model);
        if !out.loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        opt.update(model.params_mut(), &out.grad);
    }
    model.snapshot();
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NftConfig {
    /// Mixing strength between old and current policy.
    pub beta_mix: f64,
    pub kl_weight: f64,
    pub group_size: usize,
    pub groups: usize,
    pub ode_steps: usize,
    pub ban_mean: f64,
    pub ban_std: f64,
    pub learning_rate: f64,
    pub rounds: usize,
    /// Gradient steps per round over the kept samples.
    pub inner_steps: usize,
    /// Classifier-free guidance scale at sampling; 1.0 disables guidance.
    pub guidance_scale: f64,
    pub seed: u64,
}

impl Default for NftConfig {
    fn default() -> Self {
        Self {
            beta_mix: 1.0,
            kl_weight: 1e-4,
            group_size: 8,
            groups: 24,
            ode_steps: 6,
            ban_mean: 0.9,
            ban_std: 0.05,
            learning_rate: 1e-3,
            rounds: 10,
            inner_steps: 32,
            guidance_scale: 1.0,
            seed: 0,
        }
    }
}

impl NftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_mix > 0.0) {
            return Err(Error::InvalidConfig("beta_mix must be positive".into()));
        }
        if !(self.ban_std >= 0.0 && (0.0..=1.0).contains(&self.ban_mean)) {
            return Err(Error::InvalidConfig("ban thresholds out of range".into()));
        }
        if self.group_size < 2 || self.groups == 0 || self.ode_steps == 0 {
            return Err(Error::InvalidConfig(
                "need group_size >= 2, groups >= 1, ode_steps >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub mean_raw_reward: f64,
    pub kept_groups: usize,
    /// Mean loss over the round's gradient steps; `None` when skipped.
    pub loss: Option<f64>,
    pub losses: Vec<f64>,
    /// Set when every group was filtered and no update happened.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: NftConfig,
    pub rounds: Vec<RoundRecord>,
    pub final_params: Vec<f64>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,mean_raw_reward,kept_groups,loss\n");
        for r in &self.rounds {
            let loss = r.loss.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.round, r.mean_raw_reward, r.kept_groups, loss
            ));
        }
        out
    }
}

/// Guided old-policy field used for sampling.
struct GuidedOld<'a> {
    model: &'a ToyFlowModel,
    scale: f64,
}

impl VelocityField for GuidedOld<'_> {
    fn velocity(&self, x: [f64; 2], t: f64, c: f64) -> [f64; 2] {
        let cond = self.model.velocity_old(x, t, c);
        if self.scale == 1.0 || !self.model.uses_conditioning() {
            return cond;
        }
        let uncond = self.model.velocity_old(x, t, 0.0);
        [
            uncond[0] + self.scale * (cond[0] - uncond[0]),
            uncond[1] + self.scale * (cond[1] - uncond[1]),
        ]
    }
}

fn sample_groups(
    model: &ToyFlowModel,
    reward_fn: &(dyn Fn([f64; 2]) -> f64 + Sync),
    cfg: &NftConfig,
    round: usize,
) -> Vec<SampleGroup> {
    let field = GuidedOld {
        model,
        scale: cfg.guidance_scale,
    };
    (0..cfg.groups)
        .into_par_iter()
        .map(|g| {
            let mut rng = stream_rng(cfg.seed, STREAM_SAMPLE, round as u64, g as u64);
            let cond = 0.0;
            let samples: Vec<[f64; 2]> = (0..cfg.group_size)
                .map(|_| sample_ode(&field, cond, cfg.ode_steps, normal2(&mut rng)))
                .collect();
            let raw_rewards = samples.iter().map(|&x| reward_fn(x)).collect();
            SampleGroup {
                cond,
                samples,
                raw_rewards,
                rewards: Vec::new(),
            }
        })
        .collect()
}

/// Run NFT rounds against `reward_fn`. Rounds where every group is filtered
/// are recorded as skipped and leave the parameters untouched.
pub fn train_nft(
    mut model: ToyFlowModel,
    reward_fn: &(dyn Fn([f64; 2]) -> f64 + Sync),
    cfg: &NftConfig,
) -> Result<(ToyFlowModel, TrainReport)> {
    cfg.validate()?;
    let schedule = FmSchedule;
    let mut opt = Adam::new(model.param_count(), cfg.learning_rate);
    let mut records = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        model.snapshot();
        let mut groups = sample_groups(&model, reward_fn, cfg, round);
        let all_raw: Vec<f64> = groups.iter().flat_map(|g| g.raw_rewards.iter().copied()).collect();
        let z_c = global_reward_std(&all_raw);
        for g in &mut groups {
            g.rewards = optimality_reward(&g.raw_rewards, z_c)?;
        }
        let kept = group_filter(groups, cfg.ban_mean, cfg.ban_std);
        let mean_raw_reward = mean(&all_raw);

        if kept.is_empty() {
            log::info!("{}", Error::AllGroupsFiltered(round));
            records.push(RoundRecord {
                round,
                mean_raw_reward,
                kept_groups: 0,
                loss: None,
                losses: Vec::new(),
                skipped: true,
            });
            continue;
        }

        let mut losses = Vec::with_capacity(cfg.inner_steps);
        for step in 0..cfg.inner_steps {
            let mut rng = stream_rng(cfg.seed, STREAM_TRAIN, round as u64, step as u64);
            let batch: Vec<NftSample> = kept
                .iter()
                .flat_map(|g| g.samples.iter().zip(&g.rewards).map(move |(x, r)| (g.cond, *x, *r)))
                .map(|(c, x0, r)| {
                    let noise = normal2(&mut rng);
                    let t: f64 = rng.random_range(0.0..1.0);
                    NftSample {
                        x_t: schedule.interpolate(x0, noise, t),
                        t,
                        c,
                        target: schedule.target_velocity(x0, noise),
                        r,
                    }
                })
                .collect();
            let out = nft_loss(&batch, &model, cfg.beta_mix, cfg.kl_weight);
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            opt.update(model.params_mut(), &out.grad);
            losses.push(out.loss);
        }
        records.push(RoundRecord {
            round,
            mean_raw_reward,
            kept_groups: kept.len(),
            loss: Some(mean(&losses)),
            losses,
            skipped: false,
        });
    }

    let report = TrainReport {
        config: cfg.clone(),
        rounds: records,
        final_params: model.params().to_vec(),
    };
    Ok((model, report))
}

/// Equal mixture of isotropic Gaussians (std 0.25) at `(-2, 0)` and `(2, 0)`.
pub fn two_mode_data(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let cx = if i % 2 == 0 { 2.0 } else { -2.0 };
            let z = normal2(&mut rng);
            [cx + 0.25 * z[0], 0.25 * z[1]]
        })
        .collect()
}

/// Fraction of `n` current-policy samples within `radius` of `target`.
pub fn mode_fraction(
    model: &ToyFlowModel,
    n: usize,
    ode_steps: usize,
    target: [f64; 2],
    radius: f64,
    seed: u64,
) -> f64 {
    let hits: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, STREAM_EVAL, 0, i as u64);
            let x = sample_ode(model, 0.0, ode_steps, normal2(&mut rng));
            usize::from((x[0] - target[0]).hypot(x[1] - target[1]) <= radius)
        })
        .sum();
    hits as f64 / n as f64
}

/// Treats a sample as a global displacement (in tenths of the image
/// diagonal) and scores it with the quantized motion reward against a fixed
/// target displacement.
#[derive(Debug, Clone)]
pub struct MotionProxyReward {
    pub target: [f64; 2],
    pub scale: f64,
    pub reward: RewardConfig,
}

impl Default for MotionProxyReward {
    fn default() -> Self {
        Self {
            target: [2.0, 0.0],
            scale: 0.1,
            reward: RewardConfig::default(),
        }
    }
}

impl MotionProxyReward {
    pub fn score(&self, x: [f64; 2]) -> f64 {
        const SIDE: usize = 4;
        let field = |p: [f64; 2]| {
            NormalizedFlow::from_components(
                SIDE,
                SIDE,
                vec![p[0] * self.scale; SIDE * SIDE],
                vec![p[1] * self.scale; SIDE * SIDE],
                1.0,
            )
        };
        match (field(x), field(self.target)) {
            (Ok(pred), Ok(gt)) => reward_from_normalized(&pred, &gt, &self.reward)
                .map(|r| r.r_motion)
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }
}
