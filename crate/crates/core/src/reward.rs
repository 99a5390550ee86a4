//! Motion-alignment reward and the Motion Alignment Score (MAS).
//!
//! Both compare the flow from the input image to a model's edit (`pred`)
//! against the flow from the input to the ground-truth target (`gt`), after
//! dividing each by the image diagonal.
//!
//! ```text
//! D_mag  = mean_ij (|pred - gt|_1 + eps)^q
//! D_dir  = sum w * e_dir / (sum w + eps)
//!          e_dir = (1 - v̂_pred · v̂_gt) / 2,   v̂ = V / (|V| + eps)
//!          w     = m_gt / (max m_gt + eps) * [m_gt > tau_m]
//! M_move = max(0, tau + mean(m_gt) / 2 - mean(m_pred))
//! D_comb = alpha D_mag + beta D_dir + lambda M_move
//! r_cont = 1 - clip((D_comb - D*_min) / (D_max - D*_min), 0, 1)
//! r      = round((L - 1) r_cont) / (L - 1)
//!
//! D_ovl  = a D_mag + (1 - a) D_dir
//! MAS    = 100 (1 - clip((D_ovl - d_min) / (d_max - d_min), 0, 1))
//! ```
//!
//! MAS is forced to zero when `mean(m_pred) / mean(m_gt) < rho_min`.
//! All reductions run sequentially in row-major order, so results are
//! bitwise reproducible regardless of how callers parallelize.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatedFlow, Estimator, FlowRole, PairKey};
use crate::flowfield::{check_same_dims, flow_magnitude, normalize_flow, FlowField, NormalizedFlow};
use crate::imageio::{to_grayscale, GrayImage, Image};

/// How the lower normalization bound `D*_min` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DminRule {
    /// Magnitude and direction terms of a zero flow against a zero flow:
    /// `alpha * eps^q`.
    ZeroFlow,
    /// Magnitude and direction terms of the ground-truth flow against itself.
    DuplicatedGt,
}

impl std::str::FromStr for DminRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-flow" => Ok(DminRule::ZeroFlow),
            "duplicated-gt" => Ok(DminRule::DuplicatedGt),
            other => Err(Error::InvalidConfig(format!(
                "unknown d_min rule {other:?} (expected zero-flow or duplicated-gt)"
            ))),
        }
    }
}

impl std::fmt::Display for DminRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DminRule::ZeroFlow => "zero-flow",
            DminRule::DuplicatedGt => "duplicated-gt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Robust exponent on the per-pixel l1 difference.
    pub q: f64,
    pub eps: f64,
    /// Ground-truth magnitude below which a pixel carries no direction weight.
    pub tau_m: f64,
    /// Hinge margin of the movement penalty.
    pub tau_move: f64,
    pub alpha: f64,
    pub beta_dir: f64,
    pub lambda_move: f64,
    pub d_max: f64,
    /// Number of quantization levels, including 0 and 1.
    pub levels: usize,
    pub d_min_rule: DminRule,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let mut cfg = Self {
            q: 0.4,
            eps: 1e-8,
            tau_m: 1e-4,
            tau_move: 0.01,
            alpha: 0.7,
            beta_dir: 0.2,
            lambda_move: 0.1,
            d_max: 0.0,
            levels: 6,
            d_min_rule: DminRule::ZeroFlow,
        };
        cfg.d_max = cfg.default_d_max();
        cfg
    }
}

impl RewardConfig {
    /// Worst case of the composite distance for diagonal-normalized flows:
    /// per-pixel l1 difference at most 2, `e_dir <= 1`, mean magnitude at most 1.
    pub fn default_d_max(&self) -> f64 {
        self.alpha * 2f64.powf(self.q) + self.beta_dir + self.lambda_move * (self.tau_move + 0.5)
    }

    pub fn zero_flow_d_min(&self) -> f64 {
        self.alpha * self.eps.powf(self.q)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("reward: {what}")));
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad("q must lie in (0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.alpha >= 0.0 && self.beta_dir >= 0.0 && self.lambda_move >= 0.0) {
            return bad("term weights must be non-negative");
        }
        if !(self.tau_m >= 0.0 && self.tau_move >= 0.0) {
            return bad("thresholds must be non-negative");
        }
        if !(self.d_max > self.zero_flow_d_min()) {
            return bad("d_max must exceed alpha * eps^q");
        }
        if self.levels < 2 {
            return bad("levels must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasConfig {
    /// Balance between the magnitude and direction terms.
    pub alpha: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Predicted-to-ground-truth mean motion ratio below which the edit
    /// counts as static.
    pub rho_min: f64,
}

impl Default for MasConfig {
    fn default() -> Self {
        Self::for_reward(&RewardConfig::default(), 0.7)
    }
}

impl MasConfig {
    /// Bounds derived from the reward's `eps` and `q` for balance `alpha`.
    pub fn for_reward(reward: &RewardConfig, alpha: f64) -> Self {
        Self {
            alpha,
            d_min: Self::default_d_min(reward, alpha),
            d_max: Self::default_d_max(reward, alpha),
            rho_min: 0.01,
        }
    }

    pub fn default_d_min(reward: &RewardConfig, alpha: f64) -> f64 {
        alpha * reward.eps.powf(reward.q)
    }

    pub fn default_d_max(reward: &RewardConfig, alpha: f64) -> f64 {
        alpha * 2f64.powf(reward.q) + (1.0 - alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_min > 0.0 && self.rho_min < 1.0) {
            return Err(Error::InvalidConfig("mas: rho_min must lie in (0, 1)".into()));
        }
        if !(self.d_max > self.d_min) {
            return Err(Error::InvalidConfig("mas: d_max must exceed d_min".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig("mas: alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub d_mag: f64,
    pub d_dir: f64,
    pub m_move: f64,
    pub d_comb: f64,
    pub d_min_star: f64,
    /// Clipped normalized distance.
    pub d_tilde: f64,
    pub r_cont: f64,
    pub r_motion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasResult {
    pub d_ovl: f64,
    pub mas: f64,
    pub static_failure: bool,
    /// `mean(m_pred) / mean(m_gt)`, absent when the ground truth is static.
    pub motion_ratio: Option<f64>,
}

fn check_pair(pred: &NormalizedFlow, gt: &NormalizedFlow) -> Result<()> {
    check_same_dims(pred.dims(), gt.dims())?;
    if pred.is_empty() {
        return Err(Error::EmptyImage {
            width: pred.width(),
            height: pred.height(),
        });
    }
    Ok(())
}

/// Robust l1 magnitude mismatch.
pub fn magnitude_distance(pred: &NormalizedFlow, gt: &NormalizedFlow, cfg: &RewardConfig) -> Result<f64> {
    check_pair(pred, gt)?;
    let mut sum = 0.0;
    for i in 0..pred.len() {
        let l1 = (pred.u()[i] - gt.u()[i]).abs() + (pred.v()[i] - gt.v()[i]).abs();
        sum += (l1 + cfg.eps).powf(cfg.q);
    }
    Ok(sum / pred.len() as f64)
}

/// Ground-truth-magnitude-weighted cosine direction mismatch.
pub fn direction_distance(pred: &NormalizedFlow, gt: &NormalizedFlow, cfg: &RewardConfig) -> Result<f64> {
    check_pair(pred, gt)?;
    let m_gt = flow_magnitude(gt);
    let m_pred = flow_magnitude(pred);
    let max_gt = m_gt.max();

    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for i in 0..pred.len() {
        let mg = m_gt.data()[i];
        if !(mg > cfg.tau_m) {
            continue;
        }
        let mp = m_pred.data()[i];
        let (gu, gv) = (gt.u()[i] / (mg + cfg.eps), gt.v()[i] / (mg + cfg.eps));
        let (pu, pv) = (pred.u()[i] / (mp + cfg.eps), pred.v()[i] / (mp + cfg.eps));
        let e_dir = 0.5 * (1.0 - (pu * gu + pv * gv));
        let w = mg / (max_gt + cfg.eps);
        weighted += w * e_dir;
        total_weight += w;
    }
    Ok(weighted / (total_weight + cfg.eps))
}

/// Anti-identity hinge on spatial-mean magnitudes.
pub fn movement_penalty(pred: &NormalizedFlow, gt: &NormalizedFlow, cfg: &RewardConfig) -> Result<f64> {
    check_pair(pred, gt)?;
    let mean_gt = flow_magnitude(gt).mean();
    let mean_pred = flow_magnitude(pred).mean();
    Ok((cfg.tau_move + 0.5 * mean_gt - mean_pred).max(0.0))
}

/// Round half away from zero onto `levels` evenly spaced values in `[0, 1]`.
pub fn quantize(r_cont: f64, levels: usize) -> f64 {
    let steps = (levels - 1) as f64;
    (steps * r_cont).round() / steps
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Lower normalization bound for the configured rule.
pub fn d_min_star(gt: &NormalizedFlow, cfg: &RewardConfig) -> Result<f64> {
    match cfg.d_min_rule {
        DminRule::ZeroFlow => Ok(cfg.zero_flow_d_min()),
        DminRule::DuplicatedGt => {
            Ok(cfg.alpha * magnitude_distance(gt, gt, cfg)? + cfg.beta_dir * direction_distance(gt, gt, cfg)?)
        }
    }
}

pub fn reward_from_normalized(
    pred: &NormalizedFlow,
    gt: &NormalizedFlow,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    cfg.validate()?;
    let d_mag = magnitude_distance(pred, gt, cfg)?;
    let d_dir = direction_distance(pred, gt, cfg)?;
    let m_move = movement_penalty(pred, gt, cfg)?;
    let d_comb = cfg.alpha * d_mag + cfg.beta_dir * d_dir + cfg.lambda_move * m_move;
    let d_min_star = d_min_star(gt, cfg)?;
    let d_tilde = clip01((d_comb - d_min_star) / (cfg.d_max - d_min_star));
    let r_cont = 1.0 - d_tilde;
    Ok(RewardBreakdown {
        d_mag,
        d_dir,
        m_move,
        d_comb,
        d_min_star,
        d_tilde,
        r_cont,
        r_motion: quantize(r_cont, cfg.levels),
    })
}

/// Reward for raw pixel-unit flows; both are normalized by their diagonal.
pub fn reward_from_flows(pred: &FlowField, gt: &FlowField, cfg: &RewardConfig) -> Result<RewardBreakdown> {
    check_same_dims(pred.dims(), gt.dims())?;
    reward_from_normalized(&normalize_flow(pred), &normalize_flow(gt), cfg)
}

pub fn mas_from_normalized(
    pred: &NormalizedFlow,
    gt: &NormalizedFlow,
    mcfg: &MasConfig,
    rcfg: &RewardConfig,
) -> Result<MasResult> {
    mcfg.validate()?;
    rcfg.validate()?;
    let d_mag = magnitude_distance(pred, gt, rcfg)?;
    let d_dir = direction_distance(pred, gt, rcfg)?;
    let d_ovl = mcfg.alpha * d_mag + (1.0 - mcfg.alpha) * d_dir;
    let mas = 100.0 * (1.0 - clip01((d_ovl - mcfg.d_min) / (mcfg.d_max - mcfg.d_min)));

    let mean_gt = flow_magnitude(gt).mean();
    let mean_pred = flow_magnitude(pred).mean();
    // a static ground truth never triggers the rule
    let motion_ratio = (mean_gt > rcfg.eps).then(|| mean_pred / mean_gt);
    let static_failure = motion_ratio.is_some_and(|r| r < mcfg.rho_min);
    Ok(MasResult {
        d_ovl,
        mas: if static_failure { 0.0 } else { mas },
        static_failure,
        motion_ratio,
    })
}

pub fn mas_from_flows(pred: &FlowField, gt: &FlowField, mcfg: &MasConfig, rcfg: &RewardConfig) -> Result<MasResult> {
    check_same_dims(pred.dims(), gt.dims())?;
    mas_from_normalized(&normalize_flow(pred), &normalize_flow(gt), mcfg, rcfg)
}

/// `(input, edited, ground truth)` in luminance, with an optional lookup key
/// for precomputed-flow estimators.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub orig: GrayImage,
    pub edited: GrayImage,
    pub gt: GrayImage,
    pub entry_id: Option<String>,
    pub model: Option<String>,
}

impl Triplet {
    pub fn new(orig: GrayImage, edited: GrayImage, gt: GrayImage) -> Self {
        Self {
            orig,
            edited,
            gt,
            entry_id: None,
            model: None,
        }
    }

    pub fn from_images(orig: &Image, edited: &Image, gt: &Image) -> Self {
        Self::new(to_grayscale(orig), to_grayscale(edited), to_grayscale(gt))
    }

    pub fn with_key(mut self, entry_id: impl Into<String>, model: Option<String>) -> Self {
        self.entry_id = Some(entry_id.into());
        self.model = model;
        self
    }

    fn key(&self, role: FlowRole) -> Option<PairKey<'_>> {
        self.entry_id.as_deref().map(|entry_id| PairKey {
            entry_id,
            model: self.model.as_deref(),
            role,
        })
    }

    /// `(V_pred, V_gt)` = (F(orig, edited), F(orig, gt)).
    pub fn flows(&self, est: &Estimator) -> Result<(EstimatedFlow, EstimatedFlow)> {
        check_same_dims(self.orig.dims(), self.edited.dims())?;
        check_same_dims(self.orig.dims(), self.gt.dims())?;
        let pred = est.estimate_keyed(self.key(FlowRole::Pred).as_ref(), &self.orig, &self.edited)?;
        let gt = est.estimate_keyed(self.key(FlowRole::Gt).as_ref(), &self.orig, &self.gt)?;
        Ok((pred, gt))
    }
}

pub fn motion_reward(triplet: &Triplet, est: &Estimator, cfg: &RewardConfig) -> Result<RewardBreakdown> {
    let (pred, gt) = triplet.flows(est)?;
    reward_from_flows(&pred.flow, &gt.flow, cfg)
}

pub fn mas_score(triplet: &Triplet, est: &Estimator, mcfg: &MasConfig, rcfg: &RewardConfig) -> Result<MasResult> {
    let (pred, gt) = triplet.flows(est)?;
    mas_from_flows(&pred.flow, &gt.flow, mcfg, rcfg)
}
