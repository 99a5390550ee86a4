use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{Category, Entry};
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::imageio::{load_image, to_grayscale};
use crate::reward::{mas_from_flows, reward_from_flows, MasConfig, MasResult, RewardBreakdown, RewardConfig, Triplet};

/// Name under which the motion reward participates in weighted combinations.
pub const MOTION_KEY: &str = "motion";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryScore {
    pub entry_id: String,
    pub model: String,
    pub category: Category,
    pub reward: RewardBreakdown,
    pub mas: MasResult,
    /// The edited output (or a precomputed flow) was resampled to the
    /// input resolution.
    pub resized: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
}

/// Score one model's output for one entry. The edited image is resized to
/// the input resolution when they differ; the ground truth must match.
pub fn score_entry(
    entry: &Entry,
    model: &str,
    est: &Estimator,
    rcfg: &RewardConfig,
    mcfg: &MasConfig,
) -> Result<EntryScore> {
    let edited_path = entry
        .outputs
        .get(model)
        .ok_or_else(|| Error::MissingFile(Path::new(&entry.id).join(model)))?;
    let orig = to_grayscale(&load_image(&entry.input_path)?);
    let gt = to_grayscale(&load_image(&entry.gt_path)?);
    let mut edited = to_grayscale(&load_image(edited_path)?);
    let mut resized = false;
    if edited.dims() != orig.dims() {
        edited = edited.resize_bilinear(orig.width(), orig.height());
        resized = true;
    }
    let triplet = Triplet::new(orig, edited, gt).with_key(entry.id.clone(), Some(model.to_string()));
    let (pred, gt) = triplet.flows(est)?;
    Ok(EntryScore {
        entry_id: entry.id.clone(),
        model: model.to_string(),
        category: entry.category,
        reward: reward_from_flows(&pred.flow, &gt.flow, rcfg)?,
        mas: mas_from_flows(&pred.flow, &gt.flow, mcfg, rcfg)?,
        resized: resized || pred.resized || gt.resized,
        external: BTreeMap::new(),
        combined: None,
    })
}

/// `sum_i w_i * score_i` over named scores, where the motion reward is
/// available under [`MOTION_KEY`].
pub fn combine_rewards(motion: f64, external: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> Result<f64> {
    let sum: f64 = weights.values().sum();
    if !((sum - 1.0).abs() <= 1e-9) {
        return Err(Error::WeightSumInvalid(sum));
    }
    let mut total = 0.0;
    for (name, &w) in weights {
        let score = if name == MOTION_KEY {
            motion
        } else {
            *external.get(name).ok_or_else(|| Error::WeightMismatch(name.clone()))?
        };
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange {
                name: name.clone(),
                value: score,
            });
        }
        total += w * score;
    }
    Ok(total)
}

/// Parse `motion=0.5,mllm=0.5`.
pub fn parse_weights(text: &str) -> Result<BTreeMap<String, f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("weight {pair:?} is not name=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("weight {pair:?} has a non-numeric value")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalRecord {
    entry_id: String,
    model: String,
    name: String,
    value: f64,
}

/// Externally produced scores keyed by `(entry id, model)`.
pub type ExternalScores = BTreeMap<(String, String), BTreeMap<String, f64>>;

/// Read a sidecar of `{"entry_id", "model", "name", "value"}` lines.
pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = ExternalScores::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExternalRecord = serde_json::from_str(line).map_err(|e| Error::ParseError {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.entry((rec.entry_id, rec.model))
            .or_default()
            .insert(rec.name, rec.value);
    }
    Ok(out)
}
