use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Entry, Manifest};
use crate::error::Result;
use crate::estimator::Estimator;
use crate::flowfield::{flow_magnitude, normalize_flow};
use crate::imageio::{load_image, to_grayscale};
use crate::nftlab::{mean, std_dev};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryMotion {
    pub entry_id: String,
    pub mean_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    /// Sampled entry ids, in manifest order.
    pub sample: Vec<String>,
    pub per_entry: Vec<EntryMotion>,
    pub mean: f64,
    /// Population standard deviation over entries.
    pub std: f64,
    pub failures: Vec<(String, String)>,
}

/// Mean normalized displacement from input to ground truth for one entry.
pub fn entry_motion(entry: &Entry, est: &Estimator) -> Result<f64> {
    let a = to_grayscale(&load_image(&entry.input_path)?);
    let b = to_grayscale(&load_image(&entry.gt_path)?);
    let flow = est.estimate_flow(&a, &b)?;
    Ok(flow_magnitude(&normalize_flow(&flow)).mean())
}

/// Seeded sample of `sample_size` entries (all of them if fewer exist),
/// each measured with [`entry_motion`]. Failing entries are excluded from
/// the statistics and listed.
pub fn dataset_motion_stats(manifest: &Manifest, est: &Estimator, sample_size: usize, seed: u64) -> MotionStats {
    let n = manifest.len();
    let mut picked: Vec<usize> = if sample_size >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, n, sample_size).into_vec()
    };
    picked.sort_unstable();

    let results: Vec<(String, Result<f64>)> = picked
        .par_iter()
        .map(|&i| {
            let e = &manifest.entries[i];
            (e.id.clone(), entry_motion(e, est))
        })
        .collect();

    let mut per_entry = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(m) => per_entry.push(EntryMotion {
                entry_id: id,
                mean_magnitude: m,
            }),
            Err(e) => failures.push((id, e.to_string())),
        }
    }
    let values: Vec<f64> = per_entry.iter().map(|e| e.mean_magnitude).collect();
    MotionStats {
        sample: picked.iter().map(|&i| manifest.entries[i].id.clone()).collect(),
        mean: mean(&values),
        std: std_dev(&values),
        per_entry,
        failures,
    }
}
