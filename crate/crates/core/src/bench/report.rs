use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Category, Manifest};
use super::score::{combine_rewards, score_entry, EntryScore, ExternalScores};
use super::winrate::{win_rate, ScoreTable, WinRate};
use crate::config::Settings;
use crate::error::{Error, Result};
use crate::nftlab::mean;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    /// Models to score, in report order.
    pub models: Vec<String>,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    pub external: Option<ExternalScores>,
    pub weights: Option<BTreeMap<String, f64>>,
}

impl BenchOptions {
    /// Every model named in the manifest, sorted.
    pub fn all_models(manifest: &Manifest) -> Self {
        BenchOptions {
            models: manifest.models(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_sha256: String,
    pub manifest_sha256: String,
    pub estimator: String,
    /// Seconds since the Unix epoch; excluded from determinism checks.
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub count: usize,
    pub mean_mas: f64,
    pub mean_r_motion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    /// Entries scored successfully.
    pub count: usize,
    pub failures: usize,
    pub mean_mas: f64,
    pub mean_r_motion: f64,
    pub static_failure_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_combined: Option<f64>,
    pub categories: BTreeMap<Category, CategorySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub entry_id: String,
    pub model: String,
    pub category: Category,
    pub category_warning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<EntryScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: u64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub provenance: Provenance,
    pub models: Vec<ModelSummary>,
    /// `"mas"` or `"combined"`.
    pub win_rate_basis: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub win_rate: Option<WinRate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub win_rate_error: Option<String>,
    pub entries: Vec<EntryRecord>,
    pub timing: Timing,
}

impl Report {
    /// Copy with the timestamp and timing zeroed, for comparing runs.
    pub fn without_volatile(&self) -> Report {
        let mut r = self.clone();
        r.provenance.created_unix = 0;
        r.timing = Timing { elapsed_ms: 0, jobs: 0 };
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// One row per (entry, model): entry_id, model, category, r_motion,
    /// d_mag, d_dir, m_move, mas, static_failure, errors.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.csv_to(file).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::CorruptData(format!("{other:?}")),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.csv_to(&mut buf).expect("in-memory CSV");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    fn csv_to<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "entry_id",
            "model",
            "category",
            "r_motion",
            "d_mag",
            "d_dir",
            "m_move",
            "mas",
            "static_failure",
            "errors",
        ])?;
        for rec in &self.entries {
            let nums = match &rec.score {
                Some(s) => [
                    s.reward.r_motion.to_string(),
                    s.reward.d_mag.to_string(),
                    s.reward.d_dir.to_string(),
                    s.reward.m_move.to_string(),
                    s.mas.mas.to_string(),
                    s.mas.static_failure.to_string(),
                ],
                None => Default::default(),
            };
            let mut row = vec![rec.entry_id.clone(), rec.model.clone(), rec.category.to_string()];
            row.extend(nums);
            row.push(rec.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize(model: &str, records: &[&EntryRecord]) -> ModelSummary {
    let scored: Vec<&EntryScore> = records.iter().filter_map(|r| r.score.as_ref()).collect();
    let mas: Vec<f64> = scored.iter().map(|s| s.mas.mas).collect();
    let rm: Vec<f64> = scored.iter().map(|s| s.reward.r_motion).collect();
    let statics = scored.iter().filter(|s| s.mas.static_failure).count();
    let combined: Option<Vec<f64>> = scored.iter().map(|s| s.combined).collect();

    let mut categories = BTreeMap::new();
    for cat in Category::ALL {
        let in_cat: Vec<&&EntryScore> = scored.iter().filter(|s| s.category == cat).collect();
        if in_cat.is_empty() {
            continue;
        }
        let m: Vec<f64> = in_cat.iter().map(|s| s.mas.mas).collect();
        let r: Vec<f64> = in_cat.iter().map(|s| s.reward.r_motion).collect();
        categories.insert(
            cat,
            CategorySummary {
                count: in_cat.len(),
                mean_mas: mean(&m),
                mean_r_motion: mean(&r),
            },
        );
    }

    ModelSummary {
        model: model.to_string(),
        count: scored.len(),
        failures: records.len() - scored.len(),
        mean_mas: mean(&mas),
        mean_r_motion: mean(&rm),
        static_failure_rate: if scored.is_empty() {
            0.0
        } else {
            statics as f64 / scored.len() as f64
        },
        mean_combined: combined.filter(|c| !c.is_empty()).map(|c| mean(&c)),
        categories,
    }
}

/// Score every (entry, model) pair, aggregate per model and category, and
/// compute pairwise win rates. Per-entry failures are recorded, never fatal.
/// The result does not depend on `opts.jobs`.
pub fn run_benchmark(manifest: &Manifest, settings: &Settings, opts: &BenchOptions) -> Result<Report> {
    let started = Instant::now();
    let est = settings.estimator.build()?;
    if let Some(w) = &opts.weights {
        // validate weights up front with neutral scores
        let probe: BTreeMap<String, f64> = w.keys().map(|k| (k.clone(), 0.0)).collect();
        combine_rewards(0.0, &probe, w)?;
    }
    let models = opts.models.clone();

    let mut work: Vec<(usize, usize)> = Vec::with_capacity(manifest.len() * models.len());
    for e in 0..manifest.len() {
        for m in 0..models.len() {
            work.push((e, m));
        }
    }
    work.sort_by(|a, b| {
        manifest.entries[a.0]
            .id
            .cmp(&manifest.entries[b.0].id)
            .then(a.1.cmp(&b.1))
    });

    let score_one = |&(ei, mi): &(usize, usize)| -> EntryRecord {
        let entry = &manifest.entries[ei];
        let model = &models[mi];
        let result = score_entry(entry, model, &est, &settings.reward, &settings.mas).and_then(|mut s| {
            if let (Some(ext), Some(w)) = (&opts.external, &opts.weights) {
                s.external = ext.get(&(entry.id.clone(), model.clone())).cloned().unwrap_or_default();
                s.combined = Some(combine_rewards(s.reward.r_motion, &s.external, w)?);
            }
            Ok(s)
        });
        EntryRecord {
            entry_id: entry.id.clone(),
            model: model.clone(),
            category: entry.category,
            category_warning: entry.category_warning(),
            error: result.as_ref().err().map(|e| e.to_string()),
            score: result.ok(),
        }
    };

    let entries: Vec<EntryRecord> = if opts.jobs == 0 {
        work.par_iter().map(score_one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| work.par_iter().map(score_one).collect())
    };

    let summaries: Vec<ModelSummary> = models
        .iter()
        .map(|m| {
            let recs: Vec<&EntryRecord> = entries.iter().filter(|r| &r.model == m).collect();
            summarize(m, &recs)
        })
        .collect();

    let use_combined = opts.weights.is_some() && opts.external.is_some();
    let mut ids: Vec<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    ids.sort_unstable();
    let by_key: BTreeMap<(&str, &str), &EntryRecord> = entries
        .iter()
        .map(|r| ((r.entry_id.as_str(), r.model.as_str()), r))
        .collect();
    let table = ScoreTable {
        models: models.clone(),
        scores: models
            .iter()
            .map(|m| {
                ids.iter()
                    .map(|id| {
                        by_key
                            .get(&(*id, m.as_str()))
                            .and_then(|r| r.score.as_ref())
                            .and_then(|s| if use_combined { s.combined } else { Some(s.mas.mas) })
                    })
                    .collect()
            })
            .collect(),
    };
    let (win_rate, win_rate_error) = match win_rate(&table) {
        Ok(w) => (Some(w), None),
        Err(e) => (None, Some(e.to_string())),
    };

    Ok(Report {
        version: REPORT_VERSION,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: settings.hash(),
            manifest_sha256: manifest.sha256.clone(),
            estimator: est.describe(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
        models: summaries,
        win_rate_basis: if use_combined { "combined" } else { "mas" }.to_string(),
        win_rate,
        win_rate_error,
        entries,
        timing: Timing {
            elapsed_ms: started.elapsed().as_millis() as u64,
            jobs: opts.jobs,
        },
    })
}
