//! Benchmark harness: manifest ingestion, batch scoring, aggregation,
//! pairwise win rates and dataset motion statistics.
//!
//! A manifest is line-delimited JSON, one entry per line:
//!
//! ```text
//! {"id": "e1", "category": "pose", "instruction": "raise the left hand",
//!  "input_path": "in/e1.png", "gt_path": "gt/e1.png",
//!  "outputs": {"model-a": "a/e1.png", "model-b": "b/e1.png"}}
//! ```
//!
//! Relative paths resolve against the manifest's directory.

mod manifest;
mod report;
mod score;
mod stats;
mod winrate;

pub use manifest::{load_manifest, parse_manifest, Category, Entry, Manifest};
pub use report::{
    run_benchmark, BenchOptions, CategorySummary, EntryRecord, ModelSummary, Provenance, Report, Timing, REPORT_VERSION,
};
pub use score::{
    combine_rewards, load_external_scores, parse_weights, score_entry, EntryScore, ExternalScores, MOTION_KEY,
};
pub use stats::{dataset_motion_stats, entry_motion, EntryMotion, MotionStats};
pub use winrate::{win_rate, ScoreTable, WinRate};
