//! Optical-flow motion-alignment scoring: a classical dense flow estimator,
//! the motion reward and MAS metric built on it, a benchmark harness, and a
//! small flow-matching lab for negative-aware finetuning.

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod estimator;
pub mod flowfield;
pub mod imageio;
pub mod nftlab;
pub mod reward;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{Estimator, EstimatorConfig};
pub use flowfield::{FlowField, NormalizedFlow};
pub use imageio::{GrayImage, Image};
pub use reward::{MasConfig, MasResult, RewardBreakdown, RewardConfig};
