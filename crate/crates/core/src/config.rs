//! Layered run configuration: built-in defaults, then a TOML file, then
//! `key=value` overrides with dotted keys such as `reward.q=0.5`.
//!
//! Normalization bounds that are derived from other parameters (`reward.d_max`,
//! `mas.d_min`, `mas.d_max`) are recomputed after layering unless one of the
//! layers set them explicitly.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::nftlab::NftConfig;
use crate::reward::{MasConfig, RewardConfig};

/// Default MAS mixing weight between magnitude and direction.
pub const MAS_ALPHA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    LucasKanade,
    Precomputed,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    pub kind: EstimatorKind,
    /// Directory of precomputed `.flo` files; required for `precomputed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flo_dir: Option<PathBuf>,
    pub pyramid_levels: usize,
    pub window_radius: usize,
    pub iterations_per_level: usize,
    pub min_eigen: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        let lk = EstimatorConfig::default();
        Self {
            kind: EstimatorKind::default(),
            flo_dir: None,
            pyramid_levels: lk.pyramid_levels,
            window_radius: lk.window_radius,
            iterations_per_level: lk.iterations_per_level,
            min_eigen: lk.min_eigen,
        }
    }
}

impl EstimatorSettings {
    pub fn lk_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            pyramid_levels: self.pyramid_levels,
            window_radius: self.window_radius,
            iterations_per_level: self.iterations_per_level,
            min_eigen: self.min_eigen,
        }
    }

    pub fn build(&self) -> Result<Estimator> {
        match self.kind {
            EstimatorKind::LucasKanade => {
                let cfg = self.lk_config();
                cfg.validate()?;
                Ok(Estimator::LucasKanade(cfg))
            }
            EstimatorKind::Zero => Ok(Estimator::Zero),
            EstimatorKind::Precomputed => self
                .flo_dir
                .clone()
                .map(Estimator::Precomputed)
                .ok_or_else(|| Error::InvalidConfig("estimator.flo_dir is required for precomputed flows".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub reward: RewardConfig,
    pub mas: MasConfig,
    pub estimator: EstimatorSettings,
    pub nft: NftConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let reward = RewardConfig::default();
        Self {
            mas: MasConfig::for_reward(&reward, MAS_ALPHA),
            reward,
            estimator: EstimatorSettings::default(),
            nft: NftConfig::default(),
        }
    }
}

/// Accumulates layers before resolving them into [`Settings`].
#[derive(Debug, Clone, Default)]
pub struct SettingsBuilder {
    table: Table,
    explicit: BTreeSet<String>,
}

impl SettingsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self = self.toml_str(&text)?;
        Ok(self)
    }

    pub fn toml_str(mut self, text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        merge(&mut self.table, table, "", &mut self.explicit);
        Ok(self)
    }

    /// Apply one `dotted.key=value` override. Values are read as TOML
    /// scalars; anything that does not parse is taken as a bare string.
    pub fn set(mut self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {assignment:?} is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(Error::InvalidConfig(format!("bad override key {key:?}")));
        }
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        let mut layer = Table::new();
        let mut cursor = &mut layer;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            cursor = cursor
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("fresh table");
        }
        cursor.insert(parts[parts.len() - 1].to_string(), value);
        merge(&mut self.table, layer, "", &mut self.explicit);
        Ok(self)
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn build(self) -> Result<Settings> {
        let mut base = Table::try_from(Settings::default()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        merge(&mut base, self.table.clone(), "", &mut BTreeSet::new());
        let mut settings: Settings = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        if !self.is_explicit("reward.d_max") {
            settings.reward.d_max = settings.reward.default_d_max();
        }
        if !self.is_explicit("mas.d_min") {
            settings.mas.d_min = MasConfig::default_d_min(&settings.reward, settings.mas.alpha);
        }
        if !self.is_explicit("mas.d_max") {
            settings.mas.d_max = MasConfig::default_d_max(&settings.reward, settings.mas.alpha);
        }
        settings.validate()?;
        Ok(settings)
    }
}

fn merge(dst: &mut Table, src: Table, prefix: &str, explicit: &mut BTreeSet<String>) {
    for (k, v) in src {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (dst.get_mut(&k), v) {
            (Some(Value::Table(d)), Value::Table(s)) => merge(d, s, &path, explicit),
            (_, Value::Table(s)) => {
                let mut fresh = Table::new();
                merge(&mut fresh, s, &path, explicit);
                dst.insert(k, Value::Table(fresh));
            }
            (_, v) => {
                explicit.insert(path);
                dst.insert(k, v);
            }
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        self.mas.validate()?;
        self.nft.validate()?;
        if self.estimator.kind == EstimatorKind::LucasKanade {
            self.estimator.lk_config().validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
