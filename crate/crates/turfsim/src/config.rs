//! TOML config files.
//!
//! A config is a flat list of keys. Areas are given either as a plain
//! `revenues` array in rank order or as `[[areas]]` tables with `area_id` and
//! `revenue`:
//!
//! ```toml
//! revenues = [30.0, 20.0, 10.0]
//! n_ocgs = 3
//! departure_rate = 25.0
//! collision_cost = 1.0
//! horizon = 10000.0        # optional, default 10000
//! return_rate = 1.0        # optional, default 1
//! warmup_fraction = 0.1    # optional, default 0.1
//! seed = 7                 # optional, default 0 (or TURFSIM_SEED)
//! streak_mode = "spell_count"        # or "duration"
//! collision_breaks_streak = false
//! ```
//!
//! Seeds above `i64::MAX` do not fit a TOML integer and are written as
//! strings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use turfsim_core::model::{DEFAULT_RETURN_RATE, DEFAULT_WARMUP_FRACTION};
use turfsim_core::{AreaSpec, CityConfig, ConfigError, StreakMode};

pub const DEFAULT_HORIZON: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("field `areas`: give either `revenues` or `[[areas]]`, not both")]
    BothAreaForms,
    #[error("field `seed`: {0:?} is not an unsigned 64-bit integer")]
    BadSeed(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

impl ConfigFileError {
    /// The config key the error is about, when there is one.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ConfigFileError::Missing(f) => Some(f),
            ConfigFileError::BothAreaForms => Some("areas"),
            ConfigFileError::BadSeed(_) => Some("seed"),
            ConfigFileError::Invalid(e) => Some(e.field()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SeedValue {
    Int(i64),
    Text(String),
}

impl SeedValue {
    fn from_u64(seed: u64) -> Self {
        match i64::try_from(seed) {
            Ok(s) => SeedValue::Int(s),
            Err(_) => SeedValue::Text(seed.to_string()),
        }
    }

    fn to_u64(&self) -> Result<u64, ConfigFileError> {
        match self {
            SeedValue::Int(s) => u64::try_from(*s).map_err(|_| ConfigFileError::BadSeed(s.to_string())),
            SeedValue::Text(s) => s.trim().parse().map_err(|_| ConfigFileError::BadSeed(s.clone())),
        }
    }
}

/// On-disk shape of a config. Everything is optional here; required keys are
/// enforced when converting to a [`CityConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    revenues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    areas: Option<Vec<AreaSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_ocgs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    departure_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    return_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collision_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    warmup_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<SeedValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    streak_mode: Option<StreakMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collision_breaks_streak: Option<bool>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eta: Option<f64>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub n_ocgs: Option<usize>,
    pub collision_cost: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub streak_mode: Option<StreakMode>,
    pub collision_breaks_streak: Option<bool>,
    /// Used only when neither the flags nor the file set a seed.
    pub fallback_seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        toml::from_str(text).map_err(|e| ConfigFileError::Parse(e.to_string().trim_end().to_owned()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Resolves flag > file > default and validates the result.
    pub fn resolve(&self, o: &Overrides) -> Result<CityConfig, ConfigFileError> {
        let areas = match (&self.revenues, &self.areas) {
            (Some(_), Some(_)) => return Err(ConfigFileError::BothAreaForms),
            (Some(r), None) => r
                .iter()
                .enumerate()
                .map(|(area_id, &revenue)| AreaSpec { area_id, revenue })
                .collect(),
            (None, Some(a)) => a.clone(),
            (None, None) => return Err(ConfigFileError::Missing("revenues")),
        };
        let seed = match (o.seed, &self.seed) {
            (Some(s), _) => s,
            (None, Some(s)) => s.to_u64()?,
            (None, None) => o.fallback_seed.unwrap_or(0),
        };
        let cfg = CityConfig {
            areas,
            n_ocgs: o.n_ocgs.or(self.n_ocgs).ok_or(ConfigFileError::Missing("n_ocgs"))?,
            departure_rate: o
                .eta
                .or(self.departure_rate)
                .ok_or(ConfigFileError::Missing("departure_rate"))?,
            return_rate: self.return_rate.unwrap_or(DEFAULT_RETURN_RATE),
            collision_cost: o
                .collision_cost
                .or(self.collision_cost)
                .ok_or(ConfigFileError::Missing("collision_cost"))?,
            horizon: o.horizon.or(self.horizon).unwrap_or(DEFAULT_HORIZON),
            warmup_fraction: o
                .warmup_fraction
                .or(self.warmup_fraction)
                .unwrap_or(DEFAULT_WARMUP_FRACTION),
            seed,
            streak_mode: o.streak_mode.or(self.streak_mode).unwrap_or_default(),
            collision_breaks_streak: o
                .collision_breaks_streak
                .or(self.collision_breaks_streak)
                .unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes every field explicitly, areas as a `revenues` array.
    pub fn from_config(cfg: &CityConfig) -> Self {
        ConfigFile {
            revenues: Some(cfg.revenues().collect()),
            areas: None,
            n_ocgs: Some(cfg.n_ocgs),
            departure_rate: Some(cfg.departure_rate),
            return_rate: Some(cfg.return_rate),
            collision_cost: Some(cfg.collision_cost),
            horizon: Some(cfg.horizon),
            warmup_fraction: Some(cfg.warmup_fraction),
            seed: Some(SeedValue::from_u64(cfg.seed)),
            streak_mode: Some(cfg.streak_mode),
            collision_breaks_streak: Some(cfg.collision_breaks_streak),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields always serialize")
    }
}

/// Parses and resolves a config with no overrides.
pub fn parse_config(text: &str) -> Result<CityConfig, ConfigFileError> {
    ConfigFile::parse(text)?.resolve(&Overrides::default())
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<CityConfig, ConfigFileError> {
    ConfigFile::load(path)?.resolve(overrides)
}

pub fn config_to_toml(cfg: &CityConfig) -> String {
    ConfigFile::from_config(cfg).to_toml()
}
