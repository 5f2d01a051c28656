//! TOML run configuration.
//!
//! Every key has a default, so an empty document is a valid configuration.
//! Overrides are `key=value` strings applied after the file is loaded; the
//! key is either a dotted path (`controller.v_weight`) or a bare key that
//! names exactly one setting (`lambda_max`, `snr_db`, `t0`).

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::channel::ChannelModel;
use crate::controller::{ControllerConfig, Mode};
use crate::quality::{ChunkSizeModel, ComputeModel, QualityModel, QualityTable, TableError};
use crate::queueing::{ArrivalProcess, QueueParams};
use crate::sim::{Scenario, SimConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid override `{0}`: expected KEY=VALUE")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl ConfigError {
    /// I/O failures, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            ConfigError::Io { .. } | ConfigError::Table(TableError::Io { .. })
        )
    }
}

/// `(section, key)` for every setting; the section is empty for top-level
/// keys.
const KEYS: &[(&str, &str)] = &[
    ("", "horizon_slots"),
    ("", "seed"),
    ("", "warmup_slots"),
    ("quality", "table"),
    ("quality", "base_size_bits"),
    ("quality", "size_exponent"),
    ("quality", "core_rate_hz"),
    ("quality", "calibration"),
    ("channel", "bandwidth_hz"),
    ("channel", "slot_seconds"),
    ("channel", "snr_db"),
    ("channel", "power_budget_w"),
    ("channel", "pathloss"),
    ("channel", "distance"),
    ("channel", "gamma"),
    ("queue", "lambda_max"),
    ("queue", "eta"),
    ("queue", "xi"),
    ("controller", "v_weight"),
    ("controller", "k_z"),
    ("controller", "k_w"),
    ("controller", "k_theta"),
    ("controller", "u_max"),
    ("controller", "p_bar"),
    ("controller", "buffering_b"),
    ("controller", "mode"),
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub horizon_slots: u64,
    pub seed: u64,
    /// Slots excluded from summary metrics.
    pub warmup_slots: u64,
    pub quality: QualitySection,
    pub channel: ChannelSection,
    pub queue: QueueSection,
    pub controller: ControllerSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualitySection {
    /// CSV table; the bundled table when absent.
    pub table: Option<PathBuf>,
    pub base_size_bits: f64,
    pub size_exponent: f64,
    pub core_rate_hz: f64,
    pub calibration: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub bandwidth_hz: f64,
    #[serde(alias = "t0")]
    pub slot_seconds: f64,
    pub snr_db: f64,
    pub power_budget_w: f64,
    pub pathloss: Option<f64>,
    pub distance: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueueSection {
    pub lambda_max: u32,
    pub eta: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub v_weight: f64,
    pub k_z: f64,
    pub k_w: f64,
    pub k_theta: f64,
    pub u_max: u32,
    pub p_bar: Option<f64>,
    pub buffering_b: f64,
    pub mode: Mode,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            horizon_slots: 100_000,
            seed: 1,
            warmup_slots: 1_000,
            quality: QualitySection::default(),
            channel: ChannelSection::default(),
            queue: QueueSection::default(),
            controller: ControllerSection::default(),
        }
    }
}

impl Default for QualitySection {
    fn default() -> Self {
        let sizes = ChunkSizeModel::default();
        let compute = ComputeModel::default();
        QualitySection {
            table: None,
            base_size_bits: sizes.base_size_bits,
            size_exponent: sizes.exponent,
            core_rate_hz: compute.core_rate_hz,
            calibration: compute.calibration,
        }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        let ch = ChannelModel::default();
        ChannelSection {
            bandwidth_hz: ch.bandwidth_hz,
            slot_seconds: ch.slot_seconds,
            snr_db: ch.nominal_snr_db,
            power_budget_w: ch.power_budget_w,
            pathloss: None,
            distance: None,
            gamma: None,
        }
    }
}

impl Default for QueueSection {
    fn default() -> Self {
        let q = QueueParams::default();
        QueueSection {
            lambda_max: ArrivalProcess::default().lambda_max,
            eta: q.eta,
            xi: q.xi,
        }
    }
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        ControllerSection {
            v_weight: c.v_weight,
            k_z: c.k_z,
            k_w: c.k_w,
            k_theta: c.k_theta,
            u_max: c.u_max,
            p_bar: c.p_bar,
            buffering_b: c.buffering_b,
            mode: c.mode,
        }
    }
}

fn resolve_key(key: &str) -> Result<(&'static str, &'static str), ConfigError> {
    let unknown = || ConfigError::UnknownKey(key.to_string());
    if let Some((section, name)) = key.split_once('.') {
        let name = if section == "channel" && name == "t0" { "slot_seconds" } else { name };
        return KEYS
            .iter()
            .find(|(s, k)| *s == section && *k == name)
            .copied()
            .ok_or_else(unknown);
    }
    let name = if key == "t0" { "slot_seconds" } else { key };
    let mut hits = KEYS.iter().filter(|(_, k)| *k == name);
    match (hits.next(), hits.next()) {
        (Some(hit), None) => Ok(*hit),
        _ => Err(unknown()),
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// A configuration document being assembled from a file and overrides.
#[derive(Debug, Clone, Default)]
pub struct ConfigDocument {
    doc: toml::Table,
}

impl ConfigDocument {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(ConfigDocument { doc })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut doc = Self::from_toml_str(&text)?;
        // relative table paths are relative to the config file
        if let Some(dir) = path.parent() {
            if let Some(toml::Value::String(t)) = doc
                .doc
                .get_mut("quality")
                .and_then(|q| q.as_table_mut())
                .and_then(|q| q.get_mut("table"))
            {
                if Path::new(t.as_str()).is_relative() {
                    *t = dir.join(&*t).display().to_string();
                }
            }
        }
        Ok(doc)
    }

    /// Sets one key; `assignment` is `KEY=VALUE`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
        let (section, name) = resolve_key(key.trim())?;
        self.set(section, name, parse_override_value(raw));
        Ok(())
    }

    pub fn set(&mut self, section: &str, key: &str, value: toml::Value) {
        let target = if section.is_empty() {
            &mut self.doc
        } else {
            let entry = self
                .doc
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if !entry.is_table() {
                *entry = toml::Value::Table(toml::Table::new());
            }
            entry.as_table_mut().expect("just made a table")
        };
        target.insert(key.to_string(), value);
    }

    pub fn parse(&self) -> Result<Config, ConfigError> {
        Config::deserialize(toml::Value::Table(self.doc.clone()))
            .map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

fn positive(name: &str, value: f64) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::Invalid(format!("{name} must be positive, got {value}")))
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        ConfigDocument::from_toml_str(text)?.parse()
    }

    /// Path loss from `pathloss`, or `distance^-gamma`, or 1.
    fn pathloss(&self) -> Result<f64, ConfigError> {
        let ch = &self.channel;
        match (ch.pathloss, ch.distance, ch.gamma) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(ConfigError::Invalid(
                "set either channel.pathloss or channel.distance/gamma, not both".into(),
            )),
            (Some(l), None, None) => positive("channel.pathloss", l),
            (None, Some(d), Some(g)) => {
                positive("channel.distance", d)?;
                positive("channel.gamma", g)?;
                positive("channel path loss", d.powf(-g))
            }
            (None, None, None) => Ok(1.0),
            _ => Err(ConfigError::Invalid(
                "channel.distance and channel.gamma must be given together".into(),
            )),
        }
    }

    /// Validated simulation parameters.
    pub fn to_sim_config(&self) -> Result<SimConfig, ConfigError> {
        if self.horizon_slots == 0 {
            return Err(ConfigError::Invalid("horizon_slots must be at least 1".into()));
        }
        let q = &self.quality;
        let sizes = ChunkSizeModel {
            base_size_bits: positive("quality.base_size_bits", q.base_size_bits)?,
            exponent: positive("quality.size_exponent", q.size_exponent)?,
        };
        let compute = ComputeModel {
            core_rate_hz: positive("quality.core_rate_hz", q.core_rate_hz)?,
            calibration: positive("quality.calibration", q.calibration)?,
        };
        let ch = &self.channel;
        if !ch.snr_db.is_finite() {
            return Err(ConfigError::Invalid("channel.snr_db must be finite".into()));
        }
        let channel = ChannelModel::with_nominal_snr(
            positive("channel.bandwidth_hz", ch.bandwidth_hz)?,
            positive("channel.slot_seconds", ch.slot_seconds)?,
            self.pathloss()?,
            positive("channel.power_budget_w", ch.power_budget_w)?,
            ch.snr_db,
        );
        let queue = QueueParams {
            eta: positive("queue.eta", self.queue.eta)?,
            xi: positive("queue.xi", self.queue.xi)?,
            slot_seconds: channel.slot_seconds,
        };
        let c = &self.controller;
        let controller = ControllerConfig {
            v_weight: c.v_weight,
            k_z: c.k_z,
            k_w: c.k_w,
            k_theta: c.k_theta,
            u_max: c.u_max,
            p_bar: c.p_bar,
            buffering_b: c.buffering_b,
            mode: c.mode,
        };
        controller.validate().map_err(ConfigError::Invalid)?;
        Ok(SimConfig {
            horizon_slots: self.horizon_slots,
            seed: self.seed,
            warmup_slots: self.warmup_slots,
            table_path: q.table.clone(),
            sizes,
            compute,
            channel,
            arrivals: ArrivalProcess {
                lambda_max: self.queue.lambda_max,
            },
            queue,
            controller,
        })
    }
}

impl SimConfig {
    /// Loads the quality table and assembles the runtime models.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let table = match &self.table_path {
            Some(path) => QualityTable::load(path)?,
            None => QualityTable::default_table(),
        };
        Ok(Scenario {
            config: self.clone(),
            quality: QualityModel::new(table, self.sizes, self.compute),
        })
    }
}
