//! Config file loading and command-line overrides.
//!
//! The file is TOML with one table per stage. `[train]` holds the training
//! configuration fields, `[baseline]` the baseline sampling ranges, and
//! `[eval]` the feature extractor used for FID. Overrides are applied to the
//! parsed document before it is deserialized, so `--set train.batch_size=4`
//! behaves exactly like editing the file.

use std::fs;
use std::path::{Path, PathBuf};

use hazerender_core::eval::BaselineConfig;
use hazerender_core::train::TrainConfig;
use hazerender_core::Tap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::UsageError;

/// Feature extractor settings for `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub backbone_weights: Option<PathBuf>,
    pub backbone_width_divisor: usize,
    pub backbone_seed: u64,
    pub tap: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { backbone_weights: None, backbone_width_divisor: 1, backbone_seed: 0, tap: Tap::Relu3_3.to_string() }
    }
}

/// The parsed config document with overrides applied.
#[derive(Debug, Clone, Default)]
pub struct Document {
    root: Table,
}

impl Document {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let root = text
            .parse::<Table>()
            .map_err(|e| UsageError(format!("cannot parse config {}: {e}", path.display())))?;
        Ok(Self { root })
    }

    /// Sets a dotted key such as `train.loss_weights.lambda_adv`. The value is
    /// read as a TOML literal when possible and as a bare string otherwise.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), UsageError> {
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(UsageError(format!("malformed override key {key:?}")));
        }
        let (last, parents) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut self.root;
        for part in parents {
            let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| UsageError(format!("override {key}: {part} is not a table")))?;
        }
        table.insert(last.to_string(), value);
        Ok(())
    }

    /// Applies `KEY=VALUE` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), UsageError> {
        for item in overrides {
            let (key, value) =
                item.split_once('=').ok_or_else(|| UsageError(format!("override {item:?} is not KEY=VALUE")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Deserializes one section; a missing section reads as an empty table.
    pub fn section<T: DeserializeOwned>(&self, name: &str) -> Result<T, UsageError> {
        let table = match self.root.get(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t.clone(),
            Some(_) => return Err(UsageError(format!("config key {name} must be a table"))),
        };
        T::deserialize(Value::Table(table)).map_err(|e| UsageError(format!("invalid [{name}] config: {e}")))
    }

    pub fn train(&self) -> Result<TrainConfig, UsageError> {
        let cfg: TrainConfig = self.section("train")?;
        cfg.validate().map_err(|e| UsageError(format!("invalid [train] config: {e}")))?;
        Ok(cfg)
    }

    pub fn baseline(&self) -> Result<BaselineConfig, UsageError> {
        let cfg: BaselineConfig = self.section("baseline")?;
        cfg.validate().map_err(|e| UsageError(format!("invalid [baseline] config: {e}")))?;
        Ok(cfg)
    }

    pub fn eval(&self) -> Result<EvalConfig, UsageError> {
        let cfg: EvalConfig = self.section("eval")?;
        cfg.tap.parse::<Tap>().map_err(|e| UsageError(format!("invalid [eval] config: {e}")))?;
        Ok(cfg)
    }
}

/// Renders the resolved configuration of a command as TOML.
pub fn resolved<T: Serialize>(section: &str, cfg: &T) -> String {
    let mut root = Table::new();
    root.insert(section.to_string(), Value::try_from(cfg).expect("config serializes to TOML"));
    toml::to_string(&root).expect("TOML table serializes")
}
