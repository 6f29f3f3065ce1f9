//! Run configuration: a TOML file with `[model]`, `[train]`, `[synth]` and
//! `[bench]` tables, patched by dotted `key=value` overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use fulltransnet::data_io::SynthConfig;
use fulltransnet::evaluation::BenchConfig;
use fulltransnet::model::ModelConfig;
use fulltransnet::training::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::UsageError;

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub bench: BenchConfig,
}

/// Raw configuration tree before it is checked against [`RunConfig`].
#[derive(Clone, Debug, Default)]
pub struct ConfigTree {
    table: Table,
    /// `model.*` keys given explicitly, by file or override.
    pub model_keys: Vec<String>,
}

impl ConfigTree {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| UsageError(format!("config {}: {e}", path.display())))?;
        let model_keys = match table.get("model") {
            Some(Value::Table(m)) => m.keys().cloned().collect(),
            _ => Vec::new(),
        };
        Ok(ConfigTree { table, model_keys })
    }

    /// Applies one `section.key=value` override. The value is read as a TOML
    /// literal when it parses as one, otherwise as a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let Some((key, raw)) = assignment.split_once('=') else {
            bail!(UsageError(format!("override `{assignment}` is not of the form key=value")));
        };
        let value = parse_value(raw.trim());
        self.set_value(key.trim(), value)
    }

    pub fn set_value(&mut self, key: &str, value: Value) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
            bail!(UsageError(format!("override key `{key}` must be dotted, e.g. train.epochs")));
        }
        if parts[0] == "model" && !self.model_keys.iter().any(|k| k == parts[1]) {
            self.model_keys.push(parts[1].to_string());
        }
        let mut table = &mut self.table;
        for p in &parts[..parts.len() - 1] {
            let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
            table = match entry {
                Value::Table(t) => t,
                _ => bail!(UsageError(format!("override key `{key}`: `{p}` is not a table"))),
            };
        }
        table.insert(parts[parts.len() - 1].to_string(), value);
        Ok(())
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let cfg: RunConfig = Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| UsageError(format!("invalid configuration: {e}")))?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        cfg.synth.validate()?;
        Ok(cfg)
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Writes the configuration next to the run's other outputs.
    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(EFFECTIVE_CONFIG), self.to_toml())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides_apply() {
        let mut t = ConfigTree::default();
        t.set("train.epochs=7").unwrap();
        t.set("model.pattern=fa").unwrap();
        let c = t.resolve().unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.model.pattern, fulltransnet::attention::PatternKind::Full);
        assert_eq!(t.model_keys, vec!["pattern".to_string()]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut t = ConfigTree::default();
        t.set("train.epoch=7").unwrap();
        assert!(t.resolve().is_err());
        let mut t = ConfigTree::default();
        t.set("optimizer.lr=1").unwrap();
        assert!(t.resolve().is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
