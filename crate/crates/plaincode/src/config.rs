//! Pipeline configuration, read from a TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plaincode_core::analyzer::SelectionCriteria;
use plaincode_core::recorder::RecorderConfig;
use plaincode_core::testgen::TestGenOptions;
use plaincode_core::trace::{standard_charsets, FieldValueAdapter};
use plaincode_core::{ActionKind, CostTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", default, deny_unknown_fields)]
pub struct AdapterConfig {
    /// Registers the `StandardCharsets` adapters.
    pub standard_charsets: bool,
    pub field_value: Vec<FieldValueAdapter>,
}

impl AdapterConfig {
    pub fn adapters(&self) -> Vec<FieldValueAdapter> {
        let mut out = if self.standard_charsets { standard_charsets() } else { Vec::new() };
        out.extend(self.field_value.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", default, deny_unknown_fields)]
pub struct Config {
    /// Application source files, relative to the config file.
    pub sources: Vec<PathBuf>,
    /// Static method launched by `record`, as `Class.method`.
    pub entry: String,
    /// Explicit serialization points; when empty they are selected by `selection`.
    pub points: Vec<String>,
    /// Extra types to trace besides the closure of the points.
    pub trace_types: Vec<String>,
    pub selection: SelectionCriteria,
    /// Cost overrides merged onto the default table.
    pub costs: BTreeMap<ActionKind, u32>,
    pub bounds: RecorderConfig,
    pub emit: TestGenOptions,
    pub adapters: AdapterConfig,
    /// Directory the relative `sources` are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            sources: Vec::new(),
            entry: "Main.main".into(),
            points: Vec::new(),
            trace_types: Vec::new(),
            selection: SelectionCriteria::default(),
            costs: BTreeMap::new(),
            bounds: RecorderConfig::default(),
            emit: TestGenOptions::default(),
            adapters: AdapterConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Config, ConfigError> {
        let mut cfg: Config =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Config::parse(&text, path)
    }

    pub fn cost_table(&self) -> CostTable {
        let mut table = CostTable::default();
        table.0.extend(self.costs.iter().map(|(k, v)| (*k, *v)));
        table
    }

    pub fn source_paths(&self) -> Vec<PathBuf> {
        self.sources.iter().map(|s| self.base_dir.join(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply_to_missing_keys() {
        let cfg = Config::parse("sources = [\"zoo.mj\"]\n", Path::new("/tmp/app/plaincode.toml")).unwrap();
        assert_eq!(cfg.entry, "Main.main");
        assert_eq!(cfg.bounds.max_sequence_length, 25);
        assert_eq!(cfg.selection, SelectionCriteria::default());
        assert_eq!(cfg.source_paths(), vec![PathBuf::from("/tmp/app/zoo.mj")]);
        assert_eq!(cfg.cost_table(), CostTable::default());
    }

    #[test]
    fn sections_override_defaults() {
        let text = r#"
            points = ["Habitat.grow"]
            [costs]
            callConstructor = 7
            [bounds]
            maxSequenceLength = 10
            [selection]
            minStatements = 0
            [emit]
            outlineThreshold = 3
            [adapters]
            standard_charsets = true
            [[adapters.field_value]]
            typeName = "Color"
            field = "name"
            value = "red"
            owner = "Colors"
            member = "RED"
        "#;
        let cfg = Config::parse(text, Path::new("c.toml")).unwrap();
        assert_eq!(cfg.cost_table().get(ActionKind::CallConstructor), Some(7));
        assert_eq!(cfg.cost_table().get(ActionKind::AssignField), Some(5));
        assert_eq!(cfg.bounds.max_sequence_length, 10);
        assert_eq!(cfg.bounds.max_depth, 8);
        assert_eq!(cfg.selection.min_statements, 0);
        assert!(cfg.selection.require_public);
        assert_eq!(cfg.emit.outline_threshold, 3);
        assert!(cfg.emit.inline);
        assert_eq!(cfg.adapters.adapters().len(), 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::parse("colour = 1\n", Path::new("c.toml")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }
}
