use std::path::Path;

use ltcs::world::WorldConfig;
use ltcs::{LtcsConfig, LtcsError, Precision, Result, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a command can be configured with. Files may set any subset of
/// keys; the rest come from the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub model: LtcsConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let model = LtcsConfig::preset(name)?;
        let train = if name == "desk" { TrainConfig::desk() } else { TrainConfig::default() };
        Ok(RunConfig { world: WorldConfig::default(), model, train })
    }

    /// Preset values overlaid with the file at `path`.
    ///
    /// The file is TOML with optional `[world]`, `[model]` and `[train]`
    /// tables. A run manifest (JSON with a `config` object) is accepted too,
    /// so any run can be repeated from its manifest.
    pub fn load(preset: &str, path: Option<&Path>) -> Result<Self> {
        let base = RunConfig::preset(preset)?;
        let Some(path) = path else { return Ok(base) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| LtcsError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let overlay = parse_overlay(&text, path)?;
        let mut merged = toml::Value::try_from(&base).map_err(|e| LtcsError::Config(e.to_string()))?;
        merge(&mut merged, overlay);
        merged
            .try_into()
            .map_err(|e: toml::de::Error| LtcsError::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Applies `--seed` to every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.world.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
    }

    pub fn set_precision(&mut self, precision: Precision) {
        self.model.precision = precision;
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(LtcsError::Config(format!("--alpha must lie in [0, 1], got {alpha}")));
        }
        self.train.alpha = alpha;
        self.model.alpha = alpha;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

fn parse_overlay(text: &str, path: &Path) -> Result<toml::Value> {
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| LtcsError::Config(format!("{}: line {}: {e}", path.display(), e.line())))?;
        let config = json
            .get("config")
            .cloned()
            .ok_or_else(|| LtcsError::Config(format!("{}: JSON config must be a run manifest", path.display())))?;
        return toml::Value::try_from(config).map_err(|e| LtcsError::Config(format!("{}: {e}", path.display())));
    }
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let at = e.span().map(|s| format!(" at line {}", line_of(text, s.start))).unwrap_or_default();
        LtcsError::Config(format!("{}{at}: {}", path.display(), e.message()))
    })?;
    Ok(toml::Value::Table(table))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Recursively replaces entries of `base` with those of `overlay`. Unknown
/// keys are kept so that deserialization reports them by name.
fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str, name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn partial_file_overrides_preset() {
        let (_d, p) = write("[world]\nnum_queries = 7\n[train]\nepochs = 1\n", "c.toml");
        let c = RunConfig::load("desk", Some(&p)).unwrap();
        assert_eq!(c.world.num_queries, 7);
        assert_eq!(c.train.epochs, 1);
        assert_eq!(c.model, LtcsConfig::desk());
    }

    #[test]
    fn unknown_field_is_named() {
        let (_d, p) = write("[world]\nnum_querys = 7\n", "c.toml");
        let msg = RunConfig::load("desk", Some(&p)).unwrap_err().to_string();
        assert!(msg.contains("num_querys"), "{msg}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let (_d, p) = write("[world]\nnum_queries = 7\nseed = = 3\n", "c.toml");
        let msg = RunConfig::load("desk", Some(&p)).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }
}
