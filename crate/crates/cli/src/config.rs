//! Keyed TOML configuration: one table per stage, each overlaid on that
//! stage's defaults. Command-line flags are applied after the file.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SECTIONS: [&str; 8] = [
    "synth",
    "ingest",
    "fit",
    "pipeline",
    "thresholds",
    "benchmark",
    "shift",
    "repeat",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    tables: Map<String, Value>,
    origin: String,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let doc: toml::Table = toml::from_str(text).map_err(|e| anyhow!("config {origin}: {e}"))?;
        let mut tables = Map::new();
        for (k, v) in doc {
            if !SECTIONS.contains(&k.as_str()) {
                bail!(
                    "config {origin}: unknown section [{k}] (expected one of {})",
                    SECTIONS.join(", ")
                );
            }
            if !v.is_table() {
                bail!("config {origin}: `{k}` must be a [section]");
            }
            tables.insert(k, serde_json::to_value(v)?);
        }
        Ok(Self {
            tables,
            origin: origin.to_string(),
        })
    }

    /// `base` with the keys of `[name]` overlaid.
    pub fn section<T: Serialize + DeserializeOwned>(&self, name: &str, base: T) -> Result<T> {
        let Some(patch) = self.tables.get(name) else {
            return Ok(base);
        };
        let mut merged = serde_json::to_value(&base)?;
        overlay(&mut merged, patch, name).map_err(|e| anyhow!("config {}: {e}", self.origin))?;
        serde_json::from_value(merged).map_err(|e| anyhow!("config {}: in [{name}]: {e}", self.origin))
    }

    /// The raw tables, for the run manifest.
    pub fn raw(&self) -> Value {
        Value::Object(self.tables.clone())
    }
}

fn overlay(base: &mut Value, patch: &Value, path: &str) -> Result<(), String> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = format!("{path}.{k}");
                match b.get_mut(k) {
                    // tagged enums are replaced whole so variant fields are not rejected
                    Some(slot) if slot.is_object() && v.get("kind").is_some() => *slot = v.clone(),
                    Some(slot) => overlay(slot, v, &here)?,
                    None => return Err(format!("unknown field `{here}`")),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v.clone();
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use iri_edge_core::road_synth::SynthConfig;
    use iri_edge_core::tree_ensemble::{FitConfig, SplitMode};

    #[test]
    fn overlays_known_keys() {
        let c = FileConfig::parse("[synth]\nroute_len_mi = 2.5\ngd_n0 = 3e-6\n", "t").unwrap();
        let s = c.section("synth", SynthConfig::default()).unwrap();
        assert_eq!(s.route_len_mi, 2.5);
        assert_eq!(s.gd_n0, Some(3e-6));
        assert_eq!(s.fs, 365.0);
    }

    #[test]
    fn tagged_enum_replaced() {
        let c = FileConfig::parse("[fit]\nsplit_mode = { kind = \"histogram\", max_bins = 64 }\n", "t").unwrap();
        let f = c.section("fit", FitConfig::boosted()).unwrap();
        assert_eq!(f.split_mode, SplitMode::Histogram { max_bins: 64 });
    }

    #[test]
    fn diagnostics_name_the_problem() {
        let e = FileConfig::parse("[synth]\nroute_len = 2\n", "cfg.toml")
            .unwrap()
            .section("synth", SynthConfig::default())
            .unwrap_err();
        assert!(e.to_string().contains("synth.route_len"), "{e}");
        let e = FileConfig::parse("[synth]\nroute_len_mi = \"x\"\n", "cfg.toml")
            .unwrap()
            .section("synth", SynthConfig::default())
            .unwrap_err();
        assert!(e.to_string().contains("[synth]"), "{e}");
        let e = FileConfig::parse("[synth]\nroute_len_mi = \n", "cfg.toml").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(FileConfig::parse("[nope]\n", "t").is_err());
    }
}
