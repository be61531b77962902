//! Layered configuration: defaults, then a JSON file, then `--set` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sqhhg::ensemble::{RunConfig, SweepAxis};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Also run the classical benchmark at every point.
    pub include_benchmark: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { axis: SweepAxis::R, values: vec![0.5, 1.0, 1.5, 2.0, 2.5], include_benchmark: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsSpec {
    pub r_values: Vec<f64>,
    pub trajectory_points: usize,
}

impl Default for AnalyticsSpec {
    fn default() -> Self {
        Self { r_values: (0..=30).map(|i| i as f64 / 10.0).collect(), trajectory_points: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub run: RunConfig,
    pub sweep: SweepSpec,
    pub analytics: AnalyticsSpec,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        // a tagged variant switch replaces the whole table
        (Value::Object(b), Value::Object(o)) if o.get("mode").is_some_and(|m| b.get("mode") != Some(m)) => {
            *b = o;
        }
        (Value::Object(b), Value::Object(o)) => {
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

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a string.
fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("override key `{key}` has an empty segment")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override key `{key}`: `{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one segment")
}

/// Builds the effective configuration.
pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<CliConfig, CliError> {
    let mut root = serde_json::to_value(CliConfig::default()).expect("defaults serialize");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(CliError::Config(format!("{}: top level must be an object", path.display())));
        }
        merge(&mut root, file);
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    if let Some(seed) = seed {
        apply_override(&mut root, &format!("run.master_seed={seed}"))?;
    }
    let config: CliConfig = serde_path_to_error::deserialize(root)
        .map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
    config.run.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = load(None, &[], None).unwrap();
        assert_eq!(c, CliConfig::default());
    }

    #[test]
    fn overrides_and_seed() {
        let c = load(None, &["run.squeeze.r=1.5".into(), "run.driver_kind=\"coherent\"".into()], Some(9)).unwrap();
        assert_eq!(c.run.squeeze.r, 1.5);
        assert_eq!(c.run.master_seed, 9);
        let c = load(None, &["run.driver_kind=classical_benchmark".into()], None).unwrap();
        assert_eq!(c.run.driver_kind, sqhhg::ensemble::DriverKind::ClassicalBenchmark);
    }

    #[test]
    fn bad_key_is_named() {
        let err = load(None, &["run.squeeze.rr=1".into()], None).unwrap_err().to_string();
        assert!(err.contains("run.squeeze"), "{err}");
        let err = load(None, &["run.n_shot=\"many\"".into()], None).unwrap_err().to_string();
        assert!(err.contains("run.n_shot"), "{err}");
    }

    #[test]
    fn mode_volume_variant_switch() {
        let c = load(None, &["run.mode_volume={\"mode\":\"explicit_amplitude\",\"e_vac_au\":1e-4}".into()], None).unwrap();
        assert_eq!(c.run.mode_volume, sqhhg::fieldgen::ModeVolumeSpec::ExplicitAmplitude { e_vac_au: 1e-4 });
        assert!(load(None, &["run.mode_volume.bogus=1".into()], None).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(load(None, &["run.n_shot=0".into()], None).is_err());
        assert!(load(None, &["novalue".into()], None).is_err());
    }
}
