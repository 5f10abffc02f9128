//! Layered configuration: defaults, then a JSON file, then `OTCD_` variables.
//!
//! A variable `OTCD_PCOT__MAX_LEVEL=2` sets `pcot.max_level`; nested keys are
//! separated by a double underscore. Values are read as JSON when they parse,
//! otherwise as strings.

use std::path::Path;

use anyhow::{bail, Context, Result};
use otcd_core::experiment::MethodConfig;
use serde_json::{Map, Value};

pub const ENV_PREFIX: &str = "OTCD_";

/// Variables consumed as global flags rather than config keys.
const RESERVED: &[&str] = &["SEED", "WORKERS", "CONFIG"];

fn merge(base: &mut Value, over: Value, path: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => bail!("unknown config key {here:?}"),
                }
            }
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

fn nest(keys: &[String], value: Value) -> Value {
    keys.iter().rev().fold(value, |acc, k| {
        let mut m = Map::new();
        m.insert(k.clone(), acc);
        Value::Object(m)
    })
}

pub fn load(file: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<MethodConfig> {
    let mut value = serde_json::to_value(MethodConfig::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let over: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merge(&mut value, over, "").with_context(|| format!("in config {}", path.display()))?;
    }
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (k, raw) in vars {
        let key = &k[ENV_PREFIX.len()..];
        if RESERVED.contains(&key) {
            continue;
        }
        let keys: Vec<String> = key.split("__").map(str::to_ascii_lowercase).collect();
        let v = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
        merge(&mut value, nest(&keys, v), "").with_context(|| format!("in environment variable {k}"))?;
    }
    serde_json::from_value(value).context("invalid configuration")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn env_overrides_nested_keys() {
        let c = load(
            None,
            env(&[("OTCD_PCOT__MAX_LEVEL", "1"), ("OTCD_PCOT__DELTA", "3.5"), ("OTCD_SEED", "4"), ("HOME", "/")]),
        )
        .unwrap();
        assert_eq!(c.pcot.max_level, Some(1));
        assert_eq!(c.pcot.delta, 3.5);
    }

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"ci": {"delta": 5}, "gamma": [1, 2]}"#).unwrap();
        let c = load(Some(&p), env(&[("OTCD_CI__DELTA", "6")])).unwrap();
        assert_eq!((c.ci.delta, c.gamma.clone()), (6.0, vec![1.0, 2.0]));
        std::fs::write(&p, r#"{"ci": {"dleta": 5}}"#).unwrap();
        let e = format!("{:#}", load(Some(&p), env(&[])).unwrap_err());
        assert!(e.contains("ci.dleta"), "{e}");
        assert!(load(None, env(&[("OTCD_NOPE", "1")])).is_err());
    }
}
