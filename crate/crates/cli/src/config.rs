//! Flag and config-file resolution.
//!
//! A config file is TOML with one table per subcommand, whose keys are the
//! long flag names of that subcommand:
//!
//! ```toml
//! [audit]
//! alpha = 2.0
//! claim = "rdp:2,10"
//! ```
//!
//! Flags given on the command line override the file.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "RDP_AUDIT_CONFIG";

pub fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

/// Reads the table for `section` from the config file, if any.
pub fn load_section(path: Option<&Path>, section: &str) -> Result<Map<String, Value>, CliError> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
    let mut picked = Map::new();
    for (key, value) in table {
        match value {
            toml::Value::Table(t) if key == section => {
                let json = serde_json::to_value(t).map_err(|e| CliError::Usage(e.to_string()))?;
                if let Value::Object(m) = json {
                    picked = m;
                }
            }
            toml::Value::Table(_) => {}
            _ => {
                return Err(CliError::Usage(format!(
                    "config file {}: top-level key `{key}` must be inside a [subcommand] table",
                    path.display()
                )))
            }
        }
    }
    Ok(picked)
}

fn non_null(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Merges file values under flag values and returns the resolved arguments
/// together with their JSON form (logged and embedded in reports).
pub fn resolve<T>(flags: &T, file: Map<String, Value>, section: &str) -> Result<(T, Value), CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let known = match serde_json::to_value(T::default()).map_err(|e| CliError::Usage(e.to_string()))? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    let mut merged = Map::new();
    for (key, value) in file {
        if !known.contains_key(&key) {
            return Err(CliError::Usage(format!(
                "unknown key `{key}` in [{section}] of the config file"
            )));
        }
        merged.insert(key, value);
    }
    let given = non_null(serde_json::to_value(flags).map_err(|e| CliError::Usage(e.to_string()))?);
    for (key, value) in given {
        if let Some(old) = merged.get(&key) {
            if *old != value {
                eprintln!("note: --{key} = {value} overrides the config file value {old}");
            }
        }
        merged.insert(key, value);
    }
    let merged = Value::Object(merged);
    let resolved: T =
        serde_json::from_value(merged.clone()).map_err(|e| CliError::Usage(format!("config file [{section}]: {e}")))?;
    let canonical = Value::Object(non_null(
        serde_json::to_value(&resolved).map_err(|e| CliError::Usage(e.to_string()))?,
    ));
    eprintln!("resolved configuration: {canonical}");
    Ok((resolved, canonical))
}
