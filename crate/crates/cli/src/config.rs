//! Layered configuration: defaults, then the `--config` file, then flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Top-level config document. Sections hold any subset of the fields of
/// the matching training config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub predictor: Option<Map<String, Value>>,
    pub explainer: Option<Map<String, Value>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Overlays `section` on `defaults`, rejecting keys the type does not have.
pub fn overlay<T: Serialize + DeserializeOwned>(defaults: &T, section: Option<&Map<String, Value>>, name: &str) -> CliResult<T> {
    let mut base = match serde_json::to_value(defaults).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("configs are structs"),
    };
    if let Some(section) = section {
        for (k, v) in section {
            if !base.contains_key(k) {
                return Err(CliError::Usage(format!("unknown key {k:?} in config section {name:?}")));
            }
            base.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(Value::Object(base))
        .map_err(|e| CliError::Usage(format!("config section {name:?}: {e}")))
}

/// `--threads`, then `FEX_THREADS`, then the config file; `None` means all cores.
pub fn resolve_threads(flag: Option<usize>, file: &ConfigFile) -> CliResult<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(v) = std::env::var("FEX_THREADS") {
        let n = v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("FEX_THREADS must be a positive integer, got {v:?}")))?;
        return Ok(Some(n));
    }
    Ok(file.threads)
}

pub fn resolve_seed(flag: Option<u64>, file: &ConfigFile) -> u64 {
    flag.or(file.seed).unwrap_or(0)
}
