//! JSON configuration files: a flat object whose keys mirror the long flag
//! names (dashes become underscores). Explicit flags override config values;
//! config values override built-in defaults. Unknown keys are rejected so
//! typos cannot silently fall back to defaults.

use crate::{CliError, CliResult};
use serde_json::Value;
use std::path::Path;

/// Every key any subcommand understands. A key only takes effect for the
/// subcommand that reads it; listing them all here keeps validation simple.
const KNOWN_KEYS: &[&str] = &[
    // globals
    "r", "seed", "out", "format", "tau_max", "threads",
    // table / orbit / lyapunov / invariance
    "cutoff", "steps", "s0", "phi0", "samples",
    // cells
    "anchor", "orientation", "n_lo", "n_hi", "width", "height", "min_pixels", "points", "m", "n",
    "c_lo", "c_hi", "c_step", "probe", "holdout",
    // chains
    "ladder_c", "n0", "depth", "a", "c_bar", "window_c", "n_start", "state_cap", "checkpoints",
    "len", "start_cap", "emit_path",
    // shadow / report
    "tol", "tie", "count", "sym_lo", "sym_hi", "words", "quick",
];

pub struct Cfg {
    map: serde_json::Map<String, Value>,
}

impl Cfg {
    pub fn load(path: Option<&Path>) -> CliResult<Cfg> {
        let Some(path) = path else {
            return Ok(Cfg {
                map: serde_json::Map::new(),
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(map) = value else {
            return Err(CliError::Usage(format!(
                "config {} must be a JSON object of flag keys",
                path.display()
            )));
        };
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config {}: unknown key \"{key}\"",
                    path.display()
                )));
            }
        }
        Ok(Cfg { map })
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.map.get(key)
    }

    fn type_err<T>(key: &str, want: &str, got: &Value) -> CliResult<T> {
        Err(CliError::Usage(format!(
            "config key \"{key}\" must be {want}, got {got}"
        )))
    }

    pub fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => match v.as_f64() {
                Some(x) => Ok(Some(x)),
                None => Self::type_err(key, "a number", v),
            },
        }
    }

    pub fn u64(&self, key: &str) -> CliResult<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => match v.as_u64() {
                Some(x) => Ok(Some(x)),
                None => Self::type_err(key, "a nonnegative integer", v),
            },
        }
    }

    pub fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        Ok(self.u64(key)?.map(|x| x as usize))
    }

    pub fn u32(&self, key: &str) -> CliResult<Option<u32>> {
        match self.u64(key)? {
            None => Ok(None),
            Some(x) => u32::try_from(x)
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key \"{key}\" out of range: {x}"))),
        }
    }

    pub fn bool(&self, key: &str) -> CliResult<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => match v.as_bool() {
                Some(x) => Ok(Some(x)),
                None => Self::type_err(key, "a boolean", v),
            },
        }
    }

    pub fn string(&self, key: &str) -> CliResult<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                Some(x) => Ok(Some(x.to_string())),
                None => Self::type_err(key, "a string", v),
            },
        }
    }

    pub fn u64_list(&self, key: &str) -> CliResult<Option<Vec<u64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item.as_u64() {
                        Some(x) => out.push(x),
                        None => return Self::type_err(key, "an array of nonnegative integers", item),
                    }
                }
                Ok(Some(out))
            }
            Some(v) => Self::type_err(key, "an array of nonnegative integers", v),
        }
    }

    /// An array of symbol words, each an array of nonnegative integers.
    pub fn words(&self, key: &str) -> CliResult<Option<Vec<Vec<u64>>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Value::Array(syms) => {
                            let mut word = Vec::with_capacity(syms.len());
                            for s in syms {
                                match s.as_u64() {
                                    Some(x) => word.push(x),
                                    None => {
                                        return Self::type_err(
                                            key,
                                            "an array of integer arrays",
                                            s,
                                        )
                                    }
                                }
                            }
                            out.push(word);
                        }
                        other => return Self::type_err(key, "an array of integer arrays", other),
                    }
                }
                Ok(Some(out))
            }
            Some(v) => Self::type_err(key, "an array of integer arrays", v),
        }
    }
}
