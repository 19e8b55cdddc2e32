//! Settings resolution: command-line flags override the config file, which
//! overrides the library defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Layered settings built from an optional JSON object file plus flag
/// overrides, deserialized into the target type at the end.
#[derive(Clone)]
pub struct Layered {
    fields: Map<String, Value>,
}

impl Layered {
    pub fn from_file(path: Option<&Path>) -> CliResult<Self> {
        let fields = match path {
            None => Map::new(),
            Some(path) => match conceptkit::io::read_json::<Value>(path)? {
                Value::Object(fields) => fields,
                _ => return Err(CliError::usage(format!("{}: config must be a JSON object", path.display()))),
            },
        };
        Ok(Self { fields })
    }

    /// Sets `key` when the flag was given.
    pub fn set<V: Into<Value>>(&mut self, key: &str, flag: Option<V>) -> &mut Self {
        if let Some(v) = flag {
            self.fields.insert(key.to_string(), v.into());
        }
        self
    }

    /// Sets `key` to `value` unless already present.
    pub fn or_default<V: Into<Value>>(&mut self, key: &str, value: V) -> &mut Self {
        self.fields.entry(key.to_string()).or_insert_with(|| value.into());
        self
    }

    pub fn contains(&self, key: &str) -> bool {
        self.fields.contains_key(key)
    }

    pub fn require(&self, keys: &[&str]) -> CliResult<()> {
        match keys.iter().find(|k| !self.contains(k)) {
            Some(k) => Err(CliError::usage(format!("missing setting '{k}': pass --{k} or set it in the config file"))),
            None => Ok(()),
        }
    }

    pub fn build<T: DeserializeOwned>(self) -> CliResult<T> {
        serde_json::from_value(Value::Object(self.fields))
            .map_err(|e| CliError::usage(format!("invalid settings: {e}")))
    }
}
