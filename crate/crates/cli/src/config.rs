//! Flat `key = value` run configuration.
//!
//! A config file is a TOML document without tables. Command-line flags
//! override file entries. The merged settings, printed in key order, are
//! what every output header echoes and hashes.

use anyhow::{anyhow, bail, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow!(crate::UsageError(format!("reading config {}: {e}", path.display()))))?;
        Settings::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text)
            .map_err(|e| anyhow!(crate::UsageError(format!("parsing config: {e}"))))?;
        let mut values = BTreeMap::new();
        for (k, v) in table {
            let s = match v {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                toml::Value::Array(items) => items
                    .iter()
                    .map(|i| match i {
                        toml::Value::String(s) => Ok(s.clone()),
                        toml::Value::Integer(n) => Ok(n.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        other => Err(anyhow!(crate::UsageError(format!("unsupported list item {other} for `{k}`")))),
                    })
                    .collect::<Result<Vec<_>>>()?
                    .join(","),
                other => bail!(crate::UsageError(format!("config key `{k}` must be a scalar or list, got {other}"))),
            };
            values.insert(k, s);
        }
        Ok(Settings { values })
    }

    /// Records a flag value when given.
    pub fn set<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    /// Fills `key` only if neither the file nor a flag set it.
    pub fn default<T: Display>(&mut self, key: &str, value: T) {
        self.values
            .entry(key.to_string())
            .or_insert_with(|| value.to_string());
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!(crate::UsageError(format!("bad value `{v}` for `{key}`: {e}"))))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| anyhow!(crate::UsageError(format!("missing setting `{key}`"))))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let raw: String = self.require(key)?;
        raw.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| anyhow!(crate::UsageError(format!("bad list item `{s}` in `{key}`: {e}"))))
            })
            .collect()
    }

    /// `key=value` lines in key order.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`Settings::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut s = Settings::parse("m = 2\nt2_us = 300.0\npreset = \"siv29\"\ngrid = [1, 2]\n").unwrap();
        assert_eq!(s.require::<usize>("m").unwrap(), 2);
        assert_eq!(s.list::<f64>("grid").unwrap(), vec![1.0, 2.0]);
        s.set("m", Some(3));
        s.default("m", 9);
        s.default("n", 1);
        assert_eq!(s.require::<usize>("m").unwrap(), 3);
        assert_eq!(s.require::<usize>("n").unwrap(), 1);
    }

    #[test]
    fn nested_tables_rejected() {
        assert!(Settings::parse("[a]\nb = 1\n").is_err());
    }

    #[test]
    fn hash_depends_on_content_only() {
        let a = Settings::parse("x = 1\ny = 2\n").unwrap();
        let b = Settings::parse("y = 2\nx = 1\n").unwrap();
        let c = Settings::parse("x = 1\ny = 3\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
