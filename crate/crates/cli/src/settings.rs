//! Flag / config-file / default merging.
//!
//! A config file is flat `key = value` text using the long flag names as
//! keys. `#` starts a comment line. Flags override the file, the file
//! overrides built-in defaults, and keys the subcommand does not know are
//! rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

/// A configuration problem detected before any work starts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

/// Known key and its default; `None` marks a required key.
pub type Key = (&'static str, Option<&'static str>);

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    command: &'static str,
    values: BTreeMap<String, String>,
}

pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`", n + 1)))?;
        let k = k.trim().replace('_', "-");
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(usage(format!("config line {}: `{k}` given twice", n + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    pub fn resolve(
        command: &'static str,
        keys: &[Key],
        config: Option<&Path>,
        flags: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self> {
        let mut values: BTreeMap<String, String> = keys
            .iter()
            .filter_map(|(k, d)| d.map(|d| (k.to_string(), d.to_string())))
            .collect();
        if let Some(path) = config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_config_file(&text)? {
                if !keys.iter().any(|(known, _)| *known == k) {
                    return Err(usage(format!(
                        "unknown key `{k}` in {} for `{command}`",
                        path.display()
                    )));
                }
                values.insert(k, v);
            }
        }
        for (k, v) in flags {
            debug_assert!(
                keys.iter().any(|(known, _)| *known == k),
                "flag {k} not declared"
            );
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        for (k, _) in keys {
            if !values.contains_key(*k) {
                return Err(usage(format!("`--{k}` is required")));
            }
        }
        Ok(Self { command, values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| usage(format!("invalid value `{raw}` for `{key}`: {e}")))
    }

    /// `None` for an empty value.
    pub fn optional(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    pub fn list<T>(&self, key: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(|part| {
                part.trim()
                    .parse()
                    .map_err(|e| usage(format!("invalid element `{part}` in `{key}`: {e}")))
            })
            .collect()
    }

    pub fn fractions(&self, key: &str) -> Result<(f64, f64, f64)> {
        match self.list::<f64>(key)?[..] {
            [a, b, c] if [a, b, c].iter().all(|f| *f > 0.0) && (a + b + c - 1.0).abs() <= 1e-9 => {
                Ok((a, b, c))
            }
            _ => Err(usage(format!(
                "`{key}` needs three positive comma-separated fractions summing to 1"
            ))),
        }
    }

    pub fn map(&self) -> BTreeMap<String, String> {
        let mut m = self.values.clone();
        m.insert("command".into(), self.command.into());
        m
    }

    /// `# key=value` provenance lines, ending in a newline.
    pub fn header(&self) -> String {
        self.map()
            .iter()
            .map(|(k, v)| format!("# {k}={v}\n"))
            .collect()
    }
}

/// A usage error for values that parse but do not make sense together.
pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    usage(msg.into())
}
