//! Flat key=value configuration. A flag given on the command line wins over
//! the same key in the config file, which wins over the built-in default.
//! Every resolved value is recorded for the run manifest.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub struct Settings {
    file: BTreeMap<String, String>,
    source: Option<PathBuf>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                argrl::io::parse_metadata(&text)
                    .with_context(|| format!("malformed config file {}", p.display()))?
            }
            None => BTreeMap::new(),
        };
        Ok(Settings {
            file,
            source: path.map(Path::to_path_buf),
            resolved: BTreeMap::new(),
        })
    }

    fn from_file<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                anyhow::anyhow!("config key {key}: cannot parse {raw:?}: {e}")
            }),
        }
    }

    /// Value for `key`: flag, then config file, then `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// As [`Settings::get`] for keys without a default.
    pub fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        } else {
            self.resolved.insert(key.to_string(), "none".into());
        }
        Ok(v)
    }

    /// Path list: flags if any were given, else a comma-separated config value.
    pub fn paths(&mut self, key: &str, flags: Vec<PathBuf>) -> Vec<PathBuf> {
        let paths = if flags.is_empty() {
            self.file
                .get(key)
                .map(|v| {
                    v.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(PathBuf::from)
                        .collect()
                })
                .unwrap_or_default()
        } else {
            flags
        };
        let joined: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        self.resolved.insert(key.to_string(), joined.join(","));
        paths
    }

    /// Resolved settings; fails on config keys the subcommand does not know.
    pub fn finish(self, command: &str) -> Result<BTreeMap<String, String>> {
        if let Some(unknown) = self.file.keys().find(|k| !self.resolved.contains_key(*k)) {
            bail!(
                "unknown config key {unknown:?} for subcommand {command} in {}",
                self.source
                    .as_deref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            );
        }
        Ok(self.resolved)
    }
}
