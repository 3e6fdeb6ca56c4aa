//! `section.key = value` text files: `#` starts a comment line, blank lines are
//! ignored, every key may appear once, and every key must be consumed.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
    used: Cell<bool>,
}

#[derive(Debug)]
pub(crate) struct KvFile {
    path: PathBuf,
    entries: BTreeMap<String, Entry>,
}

impl KvFile {
    pub(crate) fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |key: &str, detail: &str| Error::Setting {
                path: path.into(),
                line: i + 1,
                key: key.into(),
                detail: detail.into(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err(line, "expected `key = value`"))?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(err(key, "malformed key"));
            }
            let entry = Entry { value: v.trim().to_string(), line: i + 1, used: Cell::new(false) };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(err(key, "duplicate key"));
            }
        }
        Ok(KvFile { path: path.into(), entries })
    }

    pub(crate) fn error(&self, key: &str, detail: impl Into<String>) -> Error {
        Error::Setting {
            path: self.path.clone(),
            line: self.entries.get(key).map_or(0, |e| e.line),
            key: key.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| {
            e.used.set(true);
            e.value.as_str()
        })
    }

    pub(crate) fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub(crate) fn parse_opt<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| self.error(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    pub(crate) fn parse_or<V: FromStr>(&self, key: &str, default: V) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    pub(crate) fn require<V: FromStr>(&self, key: &str) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        self.parse_opt(key)?.ok_or_else(|| self.error(key, "missing required key"))
    }

    /// Comma-separated list.
    pub(crate) fn list_opt<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| self.error(key, format!("cannot parse `{s}`: {e}"))))
                .collect::<Result<Vec<V>>>()
                .map(Some),
        }
    }

    /// Errors on the first key nobody asked for.
    pub(crate) fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used.get()) {
            Some((k, _)) => Err(self.error(k, "unknown key")),
            None => Ok(()),
        }
    }
}
