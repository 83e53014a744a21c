//! Plain-text `key = value` configuration files.
//!
//! UTF-8 lines, one `key = value` per line, `#` starts a comment, blank lines
//! ignored. Values are scalars (`3.5`), integers (`42`), booleans
//! (`true`/`false`), 2-D points (`1.2, 3.4`), or comma-separated lists.

use crate::error::{Error, Result};
use crate::geometry::Point2;
use std::collections::BTreeMap;
use std::path::Path;

/// Parsed key-value file with typed accessors. Tracks which keys were read so
/// callers can reject unknown keys.
#[derive(Debug, Clone)]
pub struct KeyValueFile {
    entries: BTreeMap<String, (String, usize)>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValueFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.contains_key(&key) {
                return Err(Error::config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            entries.insert(key, (value.trim().to_string(), lineno + 1));
        }
        Ok(KeyValueFile {
            entries,
            consumed: Default::default(),
        })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Inserts or replaces a value (used for CLI flag overrides).
    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), (value, 0));
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not a number")))
            })
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn f64_required(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| Error::config(format!("missing required key `{key}`")))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not an integer")))
            })
            .transpose()
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.u64(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64(key)?.map(|v| v as usize).unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        self.raw(key)
            .map(|v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(Error::config(format!(
                    "key `{key}`: `{other}` is not a boolean"
                ))),
            })
            .transpose()
            .map(|o| o.unwrap_or(default))
    }

    pub fn point(&self, key: &str) -> Result<Option<Point2>> {
        self.raw(key)
            .map(|v| {
                let (x, y) = v.split_once(',').ok_or_else(|| {
                    Error::config(format!("key `{key}`: expected `x, y`, got `{v}`"))
                })?;
                let parse = |s: &str| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::config(format!("key `{key}`: `{s}` is not a number"))
                    })
                };
                Ok(Point2::new(parse(x)?, parse(y)?))
            })
            .transpose()
    }

    pub fn point_required(&self, key: &str) -> Result<Point2> {
        self.point(key)?
            .ok_or_else(|| Error::config(format!("missing required key `{key}`")))
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        self.raw(key).map(|v| v.to_string())
    }

    pub fn str_list(&self, key: &str) -> Result<Option<Vec<String>>> {
        Ok(self.raw(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        }))
    }

    pub fn u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<u64>().map_err(|_| {
                            Error::config(format!("key `{key}`: `{s}` is not an integer"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// Fails if any key in the file was never consumed by an accessor.
    pub fn reject_unknown_keys(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for (key, (_, lineno)) in &self.entries {
            if !consumed.contains(key) {
                return Err(Error::config(format!(
                    "line {lineno}: unknown key `{key}`"
                )));
            }
        }
        Ok(())
    }

    /// All entries as strings, for manifest echoing.
    pub fn entries(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, (v, _))| (k.clone(), v.clone()))
            .collect()
    }
}
