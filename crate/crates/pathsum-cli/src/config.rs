//! Plain-text scenario configuration.
//!
//! ```text
//! # global keys apply to every scenario
//! seed = 3
//!
//! [bloch-siegert]
//! beta = 0.5
//! orders = 3, 7, 13
//! ```
//!
//! A scenario sees the global keys overridden by its own section; sections of
//! other scenarios are ignored.  A key in a scenario's own section that it
//! does not read is reported as unknown, with its line.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{source_name}:{line}: {msg}")]
    Syntax { source_name: String, line: usize, msg: String },
    #[error("{origin}: key `{key}`: {msg}")]
    Value { origin: String, key: String, msg: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// 0 for values given on the command line.
    line: usize,
    /// Global keys may be meant for another scenario.
    global: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    source_name: String,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Config {
    pub fn parse(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config { source_name: source_name.to_string(), ..Default::default() };
        let mut section = String::new();
        cfg.sections.insert(section.clone(), BTreeMap::new());
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let err = |msg: String| ConfigError::Syntax { source_name: source_name.to_string(), line, msg };
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(format!("unterminated section header `{s}`")))?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(err("empty section name".into()));
                }
                section = name.to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{s}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(err(format!("bad key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(format!("key `{key}` has no value")));
            }
            let map = cfg.sections.get_mut(&section).expect("section exists");
            if let Some(prev) = map.get(key) {
                return Err(err(format!("key `{key}` repeats line {}", prev.line)));
            }
            map.insert(key.to_string(), Entry { value: value.to_string(), line, global: section.is_empty() });
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Global keys merged with the keys of `section`.
    pub fn scenario(&self, section: &str) -> Params {
        let mut entries = self.sections.get("").cloned().unwrap_or_default();
        if let Some(own) = self.sections.get(section) {
            entries.extend(own.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        Params {
            source_name: self.source_name.clone(),
            section: section.to_string(),
            entries,
            used: RefCell::new(BTreeSet::new()),
        }
    }
}

/// Key lookup for one scenario; remembers which keys were read.
#[derive(Debug)]
pub struct Params {
    source_name: String,
    section: String,
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

impl Params {
    /// Command-line values replace the file's.
    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), Entry { value, line: 0, global: false });
    }

    fn origin(&self, e: &Entry) -> String {
        if e.line == 0 {
            "command line".to_string()
        } else {
            format!("{}:{}", self.source_name, e.line)
        }
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key)
    }

    fn bad(&self, key: &str, e: &Entry, msg: String) -> ConfigError {
        ConfigError::Value { origin: self.origin(e), key: key.to_string(), msg }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(|e| e.value.clone())
    }

    fn number(&self, key: &str, e: &Entry, text: &str, allow_inf: bool) -> Result<f64, ConfigError> {
        let v: f64 = text.parse().map_err(|_| self.bad(key, e, format!("`{text}` is not a number")))?;
        if v.is_nan() || (v.is_infinite() && !allow_inf) {
            return Err(self.bad(key, e, format!("`{text}` is not finite")));
        }
        Ok(v)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            Some(e) => self.number(key, e, &e.value, false),
            None => Ok(default),
        }
    }

    /// As [`f64_or`](Self::f64_or) but `inf` is accepted.
    pub fn extended_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            Some(e) => self.number(key, e, &e.value, true),
            None => Ok(default),
        }
    }

    pub fn positive_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.f64_or(key, default)?;
        match self.raw(key) {
            Some(e) if v <= 0.0 => Err(self.bad(key, e, format!("{v} must be positive"))),
            _ => Ok(v),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            Some(e) => e.value.parse().map_err(|_| self.bad(key, e, format!("`{}` is not a count", e.value))),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.raw(key) {
            Some(e) => e.value.parse().map_err(|_| self.bad(key, e, format!("`{}` is not an integer", e.value))),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                other => Err(self.bad(key, e, format!("`{other}` is not a boolean"))),
            },
            None => Ok(default),
        }
    }

    fn items<'a>(e: &'a Entry) -> impl Iterator<Item = &'a str> {
        e.value.split(',').map(str::trim).filter(|s| !s.is_empty())
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let v = Self::items(e).map(|s| self.number(key, e, s, true)).collect::<Result<Vec<_>, _>>()?;
        Ok(Some(v))
    }

    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let v = Self::items(e)
            .map(|s| s.parse().map_err(|_| self.bad(key, e, format!("`{s}` is not a count"))))
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err(self.bad(key, e, "empty list".into()));
        }
        Ok(Some(v))
    }

    /// Error on the first key that was never read.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.iter().filter(|(k, e)| !e.global && !used.contains(*k)).min_by_key(|(_, e)| e.line) {
            Some((k, e)) => Err(self.bad(k, e, format!("unknown key for [{}]", self.section))),
            None => Ok(()),
        }
    }
}
