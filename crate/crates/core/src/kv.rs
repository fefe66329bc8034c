//! Flat `key = value` text format shared by the tracker config, sequence
//! manifests and scenario specs.
//!
//! Blank lines and lines starting with `#` (after trimming) are ignored.
//! A line of the form `[name]` opens a new section; entries before the first
//! header belong to the unnamed root section.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

impl KvError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// `None` for the root section.
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

pub fn parse(text: &str) -> Result<Vec<Section>, KvError> {
    let mut sections = vec![Section { name: None, line: 0, entries: Vec::new() }];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| KvError::new(line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(KvError::new(line, "empty section name"));
            }
            sections.push(Section { name: Some(name.to_string()), line, entries: Vec::new() });
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| KvError::new(line, format!("expected `key = value`, got `{trimmed}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError::new(line, "empty key"));
        }
        let section = sections.last_mut().expect("root section");
        if section.get(key).is_some() {
            return Err(KvError::new(line, format!("duplicate key `{key}`")));
        }
        section.entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
    }
    Ok(sections)
}

pub fn parse_f64(e: &Entry) -> Result<f64, KvError> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| KvError::new(e.line, format!("`{}`: expected a number, got `{}`", e.key, e.value)))
}

pub fn parse_u64(e: &Entry) -> Result<u64, KvError> {
    e.value
        .parse::<u64>()
        .map_err(|_| KvError::new(e.line, format!("`{}`: expected a non-negative integer, got `{}`", e.key, e.value)))
}

pub fn parse_i64(e: &Entry) -> Result<i64, KvError> {
    e.value
        .parse::<i64>()
        .map_err(|_| KvError::new(e.line, format!("`{}`: expected an integer, got `{}`", e.key, e.value)))
}

pub fn parse_bool(e: &Entry) -> Result<bool, KvError> {
    match e.value.as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(KvError::new(e.line, format!("`{}`: expected true/false, got `{}`", e.key, e.value))),
    }
}

/// Parses `W x H` forms such as `32x32`.
pub fn parse_size(e: &Entry) -> Result<(usize, usize), KvError> {
    let err = || KvError::new(e.line, format!("`{}`: expected WxH, got `{}`", e.key, e.value));
    let (w, h) = e.value.split_once(['x', 'X']).ok_or_else(err)?;
    let w = w.trim().parse::<usize>().map_err(|_| err())?;
    let h = h.trim().parse::<usize>().map_err(|_| err())?;
    Ok((w, h))
}
