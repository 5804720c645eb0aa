//! Line-oriented `key = value` text with `[section]` headers.
//!
//! `#` starts a comment line. Keys may appear at most once per section and every key
//! must be consumed by the reader, so typos surface as errors.

use std::cell::Cell;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    offset: usize,
    used: Cell<bool>,
}

#[derive(Debug)]
pub struct Section {
    pub name: String,
    pub offset: usize,
    entries: Vec<Entry>,
}

pub fn parse(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len();
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(line_offset, format!("unterminated section header {line:?}")))?;
            sections.push(Section {
                name: name.trim().to_string(),
                offset: line_offset,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(line_offset, format!("expected key = value, found {line:?}")))?;
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::parse(line_offset, "key before any [section] header"))?;
        let key = key.trim().to_string();
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::parse(line_offset, format!("duplicate key {key:?} in [{}]", section.name)));
        }
        section.entries.push(Entry {
            key,
            value: value.trim().to_string(),
            offset: line_offset,
            used: Cell::new(false),
        });
    }
    Ok(sections)
}

impl Section {
    fn entry(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        e.used.set(true);
        Some(e)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| {
                Error::parse(e.offset, format!("[{}] {key}: cannot parse {:?}", self.name, e.value))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::parse(self.offset, format!("[{}] is missing {key:?}", self.name)))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        if e.value.is_empty() {
            return Ok(Some(Vec::new()));
        }
        e.value
            .split(',')
            .map(|item| {
                item.trim().parse().map_err(|_| {
                    Error::parse(e.offset, format!("[{}] {key}: cannot parse item {:?}", self.name, item.trim()))
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn require_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.list(key)?
            .ok_or_else(|| Error::parse(self.offset, format!("[{}] is missing {key:?}", self.name)))
    }

    pub fn array3(&self, key: &str) -> Result<Option<[f64; 3]>> {
        match self.list::<f64>(key)? {
            None => Ok(None),
            Some(v) => {
                let off = self.entries.iter().find(|e| e.key == key).map_or(self.offset, |e| e.offset);
                v.try_into()
                    .map(Some)
                    .map_err(|_| Error::parse(off, format!("[{}] {key}: expected 3 values", self.name)))
            }
        }
    }

    /// Fails on any key that was never read.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used.get()) {
            Some(e) => Err(Error::parse(e.offset, format!("unknown key {:?} in [{}]", e.key, self.name))),
            None => Ok(()),
        }
    }
}

/// Builds key=value text. Floats use their shortest round-trip form.
#[derive(Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push_str(&format!("[{name}]\n"));
        self
    }

    pub fn value(&mut self, key: &str, v: impl Display) -> &mut Self {
        self.out.push_str(&format!("{key} = {v}\n"));
        self
    }

    pub fn float(&mut self, key: &str, v: f64) -> &mut Self {
        self.value(key, format!("{v:?}"))
    }

    pub fn floats(&mut self, key: &str, v: &[f64]) -> &mut Self {
        let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        self.value(key, items.join(", "))
    }

    pub fn finish(&mut self) -> String {
        std::mem::take(&mut self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let text = "# comment\n[a]\nx = 1.5\nname = hello world\n\n[b]\nlist = 1, 2,3\n";
        let s = parse(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].require::<f64>("x").unwrap(), 1.5);
        assert_eq!(s[0].require::<String>("name").unwrap(), "hello world");
        s[0].finish().unwrap();
        assert_eq!(s[1].require_list::<i32>("list").unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        let s = parse("[a]\nx = 1\ny = 2\n").unwrap();
        let _: f64 = s[0].require("x").unwrap();
        let err = s[0].finish().unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 10, .. }), "{err}");
        assert!(parse("[a]\nx = 1\nx = 2\n").is_err());
        assert!(parse("x = 1\n").is_err());
        assert!(parse("[a\n").is_err());
    }

    #[test]
    fn bad_value_reports_line_offset() {
        let s = parse("[a]\nx = nope\n").unwrap();
        assert!(matches!(s[0].get::<f64>("x"), Err(Error::Parse { offset: 4, .. })));
    }

    #[test]
    fn floats_round_trip() {
        let vals = [0.1, 1e-6, -3.25e10, 1.0 / 3.0, 0.0];
        let text = Writer::new().section("s").floats("v", &vals).float("w", 2.5e-3).finish();
        let s = parse(&text).unwrap();
        assert_eq!(s[0].require_list::<f64>("v").unwrap(), vals);
        assert_eq!(s[0].require::<f64>("w").unwrap(), 2.5e-3);
    }
}
