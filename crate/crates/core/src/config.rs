//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! objective.name = trid
//! objective.dim = 2
//! flow.name = ptgf
//! flow.k = 0.1
//! init.sweep = [[-10, -10], [5, -5]]
//! ```
//!
//! Values are numbers, bare or double-quoted strings, or bracketed lists
//! (nestable). A list may continue over several lines until its brackets
//! balance.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    List(Vec<Value>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Text(s) => write!(f, "{s}"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// Parsed key-value pairs, ordered by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, Value>,
}

impl ConfigMap {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut pending: Option<(String, String, usize)> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if let Some((key, mut acc, start)) = pending.take() {
                acc.push(' ');
                acc.push_str(line);
                if bracket_depth(&acc) > 0 {
                    pending = Some((key, acc, start));
                } else {
                    insert(&mut entries, key, &acc)?;
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let key = key.trim().to_string();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::config(format!("line {}", lineno + 1), "invalid key"));
            }
            let value = value.trim().to_string();
            if bracket_depth(&value) > 0 {
                pending = Some((key, value, lineno + 1));
            } else {
                insert(&mut entries, key, &value)?;
            }
        }
        if let Some((key, _, _)) = pending {
            return Err(Error::config(key, "unterminated list"));
        }
        Ok(Self { entries })
    }

    /// Applies a `key=value` override, replacing any existing entry.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        let key = key.trim().to_string();
        let parsed = parse_value(value.trim()).map_err(|m| Error::config(key.clone(), m))?;
        self.entries.insert(key, parsed);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn text(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Text(s)) => Ok(Some(s.clone())),
            Some(Value::Number(x)) => Ok(Some(x.to_string())),
            Some(Value::List(_)) => {
                Err(Error::config(key, "expected a single value, found a list"))
            }
        }
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(x)) => Ok(Some(*x)),
            Some(other) => Err(Error::config(
                key,
                format!("expected a number, found `{other}`"),
            )),
        }
    }

    pub fn integer(&self, key: &str) -> Result<Option<u64>> {
        match self.number(key)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 => Ok(Some(x as u64)),
            Some(x) => Err(Error::config(
                key,
                format!("expected a non-negative integer, found {x}"),
            )),
        }
    }

    pub fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.text(key)?.as_deref() {
            None => Ok(None),
            Some("true") | Some("1") => Ok(Some(true)),
            Some("false") | Some("0") => Ok(Some(false)),
            Some(other) => Err(Error::config(
                key,
                format!("expected true or false, found `{other}`"),
            )),
        }
    }

    pub fn vector(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_vector(v).map(Some).map_err(|m| Error::config(key, m)),
        }
    }

    pub fn matrix(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::List(rows)) => rows
                .iter()
                .map(as_vector)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|m| Error::config(key, m)),
            Some(other) => Err(Error::config(
                key,
                format!("expected a list of lists, found `{other}`"),
            )),
        }
    }
}

fn as_vector(v: &Value) -> std::result::Result<Vec<f64>, String> {
    match v {
        Value::List(items) => items
            .iter()
            .map(|it| match it {
                Value::Number(x) => Ok(*x),
                other => Err(format!(
                    "expected a number inside the list, found `{other}`"
                )),
            })
            .collect(),
        other => Err(format!("expected a list of numbers, found `{other}`")),
    }
}

fn insert(entries: &mut BTreeMap<String, Value>, key: String, raw: &str) -> Result<()> {
    let value = parse_value(raw).map_err(|m| Error::config(key.clone(), m))?;
    if entries.contains_key(&key) {
        return Err(Error::config(key, "duplicate key"));
    }
    entries.insert(key, value);
    Ok(())
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn bracket_depth(s: &str) -> i32 {
    s.chars().fold(0, |d, c| match c {
        '[' => d + 1,
        ']' => d - 1,
        _ => d,
    })
}

fn parse_value(raw: &str) -> std::result::Result<Value, String> {
    let mut parser = Parser {
        src: raw.as_bytes(),
        pos: 0,
    };
    let v = parser.value()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(format!("unexpected trailing input in `{raw}`"));
    }
    Ok(v)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> std::result::Result<Value, String> {
        self.skip_ws();
        match self.src.get(self.pos) {
            None => Err("missing value".into()),
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if self.src.get(self.pos) == Some(&b']') {
                        self.pos += 1;
                        return Ok(Value::List(items));
                    }
                    items.push(self.value()?);
                    self.skip_ws();
                    match self.src.get(self.pos) {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {}
                        _ => return Err("expected `,` or `]` in list".into()),
                    }
                }
            }
            Some(b'"') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos] != b'"' {
                    self.pos += 1;
                }
                if self.pos == self.src.len() {
                    return Err("unterminated string".into());
                }
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.pos += 1;
                Ok(Value::Text(s))
            }
            Some(_) => {
                let start = self.pos;
                while self.pos < self.src.len() && !matches!(self.src[self.pos], b',' | b']' | b'[')
                {
                    self.pos += 1;
                }
                let token = std::str::from_utf8(&self.src[start..self.pos])
                    .map_err(|_| "invalid utf-8".to_string())?
                    .trim();
                if token.is_empty() {
                    return Err("empty value".into());
                }
                Ok(match token.parse::<f64>() {
                    Ok(x)
                        if !token.eq_ignore_ascii_case("nan")
                            && !token.to_ascii_lowercase().contains("inf") =>
                    {
                        Value::Number(x)
                    }
                    _ => Value::Text(token.to_string()),
                })
            }
        }
    }
}
