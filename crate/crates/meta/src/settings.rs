//! Flat `key = value` documents.
//!
//! Lines are `key = value`; `#` starts a comment. Keys are dotted lower-case
//! names. Emission is canonical: one line per key, in the order the keys
//! were inserted.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    entries: Vec<(String, String)>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            let k = k.trim();
            if k.is_empty()
                || !k
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
            {
                return Err(Error::Config(format!("line {}: invalid key `{k}`", n + 1)));
            }
            if s.get(k).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            s.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(s)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces `key`, keeping its original position.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Overwrites `target` with the value of `key` if present.
    pub fn read<T: FromStr>(&self, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key) {
            *target = v.parse().map_err(|e| Error::Config(format!("`{key} = {v}`: {e}")))?;
        }
        Ok(())
    }

    /// Comma-separated list form of [`Settings::read`].
    pub fn read_list<T: FromStr>(&self, key: &str, target: &mut Vec<T>) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key) {
            *target = v
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|e| Error::Config(format!("`{key} = {v}`: {e}"))))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    /// Fails on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for k in self.keys() {
            if !known.contains(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }
}

pub fn join_list<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
