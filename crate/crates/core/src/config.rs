//! Experiment config files: flat `key = value` lines under `[data]`,
//! `[train]`, `[attack.<name>]` and `[sweep]` sections. `#` starts a
//! comment line.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::attacks::AttackConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn section_allowed(name: &str) -> bool {
    matches!(name, "data" | "train" | "sweep")
        || name.strip_prefix("attack.").is_some_and(|n| !n.is_empty())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !section_allowed(name) {
                    return Err(Error::Config(format!("line {lineno}: unknown section [{name}]")));
                }
                cfg.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse_at_line(lineno, format!("expected key = value, got '{line}'")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| Error::parse_at_line(lineno, "key outside of any section"))?;
            cfg.sections
                .get_mut(section)
                .expect("section created on header")
                .insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Typed lookup; `Ok(None)` when absent.
    pub fn get_parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.get(section, key)
            .map(|v| {
                v.parse().map_err(|_| {
                    Error::Config(format!("[{section}] {key}: cannot parse '{v}'"))
                })
            })
            .transpose()
    }

    /// `[attack.<name>]` applied over `base`.
    pub fn attack(&self, name: &str, base: AttackConfig) -> Result<AttackConfig> {
        let mut cfg = base;
        if let Some(sec) = self.sections.get(&format!("attack.{name}")) {
            for (k, v) in sec {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    /// Every value of `other` overrides the same key here.
    pub fn merge(&mut self, other: &ExperimentConfig) {
        for (name, kv) in &other.sections {
            for (k, v) in kv {
                self.set(name, k, v.clone());
            }
        }
    }

    /// `section.key = value`, one per entry, in section then key order.
    pub fn to_lines(&self) -> Vec<String> {
        self.sections
            .iter()
            .flat_map(|(name, kv)| kv.iter().map(move |(k, v)| format!("{name}.{k} = {v}")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, kv) in &self.sections {
            s.push_str(&format!("[{name}]\n"));
            for (k, v) in kv {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}
