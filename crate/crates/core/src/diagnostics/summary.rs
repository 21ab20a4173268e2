use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// One named pass/fail check with the measured value and its limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, pass: value <= limit, detail: String::new() }
    }

    /// Passes when `value ≥ limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, pass: value >= limit, detail: String::new() }
    }

    /// Passes when `value < limit`.
    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, pass: value < limit, detail: String::new() }
    }

    pub fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), value: f64::from(u8::from(pass)), limit: 1.0, pass, detail: detail.into() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: value {:e}, limit {:e}", self.name, self.value, self.limit)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Structured summary written next to CSV reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn new(command: &str, checks: Vec<Check>) -> Self {
        Summary { command: command.into(), pass: checks.iter().all(|c| c.pass), checks }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
