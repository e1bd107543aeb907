//! Machine-readable verification reports.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::config::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    /// The statement the check certifies.
    pub anchor: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Measurements that never affect the exit code.
    pub measured_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub wall_time: f64,
}

impl CheckRecord {
    /// Passes when `residual <= threshold`; a non-finite residual fails.
    pub fn asserted(name: impl Into<String>, anchor: impl Into<String>, residual: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            residual,
            threshold,
            pass: residual.is_finite() && residual <= threshold,
            measured_only: false,
            note: None,
            wall_time: 0.0,
        }
    }

    pub fn measured(name: impl Into<String>, anchor: impl Into<String>, value: f64) -> Self {
        Self {
            measured_only: true,
            pass: true,
            threshold: f64::INFINITY,
            ..Self::asserted(name, anchor, value, f64::INFINITY)
        }
    }

    /// A check whose computation failed.
    pub fn failed(name: impl Into<String>, anchor: impl Into<String>, threshold: f64, err: impl ToString) -> Self {
        Self {
            note: Some(err.to_string()),
            ..Self::asserted(name, anchor, f64::INFINITY, threshold)
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub measured_only: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

impl VerificationReport {
    /// Sorts the records by name and tallies them.
    pub fn new(suite: &str, seed: u64, mut checks: Vec<CheckRecord>) -> Self {
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        let measured_only = checks.iter().filter(|c| c.measured_only).count();
        let failed = checks.iter().filter(|c| !c.measured_only && !c.pass).count();
        let summary = Summary {
            total: checks.len(),
            passed: checks.len() - measured_only - failed,
            failed,
            measured_only,
        };
        Self {
            schema_version: SCHEMA_VERSION,
            suite: suite.into(),
            seed,
            checks,
            summary,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The report with every timing field zeroed.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.checks {
            c.wall_time = 0.0;
        }
        out
    }

    /// One line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.measured_only {
                "MEASURED"
            } else if c.pass {
                "PASS"
            } else {
                "FAIL"
            };
            out.push_str(&format!(
                "{status:<9} {:<48} residual {:>10.3e}  threshold {:>9.1e}\n",
                c.name, c.residual, c.threshold
            ));
        }
        out.push_str(&format!(
            "{} checks: {} passed, {} failed, {} measured only\n",
            self.summary.total, self.summary.passed, self.summary.failed, self.summary.measured_only
        ));
        out
    }
}

/// Runs `f` and stamps its wall time on every record it returns.
pub fn timed(f: impl FnOnce() -> Vec<CheckRecord>) -> Vec<CheckRecord> {
    let start = Instant::now();
    let mut out = f();
    let dt = start.elapsed().as_secs_f64();
    for c in &mut out {
        c.wall_time = dt;
    }
    out
}
