//! JSON report and run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use opgrowth_core::criteria::{self, Criterion, CriterionOutcome};
use opgrowth_core::fit::GrowthFit;
use serde::{Deserialize, Serialize};

/// Version string baked in at build time (`git describe` when available).
pub const VERSION: &str = env!("OPGROWTH_VERSION");

/// Fitted constant with a 95% normal confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub value: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
}

impl FitRecord {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self {
            value,
            stderr,
            ci95: [value - 1.96 * stderr, value + 1.96 * stderr],
            window: None,
            r_squared: None,
        }
    }
}

impl From<&GrowthFit> for FitRecord {
    fn from(f: &GrowthFit) -> Self {
        let mut r = FitRecord::new(f.value, f.stderr);
        r.window = Some([f.window.t_min, f.window.t_max]);
        r.r_squared = f.r_squared.is_finite().then_some(f.r_squared);
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub fits: BTreeMap<String, FitRecord>,
    /// Other scalar results worth keeping next to the fits.
    pub values: BTreeMap<String, f64>,
    pub criteria: Vec<CriterionOutcome>,
    pub passed: bool,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Re-applies the current thresholds to the metrics stored in a report.
/// A report passes only if every criterion it carries passes now; a stored
/// verdict that disagrees with the recomputed one is listed in `mismatches`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub outcomes: Vec<CriterionOutcome>,
    pub mismatches: Vec<Criterion>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

pub fn check(report: &Report) -> CheckResult {
    let mut outcomes = Vec::new();
    let mut mismatches = Vec::new();
    for stored in &report.criteria {
        let fresh = criteria::evaluate(stored.criterion, &stored.metrics);
        if fresh.passed != stored.passed {
            mismatches.push(stored.criterion);
        }
        outcomes.push(fresh);
    }
    CheckResult { outcomes, mismatches }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub output_dir: String,
    pub config: serde_json::Value,
}
