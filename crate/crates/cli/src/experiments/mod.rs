//! Named experiment pipelines.
//!
//! Each pipeline writes its CSV and SVG artifacts into the output directory
//! and returns fits, scalar values and criterion outcomes. [`run_experiment`]
//! wraps a pipeline with the manifest and the JSON report.

mod circuits;
mod conserved;
mod exact;
mod protocol;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use opgrowth_core::criteria::{self, Criterion, CriterionOutcome};

use crate::report::{FitRecord, Manifest, Report, VERSION};
use crate::spec::{ExperimentConfig, ResolvedSpec};
use crate::svg::Plot;

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Output directory plus the list of files written so far.
pub struct RunContext {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl RunContext {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    /// Creates `name` in the output directory and records it as an artifact.
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.artifacts.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn plot(&mut self, name: &str, plot: &Plot) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, plot.render()).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

/// What a pipeline hands back to [`run_experiment`].
#[derive(Default)]
pub struct Outcome {
    pub fits: BTreeMap<String, FitRecord>,
    pub values: BTreeMap<String, f64>,
    pub criteria: Vec<CriterionOutcome>,
}

impl Outcome {
    /// Records a scalar, dropping non-finite values so the JSON stays valid.
    fn value(&mut self, key: impl Into<String>, v: f64) {
        if v.is_finite() {
            self.values.insert(key.into(), v);
        }
    }

    fn fit(&mut self, key: impl Into<String>, f: FitRecord) {
        if f.value.is_finite() && f.stderr.is_finite() {
            self.fits.insert(key.into(), f);
        }
    }
}

/// Metric map for one criterion; non-finite measurements are left out and
/// therefore fail their bound.
#[derive(Default)]
struct Metrics(BTreeMap<String, f64>);

impl Metrics {
    fn set(&mut self, key: &str, v: f64) {
        if v.is_finite() {
            self.0.insert(key.to_string(), v);
        }
    }

    fn finish(mut self, criterion: Criterion, started: Instant) -> CriterionOutcome {
        self.set(criteria::RUNTIME, started.elapsed().as_secs_f64());
        criteria::evaluate(criterion, &self.0)
    }
}

/// Short file-name tag for a rate, e.g. `1e-3`.
fn rate_tag(eps: f64) -> String {
    if eps == 0.0 {
        "0".to_string()
    } else {
        format!("{eps:e}")
    }
}

/// Runs one resolved experiment: manifest first, then the pipeline, then
/// the report. Returns the report; `report.passed` drives the exit code.
pub fn run_experiment(spec: &ResolvedSpec) -> Result<Report> {
    let mut ctx = RunContext::new(&spec.output_dir)?;
    let manifest = Manifest {
        experiment: spec.name.as_str().to_string(),
        version: VERSION.to_string(),
        seed: spec.seed,
        threads: rayon::current_num_threads(),
        output_dir: spec.output_dir.display().to_string(),
        config: serde_json::to_value(&spec.config)?,
    };
    serde_json::to_writer_pretty(ctx.create(MANIFEST_FILE)?, &manifest)?;

    let seed = spec.seed;
    let outcome = match &spec.config {
        ExperimentConfig::Fig2a1d(c) => circuits::fig2a(c, seed, &mut ctx)?,
        ExperimentConfig::Fig2bAllToAll(c) => circuits::fig2b(c, seed, &mut ctx)?,
        ExperimentConfig::NstarScan(c) => circuits::nstar_scan(c, seed, &mut ctx)?,
        ExperimentConfig::Fig3Otoc(c) => exact::fig3(c, &mut ctx)?,
        ExperimentConfig::Eq5Eq6Identities(c) => exact::identities(c, seed, &mut ctx)?,
        ExperimentConfig::ProtocolGmu(c) => protocol::protocol_gmu(c, seed, &mut ctx)?,
        ExperimentConfig::ConservedProfile(c) => conserved::conserved_profile(c, &mut ctx)?,
    };

    let mut artifacts = ctx.artifacts.clone();
    artifacts.push(REPORT_FILE.to_string());
    let report = Report {
        experiment: spec.name.as_str().to_string(),
        version: VERSION.to_string(),
        seed,
        fits: outcome.fits,
        values: outcome.values,
        passed: outcome.criteria.iter().all(|c| c.passed),
        criteria: outcome.criteria,
        artifacts,
    };
    report.write(&spec.output_dir.join(REPORT_FILE))?;
    Ok(report)
}
