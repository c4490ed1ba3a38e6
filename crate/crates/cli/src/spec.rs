//! Experiment specifications read from TOML.
//!
//! ```toml
//! name = "fig2a_1d"
//! seed = 7
//! output_dir = "out/fig2a"
//!
//! [config]
//! trajectories = 2000
//! ```
//!
//! Every `config` key is optional; omitted keys take the defaults below.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use opgrowth_core::exact::OtocNormalization;
use opgrowth_core::phenom::EchoConvention;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    #[serde(rename = "fig2a_1d")]
    Fig2a1d,
    #[serde(rename = "fig2b_all_to_all")]
    Fig2bAllToAll,
    NstarScan,
    #[serde(rename = "fig3_otoc")]
    Fig3Otoc,
    #[serde(rename = "eq5_eq6_identities")]
    Eq5Eq6Identities,
    ProtocolGmu,
    ConservedProfile,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 7] = [
        ExperimentName::Fig2a1d,
        ExperimentName::Fig2bAllToAll,
        ExperimentName::NstarScan,
        ExperimentName::Fig3Otoc,
        ExperimentName::Eq5Eq6Identities,
        ExperimentName::ProtocolGmu,
        ExperimentName::ConservedProfile,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Fig2a1d => "fig2a_1d",
            ExperimentName::Fig2bAllToAll => "fig2b_all_to_all",
            ExperimentName::NstarScan => "nstar_scan",
            ExperimentName::Fig3Otoc => "fig3_otoc",
            ExperimentName::Eq5Eq6Identities => "eq5_eq6_identities",
            ExperimentName::ProtocolGmu => "protocol_gmu",
            ExperimentName::ConservedProfile => "conserved_profile",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentName::Fig2a1d => "1D brickwork circuit: ballistic growth and its noise correction",
            ExperimentName::Fig2bAllToAll => "all-to-all circuit: size plateau and noise-independent echo decay",
            ExperimentName::NstarScan => "echo at the deviation time across error rates, both geometries",
            ExperimentName::Fig3Otoc => "exact OTOC light cone and conserved-density reversal",
            ExperimentName::Eq5Eq6Identities => "exact echo-rate and size-width identities of the size-damped model",
            ExperimentName::ProtocolGmu => "randomized Pauli-insertion estimate of the size generating function",
            ExperimentName::ConservedProfile => "size profile of an operator overlapping a conserved density",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .with_context(|| {
                let known: Vec<&str> = ExperimentName::ALL.iter().map(|n| n.as_str()).collect();
                format!("unknown experiment {s:?}; known: {}", known.join(", "))
            })
    }
}

/// Parsed spec file, before defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub config: toml::Table,
}

impl ExperimentSpec {
    pub fn named(name: ExperimentName) -> Self {
        Self {
            name: name.as_str().to_string(),
            seed: None,
            output_dir: None,
            config: toml::Table::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing experiment spec")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Applies defaults. `seed` and `output_dir` given here override the
    /// spec's own values.
    pub fn resolve(&self, seed: Option<u64>, output_dir: Option<&Path>) -> Result<ResolvedSpec> {
        let name: ExperimentName = self.name.parse()?;
        let config = match name {
            ExperimentName::Fig2a1d => ExperimentConfig::Fig2a1d(parse_config(&self.config)?),
            ExperimentName::Fig2bAllToAll => ExperimentConfig::Fig2bAllToAll(parse_config(&self.config)?),
            ExperimentName::NstarScan => ExperimentConfig::NstarScan(parse_config(&self.config)?),
            ExperimentName::Fig3Otoc => ExperimentConfig::Fig3Otoc(parse_config(&self.config)?),
            ExperimentName::Eq5Eq6Identities => ExperimentConfig::Eq5Eq6Identities(parse_config(&self.config)?),
            ExperimentName::ProtocolGmu => ExperimentConfig::ProtocolGmu(parse_config(&self.config)?),
            ExperimentName::ConservedProfile => ExperimentConfig::ConservedProfile(parse_config(&self.config)?),
        };
        config.validate()?;
        let output_dir = output_dir
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(name.as_str()));
        Ok(ResolvedSpec {
            name,
            seed: seed.or(self.seed).unwrap_or(DEFAULT_SEED),
            output_dir,
            config,
        })
    }
}

fn parse_config<T: DeserializeOwned>(table: &toml::Table) -> Result<T> {
    toml::Value::Table(table.clone())
        .try_into()
        .context("invalid [config] section")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSpec {
    pub name: ExperimentName,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ExperimentConfig {
    Fig2a1d(Fig2aConfig),
    Fig2bAllToAll(Fig2bConfig),
    NstarScan(NstarConfig),
    Fig3Otoc(Fig3Config),
    Eq5Eq6Identities(IdentitiesConfig),
    ProtocolGmu(ProtocolGmuConfig),
    ConservedProfile(ConservedConfig),
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        let window = |w: [f64; 2], what: &str| -> Result<()> {
            if !(w[0] >= 0.0 && w[1] > w[0]) {
                bail!("{what} window {w:?} must satisfy 0 <= start < end");
            }
            Ok(())
        };
        let rates = |eps: &[f64], what: &str| -> Result<()> {
            if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                bail!("{what} must be a non-empty list of rates in (0, 1)");
            }
            Ok(())
        };
        match self {
            ExperimentConfig::Fig2a1d(c) => {
                window(c.fit_window, "fit")?;
                rates(&c.epsilons, "epsilons")?;
                if c.fit_window[1] > c.layers as f64 {
                    bail!("fit window ends after the last layer");
                }
            }
            ExperimentConfig::Fig2bAllToAll(c) => {
                window(c.growth_window, "growth")?;
                window(c.plateau_window, "plateau")?;
                rates(&c.epsilons, "epsilons")?;
                if c.plateau_window[1] > c.duration as f64 {
                    bail!("plateau window ends after the run");
                }
                if c.replicas < 2 {
                    bail!("need at least two replicas for plateau error bars");
                }
                if !(c.guide_exponent >= 0.0) {
                    bail!("guide_exponent must be non-negative");
                }
            }
            ExperimentConfig::NstarScan(c) => {
                rates(&c.epsilons, "epsilons")?;
                if !(c.deviation > 0.0 && c.deviation < 1.0) {
                    bail!("deviation must lie in (0, 1)");
                }
            }
            ExperimentConfig::Fig3Otoc(c) => {
                if !(c.dt > 0.0 && c.t_max > c.dt) {
                    bail!("need 0 < dt < t_max");
                }
                if c.n < 2 * c.reversal_distance + 1 {
                    bail!("chain too short for the reversal distance");
                }
            }
            ExperimentConfig::Eq5Eq6Identities(c) => {
                rates(&c.epsilons, "epsilons")?;
                if !(c.dt > 0.0 && c.t_max > 2.0 * c.dt) {
                    bail!("need at least three grid points");
                }
            }
            ExperimentConfig::ProtocolGmu(c) => {
                if c.mus.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                    bail!("mu values must be finite and non-negative");
                }
            }
            ExperimentConfig::ConservedProfile(c) => {
                if c.times.iter().any(|t| !(*t > 0.0)) {
                    bail!("profile times must be positive");
                }
            }
        }
        Ok(())
    }
}

fn one_d_epsilons() -> Vec<f64> {
    opgrowth_core::criteria::OPEN_1D_EPSILONS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2aConfig {
    pub n: usize,
    pub trajectories: usize,
    pub layers: usize,
    /// Per-layer error rates compared against the prediction; an
    /// `epsilon = 0` run is always added for the fits.
    pub epsilons: Vec<f64>,
    pub fit_window: [f64; 2],
    pub convention: EchoConvention,
    pub memory_budget_bytes: Option<u64>,
}

impl Default for Fig2aConfig {
    fn default() -> Self {
        Self {
            n: 200,
            trajectories: 10_000,
            layers: 120,
            epsilons: one_d_epsilons(),
            fit_window: [20.0, 120.0],
            convention: EchoConvention::Mass,
            memory_budget_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2bConfig {
    pub n: usize,
    /// Walkers per replica.
    pub trajectories: usize,
    /// Independent runs per noisy point; plateau errors come from their spread.
    pub replicas: usize,
    /// Resampling guide exponent (walkers favored as `size^-guide_exponent`).
    pub guide_exponent: f64,
    /// Units of time (`n / 2` gates each).
    pub duration: usize,
    pub samples_per_unit_time: usize,
    pub epsilons: Vec<f64>,
    /// Window for lambda and b on the noiseless run.
    pub growth_window: [f64; 2],
    /// Window for plateau means and echo decay rates.
    pub plateau_window: [f64; 2],
    /// Smaller system for the finite-size check of the plateau; `0` skips it.
    pub compare_n: usize,
    pub convention: EchoConvention,
}

impl Default for Fig2bConfig {
    fn default() -> Self {
        Self {
            n: 1500,
            trajectories: 8000,
            replicas: 4,
            guide_exponent: 1.0,
            duration: 40,
            samples_per_unit_time: 4,
            epsilons: opgrowth_core::criteria::PLATEAU_EPSILONS.to_vec(),
            growth_window: [2.0, 8.0],
            plateau_window: [20.0, 40.0],
            compare_n: 750,
            convention: EchoConvention::Mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NstarConfig {
    pub epsilons: Vec<f64>,
    pub n_1d: usize,
    pub trajectories_1d: usize,
    pub layers_1d: usize,
    pub n_all_to_all: usize,
    pub trajectories_all_to_all: usize,
    pub duration_all_to_all: usize,
    pub samples_per_unit_time: usize,
    /// Fractional drop of the logarithmic growth rate marking deviation.
    pub deviation: f64,
    /// Relative half-width of the secant used for growth rates.
    pub rate_span: f64,
}

impl Default for NstarConfig {
    fn default() -> Self {
        Self {
            epsilons: opgrowth_core::criteria::NSTAR_EPSILONS.to_vec(),
            n_1d: 200,
            trajectories_1d: 10_000,
            layers_1d: 120,
            n_all_to_all: 1500,
            trajectories_all_to_all: 4000,
            duration_all_to_all: 12,
            samples_per_unit_time: 4,
            deviation: opgrowth_core::analysis::DEFAULT_DEVIATION,
            rate_span: opgrowth_core::analysis::DEFAULT_RATE_SPAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig3Config {
    pub n: usize,
    pub t_max: f64,
    pub dt: f64,
    /// Hamiltonian preset of the backward evolution.
    pub hamiltonian: String,
    /// Preset added with strength `eta` to form the forward Hamiltonian.
    pub perturbation: String,
    pub eta: f64,
    /// OTOC level that marks the arrival of the front.
    pub threshold: f64,
    /// Distance from the center of the site watched for a reversal.
    pub reversal_distance: usize,
    /// Required rise of the OTOC on both sides of the interior minimum.
    pub reversal_margin: f64,
    pub monotone_tolerance: f64,
    pub normalization: OtocNormalization,
    pub tol: f64,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            n: 8,
            t_max: 8.0,
            dt: 0.25,
            hamiltonian: "chaotic_ising".into(),
            perturbation: "x_field".into(),
            eta: 0.3,
            threshold: 0.5,
            reversal_distance: 2,
            reversal_margin: 0.01,
            monotone_tolerance: 1e-9,
            normalization: OtocNormalization::Overlap,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub n: usize,
    pub hamiltonians: usize,
    pub epsilons: Vec<f64>,
    pub dt: f64,
    pub t_max: f64,
    pub tol: f64,
    /// Equal-weight superposition used for the width identity.
    pub width_operator: Vec<String>,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            n: 5,
            hamiltonians: 3,
            epsilons: opgrowth_core::criteria::IDENTITY_EPSILONS.to_vec(),
            dt: opgrowth_core::criteria::IDENTITY_DT,
            t_max: 1.0,
            tol: 1e-11,
            width_operator: vec!["X0".into(), "X0 X1 X2".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolGmuConfig {
    pub n: usize,
    pub t: f64,
    pub mus: Vec<f64>,
    pub shots: usize,
    pub hamiltonian: String,
    pub epsilon: f64,
    pub initial_operator: Option<String>,
    pub tol: f64,
}

impl Default for ProtocolGmuConfig {
    fn default() -> Self {
        let mut mus = vec![0.0];
        mus.extend(opgrowth_core::criteria::PROTOCOL_MUS);
        Self {
            n: 6,
            t: 2.0,
            mus,
            shots: 10_000,
            hamiltonian: "chaotic_ising".into(),
            epsilon: 0.0,
            initial_operator: None,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConservedConfig {
    pub v_b: f64,
    pub d: f64,
    pub epsilons: Vec<f64>,
    /// Times at which full profiles are written.
    pub times: Vec<f64>,
    /// End of the mean-size curve.
    pub t_max: f64,
    pub dt: f64,
}

impl Default for ConservedConfig {
    fn default() -> Self {
        Self {
            v_b: 0.6,
            d: 1.0,
            epsilons: vec![0.0, 1e-3, 1e-2],
            times: vec![10.0, 40.0, 100.0],
            t_max: 200.0,
            dt: 2.0,
        }
    }
}
