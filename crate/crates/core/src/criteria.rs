//! Acceptance thresholds, stated once and looked up by name.
//!
//! A criterion is a list of [`Bound`]s on named metrics. Pipelines measure
//! the metrics, [`evaluate`] applies the bounds, and a stored report can be
//! re-checked later from its metrics alone.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Op::Lt => value < threshold,
            Op::Le => value <= threshold,
            Op::Gt => value > threshold,
            Op::Ge => value >= threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub metric: &'static str,
    pub op: Op,
    pub threshold: f64,
}

const fn bound(metric: &'static str, op: Op, threshold: f64) -> Bound {
    Bound { metric, op, threshold }
}

pub const RUNTIME: &str = "runtime_s";

// Numerical settings shared by the pipelines that feed the criteria.
pub const EIGEN_RANDOM_STRINGS: usize = 1000;
pub const EIGEN_RANDOM_QUBITS: usize = 64;
pub const EIGEN_EXHAUSTIVE_MAX_QUBITS: usize = 6;
pub const OTOC_IDENTITY_TIMES: [f64; 3] = [0.5, 1.0, 2.0];
pub const IDENTITY_DT: f64 = 1e-3;
pub const IDENTITY_EPSILONS: [f64; 2] = [0.01, 0.1];
pub const CORRECTION_WINDOW: (f64, f64) = (0.05, 0.30);
pub const OPEN_1D_EPSILONS: [f64; 2] = [1e-3, 1e-2];
pub const PLATEAU_EPSILONS: [f64; 3] = [1e-3, 3e-3, 1e-2];
pub const NSTAR_EPSILONS: [f64; 5] = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
pub const PROTOCOL_MUS: [f64; 3] = [0.25, 0.5, 1.0];

pub const EIGENRELATION: &[Bound] = &[bound("failures", Op::Le, 0.0), bound(RUNTIME, Op::Lt, 10.0)];
pub const OTOC_SIZE_IDENTITY: &[Bound] = &[bound("max_abs_diff", Op::Lt, 1e-10), bound(RUNTIME, Op::Lt, 120.0)];
pub const ECHO_RATE_IDENTITY: &[Bound] = &[bound("max_residual", Op::Lt, 1e-6), bound(RUNTIME, Op::Lt, 300.0)];
pub const SIZE_WIDTH_IDENTITY: &[Bound] = &[
    bound("max_residual", Op::Lt, 1e-6),
    bound("max_oracle_rel_diff", Op::Lt, 1e-6),
    bound(RUNTIME, Op::Lt, 60.0),
];
pub const OPEN_1D_GROWTH: &[Bound] = &[
    bound("max_rel_err_size", Op::Lt, 0.10),
    bound("max_rel_err_log_echo", Op::Lt, 0.10),
    bound(RUNTIME, Op::Lt, 600.0),
];
/// `gamma_offset` is `|gamma + 1|`; `plateau_shift_sigma` is the n = 750
/// versus n = 1500 plateau difference over the combined two-sigma error.
pub const ALL_TO_ALL_PLATEAU: &[Bound] = &[
    bound("gamma_offset", Op::Le, 0.1),
    bound("decay_rate_spread", Op::Lt, 0.15),
    bound("plateau_shift_sigma", Op::Le, 1.0),
    bound(RUNTIME, Op::Lt, 900.0),
];
/// `nstar_variation` is `(max - min) / min` of the all-to-all echo.
pub const NSTAR_DICHOTOMY: &[Bound] = &[
    bound("r_squared_1d", Op::Gt, 0.95),
    bound("nstar_variation", Op::Lt, 0.20),
    bound(RUNTIME, Op::Lt, 1200.0),
];
pub const OTOC_CONE_AND_REVERSAL: &[Bound] = &[
    bound("light_cone_r_squared", Op::Gt, 0.9),
    bound("site_average_monotone", Op::Ge, 1.0),
    bound("reversal_found", Op::Ge, 1.0),
    bound(RUNTIME, Op::Lt, 600.0),
];
pub const PROTOCOL_ESTIMATOR: &[Bound] = &[
    bound("max_z_score", Op::Le, 3.0),
    bound("mu0_abs_error", Op::Le, 1e-12),
    bound("mu0_stderr", Op::Le, 0.0),
    bound(RUNTIME, Op::Lt, 300.0),
];
pub const MARKOV_ORACLE: &[Bound] = &[bound("max_z_score", Op::Le, 4.0), bound(RUNTIME, Op::Lt, 60.0)];

/// The ten acceptance criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Eigenrelation,
    OtocSizeIdentity,
    EchoRateIdentity,
    SizeWidthIdentity,
    Open1dGrowth,
    AllToAllPlateau,
    NstarDichotomy,
    OtocConeAndReversal,
    ProtocolEstimator,
    MarkovOracle,
}

impl Criterion {
    pub const ALL: [Criterion; 10] = [
        Criterion::Eigenrelation,
        Criterion::OtocSizeIdentity,
        Criterion::EchoRateIdentity,
        Criterion::SizeWidthIdentity,
        Criterion::Open1dGrowth,
        Criterion::AllToAllPlateau,
        Criterion::NstarDichotomy,
        Criterion::OtocConeAndReversal,
        Criterion::ProtocolEstimator,
        Criterion::MarkovOracle,
    ];

    pub fn number(self) -> usize {
        Criterion::ALL.iter().position(|&c| c == self).unwrap() + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Eigenrelation => "eigenrelation",
            Criterion::OtocSizeIdentity => "otoc_size_identity",
            Criterion::EchoRateIdentity => "echo_rate_identity",
            Criterion::SizeWidthIdentity => "size_width_identity",
            Criterion::Open1dGrowth => "open_1d_growth",
            Criterion::AllToAllPlateau => "all_to_all_plateau",
            Criterion::NstarDichotomy => "nstar_dichotomy",
            Criterion::OtocConeAndReversal => "otoc_cone_and_reversal",
            Criterion::ProtocolEstimator => "protocol_estimator",
            Criterion::MarkovOracle => "markov_oracle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Criterion::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn bounds(self) -> &'static [Bound] {
        match self {
            Criterion::Eigenrelation => EIGENRELATION,
            Criterion::OtocSizeIdentity => OTOC_SIZE_IDENTITY,
            Criterion::EchoRateIdentity => ECHO_RATE_IDENTITY,
            Criterion::SizeWidthIdentity => SIZE_WIDTH_IDENTITY,
            Criterion::Open1dGrowth => OPEN_1D_GROWTH,
            Criterion::AllToAllPlateau => ALL_TO_ALL_PLATEAU,
            Criterion::NstarDichotomy => NSTAR_DICHOTOMY,
            Criterion::OtocConeAndReversal => OTOC_CONE_AND_REVERSAL,
            Criterion::ProtocolEstimator => PROTOCOL_ESTIMATOR,
            Criterion::MarkovOracle => MARKOV_ORACLE,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>2} {}", self.number(), self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOutcome {
    pub metric: String,
    pub op: Op,
    pub threshold: f64,
    /// `None` when the metric was not measured, which counts as a failure.
    pub value: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub criterion: Criterion,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub bounds: Vec<BoundOutcome>,
}

impl CriterionOutcome {
    /// One line: number, name, verdict and every bounded metric.
    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .bounds
            .iter()
            .map(|b| match b.value {
                Some(v) => format!("{}={:.4e} ({} {:e})", b.metric, v, b.op.symbol(), b.threshold),
                None => format!("{}=missing", b.metric),
            })
            .collect();
        format!(
            "criterion {}: {} [{}]",
            self.criterion,
            if self.passed { "PASS" } else { "FAIL" },
            parts.join(", ")
        )
    }
}

/// Applies the bounds of `criterion` to `metrics`. Missing or NaN metrics
/// fail their bound.
pub fn evaluate(criterion: Criterion, metrics: &BTreeMap<String, f64>) -> CriterionOutcome {
    let bounds: Vec<BoundOutcome> = criterion
        .bounds()
        .iter()
        .map(|b| {
            let value = metrics.get(b.metric).copied();
            BoundOutcome {
                metric: b.metric.to_string(),
                op: b.op,
                threshold: b.threshold,
                value,
                passed: value.is_some_and(|v| b.op.holds(v, b.threshold)),
            }
        })
        .collect();
    CriterionOutcome {
        criterion,
        passed: bounds.iter().all(|b| b.passed),
        metrics: metrics.clone(),
        bounds,
    }
}

/// `(max - min) / min` of positive values.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() || !(min > 0.0) {
        return f64::NAN;
    }
    (max - min) / min
}
