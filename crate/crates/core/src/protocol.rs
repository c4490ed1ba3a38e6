//! Randomized Pauli-insertion protocol for the size generating function.
//!
//! Each shot evolves `M` forward, inserts a random Pauli layer, evolves
//! back and measures `M`. In the Heisenberg picture this is the
//! sign-weighted overlap `sum_R c_R^2 s_R(P)`, where `s_R(P) = -1` when the
//! layer anticommutes with `R`. Averaging over layers in which each site
//! carries X, Y, Z with probability `p = (1 - e^-mu)/4` gives
//! `F = (1 + sum_S P(S) e^{-mu S}) / 2`.

use crate::exact::{self, ExactError, HamiltonianSpec, HamiltonianTerm, LindbladSpec, OperatorState};
use crate::pauli::{Pauli, PauliError, PauliString};
use crate::rng;
use crate::ruc::{self, CircuitConfig, Geometry, RucError};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("mu must be finite and non-negative, got {0}")]
    BadMu(f64),
    #[error("at least one shot is required")]
    NoShots,
    #[error("exact backend supports at most {max} qubits, got {n}")]
    BackendLimit { n: usize, max: usize },
    #[error("evolution time must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Ruc(#[from] RucError),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn check_mu(mu: f64) -> Result<(), ProtocolError> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(ProtocolError::BadMu(mu))
    }
}

/// Per-site probability of each non-identity Pauli.
pub fn layer_probability(mu: f64) -> f64 {
    -(-mu).exp_m1() / 4.0
}

pub fn sample_pauli_layer<R: Rng + ?Sized>(n: usize, mu: f64, rng: &mut R) -> Result<PauliString, ProtocolError> {
    check_mu(mu)?;
    let p = layer_probability(mu);
    let mut s = PauliString::identity(n)?;
    if p == 0.0 {
        return Ok(s);
    }
    for site in 0..n {
        let u: f64 = rng.random();
        let pauli = if u < p {
            Pauli::X
        } else if u < 2.0 * p {
            Pauli::Y
        } else if u < 3.0 * p {
            Pauli::Z
        } else {
            continue;
        };
        s.set(site, pauli)?;
    }
    Ok(s)
}

/// Layer-averaged commutation sign with `r`: `e^{-mu size(r)}`.
pub fn channel_factor(r: &PauliString, mu: f64) -> Result<f64, ProtocolError> {
    check_mu(mu)?;
    Ok((-mu * r.size() as f64).exp())
}

/// `sum_S P(S) e^{-mu S}` without normalizing by the echo.
pub fn oracle_generating_function(state: &OperatorState, mu: f64) -> Result<f64, ProtocolError> {
    check_mu(mu)?;
    Ok(state
        .size_distribution()
        .unnormalized_generating_function(mu)
        .expect("mu checked"))
}

fn default_preset() -> String {
    "chaotic_ising".to_string()
}

fn default_tol() -> f64 {
    exact::DEFAULT_RTOL
}

/// How the forward/backward evolution is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolBackend {
    /// Exact evolution under a Hamiltonian with optional size damping.
    Exact {
        #[serde(default = "default_preset")]
        hamiltonian: String,
        #[serde(default)]
        terms: Option<Vec<HamiltonianTerm>>,
        t: f64,
        #[serde(default)]
        epsilon: f64,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// One sampled noisy random-circuit trajectory per shot.
    Circuit {
        geometry: Geometry,
        layers: usize,
        #[serde(default)]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n: usize,
    pub mu: f64,
    pub shots: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial_operator: Option<String>,
    pub backend: ProtocolBackend,
}

impl ProtocolConfig {
    pub fn initial_operator(&self) -> Result<PauliString, ProtocolError> {
        match &self.initial_operator {
            Some(text) => Ok(PauliString::parse_for(self.n, text)?),
            None => Ok(PauliString::single(self.n, self.n / 2, Pauli::X)?),
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        check_mu(self.mu)?;
        if self.shots == 0 {
            return Err(ProtocolError::NoShots);
        }
        if let ProtocolBackend::Exact { t, .. } = &self.backend {
            if self.n > exact::MAX_EXACT_QUBITS {
                return Err(ProtocolError::BackendLimit {
                    n: self.n,
                    max: exact::MAX_EXACT_QUBITS,
                });
            }
            if !(*t >= 0.0 && t.is_finite()) {
                return Err(ProtocolError::BadTime(*t));
            }
        }
        self.initial_operator()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub mu: f64,
    pub f_estimate: f64,
    pub stderr: f64,
    /// `sum_S P(S) e^{-mu S}`
    pub oracle: f64,
    /// `(1 + oracle) / 2`
    pub f_oracle: f64,
    /// Echo `N = sum_S P(S)` of the evolved operator.
    pub echo: f64,
    pub shots: usize,
}

impl ProtocolResult {
    /// Normalized generating function implied by the estimate, `(2F - 1)/N`.
    pub fn generating_function_estimate(&self) -> f64 {
        (2.0 * self.f_estimate - 1.0) / self.echo
    }
}

enum Prepared {
    /// `(x, z, c_R^2)` for every nonzero component.
    Exact { n: usize, comps: Vec<(usize, usize, f64)>, state: OperatorState },
    Circuit { n: usize, trajectories: Vec<(PauliString, f64)> },
}

/// Evolved operator ready for any number of `mu` values.
pub struct PreparedProtocol {
    inner: Prepared,
    seed: u64,
}

impl PreparedProtocol {
    pub fn new(cfg: &ProtocolConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        let m = cfg.initial_operator()?;
        let inner = match &cfg.backend {
            ProtocolBackend::Exact {
                hamiltonian,
                terms,
                t,
                epsilon,
                tol,
            } => {
                let h = match terms {
                    Some(terms) => HamiltonianSpec::from_terms(cfg.n, terms)?,
                    None => HamiltonianSpec::preset(hamiltonian, cfg.n)?,
                };
                let l = if *epsilon > 0.0 {
                    LindbladSpec::EffectiveSize { epsilon: *epsilon }
                } else {
                    LindbladSpec::None
                };
                let state = exact::evolve(&OperatorState::from_pauli(&m)?, &h, &l, *t, *tol)?;
                let mask = (1usize << cfg.n) - 1;
                let comps = state
                    .coeffs()
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(code, c)| (code & mask, code >> cfg.n, c * c))
                    .collect();
                Prepared::Exact { n: cfg.n, comps, state }
            }
            ProtocolBackend::Circuit {
                geometry,
                layers,
                epsilon,
            } => {
                let mut cc = CircuitConfig::new(cfg.n, *geometry, *epsilon, *layers, cfg.shots, cfg.seed);
                cc.initial_operator = Some(m.to_sparse_string());
                let (_, ensemble) = ruc::run_with_ensemble(&cc)?;
                let trajectories = ensemble
                    .entries()
                    .iter()
                    .map(|(s, lw)| (s.clone(), lw.exp()))
                    .collect();
                Prepared::Circuit { n: cfg.n, trajectories }
            }
        };
        Ok(Self { inner, seed: cfg.seed })
    }

    /// Exact evolved operator, when the backend provides one.
    pub fn state(&self) -> Option<&OperatorState> {
        match &self.inner {
            Prepared::Exact { state, .. } => Some(state),
            Prepared::Circuit { .. } => None,
        }
    }

    pub fn oracle(&self, mu: f64) -> Result<f64, ProtocolError> {
        check_mu(mu)?;
        Ok(match &self.inner {
            Prepared::Exact { state, .. } => oracle_generating_function(state, mu)?,
            Prepared::Circuit { trajectories, .. } => {
                let m = trajectories.len() as f64;
                trajectories
                    .iter()
                    .map(|(s, w)| w * (-mu * s.size() as f64).exp())
                    .sum::<f64>()
                    / m
            }
        })
    }

    fn shot(&self, mu: f64, index: u64) -> Result<f64, ProtocolError> {
        let mut r = rng::stream(self.seed, 0x09A0_15E7, index);
        let overlap = match &self.inner {
            Prepared::Exact { n, comps, .. } => {
                let layer = sample_pauli_layer(*n, mu, &mut r)?;
                let code = layer.to_index();
                let (lx, lz) = (code & ((1 << *n) - 1), code >> *n);
                comps
                    .iter()
                    .map(|&(x, z, w)| {
                        if ((lx & z) ^ (lz & x)).count_ones() & 1 == 1 {
                            -w
                        } else {
                            w
                        }
                    })
                    .sum::<f64>()
            }
            Prepared::Circuit { n, trajectories } => {
                let layer = sample_pauli_layer(*n, mu, &mut r)?;
                let (s, w) = &trajectories[index as usize % trajectories.len()];
                if layer.commutes(s)? {
                    *w
                } else {
                    -w
                }
            }
        };
        Ok(0.5 * (1.0 + overlap))
    }

    pub fn run(&self, mu: f64, shots: usize) -> Result<ProtocolResult, ProtocolError> {
        check_mu(mu)?;
        if shots == 0 {
            return Err(ProtocolError::NoShots);
        }
        let values = (0..shots as u64)
            .into_par_iter()
            .map(|i| self.shot(mu, i))
            .collect::<Result<Vec<f64>, _>>()?;
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (mean, stderr) = if lo == hi {
            (lo, 0.0)
        } else {
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            (mean, (var / m).sqrt())
        };
        let oracle = self.oracle(mu)?;
        Ok(ProtocolResult {
            mu,
            f_estimate: mean,
            stderr,
            oracle,
            f_oracle: 0.5 * (1.0 + oracle),
            echo: self.oracle(0.0)?,
            shots,
        })
    }
}

pub fn run_protocol(cfg: &ProtocolConfig) -> Result<ProtocolResult, ProtocolError> {
    PreparedProtocol::new(cfg)?.run(cfg.mu, cfg.shots)
}

#[derive(Serialize, Deserialize)]
struct ProtocolRow {
    mu: f64,
    #[serde(rename = "F_estimate")]
    f_estimate: f64,
    stderr: f64,
    oracle: f64,
}

/// CSV columns `mu,F_estimate,stderr,oracle`, where `oracle` is the exact
/// `F = (1 + sum_S P(S) e^{-mu S})/2`.
pub fn write_results_csv<W: Write>(results: &[ProtocolResult], writer: W) -> Result<(), ProtocolError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in results {
        w.serialize(ProtocolRow {
            mu: r.mu,
            f_estimate: r.f_estimate,
            stderr: r.stderr,
            oracle: r.f_oracle,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rows `(mu, F_estimate, stderr, oracle)`.
pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64, f64, f64)>, ProtocolError> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let r: ProtocolRow = row?;
        out.push((r.mu, r.f_estimate, r.stderr, r.oracle));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact_cfg(n: usize, t: f64, mu: f64, shots: usize, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            n,
            mu,
            shots,
            seed,
            initial_operator: None,
            backend: ProtocolBackend::Exact {
                hamiltonian: "chaotic_ising".into(),
                terms: None,
                t,
                epsilon: 0.0,
                tol: 1e-10,
            },
        }
    }

    #[test]
    fn layer_sampling_limits() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(sample_pauli_layer(8, 0.0, &mut r).unwrap().is_identity());
        }
        assert!((layer_probability(f64::MAX) - 0.25).abs() < 1e-15);
        assert!(sample_pauli_layer(3, -1.0, &mut r).is_err());
    }

    #[test]
    fn layer_frequency_binomial() {
        let mu = 2f64.ln();
        let p3 = 3.0 * layer_probability(mu);
        assert!((p3 - 0.375).abs() < 1e-15);
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| !sample_pauli_layer(1, mu, &mut r).unwrap().is_identity())
            .count() as f64;
        let sigma = (trials as f64 * p3 * (1.0 - p3)).sqrt();
        assert!((hits - trials as f64 * p3).abs() < 5.0 * sigma);
    }

    #[test]
    fn channel_factor_matches_empirical_sign() {
        let n = 6;
        let mu = 0.4;
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let samples = 200_000;
        for size in 1..=n {
            let sites: Vec<(usize, Pauli)> = (0..size).map(|i| (i, Pauli::NON_IDENTITY[i % 3])).collect();
            let s = PauliString::from_sites(n, &sites).unwrap();
            let mean = (0..samples)
                .map(|_| {
                    if sample_pauli_layer(n, mu, &mut r).unwrap().commutes(&s).unwrap() {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .sum::<f64>()
                / samples as f64;
            let exact = channel_factor(&s, mu).unwrap();
            let sigma = ((1.0 - exact * exact) / samples as f64).sqrt();
            assert!((mean - exact).abs() < 5.0 * sigma, "size {size}: {mean} vs {exact}");
        }
        assert_eq!(channel_factor(&PauliString::identity(n).unwrap(), 0.7).unwrap(), 1.0);
    }

    #[test]
    fn oracle_examples() {
        let x = OperatorState::from_pauli(&PauliString::parse_for(3, "X0").unwrap()).unwrap();
        assert!((oracle_generating_function(&x, 0.3).unwrap() - (-0.3f64).exp()).abs() < 1e-15);
        let a = 0.5f64.sqrt();
        let mix = OperatorState::from_terms(
            3,
            &[
                (PauliString::parse_for(3, "X0").unwrap(), a),
                (PauliString::parse_for(3, "X0 X1 X2").unwrap(), a),
            ],
        )
        .unwrap();
        let mu: f64 = 0.6;
        let expect = 0.5 * ((-mu).exp() + (-3.0 * mu).exp());
        assert!((oracle_generating_function(&mix, mu).unwrap() - expect).abs() < 1e-14);
        assert!((oracle_generating_function(&mix, 0.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn t_zero_and_mu_zero() {
        let mut cfg = exact_cfg(4, 0.0, 0.8, 5000, 3);
        cfg.initial_operator = Some("X0".into());
        let r = run_protocol(&cfg).unwrap();
        assert!((r.f_oracle - 0.5 * (1.0 + (-0.8f64).exp())).abs() < 1e-14);
        assert!((r.f_estimate - r.f_oracle).abs() < 3.0 * r.stderr);

        let r0 = run_protocol(&exact_cfg(4, 1.0, 0.0, 500, 3)).unwrap();
        assert_eq!(r0.stderr, 0.0);
        assert!((r0.f_estimate - 1.0).abs() < 1e-8);
    }

    #[test]
    fn noisy_mu_zero_gives_echo() {
        let mut cfg = exact_cfg(4, 1.0, 0.0, 100, 5);
        cfg.backend = ProtocolBackend::Exact {
            hamiltonian: "chaotic_ising".into(),
            terms: None,
            t: 1.0,
            epsilon: 0.1,
            tol: 1e-10,
        };
        let r = run_protocol(&cfg).unwrap();
        assert_eq!(r.stderr, 0.0);
        assert!((r.f_estimate - 0.5 * (1.0 + r.echo)).abs() < 1e-12);
        assert!(r.echo < 1.0);
    }

    #[test]
    fn circuit_backend_unbiased() {
        let cfg = ProtocolConfig {
            n: 16,
            mu: 0.3,
            shots: 20_000,
            seed: 9,
            initial_operator: None,
            backend: ProtocolBackend::Circuit {
                geometry: Geometry::Brickwork1d,
                layers: 4,
                epsilon: 0.02,
            },
        };
        let r = run_protocol(&cfg).unwrap();
        assert!((r.f_estimate - r.f_oracle).abs() < 4.0 * r.stderr, "{r:?}");
        assert!((0.0..=1.0).contains(&r.f_estimate));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            run_protocol(&exact_cfg(12, 1.0, 0.5, 10, 1)),
            Err(ProtocolError::BackendLimit { .. })
        ));
        assert!(matches!(run_protocol(&exact_cfg(4, 1.0, 0.5, 0, 1)), Err(ProtocolError::NoShots)));
        assert!(matches!(run_protocol(&exact_cfg(4, 1.0, -0.5, 10, 1)), Err(ProtocolError::BadMu(_))));
    }

    #[test]
    fn csv_round_trip() {
        let rs = vec![ProtocolResult {
            mu: 0.5,
            f_estimate: 0.61,
            stderr: 0.01,
            oracle: 0.2,
            f_oracle: 0.6,
            echo: 1.0,
            shots: 10,
        }];
        let mut buf = Vec::new();
        write_results_csv(&rs, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("mu,F_estimate,stderr,oracle\n"));
        let rows = read_results_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![(0.5, 0.61, 0.01, 0.6)]);
    }
}
