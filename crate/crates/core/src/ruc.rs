//! Monte-Carlo operator spreading in noisy random unitary circuits.
//!
//! Each trajectory is a single Pauli string plus a log mass weight. A
//! two-qubit gate acts through its circuit-averaged Pauli transfer rule: the
//! identity pair stays put, any other pair jumps to one of the 15 non-identity
//! pairs uniformly. Single-qubit depolarizing noise in the Heisenberg picture
//! leaves the string alone and multiplies its amplitude by `(1 - eps)` per
//! non-identity site, so the log mass weight drops by `2 S ln(1 - eps)`.
//!
//! Random streams are derived from `(seed, step, trajectory)`, and reductions
//! run in trajectory order, so results do not depend on thread count.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Pauli, PauliError, PauliString};
use crate::rng;
use crate::size::{SizeDistribution, SizeError, WeightedEnsemble};

/// Default cap on trajectory storage.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RucError {
    #[error("invalid circuit config: {0}")]
    InvalidConfig(String),
    #[error("trajectory storage needs {needed} bytes, budget is {budget}")]
    ResourceBudget { needed: u64, budget: u64 },
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Size(#[from] SizeError),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for RucError {
    fn from(e: csv::Error) -> Self {
        RucError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Brickwork1d,
    AllToAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    pub n: usize,
    pub geometry: Geometry,
    /// Per-qubit error per unit time.
    pub epsilon: f64,
    /// Brickwork layers, or units of time for all-to-all.
    pub layers: usize,
    pub trajectories: usize,
    pub seed: u64,
    /// Dense (`"IIXII"`) or sparse (`"X2"`) text form; X on the central site if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_operator: Option<String>,
    /// All-to-all only; defaults to `n / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gates_per_unit_time: Option<usize>,
    /// All-to-all only: observations per unit time (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_unit_time: Option<usize>,
    /// Resample when the effective sample size falls below this fraction of
    /// the trajectory count. Defaults to 0.5 for all-to-all and off for 1D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample_threshold: Option<f64>,
    /// Resampling targets weight times `size^-guide_exponent`, which keeps
    /// more walkers at small sizes; copies carry the compensating factor.
    /// Defaults to 1 for all-to-all and 0 for 1D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guide_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_budget_bytes: Option<u64>,
}

impl CircuitConfig {
    pub fn new(n: usize, geometry: Geometry, epsilon: f64, layers: usize, trajectories: usize, seed: u64) -> Self {
        Self {
            n,
            geometry,
            epsilon,
            layers,
            trajectories,
            seed,
            initial_operator: None,
            gates_per_unit_time: None,
            samples_per_unit_time: None,
            resample_threshold: None,
            guide_exponent: None,
            memory_budget_bytes: None,
        }
    }

    pub fn initial_operator(&self) -> Result<PauliString, RucError> {
        let s = match &self.initial_operator {
            Some(text) => PauliString::parse_for(self.n, text)?,
            None => PauliString::single(self.n, self.n / 2, Pauli::X)?,
        };
        if s.num_qubits() != self.n {
            return Err(RucError::InvalidConfig(format!(
                "initial operator has {} qubits, config has {}",
                s.num_qubits(),
                self.n
            )));
        }
        Ok(s)
    }

    pub fn gates_per_unit_time(&self) -> usize {
        self.gates_per_unit_time.unwrap_or((self.n / 2).max(1))
    }

    pub fn samples_per_unit_time(&self) -> usize {
        match self.geometry {
            Geometry::Brickwork1d => 1,
            Geometry::AllToAll => self.samples_per_unit_time.unwrap_or(1).max(1),
        }
    }

    pub fn resample_threshold(&self) -> Option<f64> {
        match (self.resample_threshold, self.geometry) {
            (Some(r), _) if r > 0.0 => Some(r),
            (Some(_), _) => None,
            (None, Geometry::AllToAll) => Some(0.5),
            (None, Geometry::Brickwork1d) => None,
        }
    }

    pub fn guide_exponent(&self) -> f64 {
        match (self.guide_exponent, self.geometry) {
            (Some(a), _) => a,
            (None, Geometry::AllToAll) => 1.0,
            (None, Geometry::Brickwork1d) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), RucError> {
        if self.n < 2 {
            return Err(RucError::InvalidConfig("need at least 2 qubits".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(RucError::InvalidConfig(format!("epsilon {} not in [0, 1)", self.epsilon)));
        }
        if self.trajectories == 0 {
            return Err(RucError::InvalidConfig("trajectories must be >= 1".into()));
        }
        if self.geometry == Geometry::AllToAll && self.gates_per_unit_time() == 0 {
            return Err(RucError::InvalidConfig("gates_per_unit_time must be >= 1".into()));
        }
        if !(self.guide_exponent() >= 0.0 && self.guide_exponent().is_finite()) {
            return Err(RucError::InvalidConfig(format!("guide_exponent {} must be >= 0", self.guide_exponent())));
        }
        if let Some(r) = self.resample_threshold {
            if r > 1.0 {
                return Err(RucError::InvalidConfig(format!("resample_threshold {r} > 1")));
            }
        }
        self.initial_operator()?;
        let words = self.n.div_ceil(64) as u64;
        let needed = self.trajectories as u64 * (2 * 2 * words * 8 + 64);
        let budget = self.memory_budget_bytes.unwrap_or(DEFAULT_MEMORY_BUDGET);
        if needed > budget {
            return Err(RucError::ResourceBudget { needed, budget });
        }
        Ok(())
    }
}

/// Restriction of a string to an ordered site pair, packed as
/// `code(a) | code(b) << 2` with `code = x | z << 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TwoSitePauli(u8);

impl TwoSitePauli {
    pub const IDENTITY: TwoSitePauli = TwoSitePauli(0);

    pub fn new(a: Pauli, b: Pauli) -> Self {
        let code = |p: Pauli| {
            let (x, z) = p.bits();
            x as u8 | (z as u8) << 1
        };
        TwoSitePauli(code(a) | code(b) << 2)
    }

    pub fn from_code(code: u8) -> Self {
        TwoSitePauli(code & 0xF)
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn sites(self) -> (Pauli, Pauli) {
        let dec = |c: u8| Pauli::from_bits(c & 1 == 1, c & 2 == 2);
        (dec(self.0 & 3), dec(self.0 >> 2))
    }

    pub fn is_identity(self) -> bool {
        self.0 == 0
    }

    pub fn size(self) -> usize {
        (self.0 & 3 != 0) as usize + (self.0 >> 2 != 0) as usize
    }
}

/// Circuit-averaged two-qubit gate acting on a Pauli pair.
#[inline]
pub fn gate_transfer<R: Rng + ?Sized>(pair: TwoSitePauli, rng: &mut R) -> TwoSitePauli {
    if pair.is_identity() {
        pair
    } else {
        TwoSitePauli(rng.random_range(1..16u8))
    }
}

/// Heisenberg-picture depolarizing layer on one trajectory.
#[inline]
pub fn apply_noise_layer(traj: &mut (PauliString, f64), epsilon: f64) {
    if epsilon > 0.0 {
        traj.1 += 2.0 * traj.0.size() as f64 * (-epsilon).ln_1p();
    }
}

#[inline]
fn apply_gate<R: Rng + ?Sized>(s: &mut PauliString, a: usize, b: usize, rng: &mut R) -> isize {
    let before = TwoSitePauli(s.site_code(a) | s.site_code(b) << 2);
    if before.is_identity() {
        return 0;
    }
    let after = gate_transfer(before, rng);
    s.set_site_code(a, after.0 & 3);
    s.set_site_code(b, after.0 >> 2);
    after.size() as isize - before.size() as isize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerParity {
    Even,
    Odd,
}

impl LayerParity {
    pub fn of_layer(layer: usize) -> Self {
        if layer.is_multiple_of(2) {
            LayerParity::Even
        } else {
            LayerParity::Odd
        }
    }

    fn offset(self) -> usize {
        match self {
            LayerParity::Even => 0,
            LayerParity::Odd => 1,
        }
    }
}

/// One brickwork layer (open chain) on a single trajectory with one layer of
/// noise split symmetrically around the gates: half of the damping is
/// charged at the size entering the layer and half at the size leaving it,
/// so the accumulated log-weight is a trapezoidal integral of the size.
pub fn brickwork_layer<R: Rng + ?Sized>(traj: &mut (PauliString, f64), parity: LayerParity, epsilon: f64, rng: &mut R) {
    let half = (-epsilon).ln_1p();
    if epsilon > 0.0 {
        traj.1 += half * traj.0.size() as f64;
    }
    let n = traj.0.num_qubits();
    let mut a = parity.offset();
    while a + 1 < n {
        apply_gate(&mut traj.0, a, a + 1, rng);
        a += 2;
    }
    if epsilon > 0.0 {
        traj.1 += half * traj.0.size() as f64;
    }
}

/// Fraction of trivial gates above which they are skipped in bulk.
const SKIP_AHEAD_ABOVE: f64 = 0.5;

/// `gates` random-pair gates on a single trajectory with noise spread evenly
/// across them: each gate is followed by a `1/gates_per_unit_time` slice of
/// the per-unit-time damping.
///
/// A gate whose pair misses the support acts trivially. While most gates
/// do, runs of them are drawn at once from the geometric distribution and
/// the next gate is drawn directly among the pairs that touch the support.
pub fn all_to_all_gates<R: Rng + ?Sized>(
    traj: &mut (PauliString, f64),
    gates: usize,
    gates_per_unit_time: usize,
    epsilon: f64,
    rng: &mut R,
) {
    let n = traj.0.num_qubits();
    let pairs = (n * (n - 1)) as f64;
    let mut size = traj.0.size();
    let mut size_time = 0.0f64;
    let mut left = gates;
    while left > 0 && size > 0 {
        let outside = n - size;
        let trivial = (outside * outside.saturating_sub(1)) as f64 / pairs;
        if trivial < SKIP_AHEAD_ABOVE {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            size = (size as isize + apply_gate(&mut traj.0, a, b, rng)) as usize;
            size_time += size as f64;
            left -= 1;
            continue;
        }
        let skip = if trivial > 0.0 {
            let u: f64 = rng.random();
            ((-u).ln_1p() / trivial.ln()).floor().min(left as f64) as usize
        } else {
            0
        };
        size_time += (skip * size) as f64;
        left -= skip;
        if left == 0 {
            break;
        }
        let both = (size * (size - 1)) as f64;
        let one = (2 * size * outside) as f64;
        let (a, b) = if rng.random::<f64>() * (both + one) < both {
            let i = rng.random_range(0..size);
            let mut j = rng.random_range(0..size - 1);
            if j >= i {
                j += 1;
            }
            (traj.0.support_site(i), traj.0.support_site(j))
        } else {
            let a = traj.0.support_site(rng.random_range(0..size));
            let b = loop {
                let c = rng.random_range(0..n);
                if traj.0.site_code(c) == 0 {
                    break c;
                }
            };
            (a, b)
        };
        size = (size as isize + apply_gate(&mut traj.0, a, b, rng)) as usize;
        size_time += size as f64;
        left -= 1;
    }
    if epsilon > 0.0 {
        traj.1 += 2.0 * (-epsilon).ln_1p() * size_time / gates_per_unit_time as f64;
    }
}

/// Applies one brickwork layer to every trajectory of the ensemble.
pub fn step_brickwork(e: &mut WeightedEnsemble, parity: LayerParity, epsilon: f64, seed: u64, step: u64) {
    e.entries_mut().par_iter_mut().enumerate().for_each(|(i, traj)| {
        let mut r = rng::stream(seed, step, i as u64);
        brickwork_layer(traj, parity, epsilon, &mut r);
    });
}

/// Applies one unit of all-to-all time (`gates_per_unit_time` gates).
pub fn step_all_to_all(e: &mut WeightedEnsemble, gates_per_unit_time: usize, epsilon: f64, seed: u64, step: u64) {
    e.entries_mut().par_iter_mut().enumerate().for_each(|(i, traj)| {
        let mut r = rng::stream(seed, step, i as u64);
        all_to_all_gates(traj, gates_per_unit_time, gates_per_unit_time, epsilon, &mut r);
    });
}

/// Weighted observables of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    pub mean_size: f64,
    pub variance: f64,
    pub log_echo: f64,
    pub stderr_mean_size: f64,
    /// Kish effective sample size `(sum w)^2 / sum w^2`.
    pub effective_samples: f64,
}

pub fn ensemble_stats(e: &WeightedEnsemble) -> Result<EnsembleStats, RucError> {
    let entries = e.entries();
    if entries.is_empty() {
        return Err(SizeError::EmptyEnsemble.into());
    }
    let max_lw = entries.iter().map(|(_, lw)| *lw).fold(f64::NEG_INFINITY, f64::max);
    let mut sw = 0.0;
    let mut sw2 = 0.0;
    let mut sws = 0.0;
    for (s, lw) in entries {
        let w = (lw - max_lw).exp();
        sw += w;
        sw2 += w * w;
        sws += w * s.size() as f64;
    }
    let mean = sws / sw;
    let mut var = 0.0;
    let mut se2 = 0.0;
    for (s, lw) in entries {
        let w = (lw - max_lw).exp();
        let d = s.size() as f64 - mean;
        var += w * d * d;
        se2 += w * w * d * d;
    }
    Ok(EnsembleStats {
        mean_size: mean,
        variance: var / sw,
        log_echo: max_lw + (sw / entries.len() as f64).ln(),
        stderr_mean_size: se2.sqrt() / sw,
        effective_samples: sw * sw / sw2,
    })
}

/// Log of the resampling target `w * size^-alpha` for each walker.
fn guided_log_weights(e: &WeightedEnsemble, alpha: f64) -> Vec<f64> {
    e.entries()
        .iter()
        .map(|(s, lw)| lw - alpha * (s.size().max(1) as f64).ln())
        .collect()
}

/// Effective sample size of the guided weights.
pub fn guided_effective_samples(e: &WeightedEnsemble, alpha: f64) -> f64 {
    let g = guided_log_weights(e, alpha);
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (s1, s2) = g.iter().fold((0.0, 0.0), |(a, b), v| {
        let w = (v - max).exp();
        (a + w, b + w * w)
    });
    s1 * s1 / s2
}

/// Systematic resampling of the walkers, sorted by size, with probabilities
/// proportional to `w * size^-alpha`. A copy of walker `i` gets weight
/// `mean(w * size^-alpha) * size_i^alpha`, so every weighted average is
/// preserved in expectation; with `alpha = 0` all copies carry the mean
/// weight and the echo estimate is preserved exactly.
pub fn resample(e: &mut WeightedEnsemble, alpha: f64, seed: u64, step: u64) {
    let m = e.len();
    if m == 0 {
        return;
    }
    let g = guided_log_weights(e, alpha);
    let entries = e.entries();
    let max_g = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = g.iter().map(|v| (v - max_g).exp()).collect();
    let total: f64 = weights.iter().sum();
    let log_mean = max_g + (total / m as f64).ln();
    let mut r = rng::stream(seed ^ 0x5EED_0F5A_4D1E, step, u64::MAX);
    let u0: f64 = r.random::<f64>();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| entries[i].0.size());
    let mut picks = Vec::with_capacity(m);
    let mut cum = 0.0;
    let mut j = 0usize;
    for &i in &order {
        cum += weights[i] / total * m as f64;
        while j < m && (j as f64 + u0) < cum {
            picks.push(i);
            j += 1;
        }
    }
    while picks.len() < m {
        picks.push(order[m - 1]);
    }
    let new: Vec<(PauliString, f64)> = picks
        .into_iter()
        .map(|i| {
            let s = &entries[i].0;
            (s.clone(), log_mean + alpha * (s.size().max(1) as f64).ln())
        })
        .collect();
    *e = WeightedEnsemble::from(new);
}

/// Stepwise driver for [`run`].
pub struct Simulation {
    config: CircuitConfig,
    ensemble: WeightedEnsemble,
    steps_done: usize,
    resamples: usize,
}

impl Simulation {
    pub fn new(config: CircuitConfig) -> Result<Self, RucError> {
        config.validate()?;
        let init = config.initial_operator()?;
        let ensemble = WeightedEnsemble::replicate(&init, config.trajectories);
        Ok(Self {
            config,
            ensemble,
            steps_done: 0,
            resamples: 0,
        })
    }

    pub fn config(&self) -> &CircuitConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &WeightedEnsemble {
        &self.ensemble
    }

    /// Number of recorded sub-steps per unit time.
    pub fn substeps(&self) -> usize {
        self.config.samples_per_unit_time()
    }

    /// Current time in units of layers (1D) or `gates_per_unit_time` gates.
    pub fn time(&self) -> f64 {
        self.steps_done as f64 / self.substeps() as f64
    }

    pub fn resample_count(&self) -> usize {
        self.resamples
    }

    /// Advances one layer (1D) or one sampling interval (all-to-all).
    pub fn step(&mut self) {
        let cfg = &self.config;
        let step = self.steps_done as u64;
        match cfg.geometry {
            Geometry::Brickwork1d => {
                step_brickwork(
                    &mut self.ensemble,
                    LayerParity::of_layer(self.steps_done),
                    cfg.epsilon,
                    cfg.seed,
                    step,
                );
            }
            Geometry::AllToAll => {
                let g = cfg.gates_per_unit_time();
                let k = self.substeps();
                let j = self.steps_done % k;
                let gates = g * (j + 1) / k - g * j / k;
                let (eps, seed) = (cfg.epsilon, cfg.seed);
                self.ensemble.entries_mut().par_iter_mut().enumerate().for_each(|(i, traj)| {
                    let mut r = rng::stream(seed, step, i as u64);
                    all_to_all_gates(traj, gates, g, eps, &mut r);
                });
            }
        }
        self.steps_done += 1;
        if let Some(threshold) = cfg.resample_threshold() {
            let alpha = cfg.guide_exponent();
            if guided_effective_samples(&self.ensemble, alpha) < threshold * self.ensemble.len() as f64 {
                resample(&mut self.ensemble, alpha, cfg.seed, step);
                self.resamples += 1;
            }
        }
    }

    pub fn stats(&self) -> Result<EnsembleStats, RucError> {
        ensemble_stats(&self.ensemble)
    }

    pub fn size_distribution(&self) -> Result<SizeDistribution, RucError> {
        Ok(self.ensemble.size_distribution()?)
    }

    pub fn total_steps(&self) -> usize {
        self.config.layers * self.substeps()
    }
}

/// Measured `S(t)`, `dS(t)^2`, `N(t)` with Monte-Carlo errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub time: Vec<f64>,
    pub mean_size: Vec<f64>,
    pub variance: Vec<f64>,
    pub echo: Vec<f64>,
    pub log_echo: Vec<f64>,
    pub stderr_mean_size: Vec<f64>,
}

impl GrowthCurve {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn push(&mut self, t: f64, s: &EnsembleStats) {
        self.time.push(t);
        self.mean_size.push(s.mean_size);
        self.variance.push(s.variance);
        self.echo.push(s.log_echo.exp());
        self.log_echo.push(s.log_echo);
        self.stderr_mean_size.push(s.stderr_mean_size);
    }

    /// CSV columns `t,mean_size,var_size,echo,stderr,log_echo`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RucError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "mean_size", "var_size", "echo", "stderr", "log_echo"])?;
        for i in 0..self.len() {
            w.write_record([
                format!("{}", self.time[i]),
                format!("{:e}", self.mean_size[i]),
                format!("{:e}", self.variance[i]),
                format!("{:e}", self.echo[i]),
                format!("{:e}", self.stderr_mean_size[i]),
                format!("{:e}", self.log_echo[i]),
            ])?;
        }
        w.flush().map_err(|e| RucError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RucError> {
        #[derive(Deserialize)]
        struct Row {
            t: f64,
            mean_size: f64,
            var_size: f64,
            echo: f64,
            stderr: f64,
            log_echo: Option<f64>,
        }
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut c = GrowthCurve::default();
        for row in r.deserialize() {
            let row: Row = row?;
            c.time.push(row.t);
            c.mean_size.push(row.mean_size);
            c.variance.push(row.var_size);
            c.echo.push(row.echo);
            c.stderr_mean_size.push(row.stderr);
            c.log_echo.push(row.log_echo.unwrap_or_else(|| row.echo.ln()));
        }
        Ok(c)
    }
}

/// Evolves all trajectories for `config.layers` units of time and records
/// observables at `t = 0` and after every step.
pub fn run(config: &CircuitConfig) -> Result<GrowthCurve, RucError> {
    run_with_ensemble(config).map(|(c, _)| c)
}

pub fn run_with_ensemble(config: &CircuitConfig) -> Result<(GrowthCurve, WeightedEnsemble), RucError> {
    let mut sim = Simulation::new(config.clone())?;
    let mut curve = GrowthCurve::default();
    curve.push(0.0, &sim.stats()?);
    for _ in 0..sim.total_steps() {
        sim.step();
        curve.push(sim.time(), &sim.stats()?);
    }
    Ok((curve, sim.ensemble))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_pair_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(gate_transfer(TwoSitePauli::IDENTITY, &mut rng), TwoSitePauli::IDENTITY);
        }
    }

    #[test]
    fn non_identity_pair_is_uniform_over_15() {
        let m = 100_000;
        let mut counts = [0usize; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = TwoSitePauli::new(Pauli::X, Pauli::I);
        for _ in 0..m {
            counts[gate_transfer(input, &mut rng).code() as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        let p = 1.0 / 15.0;
        let sigma = (m as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 - m as f64 * p).abs() < 5.0 * sigma, "{c}");
        }
    }

    #[test]
    fn two_site_codes_round_trip() {
        for a in Pauli::ALL {
            for b in Pauli::ALL {
                let t = TwoSitePauli::new(a, b);
                assert_eq!(t.sites(), (a, b));
                assert_eq!(t.size(), (!a.is_identity()) as usize + (!b.is_identity()) as usize);
            }
        }
    }

    #[test]
    fn noise_layer_examples() {
        let mut t = (PauliString::identity(3).unwrap(), -0.25);
        apply_noise_layer(&mut t, 0.3);
        assert_eq!(t.1, -0.25);

        let mut t = (PauliString::parse_for(3, "X1").unwrap(), 0.0);
        apply_noise_layer(&mut t, 0.01);
        assert!((t.1 - 2.0 * 0.99f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_keeps_unit_weights() {
        let mut cfg = CircuitConfig::new(16, Geometry::Brickwork1d, 0.0, 12, 50, 7);
        cfg.initial_operator = Some("X8".into());
        let (curve, e) = run_with_ensemble(&cfg).unwrap();
        assert!(e.entries().iter().all(|(_, lw)| *lw == 0.0));
        assert!(curve.echo.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn sizes_bounded_and_identity_preserved() {
        let cfg = CircuitConfig::new(10, Geometry::AllToAll, 0.05, 8, 40, 3);
        let (_, e) = run_with_ensemble(&cfg).unwrap();
        assert!(e.entries().iter().all(|(s, _)| s.size() <= 10 && s.size() > 0));

        let mut cfg = CircuitConfig::new(10, Geometry::Brickwork1d, 0.05, 8, 5, 3);
        cfg.initial_operator = Some("IIIIIIIIII".into());
        let curve = run(&cfg).unwrap();
        assert!(curve.mean_size.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn echo_monotone_for_positive_noise() {
        for geometry in [Geometry::Brickwork1d, Geometry::AllToAll] {
            let cfg = CircuitConfig::new(40, geometry, 0.02, 15, 200, 11);
            let curve = run(&cfg).unwrap();
            for w in curve.log_echo.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{geometry:?}: {w:?}");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut cfg = CircuitConfig::new(30, Geometry::AllToAll, 0.03, 6, 64, 99);
        cfg.samples_per_unit_time = Some(3);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let other = CircuitConfig { seed: 100, ..cfg.clone() };
        assert_ne!(run(&cfg).unwrap(), run(&other).unwrap());
    }

    #[test]
    fn config_validation() {
        let ok = CircuitConfig::new(8, Geometry::Brickwork1d, 0.1, 2, 2, 0);
        assert!(ok.validate().is_ok());
        assert!(CircuitConfig { epsilon: 1.0, ..ok.clone() }.validate().is_err());
        assert!(CircuitConfig { epsilon: -0.1, ..ok.clone() }.validate().is_err());
        assert!(CircuitConfig { trajectories: 0, ..ok.clone() }.validate().is_err());
        assert!(CircuitConfig { initial_operator: Some("XX".into()), ..ok.clone() }
            .validate()
            .is_err());
        let huge = CircuitConfig {
            n: 1500,
            trajectories: 1_000_000,
            memory_budget_bytes: Some(1 << 20),
            ..ok
        };
        assert!(matches!(huge.validate(), Err(RucError::ResourceBudget { .. })));
    }

    #[test]
    fn resampling_preserves_echo_estimate() {
        let mut cfg = CircuitConfig::new(20, Geometry::AllToAll, 0.05, 1, 500, 5);
        cfg.resample_threshold = Some(1e-9);
        let mut sim = Simulation::new(cfg).unwrap();
        for _ in 0..4 {
            sim.step();
        }
        let before = sim.stats().unwrap();
        let mut e = sim.ensemble().clone();
        resample(&mut e, 0.0, 1, 2);
        let after = ensemble_stats(&e).unwrap();
        assert!((before.log_echo - after.log_echo).abs() < 1e-12);
        assert!((after.effective_samples - 500.0).abs() < 1e-9);
        assert_eq!(e.len(), 500);

        let mut guided = sim.ensemble().clone();
        resample(&mut guided, 1.0, 1, 2);
        assert_eq!(guided.len(), 500);
        assert!((guided_effective_samples(&guided, 1.0) - 500.0).abs() < 1e-9);
        for (s, lw) in guided.entries() {
            let g = lw - (s.size().max(1) as f64).ln();
            let g0 = guided.entries()[0].1 - (guided.entries()[0].0.size().max(1) as f64).ln();
            assert!((g - g0).abs() < 1e-12);
        }
    }

    #[test]
    fn growth_curve_csv_round_trip() {
        let cfg = CircuitConfig::new(12, Geometry::Brickwork1d, 0.01, 4, 20, 1);
        let curve = run(&cfg).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let back = GrowthCurve::read_csv(buf.as_slice()).unwrap();
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(String::from_utf8(buf).unwrap().starts_with("t,mean_size,var_size,echo,stderr,log_echo"));
    }
}
