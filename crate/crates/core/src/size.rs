//! Operator-size distributions and their moments.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Pauli, PauliString};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SizeError {
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("moments undefined for a distribution with zero normalization")]
    ZeroNormalization,
    #[error("negative or non-finite mass {value} at size {size}")]
    BadMass { size: usize, value: f64 },
    #[error("generating function needs mu >= 0, got {0}")]
    NegativeMu(f64),
    #[error("OTOC map incomplete: missing {pauli:?} on site {site}")]
    IncompleteOtocs { site: usize, pauli: Pauli },
    #[error("trajectory on {got} qubits in an ensemble of {expected}")]
    QubitMismatch { expected: usize, got: usize },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for SizeError {
    fn from(e: csv::Error) -> Self {
        SizeError::Csv(e.to_string())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Unnormalized size histogram `P(S)`, `S = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    n: usize,
    mass: Vec<f64>,
}

impl SizeDistribution {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            mass: vec![0.0; n + 1],
        }
    }

    /// `mass[S]` for `S = 0..mass.len()`; `n` is `mass.len() - 1`.
    pub fn from_mass(mass: Vec<f64>) -> Result<Self, SizeError> {
        for (size, &value) in mass.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(SizeError::BadMass { size, value });
            }
        }
        let n = mass.len().saturating_sub(1);
        Ok(Self { n, mass })
    }

    pub fn delta(n: usize, size: usize) -> Self {
        let mut d = Self::zeros(n);
        d.mass[size] = 1.0;
        d
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub(crate) fn add_mass(&mut self, size: usize, value: f64) {
        self.mass[size] += value;
    }

    /// `N = sum_S P(S)`.
    pub fn normalization(&self) -> f64 {
        compensated_sum(self.mass.iter().copied())
    }

    fn raw_moments(&self) -> Result<(f64, f64, f64), SizeError> {
        let norm = self.normalization();
        if norm <= 0.0 {
            return Err(SizeError::ZeroNormalization);
        }
        let mut m1 = KahanSum::default();
        let mut m2 = KahanSum::default();
        for (s, &p) in self.mass.iter().enumerate() {
            let s = s as f64;
            m1.add(s * p);
            m2.add(s * s * p);
        }
        Ok((norm, m1.value() / norm, m2.value() / norm))
    }

    pub fn mean_size(&self) -> Result<f64, SizeError> {
        self.raw_moments().map(|(_, m1, _)| m1)
    }

    pub fn variance(&self) -> Result<f64, SizeError> {
        let (_, m1, m2) = self.raw_moments()?;
        // Second moment about the mean, recomputed to avoid cancellation.
        let norm = self.normalization();
        let var = compensated_sum(
            self.mass
                .iter()
                .enumerate()
                .map(|(s, &p)| (s as f64 - m1).powi(2) * p),
        ) / norm;
        debug_assert!((var - (m2 - m1 * m1)).abs() <= 1e-6 * m2.max(1.0));
        Ok(var.max(0.0))
    }

    /// Normalized generating function `sum_S (P(S)/N) e^{-mu S}`.
    pub fn generating_function(&self, mu: f64) -> Result<f64, SizeError> {
        if mu < 0.0 || mu.is_nan() {
            return Err(SizeError::NegativeMu(mu));
        }
        let norm = self.normalization();
        if norm <= 0.0 {
            return Err(SizeError::ZeroNormalization);
        }
        Ok(compensated_sum(
            self.mass
                .iter()
                .enumerate()
                .map(|(s, &p)| p * (-mu * s as f64).exp()),
        ) / norm)
    }

    /// `sum_S P(S) e^{-mu S}`, the generating function times `N`.
    pub fn unnormalized_generating_function(&self, mu: f64) -> Result<f64, SizeError> {
        Ok(self.generating_function(mu)? * self.normalization())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            mass: self.mass.iter().map(|m| m * factor).collect(),
        }
    }

    /// Writes `S,mass` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SizeError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["S", "mass"])?;
        for (s, m) in self.mass.iter().enumerate() {
            w.write_record([s.to_string(), format!("{m:e}")])?;
        }
        w.flush().map_err(|e| SizeError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SizeError> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(rename = "S")]
            s: usize,
            mass: f64,
        }
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut mass = Vec::new();
        for row in r.deserialize() {
            let row: Row = row?;
            if row.s >= mass.len() {
                mass.resize(row.s + 1, 0.0);
            }
            mass[row.s] = row.mass;
        }
        Self::from_mass(mass)
    }
}

/// Monte-Carlo representation of `sum_R |c_R|^2 R`: each entry is a
/// trajectory's Pauli string and the log of its mass weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEnsemble {
    n: usize,
    entries: Vec<(PauliString, f64)>,
}

impl WeightedEnsemble {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    /// `count` copies of `initial` with unit weight.
    pub fn replicate(initial: &PauliString, count: usize) -> Self {
        Self {
            n: initial.num_qubits(),
            entries: vec![(initial.clone(), 0.0); count],
        }
    }

    pub fn push(&mut self, string: PauliString, log_weight: f64) -> Result<(), SizeError> {
        if string.num_qubits() != self.n {
            return Err(SizeError::QubitMismatch {
                expected: self.n,
                got: string.num_qubits(),
            });
        }
        self.entries.push((string, log_weight));
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(PauliString, f64)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(PauliString, f64)] {
        &mut self.entries
    }

    /// Ensemble estimate of `N`: the mean trajectory weight.
    pub fn mean_weight(&self) -> Result<f64, SizeError> {
        if self.entries.is_empty() {
            return Err(SizeError::EmptyEnsemble);
        }
        Ok(compensated_sum(self.entries.iter().map(|(_, lw)| lw.exp())) / self.entries.len() as f64)
    }

    /// `P(S) = (1/M) sum_{traj: size = S} w_traj`.
    pub fn size_distribution(&self) -> Result<SizeDistribution, SizeError> {
        if self.entries.is_empty() {
            return Err(SizeError::EmptyEnsemble);
        }
        let mut acc = vec![KahanSum::default(); self.n + 1];
        for (s, lw) in &self.entries {
            acc[s.size()].add(lw.exp());
        }
        let m = self.entries.len() as f64;
        SizeDistribution::from_mass(acc.iter().map(|a| a.value() / m).collect())
    }
}

impl From<Vec<(PauliString, f64)>> for WeightedEnsemble {
    fn from(entries: Vec<(PauliString, f64)>) -> Self {
        let n = entries.first().map_or(0, |(s, _)| s.num_qubits());
        Self { n, entries }
    }
}

/// Site-resolved single-Pauli key for OTOC maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SitePauli {
    pub site: usize,
    pub pauli: Pauli,
}

/// Average size from normalized OTOCs `<M P_i M P_i>/<M M>` over all `3n`
/// non-identity single-site Paulis: `(1/4) sum (1 - otoc)`. Identity terms
/// contribute zero and may be absent from the map.
pub fn mean_size_from_otocs(n: usize, otocs: &BTreeMap<SitePauli, f64>) -> Result<f64, SizeError> {
    let mut acc = KahanSum::default();
    for site in 0..n {
        for pauli in Pauli::NON_IDENTITY {
            let v = otocs
                .get(&SitePauli { site, pauli })
                .ok_or(SizeError::IncompleteOtocs { site, pauli })?;
            acc.add(1.0 - v);
        }
    }
    Ok(acc.value() / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn from_ensemble_examples() {
        let x = PauliString::parse_for(4, "X0").unwrap();
        let d = WeightedEnsemble::replicate(&x, 1).size_distribution().unwrap();
        assert_eq!(d.mass(), &[0.0, 1.0, 0.0, 0.0, 0.0]);

        let mut e = WeightedEnsemble::new(4);
        e.push(x.clone(), 0.0).unwrap();
        e.push(PauliString::parse_for(4, "X0 Y1 Z2").unwrap(), -2.0).unwrap();
        let d = e.size_distribution().unwrap();
        assert!(approx(d.mass()[1], 0.5, 1e-15));
        assert!(approx(d.mass()[3], (-2.0f64).exp() / 2.0, 1e-15));
        assert!(approx(d.normalization(), 0.5 + (-2.0f64).exp() / 2.0, 1e-15));
        assert!(approx(d.normalization(), e.mean_weight().unwrap(), 1e-15));
    }

    #[test]
    fn empty_ensemble_is_error() {
        let e = WeightedEnsemble::new(3);
        assert_eq!(e.size_distribution(), Err(SizeError::EmptyEnsemble));
        assert_eq!(e.mean_weight(), Err(SizeError::EmptyEnsemble));
    }

    #[test]
    fn two_outcome_sampler_histogram() {
        // Binomial oracle: sizes 1 (p = 0.3) and 2 (p = 0.7).
        let m = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = PauliString::parse_for(3, "X0").unwrap();
        let two = PauliString::parse_for(3, "X0 Z1").unwrap();
        let mut e = WeightedEnsemble::new(3);
        for _ in 0..m {
            let s = if rng.random::<f64>() < 0.3 { &one } else { &two };
            e.push(s.clone(), 0.0).unwrap();
        }
        let d = e.size_distribution().unwrap();
        let sigma = (0.3 * 0.7 / m as f64).sqrt();
        assert!((d.mass()[1] - 0.3).abs() < 4.0 * sigma);
        assert!((d.mass()[2] - 0.7).abs() < 4.0 * sigma);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(SizeDistribution::delta(3, 1).normalization(), 1.0);
        assert_eq!(SizeDistribution::zeros(3).normalization(), 0.0);
    }

    #[test]
    fn moment_examples() {
        let d = SizeDistribution::delta(5, 3);
        assert_eq!(d.mean_size().unwrap(), 3.0);
        assert_eq!(d.variance().unwrap(), 0.0);

        let d = SizeDistribution::from_mass(vec![0.5, 0.0, 0.5]).unwrap();
        assert!(approx(d.mean_size().unwrap(), 1.0, 1e-15));
        assert!(approx(d.variance().unwrap(), 1.0, 1e-15));

        let d = SizeDistribution::from_mass(vec![0.0, 0.2, 0.0, 0.2]).unwrap();
        assert!(approx(d.mean_size().unwrap(), 2.0, 1e-15));

        assert_eq!(
            SizeDistribution::zeros(2).mean_size(),
            Err(SizeError::ZeroNormalization)
        );
        assert_eq!(
            SizeDistribution::zeros(2).variance(),
            Err(SizeError::ZeroNormalization)
        );
    }

    #[test]
    fn generating_function_examples() {
        let d = SizeDistribution::from_mass(vec![0.1, 0.4, 0.2]).unwrap();
        assert_eq!(d.generating_function(0.0).unwrap(), 1.0);
        let d = SizeDistribution::delta(2, 1);
        assert!(approx(d.generating_function(2f64.ln()).unwrap(), 0.5, 1e-15));
        let d = SizeDistribution::from_mass(vec![0.0, 0.5, 0.5]).unwrap();
        let want = ((-1f64).exp() + (-2f64).exp()) / 2.0;
        assert!(approx(d.generating_function(1.0).unwrap(), want, 1e-15));
        assert!(d.generating_function(-0.1).is_err());
        assert!(SizeDistribution::zeros(2).generating_function(0.1).is_err());
    }

    #[test]
    fn otoc_route_examples() {
        let mut otocs = BTreeMap::new();
        otocs.insert(SitePauli { site: 0, pauli: Pauli::X }, 1.0);
        otocs.insert(SitePauli { site: 0, pauli: Pauli::Y }, -1.0);
        otocs.insert(SitePauli { site: 0, pauli: Pauli::Z }, -1.0);
        assert_eq!(mean_size_from_otocs(1, &otocs).unwrap(), 1.0);

        let all_one: BTreeMap<_, _> = (0..3)
            .flat_map(|site| Pauli::NON_IDENTITY.map(|pauli| (SitePauli { site, pauli }, 1.0)))
            .collect();
        assert_eq!(mean_size_from_otocs(3, &all_one).unwrap(), 0.0);
        assert!(matches!(
            mean_size_from_otocs(4, &all_one),
            Err(SizeError::IncompleteOtocs { site: 3, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let d = SizeDistribution::from_mass(vec![0.0, 0.25, 1e-13, 0.5]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("S,mass\n"));
        let back = SizeDistribution::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rejects_negative_mass() {
        assert!(SizeDistribution::from_mass(vec![0.1, -0.2]).is_err());
    }

    proptest! {
        #[test]
        fn generating_function_monotone_convex(mass in prop::collection::vec(0.0f64..1.0, 2..12), mu in 0.0f64..3.0) {
            prop_assume!(mass.iter().sum::<f64>() > 1e-6);
            let d = SizeDistribution::from_mass(mass).unwrap();
            let h = 1e-3;
            let g0 = d.generating_function(mu).unwrap();
            let g1 = d.generating_function(mu + h).unwrap();
            let g2 = d.generating_function(mu + 2.0 * h).unwrap();
            prop_assert!(g1 <= g0 + 1e-15);
            prop_assert!(g0 - 2.0 * g1 + g2 >= -1e-13);
            prop_assert!(g0 > 0.0 && g0 <= 1.0 + 1e-15);
            prop_assert_eq!(d.generating_function(0.0).unwrap(), 1.0);
        }

        #[test]
        fn moments_scale_invariant(mass in prop::collection::vec(0.0f64..1.0, 2..12)) {
            prop_assume!(mass.iter().sum::<f64>() > 1e-6);
            let d = SizeDistribution::from_mass(mass).unwrap();
            let s = d.scaled(0.37);
            prop_assert!((d.mean_size().unwrap() - s.mean_size().unwrap()).abs() < 1e-12);
            prop_assert!((d.variance().unwrap() - s.variance().unwrap()).abs() < 1e-12);
        }
    }
}
