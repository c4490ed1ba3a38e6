use super::{ExactError, Generator, HamiltonianSpec, LindbladSpec, OperatorState};
use crate::ode::{self, Options, Tolerance};
use crate::pauli::Pauli;
use crate::size::{KahanSum, SitePauli};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Denominator for the two-Hamiltonian OTOC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OtocNormalization {
    /// `<M1(t) M2(t)>`
    #[default]
    Overlap,
    /// `<M1(t) M1(t)>`
    SelfNorm,
}

fn commutation_sign(code: usize, n: usize, site: usize, p: Pauli) -> f64 {
    let (px, pz) = p.bits();
    let rx = (code >> site) & 1 == 1;
    let rz = (code >> (site + n)) & 1 == 1;
    if (px & rz) ^ (pz & rx) {
        -1.0
    } else {
        1.0
    }
}

/// `<A P_i B P_i>` for one site Pauli.
pub fn site_otoc(a: &OperatorState, b: &OperatorState, site: usize, p: Pauli) -> Result<f64, ExactError> {
    if a.n != b.n {
        return Err(ExactError::QubitMismatch(a.n, b.n));
    }
    let mut acc = KahanSum::default();
    for (code, (x, y)) in a.coeffs.iter().zip(&b.coeffs).enumerate() {
        if *x != 0.0 && *y != 0.0 {
            acc.add(x * y * commutation_sign(code, a.n, site, p));
        }
    }
    Ok(acc.value())
}

/// `(1/4) sum_{P in IXYZ} <A P_i B P_i>` for every site, unnormalized.
/// Only components with identity on site `i` survive the Pauli average.
pub fn averaged_otoc(a: &OperatorState, b: &OperatorState) -> Result<Vec<f64>, ExactError> {
    if a.n != b.n {
        return Err(ExactError::QubitMismatch(a.n, b.n));
    }
    let n = a.n;
    let mut sums = vec![KahanSum::default(); n];
    for (code, (x, y)) in a.coeffs.iter().zip(&b.coeffs).enumerate() {
        let w = x * y;
        if w == 0.0 {
            continue;
        }
        let support = (code | (code >> n)) & ((1 << n) - 1);
        for (site, acc) in sums.iter_mut().enumerate() {
            if (support >> site) & 1 == 0 {
                acc.add(w);
            }
        }
    }
    Ok(sums.into_iter().map(|s| s.value()).collect())
}

/// Normalized same-operator OTOCs `<M P_i M P_i>/<M M>` for all `3n`
/// non-identity site Paulis.
pub fn single_site_otocs(state: &OperatorState) -> Result<BTreeMap<SitePauli, f64>, ExactError> {
    let norm = state.echo();
    if norm == 0.0 {
        return Err(ExactError::ZeroNorm);
    }
    let mut out = BTreeMap::new();
    for site in 0..state.n {
        for pauli in Pauli::NON_IDENTITY {
            let v = site_otoc(state, state, site, pauli)? / norm;
            out.insert(SitePauli { site, pauli }, v);
        }
    }
    Ok(out)
}

/// Normalized averaged OTOC on a `(time, site)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocProfile {
    pub sites: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[time_index][site_index]`
    pub values: Vec<Vec<f64>>,
    pub normalization: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct OtocRow {
    site: usize,
    t: f64,
    otoc: f64,
}

impl OtocProfile {
    pub fn value(&self, time_index: usize, site: usize) -> Option<f64> {
        let j = self.sites.iter().position(|&s| s == site)?;
        self.values.get(time_index).map(|row| row[j])
    }

    /// Time series at one site.
    pub fn at_site(&self, site: usize) -> Option<Vec<f64>> {
        let j = self.sites.iter().position(|&s| s == site)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for (ti, &t) in self.times.iter().enumerate() {
            for (si, &site) in self.sites.iter().enumerate() {
                w.serialize(OtocRow {
                    site,
                    t,
                    otoc: self.values[ti][si],
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a profile from CSV rows; normalization is not stored and is
    /// left empty.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, csv::Error> {
        let mut rows = Vec::new();
        for r in csv::Reader::from_reader(reader).deserialize() {
            let row: OtocRow = r?;
            rows.push(row);
        }
        let mut sites: Vec<usize> = rows.iter().map(|r| r.site).collect();
        sites.sort_unstable();
        sites.dedup();
        let mut times: Vec<f64> = Vec::new();
        for r in &rows {
            if !times.iter().any(|t| t.to_bits() == r.t.to_bits()) {
                times.push(r.t);
            }
        }
        let mut values = vec![vec![f64::NAN; sites.len()]; times.len()];
        for r in rows {
            let ti = times.iter().position(|t| t.to_bits() == r.t.to_bits()).unwrap();
            let si = sites.binary_search(&r.site).unwrap();
            values[ti][si] = r.otoc;
        }
        Ok(Self {
            sites,
            times,
            values,
            normalization: Vec::new(),
        })
    }
}

/// Averaged OTOC between `M` evolved under `h1` and under `h2`, sampled at
/// `times` for each of `sites`, divided by the chosen normalization.
pub fn otoc_profile(
    m: &OperatorState,
    h1: &HamiltonianSpec,
    h2: &HamiltonianSpec,
    times: &[f64],
    sites: &[usize],
    normalization: OtocNormalization,
    tol: f64,
) -> Result<OtocProfile, ExactError> {
    let n = m.n;
    if h1.num_qubits() != n || h2.num_qubits() != n {
        return Err(ExactError::QubitMismatch(n, h1.num_qubits().max(h2.num_qubits())));
    }
    if let Some(&s) = sites.iter().find(|&&s| s >= n) {
        return Err(ExactError::Pauli(crate::pauli::PauliError::SiteOutOfRange { site: s, n }));
    }
    if let Some(&bad) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(ExactError::BadTime(bad));
    }
    let g1 = Generator::new(h1, &LindbladSpec::None)?;
    let g2 = Generator::new(h2, &LindbladSpec::None)?;
    let dim = m.coeffs.len();
    let mut y0 = m.coeffs.clone();
    y0.extend_from_slice(&m.coeffs);
    if !(tol > 0.0) {
        return Err(ExactError::Integrator(ode::OdeError::BadTolerance(tol)));
    }
    let opts = Options::new(Tolerance::new(tol, tol * 1e-2));

    let mut profile = OtocProfile {
        sites: sites.to_vec(),
        times: Vec::with_capacity(times.len()),
        values: Vec::with_capacity(times.len()),
        normalization: Vec::with_capacity(times.len()),
    };
    let mut a = OperatorState { n, coeffs: vec![0.0; dim] };
    let mut b = OperatorState { n, coeffs: vec![0.0; dim] };
    let mut err = None;
    ode::integrate(
        |_, y, dy| {
            let (y1, y2) = y.split_at(dim);
            let (d1, d2) = dy.split_at_mut(dim);
            g1.apply(y1, d1);
            g2.apply(y2, d2);
        },
        0.0,
        y0,
        times,
        &opts,
        |t, y| {
            a.coeffs.copy_from_slice(&y[..dim]);
            b.coeffs.copy_from_slice(&y[dim..]);
            let norm = match normalization {
                OtocNormalization::Overlap => a.overlap(&b),
                OtocNormalization::SelfNorm => Ok(a.echo()),
            };
            let row = norm.and_then(|norm| {
                if norm == 0.0 {
                    return Err(ExactError::ZeroNorm);
                }
                let all = averaged_otoc(&a, &b)?;
                Ok((norm, sites.iter().map(|&s| all[s] / norm).collect::<Vec<_>>()))
            });
            match row {
                Ok((norm, values)) => {
                    profile.times.push(t);
                    profile.normalization.push(norm);
                    profile.values.push(values);
                }
                Err(e) => {
                    if err.is_none() {
                        err = Some(e);
                    }
                }
            }
        },
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(profile),
    }
}
