//! Exact operator-space dynamics for small chains.
//!
//! A Hermitian operator `M = sum_R c_R R` is stored as a dense real vector
//! over all `4^n` Pauli strings, indexed by `x | z << n`. The Heisenberg
//! generator `i[H, M]` and Pauli-diagonal dissipators are applied term by
//! term through the symplectic product rule, so no `4^n x 4^n` matrix is
//! ever built.

mod identities;
mod otoc;

pub use identities::{check_eq5, check_eq6, record_trace, EchoTrace};
pub use otoc::{
    averaged_otoc, single_site_otocs, otoc_profile, OtocNormalization, OtocProfile,
};

use crate::ode::{self, OdeError, Options, Tolerance};
use crate::pauli::{Pauli, PauliError, PauliString};
use crate::size::{compensated_sum, SizeDistribution};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_EXACT_QUBITS: usize = 10;
pub const DEFAULT_RTOL: f64 = 1e-8;

/// Coefficient blocks smaller than this are handled on one thread.
const PAR_CHUNK: usize = 1 << 12;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("exact engine supports 1..={MAX_EXACT_QUBITS} qubits, got {0}")]
    TooManyQubits(usize),
    #[error("qubit count mismatch: {0} vs {1}")]
    QubitMismatch(usize, usize),
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("evolution time must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("operator has zero norm")]
    ZeroNorm,
    #[error("Hamiltonian term {0} acts on more than {MAX_TABLE_SUPPORT} sites")]
    TermTooWide(String),
    #[error("unknown Hamiltonian preset '{0}'")]
    UnknownPreset(String),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error("integrator failed: {0}")]
    Integrator(#[from] OdeError),
}

fn check_n(n: usize) -> Result<(), ExactError> {
    if n == 0 || n > MAX_EXACT_QUBITS {
        Err(ExactError::TooManyQubits(n))
    } else {
        Ok(())
    }
}

#[inline]
fn parity(v: usize) -> u32 {
    v.count_ones() & 1
}

#[inline]
fn code_size(code: usize, n: usize) -> u32 {
    let mask = (1usize << n) - 1;
    ((code & mask) | (code >> n)).count_ones()
}

/// Dense Pauli-basis coefficients of a Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorState {
    n: usize,
    coeffs: Vec<f64>,
}

impl OperatorState {
    pub fn zeros(n: usize) -> Result<Self, ExactError> {
        check_n(n)?;
        Ok(Self {
            n,
            coeffs: vec![0.0; 1 << (2 * n)],
        })
    }

    pub fn from_pauli(p: &PauliString) -> Result<Self, ExactError> {
        Self::from_terms(p.num_qubits(), &[(p.clone(), 1.0)])
    }

    /// Sum of weighted strings; repeated strings accumulate.
    pub fn from_terms(n: usize, terms: &[(PauliString, f64)]) -> Result<Self, ExactError> {
        let mut s = Self::zeros(n)?;
        for (p, c) in terms {
            if p.num_qubits() != n {
                return Err(ExactError::QubitMismatch(n, p.num_qubits()));
            }
            s.coeffs[p.to_index()] += c;
        }
        Ok(s)
    }

    pub fn from_coeffs(n: usize, coeffs: Vec<f64>) -> Result<Self, ExactError> {
        check_n(n)?;
        if coeffs.len() != 1 << (2 * n) {
            return Err(ExactError::QubitMismatch(n, coeffs.len()));
        }
        Ok(Self { n, coeffs })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, p: &PauliString) -> f64 {
        self.coeffs[p.to_index()]
    }

    /// `<M M> = sum_R c_R^2`, the Loschmidt echo of an evolved operator.
    pub fn echo(&self) -> f64 {
        compensated_sum(self.coeffs.iter().map(|c| c * c))
    }

    /// `<A B> = sum_R a_R b_R`.
    pub fn overlap(&self, other: &Self) -> Result<f64, ExactError> {
        if self.n != other.n {
            return Err(ExactError::QubitMismatch(self.n, other.n));
        }
        Ok(compensated_sum(
            self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b),
        ))
    }

    pub fn normalized(&self) -> Result<Self, ExactError> {
        let norm = self.echo().sqrt();
        if norm == 0.0 {
            return Err(ExactError::ZeroNorm);
        }
        Ok(Self {
            n: self.n,
            coeffs: self.coeffs.iter().map(|c| c / norm).collect(),
        })
    }

    pub fn size_distribution(&self) -> SizeDistribution {
        let mut d = SizeDistribution::zeros(self.n);
        for (code, c) in self.coeffs.iter().enumerate() {
            if *c != 0.0 {
                d.add_mass(code_size(code, self.n) as usize, c * c);
            }
        }
        d
    }

    /// Nonzero components as `(string, coefficient)`, largest magnitude first.
    pub fn components(&self, threshold: f64) -> Vec<(PauliString, f64)> {
        let mut out: Vec<_> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > threshold)
            .map(|(i, &c)| (PauliString::from_index(self.n, i).expect("index in range"), c))
            .collect();
        out.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerm {
    pub string: String,
    pub coupling: f64,
}

/// `H = sum_k h_k P_k` with real couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    n: usize,
    terms: Vec<(PauliString, f64)>,
}

impl HamiltonianSpec {
    pub fn new(n: usize, terms: Vec<(PauliString, f64)>) -> Result<Self, ExactError> {
        check_n(n)?;
        if let Some((p, _)) = terms.iter().find(|(p, _)| p.num_qubits() != n) {
            return Err(ExactError::QubitMismatch(n, p.num_qubits()));
        }
        if let Some((p, _)) = terms.iter().find(|(p, _)| p.size() > MAX_TABLE_SUPPORT) {
            return Err(ExactError::TermTooWide(p.to_sparse_string()));
        }
        Ok(Self { n, terms })
    }

    pub fn zero(n: usize) -> Result<Self, ExactError> {
        Self::new(n, Vec::new())
    }

    /// `J sum Z_i Z_{i+1} + hx sum X_i + hz sum Z_i` with open boundaries.
    pub fn mixed_field_ising(n: usize, j: f64, hx: f64, hz: f64) -> Result<Self, ExactError> {
        check_n(n)?;
        let mut terms = Vec::new();
        for i in 0..n {
            if i + 1 < n {
                terms.push((PauliString::from_sites(n, &[(i, Pauli::Z), (i + 1, Pauli::Z)])?, j));
            }
            terms.push((PauliString::single(n, i, Pauli::X)?, hx));
            terms.push((PauliString::single(n, i, Pauli::Z)?, hz));
        }
        Self::new(n, terms)
    }

    pub fn chaotic_chain(n: usize) -> Result<Self, ExactError> {
        Self::mixed_field_ising(n, 1.0, 1.05, 0.5)
    }

    /// Uniform transverse field `sum_i X_i`.
    pub fn uniform_x_field(n: usize) -> Result<Self, ExactError> {
        check_n(n)?;
        let terms = (0..n)
            .map(|i| Ok((PauliString::single(n, i, Pauli::X)?, 1.0)))
            .collect::<Result<_, ExactError>>()?;
        Self::new(n, terms)
    }

    /// Named presets: `chaotic_ising`, `x_field`, `zero`.
    pub fn preset(name: &str, n: usize) -> Result<Self, ExactError> {
        match name {
            "chaotic_ising" | "mixed_field_ising" => Self::chaotic_chain(n),
            "x_field" | "delta_h" => Self::uniform_x_field(n),
            "zero" => Self::zero(n),
            other => Err(ExactError::UnknownPreset(other.to_string())),
        }
    }

    pub fn from_terms(n: usize, terms: &[HamiltonianTerm]) -> Result<Self, ExactError> {
        let parsed = terms
            .iter()
            .map(|t| Ok((PauliString::parse_for(n, &t.string)?, t.coupling)))
            .collect::<Result<_, ExactError>>()?;
        Self::new(n, parsed)
    }

    /// Random couplings in `[-1, 1)` on every nearest-neighbour two-site
    /// Pauli and every single-site Pauli.
    pub fn random_local<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, ExactError> {
        check_n(n)?;
        let mut terms = Vec::new();
        for i in 0..n {
            for a in Pauli::NON_IDENTITY {
                terms.push((PauliString::single(n, i, a)?, rng.random_range(-1.0..1.0)));
                if i + 1 < n {
                    for b in Pauli::NON_IDENTITY {
                        let p = PauliString::from_sites(n, &[(i, a), (i + 1, b)])?;
                        terms.push((p, rng.random_range(-1.0..1.0)));
                    }
                }
            }
        }
        Self::new(n, terms)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(PauliString, f64)] {
        &self.terms
    }

    /// `self + scale * other`.
    pub fn plus(&self, other: &Self, scale: f64) -> Result<Self, ExactError> {
        if self.n != other.n {
            return Err(ExactError::QubitMismatch(self.n, other.n));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|(p, h)| (p.clone(), h * scale)));
        Self::new(self.n, terms)
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            n: self.n,
            terms: self.terms.iter().map(|(p, h)| (p.clone(), h * scale)).collect(),
        }
    }

    /// Terms touching `site`, as an operator normalized to `<M M> = 1`.
    pub fn local_energy_density(&self, site: usize) -> Result<OperatorState, ExactError> {
        let local: Vec<_> = self
            .terms
            .iter()
            .filter(|(p, _)| p.get(site) != Pauli::I)
            .cloned()
            .collect();
        OperatorState::from_terms(self.n, &local)?.normalized()
    }

    pub fn as_operator(&self) -> Result<OperatorState, ExactError> {
        OperatorState::from_terms(self.n, &self.terms)
    }
}

/// Dissipative part of the Heisenberg-picture generator.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum LindbladSpec {
    #[default]
    None,
    /// Hermitian Pauli jump operators with rates; each damps the components
    /// it anticommutes with at rate `2 * rate`.
    Jumps(Vec<(PauliString, f64)>),
    /// Amplitude of each string damped at `epsilon * size`.
    EffectiveSize { epsilon: f64 },
}

impl LindbladSpec {
    /// Single-qubit depolarizing-style noise: X, Y, Z jumps on every site.
    pub fn uniform_pauli_jumps(n: usize, rate: f64) -> Result<Self, ExactError> {
        let mut jumps = Vec::new();
        for i in 0..n {
            for p in Pauli::NON_IDENTITY {
                jumps.push((PauliString::single(n, i, p)?, rate));
            }
        }
        Ok(Self::Jumps(jumps))
    }

    fn validate(&self, n: usize) -> Result<(), ExactError> {
        match self {
            LindbladSpec::None => Ok(()),
            LindbladSpec::Jumps(jumps) => {
                for (p, r) in jumps {
                    if p.num_qubits() != n {
                        return Err(ExactError::QubitMismatch(n, p.num_qubits()));
                    }
                    if !(*r >= 0.0) {
                        return Err(ExactError::NegativeRate(*r));
                    }
                }
                Ok(())
            }
            LindbladSpec::EffectiveSize { epsilon } => {
                if *epsilon >= 0.0 {
                    Ok(())
                } else {
                    Err(ExactError::NegativeRate(*epsilon))
                }
            }
        }
    }

    fn damping(&self, n: usize) -> Option<Vec<f64>> {
        let dim = 1usize << (2 * n);
        match self {
            LindbladSpec::None => None,
            LindbladSpec::EffectiveSize { epsilon } => Some(
                (0..dim)
                    .map(|code| epsilon * code_size(code, n) as f64)
                    .collect(),
            ),
            LindbladSpec::Jumps(jumps) => {
                let mask = (1usize << n) - 1;
                let encoded: Vec<(usize, usize, f64)> = jumps
                    .iter()
                    .map(|(p, r)| {
                        let c = p.to_index();
                        (c & mask, c >> n, *r)
                    })
                    .collect();
                Some(
                    (0..dim)
                        .map(|code| {
                            let (rx, rz) = (code & mask, code >> n);
                            encoded
                                .iter()
                                .filter(|(lx, lz, _)| parity((lx & rz) ^ (lz & rx)) == 1)
                                .map(|(_, _, r)| 2.0 * r)
                                .sum()
                        })
                        .collect(),
                )
            }
        }
    }
}

/// Largest term support handled through a local sign table.
const MAX_TABLE_SUPPORT: usize = 8;

struct EncodedTerm {
    code: usize,
    /// Sites where the term is not the identity.
    sites: Vec<usize>,
    /// Coefficient of `Q = P R` in `i[hP, R]`, indexed by the letters of `R`
    /// on `sites` (two bits per site, `x | z << 1`). Zero when `P` and `R`
    /// commute.
    table: Vec<f64>,
}

impl EncodedTerm {
    fn new(p: &PauliString, h: f64) -> Self {
        let n = p.num_qubits();
        let sites: Vec<usize> = p.support().collect();
        let k = sites.len();
        debug_assert!(k <= MAX_TABLE_SUPPORT);
        let table = (0..1usize << (2 * k))
            .map(|local| {
                let mut r = PauliString::identity(n).expect("valid n");
                for (j, &site) in sites.iter().enumerate() {
                    let bits = (local >> (2 * j)) & 3;
                    r.set(site, Pauli::from_bits(bits & 1 == 1, bits & 2 == 2))
                        .expect("site in range");
                }
                if r.commutes(p).expect("same length") {
                    return 0.0;
                }
                // i[P, R] = i (P R - R P) = 2 i P R for anticommuting strings.
                let prod = p.multiply(&r).expect("same length");
                match prod.phase.exponent() {
                    1 => -2.0 * h,
                    3 => 2.0 * h,
                    other => unreachable!("anticommuting product has phase i^{other}"),
                }
            })
            .collect();
        Self {
            code: p.to_index(),
            sites,
            table,
        }
    }

    #[inline]
    fn local_index(&self, r: usize, n: usize) -> usize {
        let mut idx = 0;
        for (j, &site) in self.sites.iter().enumerate() {
            let x = (r >> site) & 1;
            let z = (r >> (site + n)) & 1;
            idx |= (x | (z << 1)) << (2 * j);
        }
        idx
    }
}

/// Precomputed generator `L(M) = i[H, M] - D(M)`.
pub struct Generator {
    n: usize,
    terms: Vec<EncodedTerm>,
    damping: Option<Vec<f64>>,
}

impl Generator {
    pub fn new(h: &HamiltonianSpec, l: &LindbladSpec) -> Result<Self, ExactError> {
        let n = h.num_qubits();
        l.validate(n)?;
        let mut merged: Vec<(PauliString, f64)> = Vec::new();
        for (p, coupling) in h.terms() {
            if p.is_identity() || *coupling == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(q, _)| q == p) {
                Some((_, c)) => *c += coupling,
                None => merged.push((p.clone(), *coupling)),
            }
        }
        Ok(Self {
            n,
            terms: merged.iter().map(|(p, h)| EncodedTerm::new(p, *h)).collect(),
            damping: l.damping(n),
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    /// `out = L(c)`, gathered per output component so blocks are disjoint.
    pub fn apply(&self, c: &[f64], out: &mut [f64]) {
        let n = self.n;
        let body = |(chunk_idx, chunk): (usize, &mut [f64])| {
            let base = chunk_idx * PAR_CHUNK;
            match &self.damping {
                Some(d) => {
                    for (off, o) in chunk.iter_mut().enumerate() {
                        *o = -d[base + off] * c[base + off];
                    }
                }
                None => chunk.fill(0.0),
            }
            for t in &self.terms {
                let table = t.table.as_slice();
                match *t.sites.as_slice() {
                    [a] => {
                        let (xa, za) = (a, a + n);
                        for (off, o) in chunk.iter_mut().enumerate() {
                            let r = (base + off) ^ t.code;
                            let idx = ((r >> xa) & 1) | (((r >> za) & 1) << 1);
                            *o += table[idx] * c[r];
                        }
                    }
                    [a, b] => {
                        let (xa, za, xb, zb) = (a, a + n, b, b + n);
                        for (off, o) in chunk.iter_mut().enumerate() {
                            let r = (base + off) ^ t.code;
                            let idx = ((r >> xa) & 1)
                                | (((r >> za) & 1) << 1)
                                | (((r >> xb) & 1) << 2)
                                | (((r >> zb) & 1) << 3);
                            *o += table[idx] * c[r];
                        }
                    }
                    _ => {
                        for (off, o) in chunk.iter_mut().enumerate() {
                            let r = (base + off) ^ t.code;
                            *o += table[t.local_index(r, n)] * c[r];
                        }
                    }
                }
            }
        };
        if out.len() > PAR_CHUNK {
            out.par_chunks_mut(PAR_CHUNK).enumerate().for_each(body);
        } else {
            out.chunks_mut(PAR_CHUNK).enumerate().for_each(body);
        }
    }
}

fn options(tol: f64) -> Result<Options, ExactError> {
    if !(tol > 0.0) {
        return Err(ExactError::Integrator(OdeError::BadTolerance(tol)));
    }
    // Pauli coefficients are O(1) or smaller, so an absolute floor well below
    // the relative target keeps tiny components from dominating step control.
    Ok(Options::new(Tolerance::new(tol, tol * 1e-2)))
}

/// Heisenberg-picture evolution `M(t) = e^{iHt} M e^{-iHt}` plus dissipation.
pub fn evolve(
    state: &OperatorState,
    h: &HamiltonianSpec,
    l: &LindbladSpec,
    t: f64,
    tol: f64,
) -> Result<OperatorState, ExactError> {
    let mut out = None;
    evolve_observed(state, h, l, &[t], tol, |_, s| out = Some(s.clone()))?;
    Ok(out.expect("one observation"))
}

/// Evolves through increasing `times` (starting from 0), calling `observe`
/// at each one.
pub fn evolve_observed<O>(
    state: &OperatorState,
    h: &HamiltonianSpec,
    l: &LindbladSpec,
    times: &[f64],
    tol: f64,
    mut observe: O,
) -> Result<(), ExactError>
where
    O: FnMut(f64, &OperatorState),
{
    if state.n != h.num_qubits() {
        return Err(ExactError::QubitMismatch(state.n, h.num_qubits()));
    }
    if let Some(&bad) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(ExactError::BadTime(bad));
    }
    let generator = Generator::new(h, l)?;
    let opts = options(tol)?;
    let n = state.n;
    let mut scratch = OperatorState {
        n,
        coeffs: Vec::new(),
    };
    ode::integrate(
        |_, y, dy| generator.apply(y, dy),
        0.0,
        state.coeffs.clone(),
        times,
        &opts,
        |t, y| {
            scratch.coeffs.clear();
            scratch.coeffs.extend_from_slice(y);
            observe(t, &scratch);
        },
    )?;
    Ok(())
}
