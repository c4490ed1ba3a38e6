//! Bit-packed n-qubit Pauli strings.
//!
//! A string is stored as two bitmasks in the symplectic encoding: bit `i` of
//! `x` marks an X component on site `i`, bit `i` of `z` a Z component. The
//! pair `(x, z)` on a site encodes `I, X, Z, Y` for `(0,0), (1,0), (0,1), (1,1)`,
//! with `Y = i X Z`. Size is `popcount(x | z)`, commutation is the parity of
//! the symplectic form.

use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported qubit count.
pub const MAX_QUBITS: usize = 1536;

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PauliError {
    #[error("qubit count mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("qubit count {0} outside supported range 1..={MAX_QUBITS}")]
    BadQubitCount(usize),
    #[error("site {site} out of range for {n} qubits")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("cannot parse Pauli string {text:?}: {reason}")]
    Parse { text: String, reason: String },
}

/// Single-site Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    pub const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    #[inline]
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (false, true) => Pauli::Z,
            (true, true) => Pauli::Y,
        }
    }

    #[inline]
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Z => (false, true),
            Pauli::Y => (true, true),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'I' | 'i' => Some(Pauli::I),
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn is_identity(self) -> bool {
        self == Pauli::I
    }
}

/// Global phase `i^k`, `k` in `0..4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: i64) -> Self {
        Phase(k.rem_euclid(4) as u8)
    }

    /// Exponent `k` of `i^k`.
    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0.is_multiple_of(2)
    }

    /// `(re, im)` of the phase.
    pub fn to_complex(self) -> (f64, f64) {
        match self.0 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    }

    pub fn conj(self) -> Self {
        Phase((4 - self.0) % 4)
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            0 => "+1",
            1 => "+i",
            2 => "-1",
            _ => "-i",
        })
    }
}

/// n-qubit Pauli string without phase.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
}

/// A Pauli string times a phase in `{+1, +i, -1, -i}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhasedString {
    pub phase: Phase,
    pub string: PauliString,
}

#[inline]
fn words_for(n: usize) -> usize {
    n.div_ceil(WORD)
}

fn check_n(n: usize) -> Result<(), PauliError> {
    if n == 0 || n > MAX_QUBITS {
        Err(PauliError::BadQubitCount(n))
    } else {
        Ok(())
    }
}

impl PauliString {
    pub fn identity(n: usize) -> Result<Self, PauliError> {
        check_n(n)?;
        let w = words_for(n);
        Ok(Self {
            n,
            x: vec![0; w],
            z: vec![0; w],
        })
    }

    /// Single-site Pauli `p` on `site`, identity elsewhere.
    pub fn single(n: usize, site: usize, p: Pauli) -> Result<Self, PauliError> {
        let mut s = Self::identity(n)?;
        s.set(site, p)?;
        Ok(s)
    }

    pub fn from_sites(n: usize, sites: &[(usize, Pauli)]) -> Result<Self, PauliError> {
        let mut s = Self::identity(n)?;
        for &(site, p) in sites {
            s.set(site, p)?;
        }
        Ok(s)
    }

    /// Build from packed masks for `n <= 64`.
    pub fn from_masks(n: usize, x: u64, z: u64) -> Result<Self, PauliError> {
        check_n(n)?;
        if n > WORD {
            return Err(PauliError::BadQubitCount(n));
        }
        let mask = low_mask(n);
        Ok(Self {
            n,
            x: vec![x & mask],
            z: vec![z & mask],
        })
    }

    /// Dense operator-space index `x | z << n` for `n <= 16`.
    pub fn to_index(&self) -> usize {
        debug_assert!(self.n <= 16);
        (self.x[0] as usize) | ((self.z[0] as usize) << self.n)
    }

    pub fn from_index(n: usize, index: usize) -> Result<Self, PauliError> {
        if n > 16 {
            return Err(PauliError::BadQubitCount(n));
        }
        let mask = (1usize << n) - 1;
        Self::from_masks(n, (index & mask) as u64, ((index >> n) & mask) as u64)
    }

    #[inline]
    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn x_words(&self) -> &[u64] {
        &self.x
    }

    pub fn z_words(&self) -> &[u64] {
        &self.z
    }

    #[inline]
    pub fn get(&self, site: usize) -> Pauli {
        let (w, b) = (site / WORD, site % WORD);
        Pauli::from_bits((self.x[w] >> b) & 1 == 1, (self.z[w] >> b) & 1 == 1)
    }

    pub fn set(&mut self, site: usize, p: Pauli) -> Result<(), PauliError> {
        if site >= self.n {
            return Err(PauliError::SiteOutOfRange { site, n: self.n });
        }
        self.set_unchecked(site, p);
        Ok(())
    }

    #[inline]
    pub(crate) fn set_unchecked(&mut self, site: usize, p: Pauli) {
        let (w, b) = (site / WORD, site % WORD);
        let (x, z) = p.bits();
        self.x[w] = (self.x[w] & !(1 << b)) | ((x as u64) << b);
        self.z[w] = (self.z[w] & !(1 << b)) | ((z as u64) << b);
    }

    /// Two-bit code `x | z << 1` of a site.
    #[inline]
    pub(crate) fn site_code(&self, site: usize) -> u8 {
        let (w, b) = (site / WORD, site % WORD);
        (((self.x[w] >> b) & 1) | (((self.z[w] >> b) & 1) << 1)) as u8
    }

    #[inline]
    pub(crate) fn set_site_code(&mut self, site: usize, code: u8) {
        let (w, b) = (site / WORD, site % WORD);
        let x = (code & 1) as u64;
        let z = ((code >> 1) & 1) as u64;
        self.x[w] = (self.x[w] & !(1 << b)) | (x << b);
        self.z[w] = (self.z[w] & !(1 << b)) | (z << b);
    }

    /// Number of non-identity tensor factors.
    #[inline]
    pub fn size(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(x, z)| (x | z).count_ones() as usize)
            .sum()
    }

    /// Site of the `k`-th non-identity factor, counting in site order.
    pub(crate) fn support_site(&self, mut k: usize) -> usize {
        for (w, (x, z)) in self.x.iter().zip(&self.z).enumerate() {
            let mut bits = x | z;
            let count = bits.count_ones() as usize;
            if k < count {
                for _ in 0..k {
                    bits &= bits - 1;
                }
                return w * WORD + bits.trailing_zeros() as usize;
            }
            k -= count;
        }
        panic!("support index out of range")
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    /// Sites carrying a non-identity factor, ascending.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.x
            .iter()
            .zip(&self.z)
            .enumerate()
            .flat_map(|(w, (x, z))| BitIter(x | z).map(move |b| w * WORD + b))
    }

    fn check_same(&self, other: &Self) -> Result<(), PauliError> {
        if self.n != other.n {
            Err(PauliError::LengthMismatch {
                left: self.n,
                right: other.n,
            })
        } else {
            Ok(())
        }
    }

    /// Parity of the symplectic form: `true` iff the strings commute.
    pub fn commutes(&self, other: &Self) -> Result<bool, PauliError> {
        self.check_same(other)?;
        Ok(self.commutes_unchecked(other))
    }

    #[inline]
    pub(crate) fn commutes_unchecked(&self, other: &Self) -> bool {
        let mut parity = 0u32;
        for i in 0..self.x.len() {
            parity ^= (self.x[i] & other.z[i]).count_ones() ^ (self.z[i] & other.x[i]).count_ones();
        }
        parity & 1 == 0
    }

    /// Product `self * other` with its phase.
    pub fn multiply(&self, other: &Self) -> Result<PhasedString, PauliError> {
        self.check_same(other)?;
        let mut x = Vec::with_capacity(self.x.len());
        let mut z = Vec::with_capacity(self.z.len());
        // P = i^{x.z} X^x Z^z; moving Z^{z1} past X^{x2} costs (-1)^{z1.x2}.
        let mut k: i64 = 0;
        for i in 0..self.x.len() {
            let (x1, z1, x2, z2) = (self.x[i], self.z[i], other.x[i], other.z[i]);
            let (x3, z3) = (x1 ^ x2, z1 ^ z2);
            k += (x1 & z1).count_ones() as i64 + (x2 & z2).count_ones() as i64
                + 2 * (z1 & x2).count_ones() as i64
                - (x3 & z3).count_ones() as i64;
            x.push(x3);
            z.push(z3);
        }
        Ok(PhasedString {
            phase: Phase::from_exponent(k),
            string: PauliString { n: self.n, x, z },
        })
    }

    /// Evaluates the size superoperator `-sum_P (P R P - R)/4` on this string
    /// by enumerating all `3n` single-site Paulis. Each anticommuting one
    /// contributes `2/4`; the result is an integer eigenvalue.
    pub fn size_superop_eigencheck(&self) -> usize {
        let mut anticommuting = 0usize;
        let mut probe = PauliString {
            n: self.n,
            x: vec![0; self.x.len()],
            z: vec![0; self.z.len()],
        };
        for site in 0..self.n {
            for p in Pauli::NON_IDENTITY {
                probe.set_unchecked(site, p);
                if !self.commutes_unchecked(&probe) {
                    anticommuting += 1;
                }
            }
            probe.set_unchecked(site, Pauli::I);
        }
        debug_assert_eq!(anticommuting % 2, 0);
        (2 * anticommuting) / 4
    }

    /// Uniform over all `4^n` strings, or over non-identity strings.
    pub fn random<R: Rng + ?Sized>(
        n: usize,
        rng: &mut R,
        non_identity: bool,
    ) -> Result<Self, PauliError> {
        let mut s = Self::identity(n)?;
        loop {
            for w in 0..s.x.len() {
                let mask = if (w + 1) * WORD <= n {
                    u64::MAX
                } else {
                    low_mask(n - w * WORD)
                };
                s.x[w] = rng.random::<u64>() & mask;
                s.z[w] = rng.random::<u64>() & mask;
            }
            if !non_identity || !s.is_identity() {
                return Ok(s);
            }
        }
    }
}

#[inline]
fn low_mask(bits: usize) -> u64 {
    if bits >= WORD {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(b)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for site in 0..self.n {
            write!(f, "{}", self.get(site).symbol())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.n <= 64 {
            write!(f, "PauliString({self})")
        } else {
            let sites: Vec<String> = self
                .support()
                .map(|s| format!("{}{}", self.get(s).symbol(), s))
                .collect();
            write!(f, "PauliString(n={}, {})", self.n, sites.join(" "))
        }
    }
}

/// Parses the dense text form, site 0 leftmost, e.g. `"YIZX"`.
impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = text.trim().chars().collect();
        let mut s = Self::identity(chars.len()).map_err(|e| PauliError::Parse {
            text: text.to_string(),
            reason: e.to_string(),
        })?;
        for (site, c) in chars.into_iter().enumerate() {
            let p = Pauli::from_symbol(c).ok_or_else(|| PauliError::Parse {
                text: text.to_string(),
                reason: format!("unexpected symbol {c:?} at site {site}"),
            })?;
            s.set_unchecked(site, p);
        }
        Ok(s)
    }
}

impl PauliString {
    /// Parses either the dense form (`"IXZI"`, length `n`) or a sparse form of
    /// whitespace/comma separated `<Pauli><site>` tokens (`"X100 Z101"`).
    pub fn parse_for(n: usize, text: &str) -> Result<Self, PauliError> {
        let t = text.trim();
        let dense = t.chars().count() == n && t.chars().all(|c| Pauli::from_symbol(c).is_some());
        if dense {
            return t.parse();
        }
        let mut s = Self::identity(n)?;
        for token in t.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let mut chars = token.chars();
            let head = chars.next().unwrap_or(' ');
            let p = Pauli::from_symbol(head).ok_or_else(|| PauliError::Parse {
                text: text.to_string(),
                reason: format!("bad token {token:?}"),
            })?;
            let site: usize = chars
                .as_str()
                .trim_start_matches('_')
                .parse()
                .map_err(|_| PauliError::Parse {
                    text: text.to_string(),
                    reason: format!("bad site in token {token:?}"),
                })?;
            s.set(site, p)?;
        }
        Ok(s)
    }

    /// Sparse text form `"X3 Z4"`; `"I"` for the identity.
    pub fn to_sparse_string(&self) -> String {
        if self.is_identity() {
            return "I".to_string();
        }
        self.support()
            .map(|s| format!("{}{}", self.get(s).symbol(), s))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn support_site_walks_the_support_in_order() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for n in [5, 64, 65, 150] {
            let p = PauliString::random(n, &mut r, false).unwrap();
            let sites: Vec<usize> = p.support().collect();
            for (k, &site) in sites.iter().enumerate() {
                assert_eq!(p.support_site(k), site);
            }
        }
    }

    #[test]
    fn size_examples() {
        assert_eq!(ps("YIZX").size(), 3);
        assert_eq!(PauliString::identity(7).unwrap().size(), 0);
        assert_eq!(ps("XYZ").size(), 3);
    }

    #[test]
    fn multiply_examples() {
        let xx = ps("X").multiply(&ps("X")).unwrap();
        assert_eq!(xx.phase, Phase::ONE);
        assert!(xx.string.is_identity());

        let xz = ps("X").multiply(&ps("Z")).unwrap();
        assert_eq!(xz.phase, Phase::MINUS_I);
        assert_eq!(xz.string, ps("Y"));

        let zx = ps("Z").multiply(&ps("X")).unwrap();
        assert_eq!(zx.phase, Phase::I);

        let disjoint = ps("XI").multiply(&ps("IZ")).unwrap();
        assert_eq!(disjoint.phase, Phase::ONE);
        assert_eq!(disjoint.string, ps("XZ"));
    }

    #[test]
    fn multiply_length_mismatch() {
        assert_eq!(
            ps("X").multiply(&ps("XX")),
            Err(PauliError::LengthMismatch { left: 1, right: 2 })
        );
        assert!(ps("X").commutes(&ps("XX")).is_err());
    }

    #[test]
    fn commutes_examples() {
        assert!(ps("XI").commutes(&ps("IZ")).unwrap());
        assert!(!ps("X").commutes(&ps("Z")).unwrap());
        assert!(ps("YY").commutes(&ps("XX")).unwrap());
    }

    #[test]
    fn eigencheck_examples() {
        assert_eq!(ps("X").size_superop_eigencheck(), 1);
        assert_eq!(PauliString::identity(5).unwrap().size_superop_eigencheck(), 0);
        assert_eq!(ps("YIZX").size_superop_eigencheck(), 3);
    }

    #[test]
    fn random_is_deterministic() {
        let a = PauliString::random(1, &mut ChaCha8Rng::seed_from_u64(9), false).unwrap();
        let b = PauliString::random(1, &mut ChaCha8Rng::seed_from_u64(9), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_non_identity_never_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            assert!(!PauliString::random(1, &mut rng, true).unwrap().is_identity());
        }
    }

    #[test]
    fn random_uniform_over_16_strings() {
        // Multinomial oracle: each count ~ Binomial(M, 1/16).
        let m = 100_000usize;
        let mut counts = [0usize; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..m {
            counts[PauliString::random(2, &mut rng, false).unwrap().to_index()] += 1;
        }
        let p = 1.0 / 16.0;
        let sigma = (m as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - m as f64 * p).abs() < 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn bad_qubit_counts() {
        assert!(PauliString::identity(0).is_err());
        assert!(PauliString::identity(MAX_QUBITS + 1).is_err());
        assert!(PauliString::identity(MAX_QUBITS).is_ok());
    }

    #[test]
    fn text_forms() {
        let s = PauliString::parse_for(8, "X3 Z4").unwrap();
        assert_eq!(s.to_string(), "IIIXZIII");
        assert_eq!(s.to_sparse_string(), "X3 Z4");
        assert_eq!(PauliString::parse_for(4, "IXYZ").unwrap(), ps("IXYZ"));
        assert!("IXQ".parse::<PauliString>().is_err());
        assert!(PauliString::parse_for(4, "X9").is_err());
    }

    #[test]
    fn wide_strings_span_words() {
        let mut s = PauliString::identity(1500).unwrap();
        s.set(0, Pauli::X).unwrap();
        s.set(64, Pauli::Y).unwrap();
        s.set(1499, Pauli::Z).unwrap();
        assert_eq!(s.size(), 3);
        assert_eq!(s.support().collect::<Vec<_>>(), vec![0, 64, 1499]);
        let t = PauliString::single(1500, 1499, Pauli::X).unwrap();
        assert!(!s.commutes(&t).unwrap());
        assert_eq!(s.size_superop_eigencheck(), 3);
    }
}
