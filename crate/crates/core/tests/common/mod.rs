//! Exact Markov-chain oracles for the Monte-Carlo circuit engine, written
//! independently of the engine's own update code.

#![allow(dead_code)]

use opgrowth_core::WeightedEnsemble;

/// Site code `x | z << 1` of qubit `site` in a dense index `x | z << n`.
fn site_code(index: usize, n: usize, site: usize) -> usize {
    ((index >> site) & 1) | (((index >> (n + site)) & 1) << 1)
}

fn with_site_code(index: usize, n: usize, site: usize, code: usize) -> usize {
    let cleared = index & !(1 << site) & !(1 << (n + site));
    cleared | ((code & 1) << site) | (((code >> 1) & 1) << (n + site))
}

fn size_of(index: usize, n: usize) -> usize {
    let mask = (1usize << n) - 1;
    ((index & mask) | (index >> n)).count_ones() as usize
}

/// Circuit-averaged two-qubit gate on a distribution over all `4^n` strings:
/// identity on the pair stays, anything else spreads uniformly over the 15
/// non-identity pairs.
fn apply_pair(p: &[f64], n: usize, a: usize, b: usize) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (idx, &mass) in p.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        if site_code(idx, n, a) == 0 && site_code(idx, n, b) == 0 {
            out[idx] += mass;
            continue;
        }
        for pair in 1..16usize {
            let j = with_site_code(with_site_code(idx, n, a, pair & 3), n, b, pair >> 2);
            out[j] += mass / 15.0;
        }
    }
    out
}

fn damp(p: &mut [f64], n: usize, factor_per_site: f64) {
    for (idx, v) in p.iter_mut().enumerate() {
        *v *= factor_per_site.powi(size_of(idx, n) as i32);
    }
}

/// Size-resolved mass after `layers` open-chain brickwork layers starting
/// from the string with dense index `initial`. Each layer damps by
/// `(1 - eps)^S` on entry and again on exit.
pub fn brickwork_size_mass(n: usize, initial: usize, layers: usize, eps: f64) -> Vec<f64> {
    let mut p = vec![0.0; 1 << (2 * n)];
    p[initial] = 1.0;
    for layer in 0..layers {
        damp(&mut p, n, 1.0 - eps);
        let mut a = layer % 2;
        while a + 1 < n {
            p = apply_pair(&p, n, a, a + 1);
            a += 2;
        }
        damp(&mut p, n, 1.0 - eps);
    }
    let mut mass = vec![0.0; n + 1];
    for (idx, v) in p.iter().enumerate() {
        mass[size_of(idx, n)] += v;
    }
    mass
}

/// Exact size-mass evolution for all-to-all circuits. Only the size matters
/// by permutation symmetry: a random pair holds two, one or zero occupied
/// sites with hypergeometric probabilities, and after the gate it holds two
/// occupied sites with probability 9/15. Every gate is followed by a damping
/// of `(1 - eps)^(2 S / gates_per_unit_time)`.
pub fn all_to_all_size_mass(n: usize, initial_size: usize, gates: usize, gates_per_unit_time: usize, eps: f64) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[initial_size] = 1.0;
    let pairs = (n * (n - 1)) as f64;
    let exponent = 2.0 / gates_per_unit_time as f64;
    for _ in 0..gates {
        let mut next = vec![0.0; n + 1];
        for (s, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let both = (s * s.saturating_sub(1)) as f64 / pairs;
            let one = (2 * s * (n - s)) as f64 / pairs;
            let none = 1.0 - both - one;
            next[s] += mass * none;
            for (k, pk) in [(2usize, both), (1usize, one)] {
                if pk == 0.0 {
                    continue;
                }
                let base = s - k;
                next[base + 1] += mass * pk * 6.0 / 15.0;
                next[base + 2] += mass * pk * 9.0 / 15.0;
            }
        }
        for (s, v) in next.iter_mut().enumerate() {
            *v *= (1.0 - eps).powf(exponent * s as f64);
        }
        p = next;
    }
    p
}

/// Per-size Monte-Carlo mean of `w * [size = S]` and its standard error.
pub fn size_mass_with_errors(e: &WeightedEnsemble) -> (Vec<f64>, Vec<f64>) {
    let n = e.num_qubits();
    let m = e.len() as f64;
    let mut sum = vec![0.0; n + 1];
    let mut sum_sq = vec![0.0; n + 1];
    for (s, lw) in e.entries() {
        let w = lw.exp();
        sum[s.size()] += w;
        sum_sq[s.size()] += w * w;
    }
    let mean: Vec<f64> = sum.iter().map(|v| v / m).collect();
    let err = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, mu)| ((sq / m - mu * mu).max(0.0) / (m - 1.0)).sqrt())
        .collect();
    (mean, err)
}

/// Largest `|mc - exact| / sigma` over size bins; bins with zero Monte-Carlo
/// spread must agree to roundoff.
pub fn max_z_score(mc: &[f64], err: &[f64], exact: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for ((m, e), x) in mc.iter().zip(err).zip(exact) {
        let d = (m - x).abs();
        if *e > 0.0 {
            worst = worst.max(d / e);
        } else if d > 1e-12 {
            return f64::INFINITY;
        }
    }
    worst
}
