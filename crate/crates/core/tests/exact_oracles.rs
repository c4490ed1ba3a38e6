//! Cross-checks of the matrix-free exact engine against explicit dense
//! matrices built with nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use opgrowth_core::exact::{
    evolve, evolve_observed, record_trace, check_eq5, check_eq6, single_site_otocs,
    HamiltonianSpec, LindbladSpec, OperatorState,
};
use opgrowth_core::size::mean_size_from_otocs;
use opgrowth_core::{Pauli, PauliString};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn single(p: Pauli) -> CMat {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    match p {
        Pauli::I => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        Pauli::X => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => CMat::from_row_slice(2, 2, &[z, c(0.0, -1.0), c(0.0, 1.0), z]),
        Pauli::Z => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Site 0 is the least significant tensor factor.
fn dense(p: &PauliString) -> CMat {
    let n = p.num_qubits();
    let mut m = single(p.get(n - 1));
    for site in (0..n - 1).rev() {
        m = m.kronecker(&single(p.get(site)));
    }
    m
}

fn dense_operator(s: &OperatorState) -> CMat {
    let n = s.num_qubits();
    let d = 1 << n;
    let mut m = CMat::zeros(d, d);
    for (p, coeff) in s.components(0.0) {
        m += dense(&p) * c(coeff, 0.0);
    }
    m
}

fn dense_hamiltonian(h: &HamiltonianSpec) -> CMat {
    let d = 1 << h.num_qubits();
    let mut m = CMat::zeros(d, d);
    for (p, coeff) in h.terms() {
        m += dense(p) * c(*coeff, 0.0);
    }
    m
}

fn coefficient(m: &CMat, p: &PauliString) -> Complex64 {
    (dense(p) * m).trace() / c(m.nrows() as f64, 0.0)
}

/// Fixed-step RK4 on `dM/dt = i[H, M] + sum_a g_a (L_a M L_a - M)`.
fn dense_evolve(m0: &CMat, h: &CMat, jumps: &[(CMat, f64)], t: f64, steps: usize) -> CMat {
    let i = c(0.0, 1.0);
    let rhs = |m: &CMat| -> CMat {
        let mut out = (h * m - m * h) * i;
        for (l, g) in jumps {
            out += (l * m * l - m) * c(*g, 0.0);
        }
        out
    };
    let dt = t / steps as f64;
    let mut m = m0.clone();
    for _ in 0..steps {
        let k1 = rhs(&m);
        let k2 = rhs(&(&m + &k1 * c(dt / 2.0, 0.0)));
        let k3 = rhs(&(&m + &k2 * c(dt / 2.0, 0.0)));
        let k4 = rhs(&(&m + &k3 * c(dt, 0.0)));
        m += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0);
    }
    m
}

fn random_hamiltonian(n: usize, seed: u64) -> HamiltonianSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HamiltonianSpec::random_local(n, &mut rng).unwrap()
}

#[test]
fn matrix_free_matches_dense_lindblad() {
    for (n, seed) in [(1usize, 1u64), (2, 2), (3, 3)] {
        let h = random_hamiltonian(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let jumps: Vec<(PauliString, f64)> = (0..n)
            .flat_map(|site| {
                [Pauli::X, Pauli::Z]
                    .into_iter()
                    .map(move |p| PauliString::single(n, site, p).unwrap())
            })
            .map(|p| (p, rng.random_range(0.0..0.3)))
            .collect();
        let l = LindbladSpec::Jumps(jumps.clone());
        let m0 = OperatorState::from_pauli(&PauliString::single(n, 0, Pauli::X).unwrap()).unwrap();
        let t = 0.8;
        let fast = evolve(&m0, &h, &l, t, 1e-12).unwrap();

        let dense_jumps: Vec<(CMat, f64)> = jumps.iter().map(|(p, g)| (dense(p), *g)).collect();
        let slow = dense_evolve(&dense_operator(&m0), &dense_hamiltonian(&h), &dense_jumps, t, 4000);
        for code in 0..(1usize << (2 * n)) {
            let p = PauliString::from_index(n, code).unwrap();
            let expect = coefficient(&slow, &p);
            assert!(expect.im.abs() < 1e-10, "Hermiticity lost at {p}");
            let got = fast.coeffs()[code];
            assert!((got - expect.re).abs() < 1e-8, "n={n} {p}: {got} vs {}", expect.re);
        }
    }
}

#[test]
fn effective_model_matches_dense_depolarizing_form() {
    // The size-damping generator equals uniform X, Y, Z jumps at rate eps/4.
    let n = 3;
    let eps = 0.4;
    let h = random_hamiltonian(n, 9);
    let m0 = OperatorState::from_terms(
        n,
        &[
            (PauliString::parse_for(n, "X0").unwrap(), 0.6),
            (PauliString::parse_for(n, "Y1 Z2").unwrap(), 0.8),
        ],
    )
    .unwrap();
    let a = evolve(&m0, &h, &LindbladSpec::EffectiveSize { epsilon: eps }, 1.0, 1e-12).unwrap();
    let b = evolve(&m0, &h, &LindbladSpec::uniform_pauli_jumps(n, eps / 4.0).unwrap(), 1.0, 1e-12)
        .unwrap();
    for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn heisenberg_schrodinger_duality() {
    let n = 3;
    let h = random_hamiltonian(n, 5);
    let hd = dense_hamiltonian(&h);
    let m0 = OperatorState::from_pauli(&PauliString::parse_for(n, "Z1").unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let d = 1 << n;
    let mut psi = DVector::<Complex64>::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    psi /= c(psi.norm(), 0.0);

    for t in [0.3, 1.0, 2.5] {
        let mt = evolve(&m0, &h, &LindbladSpec::None, t, 1e-12).unwrap();
        let heis = (psi.adjoint() * dense_operator(&mt) * &psi)[(0, 0)];

        // phi = e^{-iHt} psi by RK4 on the state vector.
        let steps = 20_000;
        let dt = t / steps as f64;
        let f = |v: &DVector<Complex64>| -> DVector<Complex64> { (&hd * v) * c(0.0, -1.0) };
        let mut phi = psi.clone();
        for _ in 0..steps {
            let k1 = f(&phi);
            let k2 = f(&(&phi + &k1 * c(dt / 2.0, 0.0)));
            let k3 = f(&(&phi + &k2 * c(dt / 2.0, 0.0)));
            let k4 = f(&(&phi + &k3 * c(dt, 0.0)));
            phi += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0);
        }
        let schr = (phi.adjoint() * dense_operator(&m0) * &phi)[(0, 0)];
        assert!((heis - schr).norm() < 1e-8, "t={t}: {heis} vs {schr}");
    }
}

#[test]
fn size_from_otocs_equals_decomposition() {
    let n = 6;
    let h = HamiltonianSpec::chaotic_chain(n).unwrap();
    let m0 = OperatorState::from_pauli(&PauliString::single(n, 3, Pauli::X).unwrap()).unwrap();
    evolve_observed(&m0, &h, &LindbladSpec::None, &[0.5, 1.0, 2.0], 1e-10, |_, s| {
        let direct = s.size_distribution().mean_size().unwrap();
        let via = mean_size_from_otocs(n, &single_site_otocs(s).unwrap()).unwrap();
        assert!((direct - via).abs() < 1e-10);
    })
    .unwrap();
}

#[test]
fn late_time_size_approaches_random_operator_value() {
    let n = 6;
    let h = HamiltonianSpec::chaotic_chain(n).unwrap();
    // Y has no overlap with any power of this real Hamiltonian.
    let m0 = OperatorState::from_pauli(&PauliString::single(n, n / 2, Pauli::Y).unwrap()).unwrap();
    let times: Vec<f64> = (0..=40).map(|i| 20.0 + i as f64 * 0.5).collect();
    let mut sizes = Vec::new();
    evolve_observed(&m0, &h, &LindbladSpec::None, &times, 1e-8, |_, s| {
        sizes.push(s.size_distribution().mean_size().unwrap());
    })
    .unwrap();
    let avg = sizes.iter().sum::<f64>() / sizes.len() as f64;
    assert!((avg - 4.5).abs() / 4.5 < 0.05, "late-time size {avg}");
}

#[test]
fn size_mixture_follows_two_exponential_oracle() {
    let n = 4;
    let eps = 0.1;
    let a = 0.5f64.sqrt();
    let m0 = OperatorState::from_terms(
        n,
        &[
            (PauliString::parse_for(n, "X0").unwrap(), a),
            (PauliString::parse_for(n, "X0 X1 X2").unwrap(), a),
        ],
    )
    .unwrap();
    let h = HamiltonianSpec::zero(n).unwrap();
    let trace = record_trace(&m0, &h, &LindbladSpec::EffectiveSize { epsilon: eps }, 2.0, 1e-3, 1e-12)
        .unwrap();
    assert!(check_eq6(&trace, eps) < 1e-6);
    assert!(check_eq5(&trace, eps) < 1e-6);
    for (i, &t) in trace.time.iter().enumerate() {
        let (p1, p3) = (0.5 * (-2.0 * eps * t).exp(), 0.5 * (-6.0 * eps * t).exp());
        let norm = p1 + p3;
        let mean = (p1 + 3.0 * p3) / norm;
        let var = (p1 + 9.0 * p3) / norm - mean * mean;
        assert!((trace.echo[i] - norm).abs() < 1e-10);
        assert!((trace.mean_size[i] - mean).abs() < 1e-10);
        assert!((trace.variance[i] - var).abs() < 1e-10);
    }
}

#[test]
fn generic_lindblad_breaks_echo_identity() {
    // With only Z dephasing, the echo rate is not 2 eps times the size.
    let n = 3;
    let h = HamiltonianSpec::chaotic_chain(n).unwrap();
    let jumps = (0..n)
        .map(|i| (PauliString::single(n, i, Pauli::Z).unwrap(), 0.1))
        .collect();
    let m0 = OperatorState::from_pauli(&PauliString::single(n, 1, Pauli::X).unwrap()).unwrap();
    let trace = record_trace(&m0, &h, &LindbladSpec::Jumps(jumps), 1.0, 1e-2, 1e-10).unwrap();
    assert!(check_eq5(&trace, 0.1) > 1e-3);
}
