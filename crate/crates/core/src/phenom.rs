//! Closed-form and ODE predictions for noisy operator growth.
//!
//! The echo obeys `d ln N/dt = -kappa * eps * S(t)` and the mean size obeys
//! `dS/dt = (unitary growth) - kappa * eps * dS^2`, where `kappa` is 2 when
//! `N` is the operator mass `sum c_R^2` and 1 when the damping is quoted for
//! amplitudes. Every prediction here is parameterized by that choice.

use crate::ode::{self, OdeError, Options, Tolerance};
use crate::ruc::{Geometry, GrowthCurve};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_NSTAR_A: f64 = 1.0;
pub const DEFAULT_GOLDEN_RULE_PREFACTOR: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum PhenomError {
    #[error("parameter {name} must be non-negative and finite, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("size {size} outside the profile range [1, {max})")]
    SizeOutOfRange { size: f64, max: f64 },
    #[error("prediction requires a positive error rate")]
    ZeroErrorRate,
    #[error("all-to-all prediction requires an initial size of at least 1, got {0}")]
    InitialSize(f64),
    #[error("size ODE failed near t = {t}; retry with an initial step below {suggested_step:e}")]
    Stiff { t: f64, suggested_step: f64 },
    #[error("time grid must be non-decreasing and start at or after 0")]
    BadGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoConvention {
    /// `d ln N/dt = -2 eps S`
    #[default]
    Mass,
    /// `d ln N/dt = -eps S`
    Amplitude,
}

impl EchoConvention {
    pub fn kappa(self) -> f64 {
        match self {
            EchoConvention::Mass => 2.0,
            EchoConvention::Amplitude => 1.0,
        }
    }
}

/// Continuum error rate matching a per-layer depolarizing weight
/// `(1 - eps)^S` on amplitudes.
pub fn continuum_rate(eps_per_layer: f64) -> f64 {
    -(-eps_per_layer).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenomParams {
    pub v_b: f64,
    pub c: f64,
    pub lambda: f64,
    pub b: f64,
    pub epsilon: f64,
    #[serde(default = "one")]
    pub d: f64,
    #[serde(default)]
    pub s0: f64,
    #[serde(default)]
    pub convention: EchoConvention,
}

fn one() -> f64 {
    1.0
}

impl PhenomParams {
    pub fn validate(&self) -> Result<(), PhenomError> {
        for (name, value) in [
            ("v_b", self.v_b),
            ("c", self.c),
            ("lambda", self.lambda),
            ("b", self.b),
            ("epsilon", self.epsilon),
            ("d", self.d),
            ("s0", self.s0),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(PhenomError::BadParameter { name, value });
            }
        }
        Ok(())
    }

    fn kappa(&self) -> f64 {
        self.convention.kappa()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean_size: f64,
    pub echo: f64,
    pub log_echo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction1d {
    pub mean_size: f64,
    pub echo: f64,
    pub log_echo: f64,
    /// Echo from the linear growth term alone (Gaussian in `t`).
    pub leading_echo: f64,
}

fn check_t(t: f64) -> Result<(), PhenomError> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(PhenomError::NegativeTime(t))
    }
}

/// Ballistic growth with first-order noise correction,
/// `S = s0 + (3/2) v t - (kappa/2) c^2 eps v t^2`, and the echo from
/// integrating that size.
pub fn predict_1d(p: &PhenomParams, t: f64) -> Result<Prediction1d, PhenomError> {
    p.validate()?;
    check_t(t)?;
    let k = p.kappa();
    let eps = p.epsilon;
    let quad = 0.5 * k * p.c * p.c * eps * p.v_b;
    let mean_size = p.s0 + 1.5 * p.v_b * t - quad * t * t;
    let integral = p.s0 * t + 0.75 * p.v_b * t * t - quad * t * t * t / 3.0;
    let log_echo = -k * eps * integral;
    let leading = -k * eps * 0.75 * p.v_b * t * t;
    Ok(Prediction1d {
        mean_size,
        echo: log_echo.exp(),
        log_echo,
        leading_echo: leading.exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionAllToAll {
    pub mean_size: f64,
    pub echo: f64,
    pub log_echo: f64,
    /// Plateau size `lambda / (kappa eps b^2)`; infinite without noise.
    pub plateau: f64,
    /// `ln(S_p / s0) / lambda`; infinite without noise.
    pub plateau_time: f64,
}

/// Logistic solution of `dS/dt = lambda S - kappa eps b^2 S^2`.
pub fn predict_all_to_all(p: &PhenomParams, t: f64) -> Result<PredictionAllToAll, PhenomError> {
    p.validate()?;
    check_t(t)?;
    if p.s0 < 1.0 {
        return Err(PhenomError::InitialSize(p.s0));
    }
    let (lam, s0) = (p.lambda, p.s0);
    let damping = p.kappa() * p.epsilon * p.b * p.b;
    if damping == 0.0 {
        return Ok(PredictionAllToAll {
            mean_size: s0 * (lam * t).exp(),
            echo: 1.0,
            log_echo: 0.0,
            plateau: f64::INFINITY,
            plateau_time: f64::INFINITY,
        });
    }
    if lam == 0.0 {
        // dS/dt = -g S^2
        let s = s0 / (1.0 + damping * s0 * t);
        let log_echo = -p.kappa() * p.epsilon * (1.0 + damping * s0 * t).ln() / damping;
        return Ok(PredictionAllToAll {
            mean_size: s,
            echo: log_echo.exp(),
            log_echo,
            plateau: 0.0,
            plateau_time: f64::INFINITY,
        });
    }
    let sp = lam / damping;
    // e^{lam t} - 1 without cancellation at small t.
    let growth = (lam * t).exp_m1();
    let mean_size = sp * s0 * (growth + 1.0) / (sp + s0 * growth);
    let integral = (sp / lam) * (s0 * growth / sp).ln_1p();
    let log_echo = -p.kappa() * p.epsilon * integral;
    Ok(PredictionAllToAll {
        mean_size,
        echo: log_echo.exp(),
        log_echo,
        plateau: sp,
        plateau_time: (sp / s0).ln() / lam,
    })
}

/// Echo at the time noise visibly bends the growth curve:
/// `exp(-a v / eps)` in 1D and `exp(-1/b^2)` for all-to-all coupling.
pub fn predict_nstar(p: &PhenomParams, geometry: Geometry, a: f64) -> Result<f64, PhenomError> {
    p.validate()?;
    if p.epsilon <= 0.0 {
        return Err(PhenomError::ZeroErrorRate);
    }
    match geometry {
        Geometry::Brickwork1d => Ok((-a * p.v_b / p.epsilon).exp()),
        Geometry::AllToAll => Ok((-1.0 / (p.b * p.b)).exp()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedProfile {
    /// Tail density at the requested size, after noise damping.
    pub tail_mass: f64,
    /// Weight of the small-size spike at `S = 1`.
    pub delta_mass: f64,
    /// `exp(-eps S^2 / v)`.
    pub damping: f64,
    /// Truncation size `sqrt(v / eps)`.
    pub truncation: f64,
}

/// Two-component size profile of an operator overlapping a diffusing
/// conserved density.
pub fn predict_conserved_profile(p: &PhenomParams, t: f64, s: f64) -> Result<ConservedProfile, PhenomError> {
    p.validate()?;
    check_t(t)?;
    let front = 1.5 * p.v_b * t;
    if !(s >= 1.0 && s < front) {
        return Err(PhenomError::SizeOutOfRange { size: s, max: front });
    }
    if p.d <= 0.0 || t <= 0.0 {
        return Err(PhenomError::BadParameter { name: "d", value: p.d * t });
    }
    let damping = if p.epsilon == 0.0 {
        1.0
    } else {
        (-p.epsilon * s * s / p.v_b).exp()
    };
    let tail = p.v_b / p.d.sqrt() * (front - s).powf(-1.5) * damping;
    Ok(ConservedProfile {
        tail_mass: tail,
        delta_mass: 1.0 / (p.d * t).sqrt(),
        damping,
        truncation: if p.epsilon == 0.0 {
            f64::INFINITY
        } else {
            (p.v_b / p.epsilon).sqrt()
        },
    })
}

/// Mean size of the conserved-operator profile, summing the tail over
/// integer sizes `2 ..` up to one site behind the front.
pub fn conserved_profile_mean(p: &PhenomParams, t: f64) -> Result<f64, PhenomError> {
    let front = 1.5 * p.v_b * t;
    let delta = predict_conserved_profile(p, t, 1.0)?.delta_mass;
    let mut mass = delta;
    let mut first = delta;
    let mut s = 2.0;
    while s <= front - 1.0 {
        let tail = predict_conserved_profile(p, t, s)?.tail_mass;
        mass += tail;
        first += s * tail;
        s += 1.0;
    }
    Ok(first / mass)
}

/// Integrates `dS/dt = unitary(t, S) - kappa eps width_sq(t, S)` on `t_grid`
/// starting from `s_init` at `t_grid[0]`.
pub fn integrate_eq6<U, W>(
    unitary: U,
    width_sq: W,
    epsilon: f64,
    convention: EchoConvention,
    s_init: f64,
    t_grid: &[f64],
) -> Result<Vec<f64>, PhenomError>
where
    U: Fn(f64, f64) -> f64,
    W: Fn(f64, f64) -> f64,
{
    if t_grid.is_empty() {
        return Ok(Vec::new());
    }
    if t_grid[0] < 0.0 || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(PhenomError::BadGrid);
    }
    let k = convention.kappa() * epsilon;
    let mut out = Vec::with_capacity(t_grid.len());
    let mut opts = Options::new(Tolerance::new(1e-12, 1e-12));
    opts.max_steps = 1_000_000;
    ode::integrate(
        |t, y, dy| dy[0] = unitary(t, y[0]) - k * width_sq(t, y[0]),
        t_grid[0],
        vec![s_init],
        t_grid,
        &opts,
        |_, y| out.push(y[0]),
    )
    .map_err(|e| match e {
        OdeError::StepUnderflow { t, h } | OdeError::TooManySteps { t, h, .. } => {
            PhenomError::Stiff { t, suggested_step: h / 10.0 }
        }
        OdeError::NonFinite { t } => PhenomError::Stiff { t, suggested_step: 1e-6 },
        OdeError::BadTimes => PhenomError::BadGrid,
        OdeError::BadTolerance(_) => unreachable!("fixed tolerance"),
    })?;
    Ok(out)
}

/// `d ln N/dt` from a weak Hamiltonian perturbation of strength `eta`.
pub fn golden_rule_rate(eta: f64, tau_th: f64, xi_th: f64, mean_size: f64, prefactor: f64) -> Result<f64, PhenomError> {
    for (name, value) in [
        ("eta", eta),
        ("tau_th", tau_th),
        ("xi_th", xi_th),
        ("mean_size", mean_size),
        ("prefactor", prefactor),
    ] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(PhenomError::BadParameter { name, value });
        }
    }
    Ok(-prefactor * eta * eta * tau_th * xi_th * mean_size)
}

/// Theory curve in the growth-curve schema (zero variance and error).
pub fn theory_curve<F>(times: &[f64], mut f: F) -> Result<GrowthCurve, PhenomError>
where
    F: FnMut(f64) -> Result<(f64, f64), PhenomError>,
{
    let mut curve = GrowthCurve::default();
    for &t in times {
        let (mean, log_echo) = f(t)?;
        curve.time.push(t);
        curve.mean_size.push(mean);
        curve.variance.push(0.0);
        curve.echo.push(log_echo.exp());
        curve.log_echo.push(log_echo);
        curve.stderr_mean_size.push(0.0);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(eps: f64) -> PhenomParams {
        PhenomParams {
            v_b: 1.0,
            c: 1.0,
            lambda: 0.7,
            b: 0.5,
            epsilon: eps,
            d: 1.0,
            s0: 0.0,
            convention: EchoConvention::Mass,
        }
    }

    #[test]
    fn one_d_examples() {
        let p = params(0.0);
        let r = predict_1d(&p, 4.0).unwrap();
        assert_eq!(r.mean_size, 6.0);
        assert_eq!(r.echo, 1.0);
        let r0 = predict_1d(&params(0.3), 0.0).unwrap();
        assert_eq!((r0.mean_size, r0.echo), (0.0, 1.0));

        let amp = PhenomParams {
            convention: EchoConvention::Amplitude,
            ..params(0.01)
        };
        assert!((predict_1d(&amp, 10.0).unwrap().mean_size - 14.5).abs() < 1e-12);
        let mass = predict_1d(&params(0.01), 10.0).unwrap();
        assert!((mass.mean_size - 14.0).abs() < 1e-12);
        // Leading Gaussian: exp(-2 * 0.01 * 0.75 * 100).
        assert!((mass.leading_echo - (-1.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn one_d_echo_is_integrated_size() {
        let p = PhenomParams { s0: 0.8, c: 1.3, v_b: 0.6, ..params(0.02) };
        let h = 1e-4;
        for t in [1.0, 5.0, 12.0] {
            let up = predict_1d(&p, t + h).unwrap().log_echo;
            let dn = predict_1d(&p, t - h).unwrap().log_echo;
            let deriv = (up - dn) / (2.0 * h);
            let s = predict_1d(&p, t).unwrap().mean_size;
            assert!((deriv + 2.0 * p.epsilon * s).abs() < 1e-8);
        }
    }

    #[test]
    fn all_to_all_limits() {
        let free = PhenomParams { s0: 2.0, ..params(0.0) };
        let r = predict_all_to_all(&free, 3.0).unwrap();
        assert!((r.mean_size - 2.0 * (2.1f64).exp()).abs() < 1e-12);
        assert_eq!(r.echo, 1.0);

        let p = PhenomParams { s0: 1.0, ..params(0.01) };
        let late = predict_all_to_all(&p, 400.0).unwrap();
        let sp = 0.7 / (2.0 * 0.01 * 0.25);
        assert!((late.plateau - sp).abs() < 1e-9);
        assert!((late.mean_size - sp).abs() / sp < 1e-9);
        assert!((late.plateau_time - sp.ln() / 0.7).abs() < 1e-12);
    }

    #[test]
    fn late_echo_rate_is_noise_independent() {
        for conv in [EchoConvention::Mass, EchoConvention::Amplitude] {
            for eps in [1e-3, 1e-2, 3e-2] {
                let p = PhenomParams { s0: 1.0, convention: conv, ..params(eps) };
                let tp = predict_all_to_all(&p, 0.0).unwrap().plateau_time;
                let t = tp + 40.0;
                let rate = predict_all_to_all(&p, t + 1.0).unwrap().log_echo
                    - predict_all_to_all(&p, t).unwrap().log_echo;
                assert!((rate + 0.7 / 0.25).abs() < 1e-8, "eps={eps} rate={rate}");
            }
        }
    }

    #[test]
    fn logistic_satisfies_ode() {
        let p = PhenomParams { s0: 1.5, ..params(0.02) };
        let g = 2.0 * 0.02 * 0.25;
        let h = 1e-5;
        for i in 0..60 {
            let t = 0.25 * i as f64 + 0.1;
            let s = predict_all_to_all(&p, t).unwrap().mean_size;
            let ds = (predict_all_to_all(&p, t + h).unwrap().mean_size
                - predict_all_to_all(&p, t - h).unwrap().mean_size)
                / (2.0 * h);
            let resid = ds - (0.7 * s - g * s * s);
            assert!(resid.abs() < 1e-10 * s.max(1.0) * 1e3, "t={t} resid={resid}");
        }
    }

    #[test]
    fn eq6_recovers_closed_forms() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
        let p = PhenomParams { v_b: 0.6, c: 1.25, ..params(0.01) };
        let cc = p.c * p.c * p.v_b;
        let numeric = integrate_eq6(
            |_, _| 1.5 * p.v_b,
            |t, _| cc * t,
            p.epsilon,
            p.convention,
            0.0,
            &grid,
        )
        .unwrap();
        for (t, s) in grid.iter().zip(&numeric) {
            let exact = predict_1d(&p, *t).unwrap().mean_size;
            assert!((s - exact).abs() <= 1e-6 * exact.abs().max(1.0));
        }

        let q = PhenomParams { s0: 1.0, ..params(0.01) };
        let numeric = integrate_eq6(
            |_, s| q.lambda * s,
            |_, s| q.b * q.b * s * s,
            q.epsilon,
            q.convention,
            1.0,
            &grid,
        )
        .unwrap();
        for (t, s) in grid.iter().zip(&numeric) {
            let exact = predict_all_to_all(&q, *t).unwrap().mean_size;
            assert!((s - exact).abs() <= 1e-6 * exact);
        }

        let flat = integrate_eq6(|_, _| 0.0, |_, _| 3.0, 0.0, EchoConvention::Mass, 2.5, &grid).unwrap();
        assert!(flat.iter().all(|&s| s == 2.5));
    }

    #[test]
    fn eq6_blow_up_is_reported() {
        let grid = [0.0, 5.0];
        let r = integrate_eq6(|_, s| s * s, |_, _| 0.0, 0.0, EchoConvention::Mass, 1.0, &grid);
        assert!(matches!(r, Err(PhenomError::Stiff { .. })));
    }

    #[test]
    fn nstar_forms() {
        let p = PhenomParams { v_b: 0.6, ..params(0.01) };
        assert!((predict_nstar(&p, Geometry::Brickwork1d, 1.0).unwrap() - (-60.0f64).exp()).abs() < 1e-40);
        let a = predict_nstar(&p, Geometry::AllToAll, 1.0).unwrap();
        let b = predict_nstar(&PhenomParams { epsilon: 0.1, ..p }, Geometry::AllToAll, 1.0).unwrap();
        assert_eq!(a, b);
        let big = predict_nstar(&PhenomParams { epsilon: 1e12, ..p }, Geometry::Brickwork1d, 1.0).unwrap();
        assert!((big - 1.0).abs() < 1e-9);
        assert_eq!(predict_nstar(&params(0.0), Geometry::AllToAll, 1.0), Err(PhenomError::ZeroErrorRate));
        // log N* linear in 1/eps.
        let logs: Vec<f64> = [1e-3, 2e-3, 4e-3]
            .iter()
            .map(|&e| predict_nstar(&PhenomParams { epsilon: e, ..p }, Geometry::Brickwork1d, 1.0).unwrap().ln())
            .collect();
        let slope1 = (logs[1] - logs[0]) / (500.0 - 1000.0);
        let slope2 = (logs[2] - logs[1]) / (250.0 - 500.0);
        assert!((slope1 - slope2).abs() < 1e-9);
    }

    #[test]
    fn conserved_profile_behaviour() {
        let p = PhenomParams { v_b: 1.0, d: 0.5, ..params(0.0) };
        let a = predict_conserved_profile(&p, 4.0, 1.0).unwrap();
        let b = predict_conserved_profile(&p, 16.0, 1.0).unwrap();
        assert!((a.delta_mass / b.delta_mass - 2.0).abs() < 1e-12);
        assert_eq!(a.damping, 1.0);
        assert!(predict_conserved_profile(&p, 4.0, 6.0).is_err());
        assert!(predict_conserved_profile(&p, 4.0, 0.5).is_err());

        // Fixed S far behind the front: tail density falls as t^{-3/2}.
        let s = 5.0;
        let t1 = predict_conserved_profile(&p, 1000.0, s).unwrap().tail_mass;
        let t2 = predict_conserved_profile(&p, 4000.0, s).unwrap().tail_mass;
        assert!((t1 / t2 / 8.0 - 1.0).abs() < 0.01);

        let noisy = PhenomParams { epsilon: 0.01, ..p };
        let prof = predict_conserved_profile(&noisy, 50.0, 10.0).unwrap();
        assert!((prof.truncation - 10.0).abs() < 1e-12);
        assert!((prof.damping - (-1.0f64).exp()).abs() < 1e-15);
        let m1 = conserved_profile_mean(&noisy, 40.0).unwrap();
        let m2 = conserved_profile_mean(&noisy, 160.0).unwrap();
        assert!(m2 < m1, "noisy profile mean should shrink: {m1} -> {m2}");
    }

    #[test]
    fn golden_rule() {
        assert_eq!(golden_rule_rate(0.0, 1.0, 1.0, 5.0, 1.0).unwrap(), 0.0);
        let r1 = golden_rule_rate(0.1, 2.0, 3.0, 5.0, 1.0).unwrap();
        let r2 = golden_rule_rate(0.2, 2.0, 3.0, 5.0, 1.0).unwrap();
        assert!((r2 / r1 - 4.0).abs() < 1e-12);
        let r3 = golden_rule_rate(0.1, 2.0, 3.0, 10.0, 1.0).unwrap();
        assert!((r3 / r1 - 2.0).abs() < 1e-12);
        assert!(golden_rule_rate(-0.1, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn continuum_rate_matches_small_eps() {
        assert!((continuum_rate(1e-3) - 1.0005003e-3).abs() < 1e-9);
        assert_eq!(continuum_rate(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn all_to_all_nstar_constant(e1 in 1e-5f64..1.0, e2 in 1e-5f64..1.0, b in 0.1f64..3.0) {
            let p = PhenomParams { b, ..params(e1) };
            let q = PhenomParams { b, ..params(e2) };
            prop_assert_eq!(
                predict_nstar(&p, Geometry::AllToAll, 1.0).unwrap(),
                predict_nstar(&q, Geometry::AllToAll, 1.0).unwrap()
            );
        }

        #[test]
        fn logistic_bounded_by_plateau(s0 in 1.0f64..50.0, eps in 1e-4f64..0.1, t in 0.0f64..100.0) {
            let p = PhenomParams { s0, ..params(eps) };
            let r = predict_all_to_all(&p, t).unwrap();
            let sp = r.plateau;
            prop_assert!(r.mean_size <= sp.max(s0) * (1.0 + 1e-12));
            prop_assert!(r.mean_size >= sp.min(s0) * (1.0 - 1e-12));
            prop_assert!(r.echo <= 1.0 && r.echo >= 0.0);
        }
    }
}
