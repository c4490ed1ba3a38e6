//! Adaptive Dormand-Prince 5(4) integrator for `dy/dt = f(t, y)`.
//!
//! Steps are clipped so that every requested output time is hit exactly.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); try a smaller initial step or looser tolerance")]
    StepUnderflow { t: f64, h: f64 },
    #[error("exceeded {max_steps} steps before t = {t}; last accepted step {h:e}")]
    TooManySteps { t: f64, h: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("output times must be non-decreasing and start at or after t0")]
    BadTimes,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }

    /// Same value for relative and absolute tolerance.
    pub fn uniform(tol: f64) -> Self {
        Self { rtol: tol, atol: tol }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub tol: Tolerance,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Options {
    pub fn new(tol: Tolerance) -> Self {
        Self {
            tol,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn weighted_rms(v: &[f64], y: &[f64], tol: &Tolerance) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(vi, yi)| (vi / (tol.atol + tol.rtol * yi.abs())).powi(2))
        .sum();
    (sum / v.len().max(1) as f64).sqrt()
}

/// Starting step from the Hairer-Norsett-Wanner heuristic for a 5th order
/// method.
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    y1: &mut [f64],
    f1: &mut [f64],
    tol: &Tolerance,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d0 = weighted_rms(y, y, tol);
    let d1 = weighted_rms(f0, y, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    for i in 0..y.len() {
        y1[i] = y[i] + h0 * f0[i];
    }
    f(t + h0, y1, f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = weighted_rms(&diff, y, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrates from `(t0, y0)` through each time in `times`, calling
/// `observe(t, y)` at `t0` (if it is the first output) and at every output.
/// Returns the state at the last output time.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: Vec<f64>,
    times: &[f64],
    opts: &Options,
    mut observe: O,
) -> Result<Vec<f64>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    if !(opts.tol.rtol > 0.0) || !(opts.tol.atol > 0.0) {
        return Err(OdeError::BadTolerance(opts.tol.rtol.min(opts.tol.atol)));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(OdeError::BadTimes);
    }
    let dim = y0.len();
    let mut y = y0;
    let mut t = t0;
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];

    f(t, &y, &mut k1);
    let mut h = match opts.initial_step {
        Some(h) => h,
        None => initial_step(&mut f, t, &y, &k1, &mut ytmp, &mut k2, &opts.tol),
    };
    let mut steps = 0usize;

    for &target in times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(OdeError::TooManySteps {
                    t,
                    h,
                    max_steps: opts.max_steps,
                });
            }
            let remaining = target - t;
            let mut step = h.min(opts.max_step);
            let clipped = step >= remaining * (1.0 - 1e-12);
            if clipped {
                step = remaining;
            }
            if step < 1e-14 * t.abs().max(1.0) {
                return Err(OdeError::StepUnderflow { t, h: step });
            }

            combine(&mut ytmp, &y, step, &[(A21, &k1)]);
            f(t + C2 * step, &ytmp, &mut k2);
            combine(&mut ytmp, &y, step, &[(A31, &k1), (A32, &k2)]);
            f(t + C3 * step, &ytmp, &mut k3);
            combine(&mut ytmp, &y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + C4 * step, &ytmp, &mut k4);
            combine(&mut ytmp, &y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + C5 * step, &ytmp, &mut k5);
            combine(
                &mut ytmp,
                &y,
                step,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            f(t + step, &ytmp, &mut k6);
            combine(
                &mut ynew,
                &y,
                step,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            f(t + step, &ynew, &mut k7);

            let mut err = 0.0;
            for i in 0..dim {
                let e = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.tol.atol + opts.tol.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / dim.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(OdeError::NonFinite { t });
            }
            steps += 1;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if clipped { target } else { t + step };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                // A clipped step says nothing about the natural step size.
                if !clipped || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * factor.min(1.0);
            }
        }
        observe(t, &y);
    }
    Ok(y)
}
