use super::{evolve_observed, ExactError, HamiltonianSpec, LindbladSpec, OperatorState};
use serde::{Deserialize, Serialize};

/// Echo and size moments sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoTrace {
    pub time: Vec<f64>,
    pub echo: Vec<f64>,
    pub mean_size: Vec<f64>,
    pub variance: Vec<f64>,
}

impl EchoTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Evolves `state` and records `(N, S, dS^2)` at `t = 0, dt, ..., t_max`.
pub fn record_trace(
    state: &OperatorState,
    h: &HamiltonianSpec,
    l: &LindbladSpec,
    t_max: f64,
    dt: f64,
    tol: f64,
) -> Result<EchoTrace, ExactError> {
    let steps = (t_max / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let mut trace = EchoTrace {
        time: Vec::with_capacity(times.len()),
        echo: Vec::with_capacity(times.len()),
        mean_size: Vec::with_capacity(times.len()),
        variance: Vec::with_capacity(times.len()),
    };
    let mut failure = None;
    evolve_observed(state, h, l, &times, tol, |t, s| {
        let dist = s.size_distribution();
        match (dist.mean_size(), dist.variance()) {
            (Ok(m), Ok(v)) => {
                trace.time.push(t);
                trace.echo.push(s.echo());
                trace.mean_size.push(m);
                trace.variance.push(v);
            }
            _ => failure = Some(t),
        }
    })?;
    if failure.is_some() {
        return Err(ExactError::ZeroNorm);
    }
    Ok(trace)
}

/// Five-point derivative on the uniform grid, accurate to fourth order.
fn centered<F: Fn(usize) -> f64>(trace: &EchoTrace, f: F, i: usize) -> f64 {
    let h = (trace.time[i + 2] - trace.time[i - 2]) / 4.0;
    (f(i - 2) - 8.0 * f(i - 1) + 8.0 * f(i + 1) - f(i + 2)) / (12.0 * h)
}

/// `max |d/dt ln N + 2 eps S|` over interior grid points.
pub fn check_eq5(trace: &EchoTrace, epsilon: f64) -> f64 {
    (2..trace.len().saturating_sub(2))
        .map(|i| {
            let dlog = centered(trace, |j| trace.echo[j].ln(), i);
            (dlog + 2.0 * epsilon * trace.mean_size[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// `max |dS/dt + 2 eps dS^2|` over interior grid points.
pub fn check_eq6(trace: &EchoTrace, epsilon: f64) -> f64 {
    (2..trace.len().saturating_sub(2))
        .map(|i| {
            let ds = centered(trace, |j| trace.mean_size[j], i);
            (ds + 2.0 * epsilon * trace.variance[i]).abs()
        })
        .fold(0.0, f64::max)
}
