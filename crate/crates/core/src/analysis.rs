//! Curve diagnostics built on top of simulation output.

use crate::exact::OtocProfile;
use crate::fit::{linear_regression, FitError, FitWindow, LinearFit};
use crate::phenom::PhenomParams;
use crate::ruc::GrowthCurve;
use serde::{Deserialize, Serialize};

/// Relative drop (of the size, or of its logarithmic growth rate) below
/// the noiseless curve that marks the deviation time.
pub const DEFAULT_DEVIATION: f64 = 0.1;

/// Relative half-width of the secant used by [`rate_deviation_point`].
pub const DEFAULT_RATE_SPAN: f64 = 0.2;

/// Linear interpolation of `ys(xs)` at `x`; `None` outside the range.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let j = xs.partition_point(|&v| v < x);
    if j == 0 {
        return Some(ys[0]);
    }
    let (x0, x1) = (xs[j - 1], xs[j]);
    let f = if x1 > x0 { (x - x0) / (x1 - x0) } else { 1.0 };
    Some(ys[j - 1] + f * (ys[j] - ys[j - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationPoint {
    pub time: f64,
    pub log_echo: f64,
    pub echo: f64,
}

/// First time at which `noisy` falls a fraction `delta` below `reference`,
/// with the noisy curve's echo at that time. Both curves must share a time
/// grid; the crossing is located by linear interpolation of the relative
/// deficit.
pub fn deviation_point(reference: &GrowthCurve, noisy: &GrowthCurve, delta: f64) -> Option<DeviationPoint> {
    let len = reference.len().min(noisy.len());
    let deficit = |i: usize| 1.0 - noisy.mean_size[i] / reference.mean_size[i];
    let mut prev = deficit(0);
    for i in 1..len {
        let d = deficit(i);
        if d >= delta {
            let f = if d > prev { ((delta - prev) / (d - prev)).clamp(0.0, 1.0) } else { 1.0 };
            let (t0, t1) = (noisy.time[i - 1], noisy.time[i]);
            let t = t0 + f * (t1 - t0);
            let le = noisy.log_echo[i - 1] + f * (noisy.log_echo[i] - noisy.log_echo[i - 1]);
            return Some(DeviationPoint {
                time: t,
                log_echo: le,
                echo: le.exp(),
            });
        }
        prev = d;
    }
    None
}

/// First time at which the noisy logarithmic growth rate `d ln S/dt` falls
/// below `1 - delta` times the noiseless rate at the same time, with the
/// noisy echo there.
///
/// The rate at time `t` is a secant over `[t(1 - span), t(1 + span)]`
/// (at least one sample on each side), so late-time rates average over
/// proportionally more samples. Both curves must share a time grid. Times
/// where the reference rate is not positive are skipped.
pub fn rate_deviation_point(
    reference: &GrowthCurve,
    noisy: &GrowthCurve,
    delta: f64,
    span: f64,
) -> Option<DeviationPoint> {
    let len = reference.len().min(noisy.len());
    if len < 3 {
        return None;
    }
    let times = &reference.time[..len];
    let bounds = |i: usize| {
        let t = times[i];
        let lo = times.partition_point(|&x| x < t * (1.0 - span)).min(i - 1);
        let hi = times.partition_point(|&x| x <= t * (1.0 + span)).saturating_sub(1).max(i + 1);
        (lo, hi)
    };
    let rate = |c: &GrowthCurve, lo: usize, hi: usize| {
        (c.mean_size[hi].ln() - c.mean_size[lo].ln()) / (c.time[hi] - c.time[lo])
    };
    let mut prev: Option<(usize, f64)> = None;
    for i in 1..len - 1 {
        let (lo, hi) = bounds(i);
        if hi >= len {
            break;
        }
        let r0 = rate(reference, lo, hi);
        if !(r0 > 0.0) {
            prev = None;
            continue;
        }
        let ratio = 1.0 - rate(noisy, lo, hi) / r0;
        if ratio >= delta {
            let (t, le) = match prev {
                Some((j, p)) if ratio > p => {
                    let f = ((delta - p) / (ratio - p)).clamp(0.0, 1.0);
                    (
                        noisy.time[j] + f * (noisy.time[i] - noisy.time[j]),
                        noisy.log_echo[j] + f * (noisy.log_echo[i] - noisy.log_echo[j]),
                    )
                }
                _ => (noisy.time[i], noisy.log_echo[i]),
            };
            return Some(DeviationPoint {
                time: t,
                log_echo: le,
                echo: le.exp(),
            });
        }
        prev = Some((i, ratio));
    }
    None
}

/// Times where the first-order noise correction to ballistic growth is
/// between `lo` and `hi` of the linear term.
pub fn correction_window_1d(p: &PhenomParams, lo: f64, hi: f64) -> FitWindow {
    // correction / linear = (kappa/2) c^2 eps t / (3/2)
    let rate = 0.5 * p.convention.kappa() * p.c * p.c * p.epsilon / 1.5;
    FitWindow::new(lo / rate, hi / rate)
}

/// For each distance `d >= 1` from `source`, the first time at which the
/// OTOC averaged over the sites at that distance drops below `threshold`.
pub fn front_arrival_times(profile: &OtocProfile, source: usize, threshold: f64) -> Vec<(f64, f64)> {
    let max_d = profile
        .sites
        .iter()
        .map(|&s| s.abs_diff(source))
        .max()
        .unwrap_or(0);
    let mut out = Vec::new();
    for d in 1..=max_d {
        let cols: Vec<usize> = profile
            .sites
            .iter()
            .enumerate()
            .filter(|(_, &s)| s.abs_diff(source) == d)
            .map(|(j, _)| j)
            .collect();
        if cols.is_empty() {
            continue;
        }
        let series: Vec<f64> = profile
            .values
            .iter()
            .map(|row| cols.iter().map(|&j| row[j]).sum::<f64>() / cols.len() as f64)
            .collect();
        for i in 1..series.len() {
            if series[i] < threshold {
                let (a, b) = (series[i - 1], series[i]);
                let f = if a > b { ((a - threshold) / (a - b)).clamp(0.0, 1.0) } else { 1.0 };
                let (t0, t1) = (profile.times[i - 1], profile.times[i]);
                out.push((d as f64, t0 + f * (t1 - t0)));
                break;
            }
        }
    }
    out
}

/// Regression of front distance on arrival time.
pub fn light_cone_fit(arrivals: &[(f64, f64)]) -> Result<LinearFit, FitError> {
    let t: Vec<f64> = arrivals.iter().map(|a| a.1).collect();
    let d: Vec<f64> = arrivals.iter().map(|a| a.0).collect();
    linear_regression(&t, &d)
}

/// OTOC averaged over every site in the profile, per time.
pub fn site_average(profile: &OtocProfile) -> Vec<f64> {
    profile
        .values
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect()
}

pub fn is_non_increasing(values: &[f64], tol: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Index of the minimum when it lies strictly inside the series and both
/// endpoints exceed it by more than `margin`.
pub fn interior_minimum(series: &[f64], margin: f64) -> Option<usize> {
    let (imin, &vmin) = series
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let last = series.len() - 1;
    if imin > 0 && imin < last && series[0] - vmin > margin && series[last] - vmin > margin {
        Some(imin)
    } else {
        None
    }
}
