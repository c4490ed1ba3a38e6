//! Least-squares extraction of growth constants from measured curves.

use crate::ruc::GrowthCurve;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("fit window [{t_min}, {t_max}] holds {points} points; at least {needed} required")]
    TooFewPoints { t_min: f64, t_max: f64, points: usize, needed: usize },
    #[error("ill-conditioned fit: abscissae have no spread")]
    Degenerate,
    #[error("non-positive value {value} at t = {t} in a logarithmic fit")]
    NonPositive { t: f64, value: f64 },
    #[error("model needs parameter {0}")]
    MissingParameter(&'static str),
}

/// Closed time interval used for a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub t_min: f64,
    pub t_max: f64,
}

impl FitWindow {
    pub fn new(t_min: f64, t_max: f64) -> Self {
        Self { t_min, t_max }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Covariance of `(intercept, slope)`.
    pub covariance: [[f64; 2]; 2],
    pub r_squared: f64,
    pub points: usize,
}

impl LinearFit {
    pub fn slope_stderr(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn intercept_stderr(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit, FitError> {
    assert_eq!(x.len(), y.len());
    let m = x.len();
    if m < 2 {
        return Err(FitError::TooFewPoints {
            t_min: x.first().copied().unwrap_or(f64::NAN),
            t_max: x.last().copied().unwrap_or(f64::NAN),
            points: m,
            needed: 2,
        });
    }
    let mf = m as f64;
    let xm = x.iter().sum::<f64>() / mf;
    let ym = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    if !(sxx > 1e-300) {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let sigma2 = if m > 2 { rss / (mf - 2.0) } else { 0.0 };
    let var_slope = sigma2 / sxx;
    let var_intercept = sigma2 * (1.0 / mf + xm * xm / sxx);
    let cov = -xm * var_slope;
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        covariance: [[var_intercept, cov], [cov, var_slope]],
        r_squared,
        points: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `S = a + (3/2) v_B t`
    LinearBallistic,
    /// `dS^2 = c^2 v_B t + d`
    SqrtWidth,
    /// `ln S = ln A + lambda t`
    Exponential,
    /// Window mean of `S` with a batch-means error.
    Plateau,
    /// Window mean of `dS / S`.
    RelativeWidth,
    /// `ln N = a - rate t`; reported value is the decay rate.
    EchoDecay,
}

/// One fitted constant with its uncertainty and the window it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub model: FitModel,
    pub value: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Covariance of the underlying `(intercept, slope)` regression, or of
    /// `(value, value)` for window means.
    pub covariance: [[f64; 2]; 2],
    pub r_squared: f64,
    pub window: FitWindow,
    pub points: usize,
}

fn window_points<'a>(
    curve: &'a GrowthCurve,
    window: FitWindow,
) -> impl Iterator<Item = usize> + 'a {
    (0..curve.len()).filter(move |&i| window.contains(curve.time[i]))
}

fn require(window: FitWindow, points: usize, needed: usize) -> Result<(), FitError> {
    if points < needed {
        Err(FitError::TooFewPoints {
            t_min: window.t_min,
            t_max: window.t_max,
            points,
            needed,
        })
    } else {
        Ok(())
    }
}

/// Mean of `values` with a standard error from `blocks` contiguous batch
/// means, which tolerates serial correlation along the curve.
pub fn batch_mean(values: &[f64], blocks: usize) -> (f64, f64) {
    let m = values.len();
    let mean = values.iter().sum::<f64>() / m as f64;
    let blocks = blocks.clamp(2, m.max(2));
    if m < blocks {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0).max(1.0);
        return (mean, (var / m as f64).sqrt());
    }
    let means: Vec<f64> = (0..blocks)
        .map(|b| {
            let (lo, hi) = (b * m / blocks, (b + 1) * m / blocks);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let bm = means.iter().sum::<f64>() / blocks as f64;
    let var = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (blocks as f64 - 1.0);
    (mean, (var / blocks as f64).sqrt())
}

const PLATEAU_BLOCKS: usize = 5;

/// Fits one growth constant over `window`. `SqrtWidth` needs `v_b`.
pub fn fit_growth_constants(
    curve: &GrowthCurve,
    model: FitModel,
    window: FitWindow,
    v_b: Option<f64>,
) -> Result<GrowthFit, FitError> {
    let idx: Vec<usize> = window_points(curve, window).collect();
    let regress = |y: &dyn Fn(usize) -> Result<f64, FitError>| -> Result<LinearFit, FitError> {
        require(window, idx.len(), 3)?;
        let xs: Vec<f64> = idx.iter().map(|&i| curve.time[i]).collect();
        let ys = idx.iter().map(|&i| y(i)).collect::<Result<Vec<f64>, _>>()?;
        linear_regression(&xs, &ys)
    };
    let from_line = |fit: LinearFit, value: f64, stderr: f64| GrowthFit {
        model,
        value,
        stderr,
        intercept: fit.intercept,
        covariance: fit.covariance,
        r_squared: fit.r_squared,
        window,
        points: fit.points,
    };
    let from_mean = |values: Vec<f64>| {
        let (mean, se) = batch_mean(&values, PLATEAU_BLOCKS);
        GrowthFit {
            model,
            value: mean,
            stderr: se,
            intercept: 0.0,
            covariance: [[se * se, se * se], [se * se, se * se]],
            r_squared: f64::NAN,
            window,
            points: values.len(),
        }
    };
    match model {
        FitModel::LinearBallistic => {
            let fit = regress(&|i| Ok(curve.mean_size[i]))?;
            Ok(from_line(fit, fit.slope / 1.5, fit.slope_stderr() / 1.5))
        }
        FitModel::SqrtWidth => {
            let v = v_b.ok_or(FitError::MissingParameter("v_b"))?;
            let fit = regress(&|i| Ok(curve.variance[i]))?;
            let c2 = (fit.slope / v).max(0.0);
            let c = c2.sqrt();
            let se = if c > 0.0 { fit.slope_stderr() / v / (2.0 * c) } else { f64::INFINITY };
            Ok(from_line(fit, c, se))
        }
        FitModel::Exponential => {
            let fit = regress(&|i| {
                let s = curve.mean_size[i];
                if s > 0.0 {
                    Ok(s.ln())
                } else {
                    Err(FitError::NonPositive { t: curve.time[i], value: s })
                }
            })?;
            Ok(from_line(fit, fit.slope, fit.slope_stderr()))
        }
        FitModel::EchoDecay => {
            let fit = regress(&|i| Ok(curve.log_echo[i]))?;
            Ok(from_line(fit, -fit.slope, fit.slope_stderr()))
        }
        FitModel::Plateau => {
            require(window, idx.len(), 2)?;
            Ok(from_mean(idx.iter().map(|&i| curve.mean_size[i]).collect()))
        }
        FitModel::RelativeWidth => {
            require(window, idx.len(), 2)?;
            let values = idx
                .iter()
                .map(|&i| {
                    let s = curve.mean_size[i];
                    if s > 0.0 {
                        Ok(curve.variance[i].max(0.0).sqrt() / s)
                    } else {
                        Err(FitError::NonPositive { t: curve.time[i], value: s })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(from_mean(values))
        }
    }
}

/// `y = A x^gamma` by regression in log-log space.
pub fn power_law(x: &[f64], y: &[f64]) -> Result<LinearFit, FitError> {
    let lx = x
        .iter()
        .map(|&v| if v > 0.0 { Ok(v.ln()) } else { Err(FitError::NonPositive { t: v, value: v }) })
        .collect::<Result<Vec<_>, _>>()?;
    let ly = y
        .iter()
        .zip(x)
        .map(|(&v, &t)| if v > 0.0 { Ok(v.ln()) } else { Err(FitError::NonPositive { t, value: v }) })
        .collect::<Result<Vec<_>, _>>()?;
    linear_regression(&lx, &ly)
}
