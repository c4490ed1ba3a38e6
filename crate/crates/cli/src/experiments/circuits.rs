use std::io::Write;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use opgrowth_core::analysis::{correction_window_1d, rate_deviation_point};
use opgrowth_core::criteria::{self, Criterion};
use opgrowth_core::fit::{fit_growth_constants, linear_regression, power_law, FitModel, FitWindow};
use opgrowth_core::phenom::{continuum_rate, predict_1d, predict_all_to_all, theory_curve, PhenomParams};
use opgrowth_core::ruc::{run, run_with_ensemble};
use opgrowth_core::{rng, CircuitConfig, Geometry, GrowthCurve};

use super::{rate_tag, Metrics, Outcome, RunContext};
use crate::report::FitRecord;
use crate::spec::{Fig2aConfig, Fig2bConfig, NstarConfig};
use crate::svg::{Plot, Series, Style};

fn window(w: [f64; 2]) -> FitWindow {
    FitWindow::new(w[0], w[1])
}

fn write_curve(ctx: &mut RunContext, name: &str, curve: &GrowthCurve) -> Result<()> {
    curve.write_csv(ctx.create(name)?)?;
    Ok(())
}

fn size_series(label: String, c: &GrowthCurve, style: Style, color: usize) -> Series {
    let s = Series::new(label, c.time.clone(), c.mean_size.clone(), style, color);
    if style == Style::Dashed {
        s
    } else {
        s.with_err(c.stderr_mean_size.clone())
    }
}

fn echo_series(label: String, c: &GrowthCurve, style: Style, color: usize) -> Series {
    Series::new(label, c.time.clone(), c.log_echo.clone(), style, color)
}

pub fn fig2a(cfg: &Fig2aConfig, seed: u64, ctx: &mut RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let mut out = Outcome::default();
    let mut base = CircuitConfig::new(cfg.n, Geometry::Brickwork1d, 0.0, cfg.layers, cfg.trajectories, seed);
    base.memory_budget_bytes = cfg.memory_budget_bytes;

    let (c0, e0) = run_with_ensemble(&base)?;
    write_curve(ctx, "growth_eps0.csv", &c0)?;
    e0.size_distribution()?.write_csv(ctx.create("size_eps0.csv")?)?;
    let w = window(cfg.fit_window);
    let v = fit_growth_constants(&c0, FitModel::LinearBallistic, w, None)?;
    let c = fit_growth_constants(&c0, FitModel::SqrtWidth, w, Some(v.value))?;
    out.fit("v_b", FitRecord::from(&v));
    out.fit("c", FitRecord::from(&c));
    let mut s0 = FitRecord::new(v.intercept, v.covariance[0][0].sqrt());
    s0.window = Some(cfg.fit_window);
    out.fit("s0", s0);

    let mut size_plot = Plot::new("1D noisy brickwork: mean size", "t (layers)", "mean size");
    let mut echo_plot = Plot::new("1D noisy brickwork: echo", "t (layers)", "ln N");
    size_plot.push(size_series("eps=0".into(), &c0, Style::Line, 0));

    let mut metrics = Metrics::default();
    let (mut worst_size, mut worst_echo) = (0.0f64, 0.0f64);
    for (k, &eps) in cfg.epsilons.iter().enumerate() {
        let tag = rate_tag(eps);
        let (curve, ens) = run_with_ensemble(&CircuitConfig { epsilon: eps, ..base.clone() })?;
        write_curve(ctx, &format!("growth_eps{tag}.csv"), &curve)?;
        ens.size_distribution()?.write_csv(ctx.create(&format!("size_eps{tag}.csv"))?)?;

        let p = PhenomParams {
            v_b: v.value,
            c: c.value,
            lambda: 0.0,
            b: 0.0,
            epsilon: continuum_rate(eps),
            d: 1.0,
            s0: v.intercept.max(0.0),
            convention: cfg.convention,
        };
        let theory = theory_curve(&curve.time, |t| {
            let pr = predict_1d(&p, t)?;
            Ok((pr.mean_size, pr.log_echo))
        })?;
        write_curve(ctx, &format!("theory_eps{tag}.csv"), &theory)?;

        let (lo, hi) = criteria::CORRECTION_WINDOW;
        let win = correction_window_1d(&p, lo, hi);
        let t_end = win.t_max.min(cfg.layers as f64);
        let mut points = 0usize;
        let (mut err_size, mut err_echo) = (0.0f64, 0.0f64);
        for i in 0..curve.len() {
            let t = curve.time[i];
            if t < win.t_min || t > t_end {
                continue;
            }
            points += 1;
            err_size = err_size.max((curve.mean_size[i] - theory.mean_size[i]).abs() / theory.mean_size[i]);
            err_echo = err_echo.max((curve.log_echo[i] - theory.log_echo[i]).abs() / theory.log_echo[i].abs());
        }
        if points == 0 {
            worst_size = f64::NAN;
            worst_echo = f64::NAN;
        } else {
            worst_size = worst_size.max(err_size);
            worst_echo = worst_echo.max(err_echo);
        }
        out.value(format!("window_start_eps{tag}"), win.t_min);
        out.value(format!("window_end_eps{tag}"), t_end);
        out.value(format!("window_points_eps{tag}"), points as f64);
        out.value(format!("max_rel_err_size_eps{tag}"), if points > 0 { err_size } else { f64::NAN });
        out.value(format!("max_rel_err_log_echo_eps{tag}"), if points > 0 { err_echo } else { f64::NAN });

        size_plot.push(size_series(format!("eps={eps}"), &curve, Style::Line, k + 1));
        size_plot.push(size_series(format!("theory {eps}"), &theory, Style::Dashed, k + 1));
        echo_plot.push(echo_series(format!("eps={eps}"), &curve, Style::Line, k + 1));
        echo_plot.push(echo_series(format!("theory {eps}"), &theory, Style::Dashed, k + 1));
    }
    ctx.plot("size.svg", &size_plot)?;
    ctx.plot("echo.svg", &echo_plot)?;

    metrics.set("max_rel_err_size", worst_size);
    metrics.set("max_rel_err_log_echo", worst_echo);
    out.criteria.push(metrics.finish(Criterion::Open1dGrowth, started));
    Ok(out)
}

struct PlateauRun {
    plateau: f64,
    plateau_err: f64,
    decay_rate: f64,
}

/// Seed of replica `r`; replica 0 keeps the run seed.
fn replica_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        rng::mix64(seed ^ (r as u64).rotate_left(32))
    }
}

/// Merges independent runs sampled on the same time grid. The echo is the
/// replica average, the moments are echo weighted, and the error on the
/// mean size is the spread between replicas.
fn pool(curves: &[GrowthCurve]) -> GrowthCurve {
    let r = curves.len() as f64;
    let mut out = GrowthCurve::default();
    for i in 0..curves[0].len() {
        let top = curves.iter().map(|c| c.log_echo[i]).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = curves.iter().map(|c| (c.log_echo[i] - top).exp()).collect();
        let total: f64 = w.iter().sum();
        let mean = curves.iter().zip(&w).map(|(c, w)| w * c.mean_size[i]).sum::<f64>() / total;
        let second = curves
            .iter()
            .zip(&w)
            .map(|(c, w)| w * (c.variance[i] + c.mean_size[i] * c.mean_size[i]))
            .sum::<f64>()
            / total;
        let plain = curves.iter().map(|c| c.mean_size[i]).sum::<f64>() / r;
        let spread = curves.iter().map(|c| (c.mean_size[i] - plain).powi(2)).sum::<f64>() / (r - 1.0);
        let log_echo = top + (total / r).ln();
        out.time.push(curves[0].time[i]);
        out.mean_size.push(mean);
        out.variance.push((second - mean * mean).max(0.0));
        out.echo.push(log_echo.exp());
        out.log_echo.push(log_echo);
        out.stderr_mean_size.push((spread / r).sqrt());
    }
    out
}

fn plateau_run(cfg: &Fig2bConfig, base: &CircuitConfig, eps: f64, ctx: &mut RunContext, prefix: &str) -> Result<(PlateauRun, GrowthCurve)> {
    let w = window(cfg.plateau_window);
    let mut curves = Vec::with_capacity(cfg.replicas);
    let mut plateaus = Vec::with_capacity(cfg.replicas);
    for r in 0..cfg.replicas {
        let c = run(&CircuitConfig {
            epsilon: eps,
            seed: replica_seed(base.seed, r),
            ..base.clone()
        })?;
        plateaus.push(fit_growth_constants(&c, FitModel::Plateau, w, None)?.value);
        curves.push(c);
    }
    let curve = pool(&curves);
    write_curve(ctx, &format!("{prefix}growth_eps{}.csv", rate_tag(eps)), &curve)?;
    let k = plateaus.len() as f64;
    let plateau = plateaus.iter().sum::<f64>() / k;
    let var = plateaus.iter().map(|p| (p - plateau).powi(2)).sum::<f64>() / (k - 1.0);
    let decay = fit_growth_constants(&curve, FitModel::EchoDecay, w, None)?;
    Ok((
        PlateauRun {
            plateau,
            plateau_err: (var / k).sqrt(),
            decay_rate: decay.value,
        },
        curve,
    ))
}

pub fn fig2b(cfg: &Fig2bConfig, seed: u64, ctx: &mut RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let mut out = Outcome::default();
    let mut base = CircuitConfig::new(cfg.n, Geometry::AllToAll, 0.0, cfg.duration, cfg.trajectories, seed);
    base.samples_per_unit_time = Some(cfg.samples_per_unit_time);
    base.guide_exponent = Some(cfg.guide_exponent);

    let c0 = run(&base)?;
    write_curve(ctx, "growth_eps0.csv", &c0)?;
    let gw = window(cfg.growth_window);
    let lambda = fit_growth_constants(&c0, FitModel::Exponential, gw, None)?;
    let b = fit_growth_constants(&c0, FitModel::RelativeWidth, gw, None)?;
    out.fit("lambda", FitRecord::from(&lambda));
    out.fit("b", FitRecord::from(&b));
    let kappa = cfg.convention.kappa();
    out.value("predicted_late_decay_rate", lambda.value / (b.value * b.value));

    let mut size_plot = Plot::new("all-to-all noisy circuit: mean size", "t", "mean size");
    size_plot.log_y = true;
    let mut echo_plot = Plot::new("all-to-all noisy circuit: echo", "t", "ln N");
    size_plot.push(size_series("eps=0".into(), &c0, Style::Line, 0));

    let mut plateaus = Vec::new();
    let mut rates = Vec::new();
    for (k, &eps) in cfg.epsilons.iter().enumerate() {
        let tag = rate_tag(eps);
        let (r, curve) = plateau_run(cfg, &base, eps, ctx, "")?;
        let p = PhenomParams {
            v_b: 0.0,
            c: 0.0,
            lambda: lambda.value,
            b: b.value,
            epsilon: continuum_rate(eps),
            d: 1.0,
            s0: 1.0,
            convention: cfg.convention,
        };
        let theory = theory_curve(&curve.time, |t| {
            let pr = predict_all_to_all(&p, t)?;
            Ok((pr.mean_size, pr.log_echo))
        })?;
        write_curve(ctx, &format!("theory_eps{tag}.csv"), &theory)?;
        out.fit(format!("plateau_eps{tag}"), FitRecord::new(r.plateau, r.plateau_err));
        out.value(format!("decay_rate_eps{tag}"), r.decay_rate);
        out.value(format!("predicted_plateau_eps{tag}"), lambda.value / (kappa * p.epsilon * b.value * b.value));
        size_plot.push(size_series(format!("eps={eps}"), &curve, Style::Line, k + 1));
        size_plot.push(size_series(format!("theory {eps}"), &theory, Style::Dashed, k + 1));
        echo_plot.push(echo_series(format!("eps={eps}"), &curve, Style::Line, k + 1));
        echo_plot.push(echo_series(format!("theory {eps}"), &theory, Style::Dashed, k + 1));
        plateaus.push(r);
        rates.push(continuum_rate(eps));
    }
    ctx.plot("size.svg", &size_plot)?;
    ctx.plot("echo.svg", &echo_plot)?;

    let mut metrics = Metrics::default();
    let gamma = power_law(&rates, &plateaus.iter().map(|r| r.plateau).collect::<Vec<_>>());
    if let Ok(g) = &gamma {
        out.fit("gamma", FitRecord::new(g.slope, g.slope_stderr()));
        metrics.set("gamma_offset", (g.slope + 1.0).abs());
    }
    metrics.set(
        "decay_rate_spread",
        criteria::relative_spread(&plateaus.iter().map(|r| r.decay_rate).collect::<Vec<_>>()),
    );

    if cfg.compare_n > 0 {
        let mut small = CircuitConfig { n: cfg.compare_n, ..base.clone() };
        small.gates_per_unit_time = None;
        let mut worst = 0.0f64;
        for (r, &eps) in plateaus.iter().zip(&cfg.epsilons) {
            let (s, _) = plateau_run(cfg, &small, eps, ctx, &format!("n{}_", cfg.compare_n))?;
            let sigma = 2.0 * (r.plateau_err.powi(2) + s.plateau_err.powi(2)).sqrt();
            let shift = (r.plateau - s.plateau).abs() / sigma;
            out.fit(format!("plateau_n{}_eps{}", cfg.compare_n, rate_tag(eps)), FitRecord::new(s.plateau, s.plateau_err));
            worst = worst.max(shift);
        }
        metrics.set("plateau_shift_sigma", worst);
    }
    out.criteria.push(metrics.finish(Criterion::AllToAllPlateau, started));
    Ok(out)
}

struct NstarPoint {
    eps: f64,
    time: f64,
    log_echo: f64,
}

fn scan(base: &CircuitConfig, cfg: &NstarConfig, ctx: &mut RunContext, label: &str) -> Result<Vec<NstarPoint>> {
    let c0 = run(base)?;
    write_curve(ctx, &format!("{label}_growth_eps0.csv"), &c0)?;
    let mut points = Vec::new();
    for &eps in &cfg.epsilons {
        let curve = run(&CircuitConfig { epsilon: eps, ..base.clone() })?;
        write_curve(ctx, &format!("{label}_growth_eps{}.csv", rate_tag(eps)), &curve)?;
        let d = rate_deviation_point(&c0, &curve, cfg.deviation, cfg.rate_span)
            .ok_or_else(|| anyhow!("{label}: no deviation found for eps = {eps} within the run"))?;
        points.push(NstarPoint {
            eps,
            time: d.time,
            log_echo: d.log_echo,
        });
    }
    Ok(points)
}

pub fn nstar_scan(cfg: &NstarConfig, seed: u64, ctx: &mut RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let mut out = Outcome::default();
    let one_d = CircuitConfig::new(cfg.n_1d, Geometry::Brickwork1d, 0.0, cfg.layers_1d, cfg.trajectories_1d, seed);
    let mut a2a = CircuitConfig::new(
        cfg.n_all_to_all,
        Geometry::AllToAll,
        0.0,
        cfg.duration_all_to_all,
        cfg.trajectories_all_to_all,
        seed,
    );
    a2a.samples_per_unit_time = Some(cfg.samples_per_unit_time);
    let pts_1d = scan(&one_d, cfg, ctx, "1d")?;
    let pts_a2a = scan(&a2a, cfg, ctx, "all_to_all")?;
    if pts_1d.len() < 3 {
        bail!("need at least three error rates for the 1D regression");
    }

    {
        let mut w = csv::Writer::from_writer(ctx.create("nstar.csv")?);
        w.write_record(["geometry", "epsilon", "t_star", "log_nstar", "nstar"])?;
        for (geo, pts) in [("1d", &pts_1d), ("all_to_all", &pts_a2a)] {
            for p in pts.iter() {
                w.write_record([
                    geo.to_string(),
                    format!("{:e}", p.eps),
                    format!("{}", p.time),
                    format!("{:e}", p.log_echo),
                    format!("{:e}", p.log_echo.exp()),
                ])?;
            }
        }
        w.flush()?;
    }

    let inv: Vec<f64> = pts_1d.iter().map(|p| 1.0 / p.eps).collect();
    let logs: Vec<f64> = pts_1d.iter().map(|p| p.log_echo).collect();
    let fit = linear_regression(&inv, &logs)?;
    out.fit("log_nstar_1d_slope", FitRecord::new(fit.slope, fit.slope_stderr()));
    let nstar: Vec<f64> = pts_a2a.iter().map(|p| p.log_echo.exp()).collect();
    for p in &pts_a2a {
        out.value(format!("nstar_all_to_all_eps{}", rate_tag(p.eps)), p.log_echo.exp());
    }
    for p in &pts_1d {
        out.value(format!("log_nstar_1d_eps{}", rate_tag(p.eps)), p.log_echo);
    }

    let mut p1 = Plot::new("1D: ln N* against 1/eps", "1/eps", "ln N*");
    p1.push(Series::new("measured", inv.clone(), logs, Style::Markers, 0));
    let xs = vec![0.0, inv.iter().copied().fold(0.0, f64::max)];
    let ys = xs.iter().map(|x| fit.intercept + fit.slope * x).collect();
    p1.push(Series::new("linear fit", xs, ys, Style::Dashed, 1));
    ctx.plot("nstar_1d.svg", &p1)?;
    let mut p2 = Plot::new("all-to-all: N* against eps", "eps", "N*");
    p2.log_x = true;
    p2.push(Series::new("measured", cfg.epsilons.clone(), nstar.clone(), Style::Markers, 0));
    ctx.plot("nstar_all_to_all.svg", &p2)?;

    let mut metrics = Metrics::default();
    metrics.set("r_squared_1d", fit.r_squared);
    metrics.set("nstar_variation", criteria::relative_spread(&nstar));
    out.criteria.push(metrics.finish(Criterion::NstarDichotomy, started));
    let _ = std::io::stdout().flush();
    Ok(out)
}
