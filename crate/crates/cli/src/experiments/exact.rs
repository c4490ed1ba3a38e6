use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Result};
use opgrowth_core::analysis::{front_arrival_times, interior_minimum, is_non_increasing, light_cone_fit, site_average};
use opgrowth_core::criteria::Criterion;
use opgrowth_core::exact::{
    check_eq5, check_eq6, otoc_profile, record_trace, EchoTrace, HamiltonianSpec, LindbladSpec, OperatorState,
};
use opgrowth_core::{rng, Pauli, PauliString};

use super::{rate_tag, Metrics, Outcome, RunContext};
use crate::report::FitRecord;
use crate::spec::{Fig3Config, IdentitiesConfig};
use crate::svg::{Plot, Series, Style};

fn site_plot(title: &str, profile: &opgrowth_core::exact::OtocProfile) -> Plot {
    let mut plot = Plot::new(title, "t", "normalized OTOC");
    for (j, &site) in profile.sites.iter().enumerate() {
        let y = profile.values.iter().map(|row| row[j]).collect();
        plot.push(Series::new(format!("site {site}"), profile.times.clone(), y, Style::Line, j));
    }
    plot
}

pub fn fig3(cfg: &Fig3Config, ctx: &mut RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let mut out = Outcome::default();
    let n = cfg.n;
    let center = n / 2;
    if cfg.reversal_distance > center {
        bail!("reversal_distance {} exceeds the distance to the chain edge", cfg.reversal_distance);
    }
    let h2 = HamiltonianSpec::preset(&cfg.hamiltonian, n)?;
    let dh = HamiltonianSpec::preset(&cfg.perturbation, n)?;
    let h1 = h2.plus(&dh, cfg.eta)?;
    let steps = (cfg.t_max / cfg.dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.dt).collect();
    let sites: Vec<usize> = (0..n).collect();

    // Front of a local Y with identical forward and backward dynamics.
    let y = OperatorState::from_pauli(&PauliString::single(n, center, Pauli::Y)?)?;
    let cone = otoc_profile(&y, &h2, &h2, &times, &sites, cfg.normalization, cfg.tol)?;
    cone.write_csv(ctx.create("otoc_y.csv")?)?;
    ctx.plot("otoc_y.svg", &site_plot("OTOC of a local Y", &cone))?;

    let arrivals = front_arrival_times(&cone, center, cfg.threshold);
    {
        let mut w = csv::Writer::from_writer(ctx.create("arrivals.csv")?);
        w.write_record(["distance", "t_arrival"])?;
        for (d, t) in &arrivals {
            w.write_record([d.to_string(), t.to_string()])?;
        }
        w.flush()?;
    }
    let mut metrics = Metrics::default();
    if let Ok(fit) = light_cone_fit(&arrivals) {
        let mut rec = FitRecord::new(fit.slope, fit.slope_stderr());
        rec.r_squared = Some(fit.r_squared);
        out.fit("front_velocity", rec);
        metrics.set("light_cone_r_squared", fit.r_squared);
    }
    // Average over the chain until the front has reached the farther edge.
    let max_distance = center.max(n - 1 - center) as f64;
    let edge_time = arrivals
        .iter()
        .find(|(d, _)| *d == max_distance)
        .map(|a| a.1)
        .unwrap_or(f64::INFINITY);
    let avg = site_average(&cone);
    let upto = cone.times.iter().take_while(|&&t| t <= edge_time).count();
    out.value("edge_arrival_time", edge_time);
    metrics.set("site_average_monotone", f64::from(is_non_increasing(&avg[..upto], cfg.monotone_tolerance)));

    // Energy density with a perturbed forward evolution.
    let e = h2.local_energy_density(center)?;
    let rev = otoc_profile(&e, &h1, &h2, &times, &sites, cfg.normalization, cfg.tol)?;
    rev.write_csv(ctx.create("otoc_energy.csv")?)?;
    ctx.plot("otoc_energy.svg", &site_plot("OTOC of the local energy density", &rev))?;
    let watch = center - cfg.reversal_distance;
    let series = rev.at_site(watch).unwrap_or_default();
    let found = interior_minimum(&series, cfg.reversal_margin);
    if let Some(i) = found {
        out.value("reversal_time", rev.times[i]);
        out.value("reversal_minimum", series[i]);
    }
    if let Some(last) = series.last() {
        out.value("reversal_site_final", *last);
    }
    out.value("reversal_site", watch as f64);
    metrics.set("reversal_found", f64::from(found.is_some()));
    out.criteria.push(metrics.finish(Criterion::OtocConeAndReversal, started));
    Ok(out)
}

fn write_trace(ctx: &mut RunContext, name: &str, trace: &EchoTrace) -> Result<()> {
    let mut w = ctx.create(name)?;
    writeln!(w, "t,mean_size,var_size,echo,stderr,log_echo")?;
    for i in 0..trace.len() {
        writeln!(
            w,
            "{},{},{},{},0,{}",
            trace.time[i],
            trace.mean_size[i],
            trace.variance[i],
            trace.echo[i],
            trace.echo[i].ln()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn identities(cfg: &IdentitiesConfig, seed: u64, ctx: &mut RunContext) -> Result<Outcome> {
    let mut out = Outcome::default();
    let n = cfg.n;

    // Echo-rate identity under random local Hamiltonians.
    let started = Instant::now();
    let m = OperatorState::from_pauli(&PauliString::single(n, n / 2, Pauli::X)?)?;
    let mut worst5 = 0.0f64;
    let mut echo_plot = Plot::new("echo under effective size damping", "t", "ln N");
    for k in 0..cfg.hamiltonians {
        let mut r = rng::stream(seed, 0xE5, k as u64);
        let h = HamiltonianSpec::random_local(n, &mut r)?;
        for (j, &eps) in cfg.epsilons.iter().enumerate() {
            let trace = record_trace(&m, &h, &LindbladSpec::EffectiveSize { epsilon: eps }, cfg.t_max, cfg.dt, cfg.tol)?;
            let res = check_eq5(&trace, eps);
            worst5 = worst5.max(res);
            out.value(format!("echo_residual_h{k}_eps{}", rate_tag(eps)), res);
            write_trace(ctx, &format!("trace_h{k}_eps{}.csv", rate_tag(eps)), &trace)?;
            let log_n = trace.echo.iter().map(|v| v.ln()).collect();
            echo_plot.push(Series::new(format!("H{k} eps={eps}"), trace.time.clone(), log_n, Style::Line, k * cfg.epsilons.len() + j));
        }
    }
    ctx.plot("echo.svg", &echo_plot)?;
    let mut metrics = Metrics::default();
    metrics.set("max_residual", worst5);
    out.criteria.push(metrics.finish(Criterion::EchoRateIdentity, started));

    // Size-width identity on a superposition with frozen dynamics, where the
    // answer is a sum of decaying exponentials.
    let started = Instant::now();
    let strings = cfg
        .width_operator
        .iter()
        .map(|s| PauliString::parse_for(n, s))
        .collect::<Result<Vec<_>, _>>()?;
    let amp = 1.0 / (strings.len() as f64).sqrt();
    let terms: Vec<(PauliString, f64)> = strings.iter().map(|p| (p.clone(), amp)).collect();
    let state = OperatorState::from_terms(n, &terms)?;
    let h = HamiltonianSpec::zero(n)?;
    let mut worst6 = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut size_plot = Plot::new("mean size of a frozen superposition", "t", "mean size");
    for (j, &eps) in cfg.epsilons.iter().enumerate() {
        let trace = record_trace(&state, &h, &LindbladSpec::EffectiveSize { epsilon: eps }, cfg.t_max, cfg.dt, cfg.tol)?;
        worst6 = worst6.max(check_eq6(&trace, eps));
        write_trace(ctx, &format!("width_eps{}.csv", rate_tag(eps)), &trace)?;
        let mut oracle_size = Vec::with_capacity(trace.len());
        for (i, &t) in trace.time.iter().enumerate() {
            let (mut norm, mut first) = (0.0, 0.0);
            for p in &strings {
                let s = p.size() as f64;
                let w = amp * amp * (-2.0 * eps * s * t).exp();
                norm += w;
                first += w * s;
            }
            let size = first / norm;
            oracle_size.push(size);
            let d_norm = (trace.echo[i] - norm).abs() / norm;
            let d_size = (trace.mean_size[i] - size).abs() / size;
            worst_oracle = worst_oracle.max(d_norm).max(d_size);
        }
        size_plot.push(Series::new(format!("eps={eps}"), trace.time.clone(), trace.mean_size.clone(), Style::Line, j));
        size_plot.push(Series::new(format!("exponential sum {eps}"), trace.time.clone(), oracle_size, Style::Dashed, j));
    }
    ctx.plot("width.svg", &size_plot)?;
    let mut metrics = Metrics::default();
    metrics.set("max_residual", worst6);
    metrics.set("max_oracle_rel_diff", worst_oracle);
    out.criteria.push(metrics.finish(Criterion::SizeWidthIdentity, started));
    Ok(out)
}
