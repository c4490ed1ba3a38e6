use std::time::Instant;

use anyhow::Result;
use opgrowth_core::criteria::Criterion;
use opgrowth_core::protocol::{write_results_csv, PreparedProtocol, ProtocolBackend, ProtocolConfig};

use super::{Metrics, Outcome, RunContext};
use crate::spec::ProtocolGmuConfig;
use crate::svg::{Plot, Series, Style};

pub fn protocol_gmu(cfg: &ProtocolGmuConfig, seed: u64, ctx: &mut RunContext) -> Result<Outcome> {
    let started = Instant::now();
    let mut out = Outcome::default();
    let prepared = PreparedProtocol::new(&ProtocolConfig {
        n: cfg.n,
        mu: 0.0,
        shots: cfg.shots,
        seed,
        initial_operator: cfg.initial_operator.clone(),
        backend: ProtocolBackend::Exact {
            hamiltonian: cfg.hamiltonian.clone(),
            terms: None,
            t: cfg.t,
            epsilon: cfg.epsilon,
            tol: cfg.tol,
        },
    })?;

    let mut results = Vec::with_capacity(cfg.mus.len());
    let mut metrics = Metrics::default();
    let mut worst_z = 0.0f64;
    for &mu in &cfg.mus {
        let r = prepared.run(mu, cfg.shots)?;
        let dev = (r.f_estimate - r.f_oracle).abs();
        if mu == 0.0 {
            // Every channel factor is one, so F is exactly (1 + N) / 2.
            metrics.set("mu0_abs_error", (r.f_estimate - 0.5 * (1.0 + r.echo)).abs());
            metrics.set("mu0_stderr", r.stderr);
        } else {
            let z = if r.stderr > 0.0 {
                dev / r.stderr
            } else if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            out.value(format!("z_score_mu{mu}"), z);
            worst_z = worst_z.max(z);
        }
        out.value(format!("f_estimate_mu{mu}"), r.f_estimate);
        out.value(format!("f_oracle_mu{mu}"), r.f_oracle);
        results.push(r);
    }
    if let Some(r) = results.first() {
        out.value("echo", r.echo);
    }
    write_results_csv(&results, ctx.create("protocol.csv")?)?;

    let mut plot = Plot::new("generating function estimator", "mu", "F");
    let mus: Vec<f64> = results.iter().map(|r| r.mu).collect();
    plot.push(Series::new("oracle", mus.clone(), results.iter().map(|r| r.f_oracle).collect(), Style::Dashed, 1));
    plot.push(
        Series::new("estimate", mus, results.iter().map(|r| r.f_estimate).collect(), Style::Markers, 0)
            .with_err(results.iter().map(|r| r.stderr).collect()),
    );
    ctx.plot("protocol.svg", &plot)?;

    if cfg.mus.iter().any(|&m| m > 0.0) {
        metrics.set("max_z_score", worst_z);
    }
    out.criteria.push(metrics.finish(Criterion::ProtocolEstimator, started));
    Ok(out)
}
