use std::io::Write;

use anyhow::Result;
use opgrowth_core::phenom::{conserved_profile_mean, predict_conserved_profile, EchoConvention, PhenomParams};
use opgrowth_core::SizeDistribution;

use super::{rate_tag, Outcome, RunContext};
use crate::spec::ConservedConfig;
use crate::svg::{Plot, Series, Style};

/// Profile masses at integer sizes below the front: the spike at `S = 1`
/// followed by the damped tail.
fn profile(p: &PhenomParams, t: f64) -> Result<Vec<f64>> {
    let front = 1.5 * p.v_b * t;
    let mut mass = vec![0.0, predict_conserved_profile(p, t, 1.0)?.delta_mass];
    let mut s = 2usize;
    while (s as f64) <= front - 1.0 {
        mass.push(predict_conserved_profile(p, t, s as f64)?.tail_mass);
        s += 1;
    }
    Ok(mass)
}

pub fn conserved_profile(cfg: &ConservedConfig, ctx: &mut RunContext) -> Result<Outcome> {
    let mut out = Outcome::default();
    let steps = (cfg.t_max / cfg.dt).floor() as usize;
    let mut mean_plot = Plot::new("mean size with a conserved density", "t", "mean size");
    for (k, &eps) in cfg.epsilons.iter().enumerate() {
        let tag = rate_tag(eps);
        let p = PhenomParams {
            v_b: cfg.v_b,
            c: 0.0,
            lambda: 0.0,
            b: 0.0,
            epsilon: eps,
            d: cfg.d,
            s0: 0.0,
            convention: EchoConvention::Mass,
        };
        let mut profile_plot = Plot::new(format!("size profile, eps={eps}"), "S", "mass");
        profile_plot.log_y = true;
        for (j, &t) in cfg.times.iter().enumerate() {
            let mass = profile(&p, t)?;
            let sizes = (0..mass.len()).map(|s| s as f64).collect::<Vec<_>>();
            profile_plot.push(Series::new(format!("t={t}"), sizes[1..].to_vec(), mass[1..].to_vec(), Style::Line, j));
            SizeDistribution::from_mass(mass)?.write_csv(ctx.create(&format!("size_eps{tag}_t{t}.csv"))?)?;
        }
        ctx.plot(&format!("profile_eps{tag}.svg"), &profile_plot)?;

        let mut w = ctx.create(&format!("mean_eps{tag}.csv"))?;
        writeln!(w, "t,mean_size")?;
        let (mut ts, mut means) = (Vec::new(), Vec::new());
        for i in 1..=steps {
            let t = i as f64 * cfg.dt;
            if 1.5 * cfg.v_b * t <= 1.0 {
                continue;
            }
            let m = conserved_profile_mean(&p, t)?;
            writeln!(w, "{t},{m}")?;
            ts.push(t);
            means.push(m);
        }
        w.flush()?;
        if let Some(&last) = means.last() {
            out.value(format!("final_mean_size_eps{tag}"), last);
        }
        if eps > 0.0 {
            out.value(format!("truncation_size_eps{tag}"), (cfg.v_b / eps).sqrt());
        }
        mean_plot.push(Series::new(format!("eps={eps}"), ts, means, Style::Line, k));
    }
    mean_plot.log_x = true;
    mean_plot.log_y = true;
    ctx.plot("mean.svg", &mean_plot)?;
    Ok(out)
}
