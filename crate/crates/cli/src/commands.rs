//! The four subcommands: single runs, bit sweeps, transmission-time
//! sweeps, and retransmission Monte Carlo studies. Every output file is
//! a deterministic function of the configuration and seed.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use quantgrid::algorithms::{recommended_bits, recommended_bits_projected};
use quantgrid::channel::{
    delay, fixed_rounds, mc_fixed_rounds_success_rate, mc_until_success_totals,
    simulate_lossy_run, time_rate_rho, until_success_bounds, PacketSpec, RateModel,
    RetransmissionPolicy,
};
use quantgrid::framework::{
    alpha, contraction_gain, min_bits, run_quantized, QuantizedRunConfig, RunStatus, RunTrace,
};

use crate::build::{build, Built};
use crate::config::{Bits, ChannelConfig, ExperimentConfig};
use crate::CliError;

struct Context {
    built: Built,
    sigma: f64,
    gain: f64,
    d_bound: f64,
    eps: f64,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Context, CliError> {
    let built = build(cfg)?;
    let sigma = built.model.sigma();
    let gain = match cfg.quantization.gain {
        Some(g) => {
            if g <= 0.0 {
                return Err(CliError::config("quantization.gain must be positive"));
            }
            g
        }
        None => contraction_gain(built.model.lip_a(), built.model.lip_c(), sigma)
            .map_err(|e| CliError::config(format!("invalid algorithm constants: {e}")))?,
    };
    let d_bound = cfg
        .quantization
        .d_bound
        .or(built.default_d_bound)
        .ok_or_else(|| {
            CliError::config(
                "no distance bound derivable for this problem; set quantization.d_bound",
            )
        })?;
    Ok(Context {
        built,
        sigma,
        gain,
        d_bound,
        eps: cfg.eps(),
    })
}

fn single_bits(cfg: &ExperimentConfig, ctx: &Context) -> Result<u32, CliError> {
    match cfg.quantization.bits.parse()? {
        Bits::Fixed(b) => {
            if b == 0 || b > 64 {
                return Err(CliError::config(format!("bits must be in 1..=64, got {b}")));
            }
            Ok(b)
        }
        Bits::Auto => {
            // The formula assumes a condition number of at least 2; any
            // upper bound works, so better-conditioned problems use 2.
            let kappa = ctx.built.kappa.max(2.0);
            let d = ctx.built.model.message_dim();
            let b = if ctx.built.projected {
                recommended_bits_projected(kappa, d)
            } else {
                recommended_bits(kappa, d)
            }
            .map_err(|e| CliError::config(format!("automatic bit width: {e}")))?;
            Ok(b.min(64))
        }
        Bits::Sweep { .. } => Err(CliError::config(
            "this command needs a single bit width; use sweep-bits or ttc for ranges",
        )),
    }
}

fn sweep_range(cfg: &ExperimentConfig, ctx: &Context) -> Result<(u32, u32), CliError> {
    match cfg.quantization.bits.parse()? {
        Bits::Sweep { lo, hi } => Ok((lo, hi)),
        Bits::Fixed(b) => Ok((b, b)),
        Bits::Auto => {
            let lo = min_bits(ctx.gain, ctx.sigma)
                .map_err(|e| CliError::config(format!("bit range: {e}")))?;
            Ok((lo, 16.max(lo)))
        }
    }
}

fn effective_alpha(cfg: &ExperimentConfig, ctx: &Context, bits: u32) -> f64 {
    cfg.quantization
        .alpha
        .unwrap_or_else(|| alpha(bits, ctx.gain, ctx.sigma))
}

fn iterations_at(a: f64, d_bound: f64, eps: f64) -> Option<f64> {
    (a < 1.0).then(|| ((d_bound / eps).ln() / (1.0 - a)).max(0.0))
}

/// Prints without panicking when stdout is a closed pipe.
fn emit(text: &str) {
    use std::io::Write as _;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn fixed_rounds_m(
    ctx: &Context,
    channel: &ChannelConfig,
    bits: u32,
    p: f64,
    rate: &RateModel,
) -> Result<u64, CliError> {
    if let Some(m) = channel.rounds {
        if m == 0 {
            return Err(CliError::config("channel.rounds must be at least 1"));
        }
        return Ok(m);
    }
    let delta = channel
        .delta
        .ok_or_else(|| CliError::config("fixed-rounds policy needs `delta` or `rounds`"))?;
    let d = ctx.built.model.message_dim();
    let (m, _) = fixed_rounds(
        bits,
        channel.theta,
        d,
        p,
        ctx.built.links,
        ctx.gain,
        ctx.sigma,
        ctx.d_bound,
        ctx.eps,
        delta,
        rate,
    )
    .map_err(|e| CliError::config(format!("fixed-rounds sizing: {e}")))?;
    Ok(m)
}

/// Checks the recorded errors against `alpha^k D`.
fn envelope_held(trace: &RunTrace, a: f64, d_bound: f64) -> Option<bool> {
    let mut saw_err = false;
    for row in &trace.rows {
        let err = row.err?;
        saw_err = true;
        if err > a.powi(row.k as i32) * d_bound * (1.0 + 1e-12) {
            return Some(false);
        }
    }
    saw_err.then_some(true)
}

pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ctx = prepare(cfg)?;
    let bits = single_bits(cfg, &ctx)?;
    let a = effective_alpha(cfg, &ctx, bits);
    if a >= 1.0 {
        let need = min_bits(ctx.gain, ctx.sigma)
            .map_err(|e| CliError::config(format!("invalid constants: {e}")))?;
        return Err(CliError::divergent(format!(
            "alpha({bits}) = {a:.4} >= 1; at least {need} bits per dimension are needed \
             (or override quantization.alpha below 1)"
        )));
    }

    let mut run_cfg = QuantizedRunConfig::new(bits, cfg.horizon(), ctx.d_bound);
    run_cfg.gain = Some(ctx.gain);
    run_cfg.alpha_override = cfg.quantization.alpha;
    run_cfg.seed = cfg.seed();

    let d = ctx.built.model.message_dim();
    let mut time_to_eps_line = String::new();
    let trace = match cfg.channel.as_ref() {
        Some(channel) => {
            let rate = channel.rate_model()?;
            let packet = PacketSpec::new(bits, d, channel.theta, channel.p, ctx.built.links)
                .map_err(|e| CliError::config(format!("packet: {e}")))?;
            let policy = if channel.is_fixed_rounds()? {
                RetransmissionPolicy::FixedRounds(fixed_rounds_m(&ctx, channel, bits, channel.p, &rate)?)
            } else {
                RetransmissionPolicy::UntilSuccess
            };
            if let Some(k) = iterations_at(a, ctx.d_bound, ctx.eps) {
                if let Ok(step) = delay(&rate, packet.total_bits(), channel.p) {
                    let _ = writeln!(time_to_eps_line, "time_to_eps_s: {}", k * step);
                }
            }
            simulate_lossy_run(
                ctx.built.model.as_ref(),
                &run_cfg,
                &packet,
                policy,
                &rate,
                cfg.seed(),
            )
        }
        None => run_quantized(ctx.built.model.as_ref(), &run_cfg),
    }
    .map_err(|e| CliError::config(format!("run failed: {e}")))?;

    let k_eps = iterations_at(a, ctx.d_bound, ctx.eps);
    let envelope = envelope_held(&trace, a, ctx.d_bound);
    let mut summary = provenance(cfg);
    let _ = writeln!(summary, "status: {}", status_label(&trace.status));
    let _ = writeln!(summary, "guaranteed: {}", trace.guaranteed);
    let _ = writeln!(summary, "bits: {bits}");
    let _ = writeln!(summary, "sigma: {}", ctx.sigma);
    let _ = writeln!(summary, "lip_a: {}", ctx.built.model.lip_a());
    let _ = writeln!(summary, "lip_c: {}", ctx.built.model.lip_c());
    let _ = writeln!(summary, "gain: {}", ctx.gain);
    let _ = writeln!(summary, "alpha: {a}");
    let _ = writeln!(summary, "d_bound: {}", ctx.d_bound);
    let _ = writeln!(summary, "eps: {}", ctx.eps);
    match k_eps {
        Some(k) => {
            let _ = writeln!(summary, "k_eps: {k}");
            let _ = writeln!(summary, "bits_to_eps_per_dim: {}", bits as f64 * k);
        }
        None => {
            let _ = writeln!(summary, "k_eps: unbounded (alpha >= 1)");
        }
    }
    summary.push_str(&time_to_eps_line);
    let _ = writeln!(
        summary,
        "envelope: {}",
        match envelope {
            Some(true) => "held",
            Some(false) => "violated",
            None => "unknown (no fixed point)",
        }
    );
    if let Some(err) = trace.final_err() {
        let _ = writeln!(summary, "final_err: {err}");
    }

    let out = cfg.out_dir();
    write_file(&out, "trace.csv", &trace.to_csv())?;
    write_file(&out, "summary.txt", &summary)?;
    emit(&summary);

    if let RunStatus::GridOverflow {
        iteration,
        node,
        component,
    } = trace.status
    {
        return Err(CliError::overflow(format!(
            "grid overflow at iteration {iteration}, node {node}, component {component}; \
             the radius schedule shrank faster than the iterates"
        )));
    }
    Ok(())
}

/// Echo of the generating parameters, so every output file names the
/// data it came from.
fn provenance(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let p = &cfg.problem;
    let mut problem = format!("problem: {}", p.kind);
    for (key, value) in [
        ("m", p.m.map(|v| v.to_string())),
        ("d", p.d.map(|v| v.to_string())),
        ("rho", p.rho.map(|v| v.to_string())),
        ("mu", p.mu.map(|v| v.to_string())),
        ("lip", p.lip.map(|v| v.to_string())),
        ("seed", Some(p.seed.unwrap_or_else(|| cfg.seed()).to_string())),
        ("path", p.path.as_ref().map(|v| v.display().to_string())),
    ] {
        if let Some(v) = value {
            let _ = write!(problem, " {key}={v}");
        }
    }
    let _ = writeln!(s, "{problem}");
    let t = &cfg.topology;
    let mut topology = format!("topology: {}", t.kind);
    for (key, value) in [
        ("nodes", t.nodes.map(|v| v.to_string())),
        ("radius", t.radius.map(|v| v.to_string())),
        ("seed", t.seed.map(|v| v.to_string())),
        ("path", t.path.as_ref().map(|v| v.display().to_string())),
    ] {
        if let Some(v) = value {
            let _ = write!(topology, " {key}={v}");
        }
    }
    let _ = writeln!(s, "{topology}");
    let _ = writeln!(s, "algorithm: {}", cfg.algorithm.kind);
    let _ = writeln!(s, "seed: {}", cfg.seed());
    s
}

fn status_label(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::GridOverflow {
            iteration, node, ..
        } => format!("grid-overflow at iteration {iteration}, node {node}"),
        RunStatus::Failed { iteration } => format!("failed at iteration {iteration}"),
    }
}

pub fn sweep_bits(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ctx = prepare(cfg)?;
    let (lo, hi) = sweep_range(cfg, &ctx)?;
    let channel = cfg.channel.as_ref();
    let rate = channel.map(|c| c.rate_model()).transpose()?;
    let d = ctx.built.model.message_dim();
    let empirical = cfg.quantization.empirical;
    if empirical && ctx.built.model.fixed_point().is_none() {
        return Err(CliError::config(
            "empirical sweeps need a fixed point; the reference run could not provide one",
        ));
    }

    struct Row {
        bits: u32,
        k_eps: Option<f64>,
        t_eps: Option<f64>,
        empirical_k: Option<usize>,
    }

    let rows: Vec<Row> = (lo..=hi)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|bits| {
            let a = alpha(bits, ctx.gain, ctx.sigma);
            let k_eps = iterations_at(a, ctx.d_bound, ctx.eps);
            let t_eps = match (&rate, channel, k_eps) {
                (Some(rate), Some(ch), Some(k)) => {
                    let n = bits as u64 * d as u64 + ch.theta;
                    delay(rate, n, ch.p).ok().map(|step| k * step)
                }
                _ => None,
            };
            let empirical_k = if empirical && a < 1.0 {
                let horizon = k_eps.map_or(cfg.horizon(), |k| k.ceil() as usize + 50);
                let mut run_cfg = QuantizedRunConfig::new(bits, horizon, ctx.d_bound);
                run_cfg.gain = Some(ctx.gain);
                run_cfg.seed = cfg.seed();
                run_quantized(ctx.built.model.as_ref(), &run_cfg)
                    .ok()
                    .filter(|t| t.status == RunStatus::Completed)
                    .and_then(|t| t.iterations_to(ctx.eps))
            } else {
                None
            };
            Row {
                bits,
                k_eps,
                t_eps,
                empirical_k,
            }
        })
        .collect();

    // Mark the argmin of the transmission time when a channel is
    // attached, of the bit budget otherwise.
    let argmin = rows
        .iter()
        .filter_map(|r| {
            let cost = if channel.is_some() {
                r.t_eps?
            } else {
                r.bits as f64 * r.k_eps?
            };
            Some((r.bits, cost))
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(b, _)| b);

    let mut out = String::from("b,k_eps,B_eps,T_eps,empirical_k,empirical_bits,argmin\n");
    for row in &rows {
        let k = row.k_eps.map(|v| v.to_string()).unwrap_or_default();
        let budget = row
            .k_eps
            .map(|v| (row.bits as f64 * v).to_string())
            .unwrap_or_default();
        let t = row.t_eps.map(|v| v.to_string()).unwrap_or_default();
        let ek = row.empirical_k.map(|v| v.to_string()).unwrap_or_default();
        let eb = row
            .empirical_k
            .map(|v| (row.bits as u64 * v as u64).to_string())
            .unwrap_or_default();
        let mark = if argmin == Some(row.bits) { "1" } else { "" };
        let _ = writeln!(out, "{},{k},{budget},{t},{ek},{eb},{mark}", row.bits);
    }
    write_file(&cfg.out_dir(), "sweep_bits.csv", &out)?;
    emit(&out);
    Ok(())
}

pub fn ttc(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ctx = prepare(cfg)?;
    let channel = cfg
        .channel
        .as_ref()
        .ok_or_else(|| CliError::config("ttc needs a [channel] section"))?;
    let rate = channel.rate_model()?;
    let (lo, hi) = sweep_range(cfg, &ctx)?;
    let d = ctx.built.model.message_dim();

    let mut out = String::from("b,theta,p,rate_model,k_eps,T_eps,LB,UB,rho\n");
    for bits in lo..=hi {
        let a = alpha(bits, ctx.gain, ctx.sigma);
        let n = bits as u64 * d as u64 + channel.theta;
        let k_eps = iterations_at(a, ctx.d_bound, ctx.eps);
        let step = delay(&rate, n, channel.p).ok();
        let t_eps = match (k_eps, step) {
            (Some(k), Some(s)) => Some(k * s),
            _ => None,
        };
        // At p = 0 the retransmission analysis is vacuous and the
        // deterministic time stands in for both bounds.
        let (lb, ub) = if channel.p > 0.0 {
            match until_success_bounds(
                bits,
                channel.theta,
                d,
                channel.p,
                ctx.built.links,
                ctx.gain,
                ctx.sigma,
                ctx.d_bound,
                ctx.eps,
                &rate,
            ) {
                Ok((lb, ub)) => (Some(lb), Some(ub)),
                Err(_) => (None, None),
            }
        } else {
            (t_eps, t_eps)
        };
        let rho = time_rate_rho(bits, channel.theta, d, ctx.gain, ctx.sigma, &rate, channel.p).ok();
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{bits},{},{},{},{},{},{},{},{}",
            channel.theta,
            channel.p,
            rate.label(),
            fmt(k_eps),
            fmt(t_eps),
            fmt(lb),
            fmt(ub),
            fmt(rho)
        );
    }
    write_file(&cfg.out_dir(), "ttc.csv", &out)?;
    emit(&out);
    Ok(())
}

pub fn retrans(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ctx = prepare(cfg)?;
    let channel = cfg
        .channel
        .as_ref()
        .ok_or_else(|| CliError::config("retrans needs a [channel] section"))?;
    let rate = channel.rate_model()?;
    let grid = channel
        .p_grid
        .as_ref()
        .ok_or_else(|| CliError::config("retrans needs channel.p_grid"))?;
    if grid.is_empty() {
        return Err(CliError::config("channel.p_grid must not be empty"));
    }
    if grid.iter().any(|&p| !(0.0 < p && p < 1.0)) {
        return Err(CliError::config("p_grid entries must lie in (0, 1)"));
    }
    let bits = single_bits(cfg, &ctx)?;
    let d = ctx.built.model.message_dim();
    let replicas = cfg.replicas();
    let fixed = channel.is_fixed_rounds()?;

    let mut out = String::from(if fixed {
        "p,LB,UB,mean_T,ci_low,ci_high,success_rate\n"
    } else {
        "p,LB,UB,mean_T,ci_low,ci_high\n"
    });
    for (idx, &p) in grid.iter().enumerate() {
        let (lb, ub) = until_success_bounds(
            bits,
            channel.theta,
            d,
            p,
            ctx.built.links,
            ctx.gain,
            ctx.sigma,
            ctx.d_bound,
            ctx.eps,
            &rate,
        )
        .map_err(|e| CliError::config(format!("bounds at p = {p}: {e}")))?;
        let a = alpha(bits, ctx.gain, ctx.sigma);
        let k = iterations_at(a, ctx.d_bound, ctx.eps).ok_or_else(|| {
            CliError::divergent(format!(
                "alpha({bits}) >= 1; retrans needs a convergent bit width"
            ))
        })?;
        let iters = k.ceil().max(1.0) as u64;
        let n = bits as u64 * d as u64 + channel.theta;
        let step = delay(&rate, n, p).map_err(|e| CliError::config(format!("rate at p = {p}: {e}")))?;

        let (mean, ci_low, ci_high) = if replicas > 0 {
            let totals = mc_until_success_totals(
                iters,
                ctx.built.links,
                p,
                step,
                replicas,
                cfg.seed() ^ (idx as u64).wrapping_mul(0x9E37_79B9),
            );
            let mean = totals.iter().sum::<f64>() / totals.len() as f64;
            let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
                / (totals.len().max(2) - 1) as f64;
            let half = 2.5758 * (var / totals.len() as f64).sqrt();
            (Some(mean), Some(mean - half), Some(mean + half))
        } else {
            (None, None, None)
        };

        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        if fixed {
            let m = fixed_rounds_m(&ctx, channel, bits, p, &rate)?;
            let success = if replicas > 0 {
                Some(mc_fixed_rounds_success_rate(
                    iters,
                    ctx.built.links,
                    p,
                    m,
                    replicas,
                    cfg.seed() ^ (idx as u64).wrapping_mul(0xBF58_476D),
                ))
            } else {
                None
            };
            let _ = writeln!(
                out,
                "{p},{lb},{ub},{},{},{},{}",
                fmt(mean),
                fmt(ci_low),
                fmt(ci_high),
                fmt(success)
            );
        } else {
            let _ = writeln!(out, "{p},{lb},{ub},{},{},{}", fmt(mean), fmt(ci_low), fmt(ci_high));
        }
    }
    write_file(&cfg.out_dir(), "retrans.csv", &out)?;
    emit(&out);
    Ok(())
}
