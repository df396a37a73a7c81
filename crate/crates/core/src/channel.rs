//! Transmission-rate models and the time cost of running the algorithms
//! over a digital channel.
//!
//! A packet carries `n = b*d + theta` bits per node per iteration and the
//! channel delivers `R(n, p)` bits per second, where `p` is the packet
//! failure probability. One iteration then costs `Delta = n / R(n, p)`
//! seconds. On lossy links, nodes either retransmit until success (the
//! per-iteration round count is the max of geometric variables across
//! links) or send a fixed number of rounds and accept a failure
//! probability.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::framework::{
    self, AlgorithmModel, IterationCost, QuantizedRunConfig, RunTrace,
};
use crate::rng::Rng64;

/// The three rate-function shapes: a size-independent ceiling, the
/// finite-blocklength penalty `C - sqrt(V/n) Qinv(p)`, and the
/// contention bell `max_rate * (n/a) exp(1 - n/a)` peaking at `n = a`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateModel {
    Constant { c: f64 },
    FiniteBlocklength { c: f64, v: f64 },
    BellShape { max_rate: f64, a: f64 },
}

impl RateModel {
    /// An AWGN channel at unit signal-to-noise ratio: capacity `ln 2`,
    /// dispersion about 3/2.
    pub fn awgn_unit_snr() -> Self {
        RateModel::FiniteBlocklength {
            c: std::f64::consts::LN_2,
            v: 1.5,
        }
    }

    /// The bell shape normalized to `(n/5) exp(-n/5)`.
    pub fn bell_default() -> Self {
        RateModel::BellShape {
            max_rate: (-1.0f64).exp(),
            a: 5.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RateModel::Constant { .. } => "constant",
            RateModel::FiniteBlocklength { .. } => "finite-blocklength",
            RateModel::BellShape { .. } => "bell",
        }
    }

    /// Bits per second for an `n`-bit packet at failure probability `p`.
    pub fn rate(&self, n: u64, p: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::DomainError("packet size must be at least 1 bit".into()));
        }
        let value = match *self {
            RateModel::Constant { c } => c,
            RateModel::FiniteBlocklength { c, v } => {
                if !(0.0 < p && p < 1.0) {
                    return Err(Error::DomainError(format!(
                        "finite-blocklength rate needs p in (0, 1), got {p}"
                    )));
                }
                c - (v / n as f64).sqrt() * q_inverse(p)?
            }
            RateModel::BellShape { max_rate, a } => {
                let x = n as f64 / a;
                max_rate * x * (1.0 - x).exp()
            }
        };
        if value <= 0.0 || !value.is_finite() {
            return Err(Error::NonPositiveRate { n, rate: value });
        }
        Ok(value)
    }
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] by bisection; `Q` is strictly decreasing.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::DomainError(format!("q_inverse needs p in (0, 1), got {p}")));
    }
    let mut lo = -40.0f64;
    let mut hi = 40.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn erfc(t: f64) -> f64 {
    if t < 0.0 {
        return 2.0 - erfc(-t);
    }
    if t < 3.0 {
        1.0 - erf_series(t)
    } else {
        erfc_continued_fraction(t)
    }
}

// Power series of erf, ample accuracy below the crossover.
fn erf_series(t: f64) -> f64 {
    let t2 = t * t;
    let mut term = t;
    let mut sum = t;
    for n in 1..200 {
        term *= -t2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

// Modified Lentz on the classical continued fraction
// sqrt(pi) exp(t^2) erfc(t) = 1 / (t + (1/2)/(t + 1/(t + (3/2)/(t + ...)))).
fn erfc_continued_fraction(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for n in 1..200 {
        let a = n as f64 / 2.0;
        d = t + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = t + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-t * t).exp() / (std::f64::consts::PI.sqrt() * f)
}

/// Seconds to deliver one `n`-bit packet: `n / R(n, p)`.
pub fn delay(model: &RateModel, n: u64, p: f64) -> Result<f64> {
    Ok(n as f64 / model.rate(n, p)?)
}

/// Linear convergence rate per transmission second:
/// `alpha(b) ^ (R(n, p) / n)` with `n = b*d + theta`.
pub fn time_rate_rho(
    bits: u32,
    theta: u64,
    d: usize,
    gain: f64,
    sigma: f64,
    model: &RateModel,
    p: f64,
) -> Result<f64> {
    let a = framework::alpha(bits, gain, sigma);
    if a >= 1.0 {
        return Err(Error::Divergent {
            alpha: a,
            min_bits: framework::min_bits(gain, sigma)?,
        });
    }
    let n = bits as u64 * d as u64 + theta;
    Ok(a.powf(model.rate(n, p)? / n as f64))
}

/// Seconds to reach `eps` accuracy: `k_eps(b) * Delta(n, p)`.
#[allow(clippy::too_many_arguments)]
pub fn time_to_eps(
    bits: u32,
    theta: u64,
    d: usize,
    gain: f64,
    sigma: f64,
    d_bound: f64,
    eps: f64,
    model: &RateModel,
    p: f64,
) -> Result<f64> {
    let k = framework::iterations_to_eps(bits, gain, sigma, d_bound, eps)?;
    let n = bits as u64 * d as u64 + theta;
    Ok(k * delay(model, n, p)?)
}

/// What each node puts on the wire per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketSpec {
    pub bits: u32,
    pub dim: usize,
    /// Protocol overhead bits (headers, coding, scheduling).
    pub theta: u64,
    /// Packet failure probability.
    pub p: f64,
    /// Sender-receiver pairs in use.
    pub links: usize,
}

impl PacketSpec {
    pub fn new(bits: u32, dim: usize, theta: u64, p: f64, links: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::DomainError(format!("p must be in [0, 1), got {p}")));
        }
        if links == 0 {
            return Err(Error::DomainError("need at least one link".into()));
        }
        if bits == 0 || dim == 0 {
            return Err(Error::DomainError("payload must be at least one bit".into()));
        }
        Ok(PacketSpec {
            bits,
            dim,
            theta,
            p,
            links,
        })
    }

    /// Overhead as an affine function of the payload,
    /// `theta = a * (d b) + b0`, rounded up to whole bits.
    pub fn with_affine_overhead(
        bits: u32,
        dim: usize,
        a: f64,
        b0: f64,
        p: f64,
        links: usize,
    ) -> Result<Self> {
        let payload = bits as f64 * dim as f64;
        let theta = (a * payload + b0).max(0.0).ceil() as u64;
        PacketSpec::new(bits, dim, theta, p, links)
    }

    pub fn payload_bits(&self) -> u64 {
        self.bits as u64 * self.dim as u64
    }

    /// `n = b d + theta`.
    pub fn total_bits(&self) -> u64 {
        self.payload_bits() + self.theta
    }
}

/// Rounds until every link has delivered once: the max of `links`
/// independent geometric draws on {1, 2, ...}.
pub fn sample_retransmissions(links: usize, p: f64, rng: &mut Rng64) -> u64 {
    if p <= 0.0 {
        return 1;
    }
    let ln_p = p.ln();
    let mut max = 1u64;
    for _ in 0..links {
        let u = rng.open01();
        // Inverse CDF of the geometric on {1, 2, ...}.
        let s = if u >= p { 1 } else { (u.ln() / ln_p) as u64 + 1 };
        max = max.max(s);
    }
    max
}

/// Closed-form bounds on the expected time to reach `eps` accuracy when
/// every link retransmits until success.
#[allow(clippy::too_many_arguments)]
pub fn until_success_bounds(
    bits: u32,
    theta: u64,
    d: usize,
    p: f64,
    links: usize,
    gain: f64,
    sigma: f64,
    d_bound: f64,
    eps: f64,
    model: &RateModel,
) -> Result<(f64, f64)> {
    if p == 0.0 {
        return Err(Error::DegenerateP);
    }
    if !(0.0 < p && p < 1.0) {
        return Err(Error::DomainError(format!("p must be in (0, 1), got {p}")));
    }
    let base = time_to_eps(bits, theta, d, gain, sigma, d_bound, eps, model, p)?;
    let log_inv_p = (1.0 / p).ln();
    let log_links = (links as f64).ln();
    let lb = base * log_links / log_inv_p;
    let ub = base * ((1.0 + log_links) / log_inv_p + 1.0);
    Ok((lb, ub))
}

/// Rounds per iteration guaranteeing, with probability `delta`, that
/// every iteration of the run delivers all messages; returns the round
/// count and the resulting time to `eps`.
#[allow(clippy::too_many_arguments)]
pub fn fixed_rounds(
    bits: u32,
    theta: u64,
    d: usize,
    p: f64,
    links: usize,
    gain: f64,
    sigma: f64,
    d_bound: f64,
    eps: f64,
    delta: f64,
    model: &RateModel,
) -> Result<(u64, f64)> {
    if p == 0.0 {
        return Err(Error::DegenerateP);
    }
    if !(0.0 < p && p < 1.0) {
        return Err(Error::DomainError(format!("p must be in (0, 1), got {p}")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::DomainError(format!("delta must be in [0, 1), got {delta}")));
    }
    let k_real = framework::iterations_to_eps(bits, gain, sigma, d_bound, eps)?;
    let k = k_real.ceil().max(1.0);
    let m = (links as f64 * k / ((1.0 - delta) * (1.0 / p).ln())).ceil() as u64;
    let n = bits as u64 * d as u64 + theta;
    let t = k * delay(model, n, p)? * m as f64;
    Ok((m, t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RetransmissionPolicy {
    /// Retransmit every iteration until all links deliver.
    UntilSuccess,
    /// Exactly this many rounds per iteration; an undelivered link fails
    /// the run.
    FixedRounds(u64),
}

/// Quantized run over a lossy channel: per-iteration rounds are sampled
/// (or fixed) and the trace carries the cumulative transmission time.
/// Under a fixed-rounds policy, an iteration that fails to deliver every
/// message ends the run with a `Failed` status.
pub fn simulate_lossy_run<M: AlgorithmModel + ?Sized>(
    model: &M,
    cfg: &QuantizedRunConfig,
    packet: &PacketSpec,
    policy: RetransmissionPolicy,
    rate: &RateModel,
    seed: u64,
) -> Result<RunTrace> {
    if packet.bits != cfg.bits || packet.dim != model.message_dim() {
        return Err(Error::DomainError(
            "packet payload does not match the run configuration".into(),
        ));
    }
    let step = delay(rate, packet.total_bits(), packet.p)?;
    let mut rng = Rng64::new(seed);
    framework::run_quantized_with(model, cfg, |_k| {
        let cost = match policy {
            RetransmissionPolicy::UntilSuccess => {
                let rounds = sample_retransmissions(packet.links, packet.p, &mut rng);
                IterationCost {
                    seconds: rounds as f64 * step,
                    delivered: true,
                }
            }
            RetransmissionPolicy::FixedRounds(m) => {
                let needed = sample_retransmissions(packet.links, packet.p, &mut rng);
                IterationCost {
                    seconds: m as f64 * step,
                    delivered: needed <= m,
                }
            }
        };
        Some(cost)
    })
}

/// Monte Carlo totals of the until-success time for a fixed iteration
/// count: one entry per replica, each from its own derived seed, so the
/// result is independent of scheduling.
pub fn mc_until_success_totals(
    iterations: u64,
    links: usize,
    p: f64,
    delta_seconds: f64,
    replicas: usize,
    seed: u64,
) -> Vec<f64> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = Rng64::for_replica(seed, r);
            let mut rounds = 0u64;
            for _ in 0..iterations {
                rounds += sample_retransmissions(links, p, &mut rng);
            }
            rounds as f64 * delta_seconds
        })
        .collect()
}

/// Fraction of trials in which every iteration delivered within `m`
/// rounds on all links.
pub fn mc_fixed_rounds_success_rate(
    iterations: u64,
    links: usize,
    p: f64,
    m: u64,
    trials: usize,
    seed: u64,
) -> f64 {
    let successes: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = Rng64::for_replica(seed, r);
            for _ in 0..iterations {
                if sample_retransmissions(links, p, &mut rng) > m {
                    return 0;
                }
            }
            1
        })
        .sum();
    successes as f64 / trials as f64
}
