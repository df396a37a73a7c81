//! The linearly convergent algorithm contract and its quantized runner.
//!
//! An [`AlgorithmModel`] is a pair of maps: `apply` advances the state
//! from the stacked communicated vectors, `extract` picks out what each
//! node communicates. When the composition contracts with factor `sigma`
//! in some norm and both maps are Lipschitz (`lip_a` against the sup
//! norm of messages, `lip_c` from states to messages), quantizing every
//! message on a grid whose radius shrinks geometrically preserves linear
//! convergence. The effective rate is `alpha(b) = K/(2^b - 1) + sigma`
//! with gain `K = max(1, 2 lip_a lip_c / sigma)`, and the grid radius at
//! iteration `k` is `(K / lip_a) alpha^{k+1} D` where `D` bounds the
//! initial distance to the fixed point.

use crate::error::{Error, Result};
use crate::linalg;
use crate::quantizer::{self, GridSpec};
use crate::rng::Rng64;

pub trait AlgorithmModel: Send + Sync {
    fn node_count(&self) -> usize;
    /// Length of each node's communicated vector.
    fn message_dim(&self) -> usize;
    fn state_dim(&self) -> usize;

    /// Default starting state (the zero vector for the built-in models).
    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    /// One algorithm update from the stacked messages `c` (node count
    /// times message dim entries) and the current state.
    fn apply(&self, c: &[f64], x: &[f64]) -> Result<Vec<f64>>;

    /// The vector node `i` communicates at state `x`.
    fn extract(&self, node: usize, x: &[f64]) -> Result<Vec<f64>>;

    fn extract_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut c = Vec::with_capacity(self.node_count() * self.message_dim());
        for i in 0..self.node_count() {
            c.extend(self.extract(i, x)?);
        }
        Ok(c)
    }

    /// Contraction factor of `x -> apply(extract_all(x), x)`.
    fn sigma(&self) -> f64;
    /// Lipschitz constant of `apply` in the messages (sup norm in).
    fn lip_a(&self) -> f64;
    /// Lipschitz constant of `extract_all` (sup norm out).
    fn lip_c(&self) -> f64;

    /// The norm in which the contraction holds, evaluated on state-space
    /// difference vectors.
    fn norm(&self, v: &[f64]) -> f64;

    /// Known fixed point, for error tracking in tests and experiments.
    fn fixed_point(&self) -> Option<&[f64]> {
        None
    }

    /// A random state in the model's domain, for Lipschitz sampling.
    fn sample_state(&self, rng: &mut Rng64) -> Vec<f64>;
}

/// Gain `K = max(1, 2 lip_a lip_c / sigma)` coupling quantization noise
/// to iterate error.
pub fn contraction_gain(lip_a: f64, lip_c: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    if !(lip_a >= 0.0 && lip_c >= 0.0) {
        return Err(Error::DomainError("lipschitz constants must be nonnegative".into()));
    }
    Ok((2.0 * lip_a * lip_c / sigma).max(1.0))
}

/// Effective contraction of the quantized loop; exceeds 1 when `b` is
/// too small to keep up with the gain.
pub fn alpha(bits: u32, gain: f64, sigma: f64) -> f64 {
    gain / levels_minus_one(bits) + sigma
}

fn levels_minus_one(bits: u32) -> f64 {
    quantizer::max_index(bits) as f64
}

/// Converts a bound on the first step `||x^1 - x^0||` into a bound on
/// the initial distance to the fixed point: the contraction gives
/// `||x^0 - x*|| <= ||x^0 - x^1|| / (1 - sigma)`.
pub fn d_bound_from_first_step(first_step: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    if first_step.is_nan() || first_step < 0.0 {
        return Err(Error::DomainError(format!(
            "step norm must be nonnegative, got {first_step}"
        )));
    }
    Ok(first_step / (1.0 - sigma))
}

/// Smallest bit width with `alpha(b) < 1`.
pub fn min_bits(gain: f64, sigma: f64) -> Result<u32> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    let mut b = 1u32;
    while alpha(b, gain, sigma) >= 1.0 {
        b += 1;
        if b > 1024 {
            return Err(Error::DomainError(format!(
                "no bit width below 1024 gives alpha < 1 (gain {gain}, sigma {sigma})"
            )));
        }
    }
    Ok(b)
}

/// Grid radius at iteration `k`: `(gain / lip_a) alpha^{k+1} d_bound`.
pub fn radius_schedule(k: usize, gain: f64, lip_a: f64, alpha_value: f64, d_bound: f64) -> f64 {
    gain / lip_a * alpha_value.powi(k as i32 + 1) * d_bound
}

/// Iterations sufficient for `eps` accuracy:
/// `ln(d_bound / eps) / (1 - alpha(b))`. Returns a real; ceil it for a
/// discrete horizon.
pub fn iterations_to_eps(bits: u32, gain: f64, sigma: f64, d_bound: f64, eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::InvalidEps(eps));
    }
    let a = alpha(bits, gain, sigma);
    if a >= 1.0 {
        return Err(Error::Divergent {
            alpha: a,
            min_bits: min_bits(gain, sigma)?,
        });
    }
    Ok(((d_bound / eps).ln() / (1.0 - a)).max(0.0))
}

/// Total payload bits per dimension to reach `eps`: `b * k_eps(b)`.
pub fn total_bits(bits: u32, gain: f64, sigma: f64, d_bound: f64, eps: f64) -> Result<f64> {
    Ok(bits as f64 * iterations_to_eps(bits, gain, sigma, d_bound, eps)?)
}

/// Bit width minimizing [`total_bits`] over `[min_bits, b_max]`, ties to
/// the smaller width.
pub fn optimal_bits(gain: f64, sigma: f64, d_bound: f64, eps: f64, b_max: u32) -> Result<u32> {
    let lo = min_bits(gain, sigma)?;
    if b_max < lo {
        return Err(Error::EmptyRange { min_bits: lo, b_max });
    }
    let mut best = lo;
    let mut best_cost = total_bits(lo, gain, sigma, d_bound, eps)?;
    for b in lo + 1..=b_max {
        let cost = total_bits(b, gain, sigma, d_bound, eps)?;
        if cost < best_cost {
            best = b;
            best_cost = cost;
        }
    }
    Ok(best)
}

/// Configuration for a quantized run.
#[derive(Debug, Clone)]
pub struct QuantizedRunConfig {
    pub bits: u32,
    pub horizon: usize,
    /// Bound on the initial distance to the fixed point, in the model norm.
    pub d_bound: f64,
    /// Gain override; default is [`contraction_gain`] of the model constants.
    pub gain: Option<f64>,
    /// Radius decay override. Values below `alpha(bits)` shrink the grid
    /// faster than the guarantee allows and may overflow it.
    pub alpha_override: Option<f64>,
    pub initial_state: Option<Vec<f64>>,
    pub seed: u64,
}

impl QuantizedRunConfig {
    pub fn new(bits: u32, horizon: usize, d_bound: f64) -> Self {
        QuantizedRunConfig {
            bits,
            horizon,
            d_bound,
            gain: None,
            alpha_override: None,
            initial_state: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    /// Distance to the fixed point in the model norm, when known.
    pub err: Option<f64>,
    /// Grid radius used at this iteration (quantized runs only).
    pub radius: Option<f64>,
    /// Payload bits communicated so far across all nodes.
    pub bits_cum: u64,
    /// Simulated wall time, when a channel is attached.
    pub t_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// A message fell outside its grid: the radius schedule shrank too
    /// fast for the iterates.
    GridOverflow {
        iteration: usize,
        node: usize,
        component: usize,
    },
    /// A fixed-rounds iteration failed to deliver every message.
    Failed { iteration: usize },
}

/// Largest observed containment ratios across a quantized run; both stay
/// at or below 1 when the schedule constants are valid.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContainmentStats {
    /// max over k of `||c^{k+1} - q^k||_inf / r^k` (pre-quantization).
    pub max_pre_ratio: f64,
    /// max over k of `||c^{k+1} - q^{k+1}||_inf * (2^b - 1) / r^k`.
    pub max_post_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub status: RunStatus,
    /// False when `alpha >= 1`: the run executed without a guarantee.
    pub guaranteed: bool,
    /// Effective radius decay rate of the run, when quantized.
    pub alpha: Option<f64>,
    pub containment: ContainmentStats,
    pub final_state: Vec<f64>,
    /// Stacked exact messages at the final state.
    pub final_messages: Vec<f64>,
}

impl RunTrace {
    /// First iteration whose recorded error is at or below `eps`.
    pub fn iterations_to(&self, eps: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|row| row.err.is_some_and(|e| e <= eps))
            .map(|row| row.k)
    }

    pub fn final_err(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.err)
    }

    /// CSV with header `k,err,r_k,bits_cum,t_seconds`; absent fields are
    /// empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,err,r_k,bits_cum,t_seconds\n");
        for row in &self.rows {
            let err = row.err.map(|v| v.to_string()).unwrap_or_default();
            let radius = row.radius.map(|v| v.to_string()).unwrap_or_default();
            let t = row.t_seconds.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", row.k, err, radius, row.bits_cum, t));
        }
        out
    }
}

/// Per-iteration cost reported by a channel simulation.
#[derive(Debug, Clone, Copy)]
pub struct IterationCost {
    pub seconds: f64,
    /// False when a fixed-rounds iteration lost a message for good.
    pub delivered: bool,
}

fn check_finite(x: &[f64], iteration: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { iteration });
    }
    Ok(())
}

/// Runs the unquantized iteration. Transmissions are charged at 64 bits
/// per dimension, the floating-point width the payload would need on a
/// real channel.
pub fn run_exact<M: AlgorithmModel + ?Sized>(
    model: &M,
    initial_state: Option<&[f64]>,
    horizon: usize,
) -> Result<RunTrace> {
    let bits_per_iter = model.node_count() as u64 * model.message_dim() as u64 * 64;
    let mut x = initial_state.map(<[f64]>::to_vec).unwrap_or_else(|| model.initial_state());
    check_finite(&x, 0)?;
    let mut c = model.extract_all(&x)?;
    let err_of = |x: &[f64]| {
        model
            .fixed_point()
            .map(|star| model.norm(&linalg::sub(x, star)))
    };
    let mut rows = vec![TraceRow {
        k: 0,
        err: err_of(&x),
        radius: None,
        bits_cum: 0,
        t_seconds: None,
    }];
    for k in 0..horizon {
        x = model.apply(&c, &x)?;
        check_finite(&x, k + 1)?;
        c = model.extract_all(&x)?;
        rows.push(TraceRow {
            k: k + 1,
            err: err_of(&x),
            radius: None,
            bits_cum: (k as u64 + 1) * bits_per_iter,
            t_seconds: None,
        });
    }
    Ok(RunTrace {
        rows,
        status: RunStatus::Completed,
        guaranteed: true,
        alpha: None,
        containment: ContainmentStats::default(),
        final_state: x,
        final_messages: c,
    })
}

/// Runs the quantized iteration with the geometric radius schedule.
pub fn run_quantized<M: AlgorithmModel + ?Sized>(
    model: &M,
    cfg: &QuantizedRunConfig,
) -> Result<RunTrace> {
    run_quantized_with(model, cfg, |_| None)
}

/// Quantized run with a per-iteration channel cost: the closure returns
/// `None` when no channel is attached, otherwise the elapsed seconds and
/// whether every message was delivered.
pub fn run_quantized_with<M, F>(model: &M, cfg: &QuantizedRunConfig, mut channel: F) -> Result<RunTrace>
where
    M: AlgorithmModel + ?Sized,
    F: FnMut(usize) -> Option<IterationCost>,
{
    let n = model.node_count();
    let d = model.message_dim();
    let bits = cfg.bits;
    let bits_per_iter = n as u64 * d as u64 * bits as u64;
    let sigma = model.sigma();
    let gain = match cfg.gain {
        Some(g) => g,
        None => contraction_gain(model.lip_a(), model.lip_c(), sigma)?,
    };
    let a = cfg.alpha_override.unwrap_or_else(|| alpha(bits, gain, sigma));
    let guaranteed = a < 1.0 && cfg.alpha_override.is_none_or(|v| v >= alpha(bits, gain, sigma));
    let levels = levels_minus_one(bits);

    let mut x = cfg
        .initial_state
        .clone()
        .unwrap_or_else(|| model.initial_state());
    check_finite(&x, 0)?;
    let mut c = model.extract_all(&x)?;
    let mut q = c.clone();
    let err_of = |x: &[f64]| {
        model
            .fixed_point()
            .map(|star| model.norm(&linalg::sub(x, star)))
    };

    let mut time = 0.0;
    let mut with_time = false;
    let mut containment = ContainmentStats::default();
    let mut rows = vec![TraceRow {
        k: 0,
        err: err_of(&x),
        radius: Some(radius_schedule(0, gain, model.lip_a(), a, cfg.d_bound)),
        bits_cum: 0,
        t_seconds: None,
    }];
    let mut status = RunStatus::Completed;

    'iterations: for k in 0..cfg.horizon {
        let x_next = model.apply(&q, &x)?;
        check_finite(&x_next, k + 1)?;
        let c_next = model.extract_all(&x_next)?;
        let radius = radius_schedule(k, gain, model.lip_a(), a, cfg.d_bound);

        let pre = linalg::norm_inf(&linalg::sub(&c_next, &q)) / radius;
        containment.max_pre_ratio = containment.max_pre_ratio.max(pre);

        for node in 0..n {
            let block = node * d..(node + 1) * d;
            let grid = GridSpec::new(q[block.clone()].to_vec(), radius, bits)?;
            match quantizer::quantize(&c_next[block.clone()], &grid) {
                Ok(msg) => q[block].copy_from_slice(&msg.value),
                Err(Error::GridOverflow { component, .. }) => {
                    status = RunStatus::GridOverflow {
                        iteration: k,
                        node,
                        component,
                    };
                    break 'iterations;
                }
                Err(e) => return Err(e),
            }
        }
        let post = linalg::norm_inf(&linalg::sub(&c_next, &q)) * levels / radius;
        containment.max_post_ratio = containment.max_post_ratio.max(post);

        let cost = channel(k);
        let mut delivered = true;
        if let Some(cost) = cost {
            with_time = true;
            time += cost.seconds;
            delivered = cost.delivered;
        }

        x = x_next;
        c = c_next;
        rows.push(TraceRow {
            k: k + 1,
            err: err_of(&x),
            radius: Some(radius_schedule(k + 1, gain, model.lip_a(), a, cfg.d_bound)),
            bits_cum: (k as u64 + 1) * bits_per_iter,
            t_seconds: with_time.then_some(time),
        });

        if !delivered {
            status = RunStatus::Failed { iteration: k };
            break;
        }
    }

    Ok(RunTrace {
        rows,
        status,
        guaranteed,
        alpha: Some(a),
        containment,
        final_state: x,
        final_messages: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_examples() {
        assert_eq!(contraction_gain(0.5, 3.0, 0.5).unwrap(), 6.0);
        assert_eq!(contraction_gain(0.0, 0.0, 0.3).unwrap(), 1.0);
        let k = contraction_gain(1.0, 1.0, 0.9).unwrap();
        assert!((k - 2.0 / 0.9).abs() < 1e-12);
        assert!(matches!(contraction_gain(1.0, 1.0, 1.0), Err(Error::InvalidSigma(_))));
    }

    #[test]
    fn alpha_examples() {
        let a = alpha(5, 1.0, 0.9);
        assert!((a - (1.0 / 31.0 + 0.9)).abs() < 1e-12);
        assert_eq!(alpha(7, 0.0, 0.42), 0.42);
        // Monotone decreasing in b, approaching sigma.
        let mut prev = alpha(1, 1.0, 0.9);
        for b in 2..=40 {
            let cur = alpha(b, 1.0, 0.9);
            assert!(cur < prev);
            prev = cur;
        }
        assert!((alpha(60, 1.0, 0.9) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn min_bits_examples() {
        assert_eq!(min_bits(1.0, 0.9).unwrap(), 4);
        assert_eq!(min_bits(1.0, 0.5).unwrap(), 2);
        assert_eq!(min_bits(1e-12, 0.5).unwrap(), 1);
    }

    #[test]
    fn first_step_distance_conversion() {
        // A single observed step of 0.2 under sigma = 0.9 certifies an
        // initial distance of at most 2.
        assert!((d_bound_from_first_step(0.2, 0.9).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            d_bound_from_first_step(0.2, 1.0),
            Err(Error::InvalidSigma(_))
        ));
    }

    #[test]
    fn radius_schedule_examples() {
        assert!((radius_schedule(0, 1.0, 1.0, 0.5, 1.0) - 0.5).abs() < 1e-15);
        let r2 = radius_schedule(2, 6.0, 0.5, 0.93226, 1.0);
        assert!((r2 - 12.0 * 0.93226f64.powi(3)).abs() < 1e-9);
        assert!((r2 - 9.7228).abs() < 1e-3);
        // Geometric with ratio alpha.
        for k in 0..20 {
            let r = radius_schedule(k, 2.0, 0.7, 0.8, 3.0);
            let rn = radius_schedule(k + 1, 2.0, 0.7, 0.8, 3.0);
            assert!((rn / r - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_count_examples() {
        let k = iterations_to_eps(5, 1.0, 0.9, 1.0, 0.1).unwrap();
        assert!((k - 10f64.ln() / (0.1 - 1.0 / 31.0)).abs() < 1e-9);
        assert!((k - 33.99).abs() < 0.01);
        assert_eq!(iterations_to_eps(5, 1.0, 0.9, 1.0, 1.0).unwrap(), 0.0);
        // Large b approaches the unquantized count.
        let k_inf = iterations_to_eps(60, 1.0, 0.9, 1.0, 0.1).unwrap();
        assert!((k_inf - 10f64.ln() / 0.1).abs() < 1e-6);
        assert!(matches!(
            iterations_to_eps(3, 1.0, 0.9, 1.0, 0.1),
            Err(Error::Divergent { min_bits: 4, .. })
        ));
        assert!(matches!(
            iterations_to_eps(5, 1.0, 0.9, 1.0, 0.0),
            Err(Error::InvalidEps(_))
        ));
    }

    #[test]
    fn total_bits_examples() {
        let b5 = total_bits(5, 1.0, 0.9, 1.0, 0.1).unwrap();
        assert!((b5 - 169.95).abs() < 0.05);
        let b6 = total_bits(6, 1.0, 0.9, 1.0, 0.1).unwrap();
        assert!((b6 - 6.0 * 10f64.ln() / (0.1 - 1.0 / 63.0)).abs() < 1e-9);
        assert!(b6 < b5);
    }

    #[test]
    fn optimal_bits_interior_minimum() {
        // Exhaustive sweep pins the argmin; 6 beats 5 by a hair here.
        let best = optimal_bits(1.0, 0.9, 1.0, 0.1, 64).unwrap();
        assert_eq!(best, 6);
        // Cost blows up toward min_bits and grows linearly for large b.
        let at_min = total_bits(4, 1.0, 0.9, 1.0, 0.1).unwrap();
        let at_best = total_bits(best, 1.0, 0.9, 1.0, 0.1).unwrap();
        let at_large = total_bits(40, 1.0, 0.9, 1.0, 0.1).unwrap();
        assert!(at_min > at_best && at_large > at_best);
        // Singleton range returns its only element.
        assert_eq!(optimal_bits(1.0, 0.9, 1.0, 0.1, 4).unwrap(), 4);
        assert!(matches!(
            optimal_bits(1.0, 0.9, 1.0, 0.1, 3),
            Err(Error::EmptyRange { min_bits: 4, b_max: 3 })
        ));
        // Well-conditioned problems favor few bits.
        let easy = optimal_bits(1.0, 0.05, 1.0, 0.1, 64).unwrap();
        assert!(easy <= 3, "easy argmin {easy}");
    }

    #[test]
    fn csv_shape() {
        let trace = RunTrace {
            rows: vec![
                TraceRow { k: 0, err: Some(1.0), radius: Some(0.5), bits_cum: 0, t_seconds: None },
                TraceRow { k: 1, err: None, radius: None, bits_cum: 32, t_seconds: Some(2.5) },
            ],
            status: RunStatus::Completed,
            guaranteed: true,
            alpha: Some(0.9),
            containment: ContainmentStats::default(),
            final_state: vec![],
            final_messages: vec![],
        };
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k,err,r_k,bits_cum,t_seconds");
        assert_eq!(lines.next().unwrap(), "0,1,0.5,0,");
        assert_eq!(lines.next().unwrap(), "1,,,32,2.5");
    }
}
