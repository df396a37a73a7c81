//! Acceptance suite: one test per criterion, with pinned tolerances and
//! wall-clock budgets. Run with `--nocapture` to see one summary line
//! per criterion.

use std::time::Instant;

use quantgrid::algorithms::{DecentralizedGd, DualDecomposition};
use quantgrid::channel::{
    delay, fixed_rounds, mc_fixed_rounds_success_rate, mc_until_success_totals, time_to_eps,
    until_success_bounds, RateModel,
};
use quantgrid::framework::{
    self, iterations_to_eps, run_exact, run_quantized, AlgorithmModel, QuantizedRunConfig,
    RunStatus,
};
use quantgrid::graph::GraphSpec;
use quantgrid::linalg;
use quantgrid::problems::{bound_d, DistributedProblem, LogisticProblem, QuadraticProblem};
use quantgrid::quantizer::{grid_step, quantize, GridSpec};
use quantgrid::rng::Rng64;

const LN2: f64 = std::f64::consts::LN_2;

/// 99% bootstrap confidence interval for the mean.
fn bootstrap_ci99(samples: &[f64], rounds: usize, rng: &mut Rng64) -> (f64, f64) {
    let n = samples.len();
    let mut means: Vec<f64> = (0..rounds)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                s += samples[rng.below(n as u64) as usize];
            }
            s / n as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = means[(rounds as f64 * 0.005) as usize];
    let hi = means[((rounds as f64 * 0.995) as usize).min(rounds - 1)];
    (lo, hi)
}

/// Independent oracle for the expected until-success round count:
/// `E[M] = sum_{m >= 0} (1 - (1 - p^m)^links)`, summed to convergence.
fn expected_max_retransmissions(links: usize, p: f64) -> f64 {
    let mut sum = 0.0;
    for m in 0..20_000 {
        let term = 1.0 - (1.0 - p.powi(m)).powi(links as i32);
        sum += term;
        if m > 0 && term < 1e-15 {
            break;
        }
    }
    sum
}

#[test]
fn criterion_01_quantizer_precision() {
    let start = Instant::now();
    let mut rng = Rng64::new(0xC1);
    let mut violations = 0usize;
    for bits in 1..=16u32 {
        for _ in 0..10_000 {
            let d = 1 + rng.below(3) as usize;
            let center: Vec<f64> = (0..d).map(|_| 10.0 * rng.normal()).collect();
            let radius = rng.open01() * 10.0;
            let grid = GridSpec::new(center.clone(), radius, bits).unwrap();
            let c: Vec<f64> = center
                .iter()
                .map(|&q| q + radius * (2.0 * rng.next_f64() - 1.0))
                .collect();
            let msg = quantize(&c, &grid).unwrap();
            let bound = grid_step(radius, bits) * (1.0 + 1e-12);
            for (v, cj) in msg.value.iter().zip(&c) {
                if (v - cj).abs() > bound {
                    violations += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(violations, 0, "quantizer precision violations");
    assert!(elapsed < 5.0, "took {elapsed:.2}s, budget 5s");
    println!("criterion 01: PASS - quantization error within r/(2^b-1) on 160k draws ({elapsed:.2}s)");
}

#[test]
fn criterion_02_convergence_envelope() {
    let start = Instant::now();
    let cases = [
        (2usize, 3usize, 101u64),
        (5, 10, 102),
        (20, 50, 103),
    ];
    let mut runs = 0usize;
    for &(nodes, dim, seed) in &cases {
        let problem = QuadraticProblem::random(nodes, dim, 1.0, 8.0, seed).unwrap();
        let model = DecentralizedGd::new(problem);
        let gain =
            framework::contraction_gain(model.lip_a(), model.lip_c(), model.sigma()).unwrap();
        let b_lo = framework::min_bits(gain, model.sigma()).unwrap();
        assert!(b_lo <= 16, "instance needs {b_lo} bits");

        let mut rng = Rng64::new(seed ^ 0xFEED);
        let x0 = rng.normal_vec(dim);
        let star = model.fixed_point().unwrap();
        let d_bound = linalg::norm2(&linalg::sub(&x0, star));

        for bits in b_lo..=16 {
            // Validate ten decades of contraction per bit width. Past
            // that the grid radius approaches the rounding floor of the
            // iterates, where containment only holds in exact arithmetic.
            let a = framework::alpha(bits, gain, model.sigma());
            let horizon = ((10.0 * std::f64::consts::LN_10 / -a.ln()).floor() as usize).min(250);
            let mut cfg = QuantizedRunConfig::new(bits, horizon, d_bound);
            cfg.initial_state = Some(x0.clone());
            let trace = run_quantized(&model, &cfg).unwrap();
            assert_eq!(trace.status, RunStatus::Completed, "overflow at b={bits}");
            assert!(trace.guaranteed);
            for row in &trace.rows {
                let bound = a.powi(row.k as i32) * d_bound * (1.0 + 1e-12);
                let err = row.err.unwrap();
                assert!(
                    err <= bound,
                    "envelope violated: N={nodes} d={dim} b={bits} k={} err={err} bound={bound}",
                    row.k
                );
            }
            // The grid always contained the incoming message.
            assert!(trace.containment.max_pre_ratio <= 1.0 + 1e-12);
            runs += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.2}s, budget 30s");
    println!("criterion 02: PASS - error within alpha^k D and zero overflows across {runs} runs ({elapsed:.2}s)");
}

#[test]
fn criterion_03_gradient_descent_rate() {
    let cases = [(2usize, 4usize, 11u64), (8, 12, 12), (20, 30, 13)];
    for &(nodes, dim, seed) in &cases {
        let problem = QuadraticProblem::random(nodes, dim, 1.0, 9.0, seed).unwrap();
        let model = DecentralizedGd::new(problem);
        let sigma = model.sigma();
        let mut rng = Rng64::new(seed);
        let x0 = rng.normal_vec(dim);
        let trace = run_exact(&model, Some(&x0), 100).unwrap();
        let errs: Vec<f64> = trace.rows.iter().map(|r| r.err.unwrap()).collect();
        for (k, pair) in errs.windows(2).enumerate() {
            if pair[0] > 1e-4 * errs[0] {
                let ratio = pair[1] / pair[0];
                assert!(
                    ratio <= sigma + 1e-9,
                    "N={nodes} d={dim} k={k}: ratio {ratio} > sigma {sigma}"
                );
            }
        }
    }
    println!("criterion 03: PASS - per-step contraction within 1 - 2/(kappa+1) + 1e-9");
}

#[test]
fn criterion_04_dual_decomposition_rate() {
    let graphs = [
        ("path-2", GraphSpec::path(2).unwrap(), 2, 120),
        ("complete-3", GraphSpec::complete(3).unwrap(), 3, 160),
        (
            "geometric-20",
            GraphSpec::random_geometric(20, 0.3, 42).unwrap(),
            20,
            4000,
        ),
    ];
    for (name, graph, nodes, horizon) in graphs {
        let problem = QuadraticProblem::random(nodes, 2, 1.0, 4.0, 0xD0 + nodes as u64).unwrap();
        let model = DualDecomposition::new(problem, &graph, 5).unwrap();
        let sigma = model.sigma();
        let trace = run_exact(&model, None, horizon).unwrap();
        let errs: Vec<f64> = trace.rows.iter().map(|r| r.err.unwrap()).collect();
        for (k, pair) in errs.windows(2).enumerate() {
            if pair[0] > 1e-4 * errs[0] {
                let ratio = pair[1] / pair[0];
                assert!(
                    ratio <= sigma + 1e-9,
                    "{name} k={k}: ratio {ratio} > sigma {sigma}"
                );
            }
        }
        // Final messages agree across nodes and are jointly stationary.
        let d = 2;
        let c = &trace.final_messages;
        let mut consensus: f64 = 0.0;
        for i in 1..nodes {
            for j in 0..d {
                consensus = consensus.max((c[i * d + j] - c[j]).abs());
            }
        }
        assert!(consensus < 1e-6, "{name}: consensus residual {consensus}");
        let mean: Vec<f64> = (0..d)
            .map(|j| (0..nodes).map(|i| c[i * d + j]).sum::<f64>() / nodes as f64)
            .collect();
        let grad_sum = model.problem().grad(&mean);
        assert!(linalg::norm2(&grad_sum) < 1e-5, "{name}: stationarity");
    }
    println!("criterion 04: PASS - M-norm contraction within sigma + 1e-9 and consensus < 1e-6");
}

#[test]
fn criterion_05_optimal_bits_case1() {
    let start = Instant::now();
    // Constant-rate transmission time is minimized by sweeping b at
    // K = 1, D = 1, eps = 0.1, sigma = 0.9, d = 1, theta = 0.
    let model = RateModel::Constant { c: LN2 };
    let b_lo = framework::min_bits(1.0, 0.9).unwrap();
    let mut best = b_lo;
    let mut best_t = f64::INFINITY;
    for bits in b_lo..=30 {
        let t = time_to_eps(bits, 0, 1, 1.0, 0.9, 1.0, 0.1, &model, 0.0).unwrap();
        if t < best_t {
            best_t = t;
            best = bits;
        }
    }
    assert!(
        (best as i64 - 5).abs() <= 1,
        "swept argmin {best} not within 1 of 5"
    );
    // The exhaustive sweep pins the exact integer.
    assert_eq!(best, 6);
    // Same argmin as the closed-form bit budget under a constant rate.
    assert_eq!(framework::optimal_bits(1.0, 0.9, 1.0, 0.1, 30).unwrap(), best);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "took {elapsed:.3}s, budget 1s");
    println!("criterion 05: PASS - transmission-time argmin b = {best}, within 1 of the reported 5 ({elapsed:.3}s)");
}

#[test]
fn criterion_06_until_success_sandwich() {
    let start = Instant::now();
    let model = RateModel::Constant { c: LN2 };
    let (gain, sigma, d_bound, eps, bits) = (1.0, 0.9, 1.0, 0.1, 5u32);
    let k_real = iterations_to_eps(bits, gain, sigma, d_bound, eps).unwrap();
    let iterations = k_real.ceil() as u64;
    let step = delay(&model, 5, 0.0).unwrap();
    let mut rng = Rng64::new(0xB007);
    for &links in &[2usize, 20, 400] {
        for &p in &[0.01, 0.05, 0.3] {
            let (lb, ub) =
                until_success_bounds(bits, 0, 1, p, links, gain, sigma, d_bound, eps, &model)
                    .unwrap();
            let totals = mc_until_success_totals(iterations, links, p, step, 10_000, 0xFACE ^ links as u64 ^ (p * 1e4) as u64);
            let (ci_lo, ci_hi) = bootstrap_ci99(&totals, 1000, &mut rng);
            assert!(
                lb <= ci_lo && ci_hi <= ub,
                "links={links} p={p}: CI [{ci_lo:.3}, {ci_hi:.3}] outside [{lb:.3}, {ub:.3}]"
            );
            // The exact series for E[M] sits inside the harmonic bounds.
            let e_m = expected_max_retransmissions(links, p);
            let log_inv_p = (1.0 / p).ln();
            let lo = (links as f64).ln() / log_inv_p;
            let hi = 1.0 + (1.0 + (links as f64).ln()) / log_inv_p;
            assert!(
                lo <= e_m && e_m <= hi,
                "links={links} p={p}: E[M]={e_m} outside [{lo}, {hi}]"
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.2}s, budget 60s");
    println!("criterion 06: PASS - Monte Carlo means inside [LB, UB] for all 9 (links, p) pairs ({elapsed:.2}s)");
}

#[test]
fn criterion_07_fixed_rounds_success() {
    let model = RateModel::Constant { c: LN2 };
    let trials = 10_000;
    for &delta in &[0.5, 0.9] {
        let (m, _t) =
            fixed_rounds(5, 0, 1, 0.05, 20, 1.0, 0.9, 1.0, 0.1, delta, &model).unwrap();
        let rate = mc_fixed_rounds_success_rate(34, 20, 0.05, m, trials, 0xF1);
        let slack = 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
        assert!(
            rate >= delta - slack,
            "delta={delta}: success rate {rate} below {delta} - {slack}"
        );
    }
    println!("criterion 07: PASS - all-iterations-delivered frequency at least delta - 3 SE");
}

#[test]
fn criterion_08_logistic_quantized_matches_exact() {
    let start = Instant::now();
    let problem = LogisticProblem::synthetic(2000, 20, 7, 1.0, 20).unwrap();
    let d_bound = bound_d(&problem, &[0.0; 20]).unwrap();
    let model = DecentralizedGd::new(problem);
    let horizon = 150;

    let exact = run_exact(&model, None, horizon).unwrap();
    let cfg = QuantizedRunConfig::new(16, horizon, d_bound);
    let quant = run_quantized(&model, &cfg).unwrap();
    assert_eq!(quant.status, RunStatus::Completed);
    assert!(quant.guaranteed);

    let f_exact = model.problem().value(&exact.final_state);
    let f_quant = model.problem().value(&quant.final_state);
    let rel = (f_quant - f_exact).abs() / f_exact.abs();
    assert!(rel <= 1e-6, "objective mismatch {rel}");

    // Extreme quantization with a radius schedule tighter than the
    // guarantee: the run must either converge or report the overflow.
    let mut aggressive = QuantizedRunConfig::new(2, horizon, d_bound);
    aggressive.alpha_override = Some(model.sigma() / 2.0);
    let outcome = run_quantized(&model, &aggressive).unwrap();
    assert!(!outcome.guaranteed);
    match &outcome.status {
        RunStatus::Completed => {
            let f2 = model.problem().value(&outcome.final_state);
            assert!((f2 - f_exact).abs() / f_exact.abs() < 1e-3);
            println!("criterion 08: note - b=2 with alpha = sigma/2 converged anyway");
        }
        RunStatus::GridOverflow { iteration, node, .. } => {
            println!(
                "criterion 08: note - b=2 with alpha = sigma/2 overflowed its grid at iteration {iteration}, node {node}"
            );
        }
        RunStatus::Failed { .. } => panic!("no channel attached, Failed is impossible"),
    }

    // A hand-tuned decay between sigma and the guaranteed alpha(b) is
    // the practical regime for aggressive compression; log the outcome.
    let mut tuned = QuantizedRunConfig::new(2, horizon, d_bound);
    tuned.alpha_override = Some(0.2 + 0.8 * model.sigma());
    let tuned_outcome = run_quantized(&model, &tuned).unwrap();
    match &tuned_outcome.status {
        RunStatus::Completed => {
            println!("criterion 08: note - b=2 with hand-tuned alpha converged");
        }
        RunStatus::GridOverflow { iteration, .. } => {
            println!("criterion 08: note - b=2 with hand-tuned alpha overflowed at iteration {iteration}");
        }
        RunStatus::Failed { .. } => panic!("no channel attached"),
    }

    let elapsed = start.elapsed().as_secs_f64();
    println!("criterion 08: PASS - 16-bit run matches the unquantized objective to 1e-6 ({elapsed:.2}s)");
}

#[test]
fn criterion_09_bit_savings() {
    let problem = LogisticProblem::synthetic(2000, 20, 7, 1.0, 20).unwrap();
    let d_bound = bound_d(&problem, &[0.0; 20]).unwrap();
    let mut model = DecentralizedGd::new(problem);

    // Reference optimum from a long unquantized run.
    let reference = run_exact(&model, None, 2500).unwrap();
    model.set_fixed_point(reference.final_state.clone());

    let eps = 1e-5;
    let exact = run_exact(&model, None, 400).unwrap();
    let k_exact = exact.iterations_to(eps).expect("exact run reaches eps") as u64;

    let sigma = model.sigma();
    let gain = framework::contraction_gain(model.lip_a(), model.lip_c(), sigma).unwrap();
    let b_lo = framework::min_bits(gain, sigma).unwrap();
    assert!(b_lo <= 16, "need {b_lo} bits");

    let mut best_bits_to_eps = u64::MAX;
    let mut best_b = 0u32;
    for bits in b_lo..=16 {
        // The closed-form iteration budget is an upper bound on the
        // observed count; run just past it.
        let k_bound = iterations_to_eps(bits, gain, sigma, d_bound, eps).unwrap().ceil() as u64;
        let cfg = QuantizedRunConfig::new(bits, k_bound as usize + 50, d_bound);
        let trace = run_quantized(&model, &cfg).unwrap();
        assert_eq!(trace.status, RunStatus::Completed);
        let k_emp = trace.iterations_to(eps).expect("quantized run reaches eps") as u64;
        assert!(
            k_emp <= k_bound + 1,
            "b={bits}: empirical {k_emp} above bound {k_bound}"
        );
        let payload = bits as u64 * k_emp;
        if payload < best_bits_to_eps {
            best_bits_to_eps = payload;
            best_b = bits;
        }
    }
    let float_payload = 64 * k_exact;
    assert!(
        best_bits_to_eps < float_payload,
        "quantized {best_bits_to_eps} bits/dim not below 64-bit {float_payload}"
    );
    println!(
        "criterion 09: PASS - optimal b = {best_b} uses {best_bits_to_eps} bits/dim vs {float_payload} for 64-bit floats"
    );
}

#[test]
fn criterion_10_gradient_correctness() {
    let logistic = LogisticProblem::synthetic(200, 10, 3, 0.8, 5).unwrap();
    let quadratic = QuadraticProblem::random(5, 8, 1.0, 6.0, 4).unwrap();
    let mut rng = Rng64::new(0x10);

    fn check<P: DistributedProblem>(p: &P, z: &[f64], step: f64) -> f64 {
        let g = p.grad(z);
        let fd: Vec<f64> = (0..z.len())
            .map(|j| {
                let mut hi = z.to_vec();
                let mut lo = z.to_vec();
                hi[j] += step;
                lo[j] -= step;
                (p.value(&hi) - p.value(&lo)) / (2.0 * step)
            })
            .collect();
        linalg::norm2(&linalg::sub(&g, &fd)) / linalg::norm2(&g).max(1e-12)
    }

    for _ in 0..100 {
        let z = rng.normal_vec(10);
        let rel = check(&logistic, &z, 1e-5);
        assert!(rel < 1e-6, "logistic rel err {rel}");
    }
    for _ in 0..100 {
        let z = rng.normal_vec(8);
        let rel = check(&quadratic, &z, 1e-6);
        assert!(rel < 1e-6, "quadratic rel err {rel}");
    }
    println!("criterion 10: PASS - analytic gradients match central differences to 1e-6");
}
