//! Concrete algorithm models: decentralized gradient descent, its
//! box-projected variant, and dual decomposition over a graph.
//!
//! The gradient models take their contraction constants from uniform
//! per-node curvature bounds: with every node objective `mu`-strongly
//! convex and `L`-smooth, the step `gamma = 2 / (N (mu + L))` contracts
//! the sum objective with factor `1 - 2/(kappa + 1)`, `kappa = L / mu`.

use crate::error::{Error, Result};
use crate::framework::AlgorithmModel;
use crate::graph::{self, GraphSpec, SqrtFactor};
use crate::linalg::{self, DenseMatrix};
use crate::problems::DistributedProblem;
use crate::rng::Rng64;

/// Gradient descent on `F = sum f_i` where every node communicates its
/// local gradient: `x <- x - gamma * sum_i c_i`, `c_i = grad f_i(x)`.
#[derive(Debug, Clone)]
pub struct DecentralizedGd<P> {
    problem: P,
    gamma: f64,
    sigma: f64,
    lip_a: f64,
    lip_c: f64,
    xstar: Option<Vec<f64>>,
}

impl<P: DistributedProblem> DecentralizedGd<P> {
    pub fn new(problem: P) -> Self {
        let n = problem.node_count() as f64;
        let gamma = 2.0 / (n * (problem.node_mu() + problem.node_lip()));
        Self::with_gamma(problem, gamma)
    }

    /// Custom step size; the contraction factor becomes
    /// `max(|1 - gamma N mu|, |1 - gamma N L|)` from the per-node bounds.
    pub fn with_gamma(problem: P, gamma: f64) -> Self {
        let n = problem.node_count() as f64;
        let d = problem.dim() as f64;
        let sigma = (1.0 - gamma * n * problem.node_mu())
            .abs()
            .max((1.0 - gamma * n * problem.node_lip()).abs());
        let lip_a = gamma * n * d.sqrt();
        let lip_c = problem.node_lip();
        let xstar = problem.optimum();
        DecentralizedGd {
            problem,
            gamma,
            sigma,
            lip_a,
            lip_c,
            xstar,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.problem.node_lip() / self.problem.node_mu()
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    /// Injects a fixed point for error tracking when the problem has no
    /// closed-form optimum (a converged reference run, say).
    pub fn set_fixed_point(&mut self, xstar: Vec<f64>) {
        self.xstar = Some(xstar);
    }
}

impl<P: DistributedProblem> AlgorithmModel for DecentralizedGd<P> {
    fn node_count(&self) -> usize {
        self.problem.node_count()
    }

    fn message_dim(&self) -> usize {
        self.problem.dim()
    }

    fn state_dim(&self) -> usize {
        self.problem.dim()
    }

    fn apply(&self, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let d = self.problem.dim();
        let mut out = x.to_vec();
        for block in c.chunks_exact(d) {
            linalg::axpy(&mut out, -self.gamma, block);
        }
        Ok(out)
    }

    fn extract(&self, node: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.problem.local_grad(node, x))
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn lip_a(&self) -> f64 {
        self.lip_a
    }

    fn lip_c(&self) -> f64 {
        self.lip_c
    }

    fn norm(&self, v: &[f64]) -> f64 {
        linalg::norm2(v)
    }

    fn fixed_point(&self) -> Option<&[f64]> {
        self.xstar.as_deref()
    }

    fn sample_state(&self, rng: &mut Rng64) -> Vec<f64> {
        rng.normal_vec(self.problem.dim())
    }
}

/// Decentralized gradient descent projected onto the unit box: any
/// starting point is within `sqrt(d)` of the solution, so the distance
/// bound never depends on problem data.
#[derive(Debug, Clone)]
pub struct ProjectedDecentralizedGd<P> {
    problem: P,
    gamma: f64,
    sigma: f64,
    lip_a: f64,
    lip_c: f64,
    xstar: Option<Vec<f64>>,
}

impl<P: DistributedProblem> ProjectedDecentralizedGd<P> {
    /// Step `1 / (N L)` with contraction `sqrt(1 - 1/kappa)`.
    pub fn new(problem: P) -> Self {
        let n = problem.node_count() as f64;
        let gamma = 1.0 / (n * problem.node_lip());
        let kappa = problem.node_lip() / problem.node_mu();
        let sigma = (1.0 - 1.0 / kappa).sqrt();
        Self::build(problem, gamma, sigma)
    }

    pub fn with_gamma(problem: P, gamma: f64) -> Self {
        let n = problem.node_count() as f64;
        let sigma = (1.0 - gamma * n * problem.node_mu())
            .abs()
            .max((1.0 - gamma * n * problem.node_lip()).abs());
        Self::build(problem, gamma, sigma)
    }

    fn build(problem: P, gamma: f64, sigma: f64) -> Self {
        let n = problem.node_count() as f64;
        let d = problem.dim() as f64;
        let lip_a = gamma * n * d.sqrt();
        let lip_c = problem.node_lip();
        // The unconstrained optimum is the fixed point only when it
        // already lies in the box.
        let xstar = problem
            .optimum()
            .filter(|z| z.iter().all(|&v| (0.0..=1.0).contains(&v)));
        ProjectedDecentralizedGd {
            problem,
            gamma,
            sigma,
            lip_a,
            lip_c,
            xstar,
        }
    }

    /// `sqrt(d)`: the box diameter, a valid distance bound from any start.
    pub fn diameter_bound(&self) -> f64 {
        (self.problem.dim() as f64).sqrt()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.problem.node_lip() / self.problem.node_mu()
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn set_fixed_point(&mut self, xstar: Vec<f64>) {
        self.xstar = Some(xstar);
    }
}

impl<P: DistributedProblem> AlgorithmModel for ProjectedDecentralizedGd<P> {
    fn node_count(&self) -> usize {
        self.problem.node_count()
    }

    fn message_dim(&self) -> usize {
        self.problem.dim()
    }

    fn state_dim(&self) -> usize {
        self.problem.dim()
    }

    fn apply(&self, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let d = self.problem.dim();
        let mut out = x.to_vec();
        for block in c.chunks_exact(d) {
            linalg::axpy(&mut out, -self.gamma, block);
        }
        for v in out.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(out)
    }

    fn extract(&self, node: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.problem.local_grad(node, x))
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn lip_a(&self) -> f64 {
        self.lip_a
    }

    fn lip_c(&self) -> f64 {
        self.lip_c
    }

    fn norm(&self, v: &[f64]) -> f64 {
        linalg::norm2(v)
    }

    fn fixed_point(&self) -> Option<&[f64]> {
        self.xstar.as_deref()
    }

    fn sample_state(&self, rng: &mut Rng64) -> Vec<f64> {
        (0..self.problem.dim()).map(|_| rng.next_f64()).collect()
    }
}

const INNER_SOLVER_CAP: usize = 100;
const INNER_TOL: f64 = 1e-10;
const DEFAULT_LIPSCHITZ_SAMPLES: usize = 96;

/// Dual decomposition over a connected graph. The dual state stacks one
/// block per node; the update is `x_i <- x_i + gamma sum_j W_ij c_j`
/// with `c_i = argmin f_i(c) + <c, x_i>`, and the contraction holds in
/// the norm `||M x||_2` built from the Laplacian square root.
#[derive(Debug)]
pub struct DualDecomposition<P> {
    problem: P,
    w: DenseMatrix,
    factor: SqrtFactor,
    lambda_max: f64,
    lambda_min_plus: f64,
    gamma: f64,
    sigma: f64,
    kappa_w: f64,
    lip_a: f64,
    lip_c: f64,
    xstar: Option<Vec<f64>>,
}

impl<P: DistributedProblem> DualDecomposition<P> {
    /// Builds the model with the step size
    /// `gamma = 2 L mu / (mu lambda_min+ + L lambda_max)` and estimates
    /// the message Lipschitz constants by sampling (`seed` fixes the
    /// sample stream). Override them with [`DualDecomposition::set_lipschitz`]
    /// when sharper constants are known.
    pub fn new(problem: P, graph: &GraphSpec, seed: u64) -> Result<Self> {
        if graph.node_count() != problem.node_count() {
            return Err(Error::DomainError(format!(
                "graph has {} nodes, problem has {}",
                graph.node_count(),
                problem.node_count()
            )));
        }
        let spectral = graph::spectral(graph)?;
        let factor = graph::sqrt_factor(&spectral)?;
        let mu = problem.node_mu();
        let lip = problem.node_lip();
        let gamma = 2.0 * lip * mu / (mu * spectral.lambda_min_plus + lip * spectral.lambda_max);
        let kappa_w = spectral.lambda_max * lip / (mu * spectral.lambda_min_plus);
        let sigma = 1.0 - 2.0 / (kappa_w + 1.0);
        let w = graph.laplacian();

        let d = problem.dim();
        let xstar = match problem.optimum() {
            Some(zstar) => {
                let mut x = Vec::with_capacity(problem.node_count() * d);
                for i in 0..problem.node_count() {
                    x.extend(problem.local_grad(i, &zstar).iter().map(|v| -v));
                }
                project_consensus_out(&mut x, d);
                Some(x)
            }
            None => None,
        };

        let mut dd = DualDecomposition {
            problem,
            w,
            factor,
            lambda_max: spectral.lambda_max,
            lambda_min_plus: spectral.lambda_min_plus,
            gamma,
            sigma,
            kappa_w,
            lip_a: 0.0,
            lip_c: 0.0,
            xstar,
        };
        let (lip_a, lip_c) = estimate_lipschitz(&dd, DEFAULT_LIPSCHITZ_SAMPLES, seed)?;
        dd.lip_a = lip_a;
        dd.lip_c = lip_c;
        Ok(dd)
    }

    pub fn set_lipschitz(&mut self, lip_a: f64, lip_c: f64) {
        self.lip_a = lip_a;
        self.lip_c = lip_c;
    }

    /// Custom step size; the contraction factor follows the dual ascent
    /// bound `sqrt(1 - 2 gamma lmin lmax / (mu lmin + L lmax))`.
    pub fn set_gamma(&mut self, gamma: f64) {
        let mu = self.problem.node_mu();
        let lip = self.problem.node_lip();
        let (lmin, lmax) = (self.lambda_min_plus, self.lambda_max);
        self.gamma = gamma;
        self.sigma = (1.0 - 2.0 * gamma * lmin * lmax / (mu * lmin + lip * lmax))
            .max(0.0)
            .sqrt();
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa_w(&self) -> f64 {
        self.kappa_w
    }

    pub fn factor(&self) -> &SqrtFactor {
        &self.factor
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn set_fixed_point(&mut self, xstar: Vec<f64>) {
        self.xstar = Some(xstar);
    }

    /// Distance bound `||x0 - xstar||_M` for runs started at zero, when
    /// the fixed point is known.
    pub fn initial_distance(&self) -> Option<f64> {
        let d = self.problem.dim();
        self.xstar
            .as_ref()
            .map(|star| self.factor.m_seminorm(star, d))
    }

    /// Damped Newton on `f_i(c) + <c, linear>`, with a gradient step
    /// fallback when no Hessian is available or the factorization fails.
    fn inner_minimize(&self, node: usize, linear: &[f64]) -> Result<Vec<f64>> {
        let d = self.problem.dim();
        let mut c = vec![0.0; d];
        let objective = |c: &[f64]| self.problem.local_value(node, c) + linalg::dot(c, linear);
        let mut grad_norm = f64::INFINITY;
        for _ in 0..INNER_SOLVER_CAP {
            let mut g = self.problem.local_grad(node, &c);
            linalg::axpy(&mut g, 1.0, linear);
            grad_norm = linalg::norm2(&g);
            if grad_norm <= INNER_TOL {
                return Ok(c);
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = match self.problem.local_hessian(node, &c) {
                Some(h) => match linalg::cholesky_solve(&h, &neg_g) {
                    Ok(s) => s,
                    Err(_) => scaled(&neg_g, 1.0 / self.problem.node_lip()),
                },
                None => scaled(&neg_g, 1.0 / self.problem.node_lip()),
            };
            let h0 = objective(&c);
            let slope = linalg::dot(&g, &step);
            // Armijo with an absolute slack: near the minimizer the true
            // decrease drops below objective rounding, where the full
            // Newton step is the right move anyway.
            let slack = 1e-14 * (1.0 + h0.abs());
            let mut t = 1.0;
            loop {
                let mut cand = c.clone();
                linalg::axpy(&mut cand, t, &step);
                if objective(&cand) <= h0 + 0.25 * t * slope + slack || t < 1e-12 {
                    c = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        Err(Error::InnerSolverFailure {
            node,
            grad_norm,
            iters: INNER_SOLVER_CAP,
        })
    }
}

fn scaled(v: &[f64], factor: f64) -> Vec<f64> {
    v.iter().map(|x| x * factor).collect()
}

/// Removes the consensus (all-blocks-equal) component, the orthogonal
/// projection onto the Laplacian image.
fn project_consensus_out(x: &mut [f64], d: usize) {
    let n = x.len() / d;
    let mut mean = vec![0.0; d];
    for block in x.chunks_exact(d) {
        linalg::axpy(&mut mean, 1.0 / n as f64, block);
    }
    for block in x.chunks_exact_mut(d) {
        for (v, m) in block.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
}

impl<P: DistributedProblem> AlgorithmModel for DualDecomposition<P> {
    fn node_count(&self) -> usize {
        self.problem.node_count()
    }

    fn message_dim(&self) -> usize {
        self.problem.dim()
    }

    fn state_dim(&self) -> usize {
        self.problem.node_count() * self.problem.dim()
    }

    fn apply(&self, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let d = self.problem.dim();
        let residual = self.factor.image_residual(x, d);
        if residual > 1e-8 * linalg::norm2(x) {
            return Err(Error::NotInImage { residual });
        }
        let mut out = x.to_vec();
        let wc = graph::laplacian_apply(&self.w, c, d);
        linalg::axpy(&mut out, self.gamma, &wc);
        Ok(out)
    }

    fn extract(&self, node: usize, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.problem.dim();
        self.inner_minimize(node, &x[node * d..(node + 1) * d])
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn lip_a(&self) -> f64 {
        self.lip_a
    }

    fn lip_c(&self) -> f64 {
        self.lip_c
    }

    fn norm(&self, v: &[f64]) -> f64 {
        self.factor.m_seminorm(v, self.problem.dim())
    }

    fn fixed_point(&self) -> Option<&[f64]> {
        self.xstar.as_deref()
    }

    fn sample_state(&self, rng: &mut Rng64) -> Vec<f64> {
        let mut x = rng.normal_vec(self.state_dim());
        project_consensus_out(&mut x, self.problem.dim());
        x
    }
}

/// Largest observed ratios of the two Lipschitz conditions over sampled
/// pairs, inflated by a safety factor of 2. Message differences mix
/// isotropic draws with sign patterns (including one shared across
/// blocks) so that block-summing maps see their extremal directions.
pub fn estimate_lipschitz<M: AlgorithmModel + ?Sized>(
    model: &M,
    sample_count: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if sample_count == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = Rng64::new(seed);
    let n = model.node_count();
    let d = model.message_dim();
    let nd = n * d;
    let mut max_a = 0.0f64;
    let mut max_c = 0.0f64;
    for sample in 0..sample_count {
        let x = model.sample_state(&mut rng);
        let base = rng.normal_vec(nd);
        let diff: Vec<f64> = match sample % 3 {
            0 => rng.normal_vec(nd),
            1 => (0..nd)
                .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
                .collect(),
            _ => {
                let s: Vec<f64> = (0..d)
                    .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
                    .collect();
                (0..nd).map(|i| s[i % d]).collect()
            }
        };
        let denom = linalg::norm_inf(&diff);
        if denom > 1e-12 {
            let mut shifted = base.clone();
            linalg::axpy(&mut shifted, 1.0, &diff);
            let a1 = model.apply(&base, &x)?;
            let a2 = model.apply(&shifted, &x)?;
            max_a = max_a.max(model.norm(&linalg::sub(&a2, &a1)) / denom);
        }

        let x2 = model.sample_state(&mut rng);
        let dx = model.norm(&linalg::sub(&x, &x2));
        if dx > 1e-12 {
            let c1 = model.extract_all(&x)?;
            let c2 = model.extract_all(&x2)?;
            max_c = max_c.max(linalg::norm_inf(&linalg::sub(&c1, &c2)) / dx);
        }
    }
    Ok((2.0 * max_a, 2.0 * max_c))
}

/// Bit width sufficient for the decentralized gradient method to match
/// the unquantized bit-complexity order: `ceil(log2(24 (kappa+1) sqrt(d)))`.
pub fn recommended_bits(kappa: f64, d: usize) -> Result<u32> {
    if kappa < 2.0 {
        return Err(Error::KappaTooSmall(kappa));
    }
    Ok((24.0 * (kappa + 1.0) * (d as f64).sqrt()).log2().ceil() as u32)
}

/// The projected-gradient variant: `ceil(log2(16 kappa sqrt(2 d)))`.
pub fn recommended_bits_projected(kappa: f64, d: usize) -> Result<u32> {
    if kappa < 2.0 {
        return Err(Error::KappaTooSmall(kappa));
    }
    Ok((16.0 * kappa * (2.0 * d as f64).sqrt()).log2().ceil() as u32)
}
