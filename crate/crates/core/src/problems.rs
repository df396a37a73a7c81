//! Objective functions shared across nodes.
//!
//! A [`DistributedProblem`] is a sum `F = sum_i f_i` of per-node pieces,
//! each strongly convex with Lipschitz gradient. The logistic problem
//! shards its data so the per-node sum reproduces the global objective
//! exactly; the quadratic problem exists as an oracle with a closed-form
//! optimum for convergence-envelope tests.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::rng::Rng64;

pub trait DistributedProblem: Send + Sync {
    fn node_count(&self) -> usize;
    fn dim(&self) -> usize;

    fn local_value(&self, node: usize, z: &[f64]) -> f64;
    fn local_grad(&self, node: usize, z: &[f64]) -> Vec<f64>;
    /// Hessian of the node objective, when cheap to form. Enables Newton
    /// inner solves for dual decomposition.
    fn local_hessian(&self, _node: usize, _z: &[f64]) -> Option<DenseMatrix> {
        None
    }

    fn value(&self, z: &[f64]) -> f64 {
        (0..self.node_count()).map(|i| self.local_value(i, z)).sum()
    }

    fn grad(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.node_count() {
            linalg::axpy(&mut g, 1.0, &self.local_grad(i, z));
        }
        g
    }

    /// Strong convexity modulus of the sum `F`.
    fn mu(&self) -> f64;
    /// Gradient Lipschitz constant of the sum `F`.
    fn lip(&self) -> f64;
    /// Smallest strong convexity modulus over the node objectives.
    fn node_mu(&self) -> f64;
    /// Largest gradient Lipschitz constant over the node objectives.
    fn node_lip(&self) -> f64;

    fn kappa(&self) -> f64 {
        self.lip() / self.mu()
    }

    /// Closed-form minimizer of `F`, when one exists.
    fn optimum(&self) -> Option<Vec<f64>> {
        None
    }
}

/// `sqrt((2 / mu) F(x0))`: an a-priori bound on the distance from `x0`
/// to the minimizer, valid whenever `F` is nonnegative.
pub fn bound_d<P: DistributedProblem + ?Sized>(problem: &P, x0: &[f64]) -> Result<f64> {
    let f0 = problem.value(x0);
    if f0 < 0.0 {
        return Err(Error::NegativeObjective(f0));
    }
    Ok((2.0 / problem.mu() * f0).sqrt())
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-t))` without overflow for |t| up to the f64 exp range.
fn log1p_exp_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// l2-regularized logistic regression over `m` labeled feature vectors:
/// `F(z) = (1/m) sum log(1 + exp(-y_i z' v_i)) + (rho/2) ||z||^2`.
///
/// The rows are split into `N` contiguous shards; node `i` owns
/// `f_i(z) = (1/m) sum_{shard i} loss_j(z) + (rho/(2N)) ||z||^2`, so the
/// shards sum back to `F` exactly.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    features: Vec<f64>,
    labels: Vec<f64>,
    m: usize,
    d: usize,
    rho: f64,
    nodes: usize,
    shard_starts: Vec<usize>,
    lip_total: f64,
    node_lip_max: f64,
}

impl LogisticProblem {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, d: usize, rho: f64, nodes: usize) -> Result<Self> {
        let m = labels.len();
        if m == 0 || d == 0 {
            return Err(Error::DomainError("empty dataset".into()));
        }
        if features.len() != m * d {
            return Err(Error::DimensionMismatch {
                line: 0,
                expected: m * d,
                got: features.len(),
            });
        }
        if rho.is_nan() || rho <= 0.0 {
            return Err(Error::DomainError(format!("rho must be positive, got {rho}")));
        }
        if nodes == 0 || nodes > m {
            return Err(Error::DomainError(format!(
                "node count {nodes} must be in 1..={m}"
            )));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::DomainError("labels must be +1 or -1".into()));
        }
        // Row r belongs to node floor(r * N / m); contiguous, near-equal shards.
        let shard_starts: Vec<usize> = (0..=nodes).map(|i| i * m / nodes).collect();
        // Per-point smoothness of the logistic term is ||v||^2 / 4.
        let mut v_sum = 0.0;
        let mut per_node_v = vec![0.0; nodes];
        for r in 0..m {
            let row = &features[r * d..(r + 1) * d];
            let v4 = linalg::dot(row, row) / 4.0;
            v_sum += v4;
            let node = shard_starts.partition_point(|&s| s <= r) - 1;
            per_node_v[node] += v4;
        }
        let lip_total = rho + v_sum / m as f64;
        let node_lip_max = per_node_v
            .iter()
            .map(|&v| rho / nodes as f64 + v / m as f64)
            .fold(0.0f64, f64::max);
        Ok(LogisticProblem {
            features,
            labels,
            m,
            d,
            rho,
            nodes,
            shard_starts,
            lip_total,
            node_lip_max,
        })
    }

    /// Synthetic two-cluster data: with probability 1/2 the label is +1
    /// and the features are `1 + n`, otherwise -1 and `-1 + n`, with `n`
    /// i.i.d. standard normal.
    pub fn synthetic(m: usize, d: usize, seed: u64, rho: f64, nodes: usize) -> Result<Self> {
        let (features, labels) = synthetic_dataset(m, d, seed);
        LogisticProblem::new(features, labels, d, rho, nodes)
    }

    pub fn from_csv(path: &Path, rho: f64, nodes: usize) -> Result<Self> {
        let (features, labels, d) = load_csv(path)?;
        LogisticProblem::new(features, labels, d, rho, nodes)
    }

    pub fn sample_count(&self) -> usize {
        self.m
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn shard(&self, node: usize) -> std::ops::Range<usize> {
        self.shard_starts[node]..self.shard_starts[node + 1]
    }

    fn feature_row(&self, r: usize) -> &[f64] {
        &self.features[r * self.d..(r + 1) * self.d]
    }
}

impl DistributedProblem for LogisticProblem {
    fn node_count(&self) -> usize {
        self.nodes
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn local_value(&self, node: usize, z: &[f64]) -> f64 {
        let mut sum = 0.0;
        for r in self.shard(node) {
            let t = self.labels[r] * linalg::dot(z, self.feature_row(r));
            sum += log1p_exp_neg(t);
        }
        sum / self.m as f64 + self.rho / (2.0 * self.nodes as f64) * linalg::dot(z, z)
    }

    fn local_grad(&self, node: usize, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        for r in self.shard(node) {
            let y = self.labels[r];
            let row = self.feature_row(r);
            let t = y * linalg::dot(z, row);
            // d/dz log(1 + exp(-t)) = -y (1 - sigmoid(t)) v
            let coeff = -y * (1.0 - sigmoid(t)) / self.m as f64;
            linalg::axpy(&mut g, coeff, row);
        }
        linalg::axpy(&mut g, self.rho / self.nodes as f64, z);
        g
    }

    fn local_hessian(&self, node: usize, z: &[f64]) -> Option<DenseMatrix> {
        let mut h = DenseMatrix::zeros(self.d, self.d);
        for i in 0..self.d {
            h.set(i, i, self.rho / self.nodes as f64);
        }
        for r in self.shard(node) {
            let row = self.feature_row(r);
            let t = self.labels[r] * linalg::dot(z, row);
            let s = sigmoid(t);
            let w = s * (1.0 - s) / self.m as f64;
            for i in 0..self.d {
                for j in 0..self.d {
                    h.set(i, j, h.get(i, j) + w * row[i] * row[j]);
                }
            }
        }
        Some(h)
    }

    fn mu(&self) -> f64 {
        self.rho
    }

    fn lip(&self) -> f64 {
        self.lip_total
    }

    fn node_mu(&self) -> f64 {
        self.rho / self.nodes as f64
    }

    fn node_lip(&self) -> f64 {
        self.node_lip_max
    }
}

/// Raw synthetic dataset per the two-cluster recipe; deterministic in the
/// seed. Returns row-major features and +-1 labels.
pub fn synthetic_dataset(m: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Rng64::new(seed);
    let mut features = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let positive = rng.next_f64() < 0.5;
        let (y, base) = if positive { (1.0, 1.0) } else { (-1.0, -1.0) };
        labels.push(y);
        for _ in 0..d {
            features.push(base + rng.normal());
        }
    }
    (features, labels)
}

/// CSV rows `y,v_1,...,v_d` with labels in {-1, 1}. The dimension is
/// inferred from the first row.
pub fn load_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut d: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::ParseError {
                line: line_no,
                message: "need a label and at least one feature".into(),
            });
        }
        match d {
            None => d = Some(fields.len() - 1),
            Some(expect) => {
                if fields.len() - 1 != expect {
                    return Err(Error::DimensionMismatch {
                        line: line_no,
                        expected: expect + 1,
                        got: fields.len(),
                    });
                }
            }
        }
        let y: f64 = fields[0].trim().parse().map_err(|_| Error::ParseError {
            line: line_no,
            message: format!("bad label {:?}", fields[0]),
        })?;
        if y != 1.0 && y != -1.0 {
            return Err(Error::ParseError {
                line: line_no,
                message: format!("label must be 1 or -1, got {y}"),
            });
        }
        labels.push(y);
        for f in &fields[1..] {
            let v: f64 = f.trim().parse().map_err(|_| Error::ParseError {
                line: line_no,
                message: format!("bad feature {f:?}"),
            })?;
            features.push(v);
        }
    }
    let d = d.ok_or_else(|| Error::ParseError {
        line: 1,
        message: "empty file".into(),
    })?;
    Ok((features, labels, d))
}

/// Sum of per-node quadratics `f_i(z) = z' H_i z / 2 + g_i' z` with a
/// closed-form optimum; the oracle problem for envelope tests.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    h: Vec<DenseMatrix>,
    g: Vec<Vec<f64>>,
    d: usize,
    mu_total: f64,
    lip_total: f64,
    node_mu: f64,
    node_lip: f64,
    xstar: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(h: Vec<DenseMatrix>, g: Vec<Vec<f64>>) -> Result<Self> {
        if h.is_empty() || h.len() != g.len() {
            return Err(Error::DomainError("need one (H, g) pair per node".into()));
        }
        let d = h[0].rows();
        let mut h_sum = DenseMatrix::zeros(d, d);
        let mut g_sum = vec![0.0; d];
        let mut node_mu = f64::INFINITY;
        let mut node_lip = 0.0f64;
        for (hi, gi) in h.iter().zip(&g) {
            if hi.rows() != d || hi.cols() != d || gi.len() != d {
                return Err(Error::DomainError("inconsistent node dimensions".into()));
            }
            let eig = linalg::eig_sym(hi)?;
            let lo = *eig.eigenvalues.last().unwrap();
            let hi_val = eig.eigenvalues[0];
            if lo <= 0.0 {
                return Err(Error::NotPositiveDefinite { pivot: 0 });
            }
            node_mu = node_mu.min(lo);
            node_lip = node_lip.max(hi_val);
            h_sum.add_scaled(hi, 1.0);
            linalg::axpy(&mut g_sum, 1.0, gi);
        }
        let eig = linalg::eig_sym(&h_sum)?;
        let mu_total = *eig.eigenvalues.last().unwrap();
        let lip_total = eig.eigenvalues[0];
        let neg_g: Vec<f64> = g_sum.iter().map(|v| -v).collect();
        let xstar = linalg::cholesky_solve(&h_sum, &neg_g)?;
        Ok(QuadraticProblem {
            h,
            g,
            d,
            mu_total,
            lip_total,
            node_mu,
            node_lip,
            xstar,
        })
    }

    /// Random instance with per-node curvatures spanning
    /// `[mu_node, lip_node]`, endpoints included. For `d > 1` every node
    /// Hessian carries the full range, rotated by random Givens
    /// conjugations; for `d = 1` the range is spread across nodes.
    /// Linear terms are standard normal.
    pub fn random(nodes: usize, d: usize, mu_node: f64, lip_node: f64, seed: u64) -> Result<Self> {
        assert!(nodes >= 1 && d >= 1 && mu_node > 0.0 && lip_node >= mu_node);
        let mut rng = Rng64::new(seed);
        let mut hs = Vec::with_capacity(nodes);
        let mut gs = Vec::with_capacity(nodes);
        for node in 0..nodes {
            let mut h = DenseMatrix::zeros(d, d);
            if d == 1 {
                let curvature = match node {
                    0 => mu_node,
                    1 => lip_node,
                    _ => rng.uniform(mu_node, lip_node),
                };
                h.set(0, 0, curvature);
            } else {
                h.set(0, 0, mu_node);
                h.set(d - 1, d - 1, lip_node);
                for i in 1..d - 1 {
                    h.set(i, i, rng.uniform(mu_node, lip_node));
                }
                // Conjugating by rotations preserves the spectrum exactly.
                for _ in 0..3 * d {
                    let i = rng.below(d as u64) as usize;
                    let mut j = rng.below(d as u64) as usize;
                    if i == j {
                        j = (j + 1) % d;
                    }
                    let angle = rng.uniform(0.0, std::f64::consts::TAU);
                    givens_conjugate(&mut h, i, j, angle);
                }
            }
            hs.push(h);
            gs.push(rng.normal_vec(d));
        }
        QuadraticProblem::new(hs, gs)
    }

    pub fn optimum_exact(&self) -> &[f64] {
        &self.xstar
    }
}

fn givens_conjugate(h: &mut DenseMatrix, i: usize, j: usize, angle: f64) {
    let (c, s) = (angle.cos(), angle.sin());
    let d = h.rows();
    // Right-multiply by G.
    for r in 0..d {
        let a = h.get(r, i);
        let b = h.get(r, j);
        h.set(r, i, c * a - s * b);
        h.set(r, j, s * a + c * b);
    }
    // Left-multiply by G^T.
    for col in 0..d {
        let a = h.get(i, col);
        let b = h.get(j, col);
        h.set(i, col, c * a - s * b);
        h.set(j, col, s * a + c * b);
    }
    // Re-symmetrize rounding residue.
    for r in 0..d {
        for cidx in r + 1..d {
            let v = 0.5 * (h.get(r, cidx) + h.get(cidx, r));
            h.set(r, cidx, v);
            h.set(cidx, r, v);
        }
    }
}

impl DistributedProblem for QuadraticProblem {
    fn node_count(&self) -> usize {
        self.h.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn local_value(&self, node: usize, z: &[f64]) -> f64 {
        0.5 * linalg::dot(z, &self.h[node].matvec(z)) + linalg::dot(&self.g[node], z)
    }

    fn local_grad(&self, node: usize, z: &[f64]) -> Vec<f64> {
        let mut g = self.h[node].matvec(z);
        linalg::axpy(&mut g, 1.0, &self.g[node]);
        g
    }

    fn local_hessian(&self, node: usize, _z: &[f64]) -> Option<DenseMatrix> {
        Some(self.h[node].clone())
    }

    fn mu(&self) -> f64 {
        self.mu_total
    }

    fn lip(&self) -> f64 {
        self.lip_total
    }

    fn node_mu(&self) -> f64 {
        self.node_mu
    }

    fn node_lip(&self) -> f64 {
        self.node_lip
    }

    fn optimum(&self) -> Option<Vec<f64>> {
        Some(self.xstar.clone())
    }
}
