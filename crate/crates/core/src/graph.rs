//! Undirected graphs, Laplacians, and the consensus norm.
//!
//! Dual decomposition over a graph contracts in the norm `||M x||_2`
//! where `M = (A A^T)^{-1} A` and `A` collects the nonzero-eigenvalue
//! rows of the Laplacian square root. This module builds that factor
//! from a Jacobi eigendecomposition and applies it block-wise, so the
//! Kronecker product with the per-dimension identity is never formed.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::rng::Rng64;

/// Undirected simple graph, validated connected at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphSpec {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            normalized.push((i.min(j), i.max(j)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        let g = GraphSpec { n, edges: normalized };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sender-receiver pairs: both directions of every edge.
    pub fn link_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(i, j)| i == node || j == node)
            .count()
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    pub fn path(n: usize) -> Result<Self> {
        GraphSpec::new(n, (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect())
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        GraphSpec::new(n, edges)
    }

    /// Graph Laplacian: degree on the diagonal, -1 on edges.
    pub fn laplacian(&self) -> DenseMatrix {
        let mut w = DenseMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            w.set(i, j, -1.0);
            w.set(j, i, -1.0);
            w.set(i, i, w.get(i, i) + 1.0);
            w.set(j, j, w.get(j, j) + 1.0);
        }
        w
    }

    /// Nodes uniform in the unit square, an edge when the Euclidean
    /// distance is below `radius`; resamples until connected.
    pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<Self> {
        const MAX_ATTEMPTS: usize = 1000;
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
        }
        let mut rng = Rng64::new(seed);
        for _ in 0..MAX_ATTEMPTS {
            let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.next_f64(), rng.next_f64())).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let dx = points[i].0 - points[j].0;
                    let dy = points[i].1 - points[j].1;
                    if (dx * dx + dy * dy).sqrt() < radius {
                        edges.push((i, j));
                    }
                }
            }
            match GraphSpec::new(n, edges) {
                Ok(g) => return Ok(g),
                Err(Error::Disconnected) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::ConnectivityTimeout {
            attempts: MAX_ATTEMPTS,
        })
    }

    /// Edge-list text format: first line the node count, then one
    /// `i j` pair per line, 0-indexed.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n);
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (line_no, first) = lines.next().ok_or_else(|| Error::ParseError {
            line: 1,
            message: "empty edge-list file".into(),
        })?;
        let n: usize = first.trim().parse().map_err(|_| Error::ParseError {
            line: line_no + 1,
            message: format!("expected node count, got {first:?}"),
        })?;
        let mut edges = Vec::new();
        for (idx, line) in lines {
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or_else(|| Error::ParseError {
                    line: idx + 1,
                    message: "expected `i j`".into(),
                })?
                .parse()
                .map_err(|_| Error::ParseError {
                    line: idx + 1,
                    message: format!("bad node index in {line:?}"),
                })
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::ParseError {
                    line: idx + 1,
                    message: format!("trailing tokens in {line:?}"),
                });
            }
            edges.push((i, j));
        }
        GraphSpec::new(n, edges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        GraphSpec::from_edge_list(&text)
    }
}

/// Eigendata of a connected graph's Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Descending; the last one is the zero eigenvalue.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    pub q: DenseMatrix,
    pub lambda_max: f64,
    /// Smallest nonzero eigenvalue (algebraic connectivity).
    pub lambda_min_plus: f64,
}

/// Eigenvalues below `RELATIVE_ZERO * lambda_max` are treated as zero.
/// Connected Laplacians have a spectral gap far above rounding noise at
/// this scale.
const RELATIVE_ZERO: f64 = 1e-9;

pub fn spectral(graph: &GraphSpec) -> Result<SpectralData> {
    let w = graph.laplacian();
    let eig = linalg::eig_sym(&w)?;
    let lambda_max = eig.eigenvalues[0];
    let zero_cut = RELATIVE_ZERO * lambda_max;
    let zero_count = eig.eigenvalues.iter().filter(|&&l| l.abs() <= zero_cut).count();
    if zero_count != 1 {
        return Err(Error::RankDeficiency { zero_count });
    }
    let n = graph.node_count();
    let lambda_min_plus = eig.eigenvalues[n - 2];
    Ok(SpectralData {
        eigenvalues: eig.eigenvalues,
        q: eig.eigenvectors,
        lambda_max,
        lambda_min_plus,
    })
}

/// The square-root factor of the Laplacian and the norm map built on it.
///
/// `a_bar` holds the nonzero rows of `sqrt(Lambda) Q^T`, so
/// `a_bar^T a_bar = W`, and `m = (a_bar a_bar^T)^{-1} a_bar` reduces to
/// `Lambda_+^{-1/2} Q_+^T` because `a_bar a_bar^T` is the diagonal of
/// nonzero eigenvalues.
#[derive(Debug, Clone)]
pub struct SqrtFactor {
    /// `(n-1) x n`.
    pub a_bar: DenseMatrix,
    /// `(n-1) x n`.
    pub m: DenseMatrix,
    lambda_max: f64,
    lambda_min_plus: f64,
}

/// Residual threshold for membership in the Laplacian image.
const IMAGE_RESIDUAL: f64 = 1e-8;

pub fn sqrt_factor(s: &SpectralData) -> Result<SqrtFactor> {
    let n = s.eigenvalues.len();
    let zero_cut = RELATIVE_ZERO * s.lambda_max;
    let nonzero: Vec<usize> = (0..n).filter(|&k| s.eigenvalues[k].abs() > zero_cut).collect();
    if nonzero.len() != n - 1 {
        return Err(Error::RankDeficiency {
            zero_count: n - nonzero.len(),
        });
    }
    let mut a_bar = DenseMatrix::zeros(n - 1, n);
    let mut m = DenseMatrix::zeros(n - 1, n);
    for (row, &k) in nonzero.iter().enumerate() {
        let lam = s.eigenvalues[k];
        for j in 0..n {
            let qjk = s.q.get(j, k);
            a_bar.set(row, j, lam.sqrt() * qjk);
            m.set(row, j, qjk / lam.sqrt());
        }
    }
    Ok(SqrtFactor {
        a_bar,
        m,
        lambda_max: s.lambda_max,
        lambda_min_plus: s.lambda_min_plus,
    })
}

impl SqrtFactor {
    pub fn node_count(&self) -> usize {
        self.a_bar.cols()
    }

    /// `||M||_2`: the larger equivalence constant toward the 2-norm.
    pub fn m1(&self) -> f64 {
        1.0 / self.lambda_min_plus.sqrt()
    }

    /// `||A^T||_2`: the constant bounding the 2-norm by the M-norm.
    pub fn m2(&self) -> f64 {
        self.lambda_max.sqrt()
    }

    /// Applies `M (x) I_d` to a stacked vector of `n` blocks of length `d`.
    pub fn apply_m(&self, x: &[f64], d: usize) -> Vec<f64> {
        apply_blockwise(&self.m, x, d)
    }

    /// Applies `A_bar (x) I_d`.
    pub fn apply_a_bar(&self, x: &[f64], d: usize) -> Vec<f64> {
        apply_blockwise(&self.a_bar, x, d)
    }

    /// Applies `A_bar^T (x) I_d`, mapping `n-1` blocks back to `n`.
    pub fn apply_a_bar_t(&self, v: &[f64], d: usize) -> Vec<f64> {
        let rows = self.a_bar.rows();
        let n = self.a_bar.cols();
        debug_assert_eq!(v.len(), rows * d);
        let mut out = vec![0.0; n * d];
        for e in 0..rows {
            let row = self.a_bar.row(e);
            let v_block = &v[e * d..(e + 1) * d];
            for (j, &coeff) in row.iter().enumerate() {
                if coeff == 0.0 {
                    continue;
                }
                linalg::axpy(&mut out[j * d..(j + 1) * d], coeff, v_block);
            }
        }
        out
    }

    /// Residual of `x` against the image of the Laplacian: the norm of
    /// its component along the all-ones block direction.
    pub fn image_residual(&self, x: &[f64], d: usize) -> f64 {
        let n = self.node_count();
        debug_assert_eq!(x.len(), n * d);
        let mut mean = vec![0.0; d];
        for block in x.chunks_exact(d) {
            linalg::axpy(&mut mean, 1.0, block);
        }
        for v in mean.iter_mut() {
            *v /= n as f64;
        }
        (n as f64).sqrt() * linalg::norm2(&mean)
    }

    /// `||M x||_2` for `x` in the Laplacian image (checked).
    pub fn m_norm(&self, x: &[f64], d: usize) -> Result<f64> {
        let residual = self.image_residual(x, d);
        if residual > IMAGE_RESIDUAL * linalg::norm2(x) {
            return Err(Error::NotInImage { residual });
        }
        Ok(self.m_seminorm(x, d))
    }

    /// `||M x||_2` without the membership check; `M` annihilates the
    /// consensus direction, so this is well defined on all inputs and
    /// agrees with [`SqrtFactor::m_norm`] on the image.
    pub fn m_seminorm(&self, x: &[f64], d: usize) -> f64 {
        linalg::norm2(&self.apply_m(x, d))
    }
}

/// `(B (x) I_d) x` computed block-wise: output block `e` is
/// `sum_j B[e][j] * x_j`.
fn apply_blockwise(b: &DenseMatrix, x: &[f64], d: usize) -> Vec<f64> {
    let n = b.cols();
    debug_assert_eq!(x.len(), n * d);
    let mut out = vec![0.0; b.rows() * d];
    for e in 0..b.rows() {
        let row = b.row(e);
        let out_block = &mut out[e * d..(e + 1) * d];
        for (j, &coeff) in row.iter().enumerate() {
            if coeff == 0.0 {
                continue;
            }
            linalg::axpy(out_block, coeff, &x[j * d..(j + 1) * d]);
        }
    }
    out
}

/// `(W (x) I_d) x` for a Laplacian (or any square matrix) block-wise.
pub fn laplacian_apply(w: &DenseMatrix, x: &[f64], d: usize) -> Vec<f64> {
    apply_blockwise(w, x, d)
}
