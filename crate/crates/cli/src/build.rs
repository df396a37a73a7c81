//! Turns a validated configuration into a boxed algorithm model plus
//! the constants the commands need.

use quantgrid::algorithms::{DecentralizedGd, DualDecomposition, ProjectedDecentralizedGd};
use quantgrid::framework::{run_exact, AlgorithmModel};
use quantgrid::graph::GraphSpec;
use quantgrid::linalg;
use quantgrid::problems::{bound_d, DistributedProblem, LogisticProblem, QuadraticProblem};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Iterations of the reference run used to pin a fixed point when the
/// problem has no closed-form optimum.
const REFERENCE_HORIZON: usize = 3000;

pub struct Built {
    pub model: Box<dyn AlgorithmModel>,
    /// Per-node condition number, for the automatic bit-width formula.
    pub kappa: f64,
    /// Distance bound derived from the problem, when one exists.
    pub default_d_bound: Option<f64>,
    /// Sender-receiver pairs the channel model charges.
    pub links: usize,
    /// True for the box-projected algorithm (its own bit formula).
    pub projected: bool,
}

enum Topology {
    Master { nodes: usize },
    Graph(GraphSpec),
}

fn build_topology(cfg: &ExperimentConfig) -> Result<Topology, CliError> {
    let t = &cfg.topology;
    match t.kind.as_str() {
        "master" => {
            let nodes = t
                .nodes
                .ok_or_else(|| CliError::config("master topology needs `nodes`"))?;
            if nodes == 0 {
                return Err(CliError::config("`nodes` must be at least 1"));
            }
            Ok(Topology::Master { nodes })
        }
        "edge-list" => {
            let path = t
                .path
                .as_ref()
                .ok_or_else(|| CliError::config("edge-list topology needs `path`"))?;
            let graph = GraphSpec::load(path)
                .map_err(|e| CliError::config(format!("cannot load graph: {e}")))?;
            Ok(Topology::Graph(graph))
        }
        "random-geometric" => {
            let nodes = t
                .nodes
                .ok_or_else(|| CliError::config("random-geometric topology needs `nodes`"))?;
            let radius = t
                .radius
                .ok_or_else(|| CliError::config("random-geometric topology needs `radius`"))?;
            let seed = t.seed.unwrap_or_else(|| cfg.seed());
            let graph = GraphSpec::random_geometric(nodes, radius, seed)
                .map_err(|e| CliError::config(format!("graph generation failed: {e}")))?;
            Ok(Topology::Graph(graph))
        }
        other => Err(CliError::config(format!(
            "unknown topology {other:?}; expected master, edge-list, or random-geometric"
        ))),
    }
}

fn build_logistic(cfg: &ExperimentConfig, nodes: usize) -> Result<LogisticProblem, CliError> {
    let p = &cfg.problem;
    let rho = p
        .rho
        .ok_or_else(|| CliError::config("logistic problems need `rho`"))?;
    match p.kind.as_str() {
        "synthetic" => {
            let m = p.m.ok_or_else(|| CliError::config("synthetic data needs `m`"))?;
            let d = p.d.ok_or_else(|| CliError::config("synthetic data needs `d`"))?;
            let seed = p.seed.unwrap_or_else(|| cfg.seed());
            LogisticProblem::synthetic(m, d, seed, rho, nodes)
                .map_err(|e| CliError::config(format!("synthetic problem: {e}")))
        }
        "csv" => {
            let path = p
                .path
                .as_ref()
                .ok_or_else(|| CliError::config("csv problems need `path`"))?;
            LogisticProblem::from_csv(path, rho, nodes)
                .map_err(|e| CliError::config(format!("csv problem: {e}")))
        }
        _ => unreachable!(),
    }
}

fn build_quadratic(cfg: &ExperimentConfig, nodes: usize) -> Result<QuadraticProblem, CliError> {
    let p = &cfg.problem;
    let d = p.d.ok_or_else(|| CliError::config("quadratic problems need `d`"))?;
    let mu = p.mu.unwrap_or(1.0);
    let lip = p
        .lip
        .ok_or_else(|| CliError::config("quadratic problems need `lip`"))?;
    let seed = p.seed.unwrap_or_else(|| cfg.seed());
    QuadraticProblem::random(nodes, d, mu, lip, seed)
        .map_err(|e| CliError::config(format!("quadratic problem: {e}")))
}

fn gd_built<P>(cfg: &ExperimentConfig, problem: P, nodes: usize) -> Result<Built, CliError>
where
    P: DistributedProblem + 'static,
{
    let kappa = problem.node_lip() / problem.node_mu();
    let d_default = default_distance_bound(&problem);
    let mut model = match cfg.algorithm.gamma {
        Some(g) => DecentralizedGd::with_gamma(problem, g),
        None => DecentralizedGd::new(problem),
    };
    if cfg.quantization.empirical && model.fixed_point().is_none() {
        let reference = run_exact(&model, None, REFERENCE_HORIZON)
            .map_err(|e| CliError::config(format!("reference run failed: {e}")))?;
        model.set_fixed_point(reference.final_state);
    }
    Ok(Built {
        model: Box::new(model),
        kappa,
        default_d_bound: d_default,
        links: nodes,
        projected: false,
    })
}

fn pgd_built<P>(cfg: &ExperimentConfig, problem: P, nodes: usize) -> Result<Built, CliError>
where
    P: DistributedProblem + 'static,
{
    let kappa = problem.node_lip() / problem.node_mu();
    let model = match cfg.algorithm.gamma {
        Some(g) => ProjectedDecentralizedGd::with_gamma(problem, g),
        None => ProjectedDecentralizedGd::new(problem),
    };
    // Any box point is within sqrt(d) of the solution.
    let d_default = Some(model.diameter_bound());
    Ok(Built {
        model: Box::new(model),
        kappa,
        default_d_bound: d_default,
        links: nodes,
        projected: true,
    })
}

fn dual_built<P>(cfg: &ExperimentConfig, problem: P, graph: GraphSpec) -> Result<Built, CliError>
where
    P: DistributedProblem + 'static,
{
    let kappa = problem.node_lip() / problem.node_mu();
    let links = graph.link_count();
    let mut model = DualDecomposition::new(problem, &graph, cfg.seed())
        .map_err(|e| CliError::config(format!("dual decomposition setup: {e}")))?;
    if let Some(g) = cfg.algorithm.gamma {
        model.set_gamma(g);
    }
    let d_default = model.initial_distance();
    Ok(Built {
        model: Box::new(model),
        kappa,
        default_d_bound: d_default,
        links,
        projected: false,
    })
}

fn default_distance_bound<P: DistributedProblem>(problem: &P) -> Option<f64> {
    let zeros = vec![0.0; problem.dim()];
    match problem.optimum() {
        Some(star) => Some(linalg::norm2(&linalg::sub(&zeros, &star))),
        None => bound_d(problem, &zeros).ok(),
    }
}

pub fn build(cfg: &ExperimentConfig) -> Result<Built, CliError> {
    match cfg.problem.kind.as_str() {
        "synthetic" | "csv" | "quadratic" => {}
        other => {
            return Err(CliError::config(format!(
                "unknown problem kind {other:?}; expected synthetic, csv, or quadratic"
            )))
        }
    }
    let topology = build_topology(cfg)?;
    let algorithm = cfg.algorithm.kind.as_str();
    match (algorithm, topology) {
        ("gd", Topology::Master { nodes }) => {
            if cfg.problem.kind == "quadratic" {
                gd_built(cfg, build_quadratic(cfg, nodes)?, nodes)
            } else {
                gd_built(cfg, build_logistic(cfg, nodes)?, nodes)
            }
        }
        ("pgd", Topology::Master { nodes }) => {
            if cfg.problem.kind == "quadratic" {
                pgd_built(cfg, build_quadratic(cfg, nodes)?, nodes)
            } else {
                pgd_built(cfg, build_logistic(cfg, nodes)?, nodes)
            }
        }
        ("dual", Topology::Graph(graph)) => {
            let nodes = graph.node_count();
            if cfg.problem.kind == "quadratic" {
                dual_built(cfg, build_quadratic(cfg, nodes)?, graph)
            } else {
                dual_built(cfg, build_logistic(cfg, nodes)?, graph)
            }
        }
        ("gd" | "pgd", Topology::Graph(_)) => Err(CliError::config(
            "gd and pgd coordinate through a master; use `topology.kind = \"master\"`",
        )),
        ("dual", Topology::Master { .. }) => Err(CliError::config(
            "dual decomposition runs over a graph; use edge-list or random-geometric topology",
        )),
        (other, _) => Err(CliError::config(format!(
            "unknown algorithm {other:?}; expected gd, pgd, or dual"
        ))),
    }
}
