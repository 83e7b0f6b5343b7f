//! Reference competitors: star-topology consensus ADMM and decentralized
//! subgradient descent (DGD).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{star_graph, Graph};
use crate::netsim::{Network, Payload};
use crate::prox::{prox_l1, solve_scaled, Objective, ProblemSpec, ProxWorkspace};
use crate::solver::{SolverConfig, Trace, TraceBuilder};

/// Symmetric doubly-stochastic weights supported on the graph's edges.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
}

impl MixingMatrix {
    /// Metropolis-Hastings weights `1 / (1 + max(deg i, deg j))` on edges;
    /// the diagonal takes whatever is left of each row.
    pub fn metropolis(g: &Graph) -> Self {
        let l = g.node_count();
        let mut weights = DMatrix::zeros(l, l);
        for (i, j) in g.edges() {
            let w = 1.0 / (1 + g.degree(i).max(g.degree(j))) as f64;
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        for i in 0..l {
            let off: f64 = (0..l).filter(|&j| j != i).map(|j| weights[(i, j)]).sum();
            weights[(i, i)] = 1.0 - off;
        }
        MixingMatrix { weights }
    }

    pub fn identity(l: usize) -> Self {
        MixingMatrix { weights: DMatrix::identity(l, l) }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }
}

/// Step size `alpha_k` for iteration `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `alpha0 / sqrt(k)`
    InvSqrt(f64),
    /// `alpha0 / k`
    Inverse(f64),
}

impl StepSchedule {
    pub fn step(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::InvSqrt(a) => a / k.sqrt(),
            StepSchedule::Inverse(a) => a / k,
        }
    }

    pub fn initial(&self) -> f64 {
        match *self {
            StepSchedule::Constant(a) | StepSchedule::InvSqrt(a) | StepSchedule::Inverse(a) => a,
        }
    }

    /// Same shape with a different `alpha0`.
    pub fn with_initial(&self, a: f64) -> Self {
        match self {
            StepSchedule::Constant(_) => StepSchedule::Constant(a),
            StepSchedule::InvSqrt(_) => StepSchedule::InvSqrt(a),
            StepSchedule::Inverse(_) => StepSchedule::Inverse(a),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.initial();
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {a}")));
        }
        Ok(())
    }
}

fn total_subgradient(problem: &ProblemSpec, node: usize, x: &DVector<f64>) -> DVector<f64> {
    let p = problem.node(node);
    p.f.subgradient(x) + p.g.subgradient(x)
}

/// `x_i(k+1) = sum_j W_ij x_j(k) - alpha_k s_i(x_i(k))` with `s_i` a
/// subgradient of `f_i + g_i`. One round primes neighbors with `x(0) = 0`;
/// each iteration is then one round on `g`.
pub fn dgd(g: &Graph, problem: &ProblemSpec, schedule: StepSchedule, cfg: &SolverConfig) -> Result<Trace> {
    dgd_with_mixing(g, &MixingMatrix::metropolis(g), problem, schedule, cfg)
}

pub fn dgd_with_mixing(
    g: &Graph,
    mixing: &MixingMatrix,
    problem: &ProblemSpec,
    schedule: StepSchedule,
    cfg: &SolverConfig,
) -> Result<Trace> {
    schedule.validate()?;
    cfg.validate(problem.dim())?;
    let l = g.node_count();
    if problem.node_count() != l || mixing.size() != l {
        return Err(Error::Dimension(format!(
            "graph has {l} nodes, problem {}, mixing matrix {}",
            problem.node_count(),
            mixing.size()
        )));
    }
    if let Some((i, j)) = (0..l)
        .flat_map(|i| (0..l).map(move |j| (i, j)))
        .find(|&(i, j)| i != j && mixing.weight(i, j) != 0.0 && !g.has_edge(i, j))
    {
        return Err(Error::InvalidParameter(format!("mixing weight on non-edge ({i}, {j})")));
    }

    struct Node {
        x: DVector<f64>,
        neighbors: Vec<usize>,
    }
    let dim = problem.dim();
    let mut nodes: Vec<Node> = (0..l)
        .map(|i| Node { x: DVector::zeros(dim), neighbors: g.neighbors(i).to_vec() })
        .collect();
    let mut net = Network::new(g.clone());
    net.run_round(&mut nodes, |_, node, _, out| -> Result<()> {
        out.broadcast(node.neighbors.iter().copied(), Payload::Vector(node.x.as_slice().to_vec()));
        Ok(())
    })?;

    let mut trace = TraceBuilder::new(cfg, problem);
    let (mut iterations, mut converged) = (0, false);
    for k in 1..=cfg.max_iterations {
        let before = net.total_scalars();
        let alpha = schedule.step(k);
        net.run_round(&mut nodes, |i, node, inbox, out| -> Result<()> {
            let mut next = &node.x * mixing.weight(i, i);
            for msg in inbox {
                if let Payload::Vector(v) = &msg.payload {
                    next += DVector::from_column_slice(v) * mixing.weight(i, msg.from);
                }
            }
            next -= total_subgradient(problem, i, &node.x) * alpha;
            node.x = next;
            out.broadcast(node.neighbors.iter().copied(), Payload::Vector(node.x.as_slice().to_vec()));
            Ok(())
        })?;
        iterations = k;
        let xs: Vec<DVector<f64>> = nodes.iter().map(|n| n.x.clone()).collect();
        if trace.push(k, &xs, None, net.total_scalars() - before) {
            converged = true;
            break;
        }
    }
    let final_x = nodes.into_iter().map(|n| n.x).collect();
    Ok(trace.finish(final_x, None, iterations, converged, Some(net.traffic_report())))
}

/// Outcome of an `alpha0` sweep.
#[derive(Debug, Clone)]
pub struct DgdTuning {
    pub best: StepSchedule,
    /// `(alpha0, score)` per candidate, in grid order.
    pub scores: Vec<(f64, f64)>,
    pub trace: Trace,
}

/// Runs DGD for each `alpha0` in `grid` and keeps the one with the lowest
/// final error (final objective when `cfg.truth` is unset).
pub fn tune_dgd(
    g: &Graph,
    problem: &ProblemSpec,
    schedule: StepSchedule,
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<DgdTuning> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty step-size grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, StepSchedule, Trace)> = None;
    for &a in grid {
        let sched = schedule.with_initial(a);
        let trace = dgd(g, problem, sched, cfg)?;
        let last = trace.records.last().expect("at least one record");
        let score = last.error.unwrap_or(last.objective);
        let score = if score.is_finite() { score } else { f64::INFINITY };
        scores.push((a, score));
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, sched, trace));
        }
    }
    let (_, best, trace) = best.expect("grid is non-empty");
    Ok(DgdTuning { best, scores, trace })
}

fn consensus_step(problem: &ProblemSpec, v: &DVector<f64>, rho_total: f64) -> Result<DVector<f64>> {
    let mut weight = 0.0;
    for node in problem.nodes() {
        match &node.g {
            Objective::Zero => {}
            Objective::L1 { weight: w } => weight += w,
            other => {
                return Err(Error::Unsupported(format!(
                    "centralized consensus step supports zero or l1 regularizers, got {other:?}"
                )))
            }
        }
    }
    if weight == 0.0 {
        Ok(v.clone())
    } else {
        prox_l1(v, weight / rho_total)
    }
}

/// Consensus ADMM with a global variable `z` held by a coordinator:
/// `x_i = argmin f_i(x) + (sigma/2)||x - z + u_i||^2`,
/// `z = argmin sum_i g_i(z) + (l sigma/2)||z - mean(x_i + u_i)||^2`,
/// `u_i += x_i - z`.
///
/// Runs on a star network whose extra node `l` is the coordinator. The trace
/// records `z` at every node.
pub fn centralized_admm(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<Trace> {
    cfg.validate(problem.dim())?;
    let l = problem.node_count();
    let dim = problem.dim();
    let hub = l;
    consensus_step(problem, &DVector::zeros(dim), cfg.sigma * l as f64)?;

    // star_graph puts the center at 0; relabel so workers keep their ids
    let star = star_graph(l + 1)?;
    let topology = Graph::from_edges(l + 1, star.edges().map(|(_, j)| (j - 1, hub)))?;
    let mut net = Network::new(topology);

    #[derive(Clone)]
    struct Node {
        x: DVector<f64>,
        u: DVector<f64>,
        z: DVector<f64>,
        ws: ProxWorkspace,
    }
    let blank = Node {
        x: DVector::zeros(dim),
        u: DVector::zeros(dim),
        z: DVector::zeros(dim),
        ws: ProxWorkspace::new(),
    };
    let mut nodes = vec![blank; l + 1];
    let mut trace = TraceBuilder::new(cfg, problem);
    let (mut iterations, mut converged) = (0, false);

    let mut sigma = cfg.sigma;
    for k in 1..=cfg.max_iterations {
        let before = net.total_scalars();
        let next = cfg.sigma_at(k);
        let ratio = (next != sigma).then(|| sigma / next);
        sigma = next;
        let rho_total = sigma * l as f64;
        net.run_round(&mut nodes, |i, node, inbox, out| -> Result<()> {
            if i == hub {
                return Ok(());
            }
            if let Some(Payload::Vector(z)) = inbox.first().map(|m| &m.payload) {
                node.z = DVector::from_column_slice(z);
            }
            // scaled duals are y / sigma
            if let Some(r) = ratio {
                node.u *= r;
            }
            let e = &node.u - &node.z;
            node.x = solve_scaled(&problem.node(i).f, 1.0, &e, sigma, &node.x, &mut node.ws)?;
            out.send(hub, Payload::Vector((&node.x + &node.u).as_slice().to_vec()));
            Ok(())
        })?;
        net.run_round(&mut nodes, |i, node, inbox, out| -> Result<()> {
            if i != hub {
                return Ok(());
            }
            let mut avg = DVector::zeros(dim);
            for msg in inbox {
                if let Payload::Vector(v) = &msg.payload {
                    avg += DVector::from_column_slice(v);
                }
            }
            avg /= l as f64;
            node.z = consensus_step(problem, &avg, rho_total)?;
            out.broadcast(0..l, Payload::Vector(node.z.as_slice().to_vec()));
            Ok(())
        })?;
        let z = nodes[hub].z.clone();
        for node in &mut nodes[..l] {
            node.u += &node.x - &z;
        }
        iterations = k;
        let zs = vec![z; l];
        if trace.push(k, &zs, None, net.total_scalars() - before) {
            converged = true;
            break;
        }
    }
    let z = nodes[hub].z.clone();
    Ok(trace.finish(vec![z; l], None, iterations, converged, Some(net.traffic_report())))
}
