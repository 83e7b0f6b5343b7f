use nalgebra::DVector;

use super::{SolverConfig, Trace, TraceBuilder};
use crate::error::{Error, Result};
use crate::graph::{Label, SimplestBipartiteGraph};
use crate::netsim::{Message, Network, Outbox, Payload};
use crate::prox::{solve_scaled, ProblemSpec, ProxWorkspace};

/// Everything one node knows: its own iterates and running sums, plus the
/// latest vector and running sum received from each tree neighbor.
#[derive(Debug, Clone)]
struct Agent {
    label: Label,
    degree: f64,
    neighbors: Vec<usize>,
    x: DVector<f64>,
    y: DVector<f64>,
    cum_x: DVector<f64>,
    cum_y: DVector<f64>,
    neighbor_last: Vec<DVector<f64>>,
    neighbor_cum: Vec<DVector<f64>>,
    f_ws: ProxWorkspace,
    g_ws: ProxWorkspace,
}

impl Agent {
    fn new(sbg: &SimplestBipartiteGraph, node: usize, dim: usize) -> Self {
        let neighbors = sbg.neighbors(node).to_vec();
        let zero = DVector::zeros(dim);
        Agent {
            label: sbg.label(node),
            degree: sbg.degree(node) as f64,
            neighbor_last: vec![zero.clone(); neighbors.len()],
            neighbor_cum: vec![zero.clone(); neighbors.len()],
            neighbors,
            x: zero.clone(),
            y: zero.clone(),
            cum_x: zero.clone(),
            cum_y: zero,
            f_ws: ProxWorkspace::new(),
            g_ws: ProxWorkspace::new(),
        }
    }

    fn absorb(&mut self, inbox: &[Message]) -> Result<()> {
        for msg in inbox {
            let Payload::Vector(v) = &msg.payload else {
                continue;
            };
            let slot = self.neighbors.binary_search(&msg.from).map_err(|_| {
                Error::InvalidParameter(format!("vector from non-neighbor {}", msg.from))
            })?;
            let v = DVector::from_column_slice(v);
            self.neighbor_cum[slot] += &v;
            self.neighbor_last[slot] = v;
        }
        Ok(())
    }

    /// Keeps `sigma * (running sums)` fixed across a penalty change.
    fn rescale(&mut self, ratio: f64) {
        self.cum_x *= ratio;
        self.cum_y *= ratio;
        for cum in &mut self.neighbor_cum {
            *cum *= ratio;
        }
    }

    /// `A_i' A_other (last + cum)`: each tree neighbor contributes -1.
    fn coupling_last_plus_cum(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.x.len());
        for (last, cum) in self.neighbor_last.iter().zip(&self.neighbor_cum) {
            acc -= last;
            acc -= cum;
        }
        acc
    }

    /// `A_i' A_other cum`.
    fn coupling_cum(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.x.len());
        for cum in &self.neighbor_cum {
            acc -= cum;
        }
        acc
    }

    fn send(&self, out: &mut Outbox, v: &DVector<f64>) {
        out.broadcast(self.neighbors.iter().copied(), Payload::Vector(v.as_slice().to_vec()));
    }
}

fn setup(
    sbg: &SimplestBipartiteGraph,
    problem: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<(Network, Vec<Agent>)> {
    if problem.node_count() != sbg.node_count() {
        return Err(Error::Dimension(format!(
            "{} node problems for {} graph nodes",
            problem.node_count(),
            sbg.node_count()
        )));
    }
    cfg.validate(problem.dim())?;
    let agents = (0..sbg.node_count()).map(|i| Agent::new(sbg, i, problem.dim())).collect();
    Ok((Network::new(sbg.tree().clone()), agents))
}

/// Updates `sigma` for iteration `k`; returns the running-sum scale factor
/// when it changed.
fn penalty_ratio(cfg: &SolverConfig, k: usize, sigma: &mut f64) -> Option<f64> {
    let next = cfg.sigma_at(k);
    if next == *sigma {
        return None;
    }
    let ratio = *sigma / next;
    *sigma = next;
    Some(ratio)
}

fn scalars_so_far(net: &Network) -> usize {
    net.total_scalars()
}

/// Single-objective solver (`g_i = 0`): H nodes then T nodes each solve
/// `min f_i(x) + (sigma/2)||sqrt(mu_i) x + d_i||^2` with `mu_i` the tree degree.
pub fn dpf_admm_single(
    sbg: &SimplestBipartiteGraph,
    problem: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Trace> {
    if !problem.has_only_f() {
        return Err(Error::Unsupported("single-objective solver requires g_i = 0".into()));
    }
    if sbg.node_count() < 2 {
        return Err(Error::InvalidBipartition("single-objective solver needs at least one edge".into()));
    }
    let (mut net, mut agents) = setup(sbg, problem, cfg)?;
    let mut trace = TraceBuilder::new(cfg, problem);
    let mut converged = false;
    let mut iterations = 0;
    let mut sigma = cfg.sigma;

    let update = |node: usize, agent: &mut Agent, coupling: DVector<f64>, sigma: f64| -> Result<()> {
        let mu = agent.degree;
        let d = &agent.cum_x * mu.sqrt() + coupling / mu.sqrt();
        let x = solve_scaled(&problem.node(node).f, mu, &d, sigma, &agent.x, &mut agent.f_ws)?;
        agent.cum_x += &x;
        agent.x = x;
        Ok(())
    };

    for k in 1..=cfg.max_iterations {
        let before = scalars_so_far(&net);
        let ratio = penalty_ratio(cfg, k, &mut sigma);
        net.run_round(&mut agents, |node, agent, inbox, out| -> Result<()> {
            agent.absorb(inbox)?;
            if let Some(r) = ratio {
                agent.rescale(r);
            }
            if agent.label == Label::H {
                // x_T(k) + sum_{j<=k} x_T(j)
                let coupling = agent.coupling_last_plus_cum();
                update(node, agent, coupling, sigma)?;
                agent.send(out, &agent.x);
            }
            Ok(())
        })?;
        net.run_round(&mut agents, |node, agent, inbox, out| -> Result<()> {
            agent.absorb(inbox)?;
            if agent.label == Label::T {
                // x_H(k+1) + sum_{j<=k} x_H(j)
                let coupling = agent.coupling_cum();
                update(node, agent, coupling, sigma)?;
                agent.send(out, &agent.x);
            }
            Ok(())
        })?;
        iterations = k;
        let xs: Vec<DVector<f64>> = agents.iter().map(|a| a.x.clone()).collect();
        if trace.push(k, &xs, None, scalars_so_far(&net) - before) {
            converged = true;
            break;
        }
    }
    let final_x = agents.iter().map(|a| a.x.clone()).collect();
    Ok(trace.finish(final_x, None, iterations, converged, Some(net.traffic_report())))
}

/// Composite solver for `f_i + g_i` with split copies `x_i` (for `f_i`) and
/// `y_i` (for `g_i`). H nodes send `x`, T nodes send `y`.
pub fn dpf_admm_composite(
    sbg: &SimplestBipartiteGraph,
    problem: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Trace> {
    let (mut net, mut agents) = setup(sbg, problem, cfg)?;
    let mut sigma = cfg.sigma;
    let mut trace = TraceBuilder::new(cfg, problem);
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_iterations {
        let before = scalars_so_far(&net);
        let ratio = penalty_ratio(cfg, k, &mut sigma);
        let sigma = sigma;
        net.run_round(&mut agents, |node, agent, inbox, out| -> Result<()> {
            agent.absorb(inbox)?;
            if let Some(r) = ratio {
                agent.rescale(r);
            }
            let y_term = &agent.y + &agent.cum_y;
            let (a, e) = match agent.label {
                Label::H => {
                    let s = (agent.degree + 1.0).sqrt();
                    let w = agent.coupling_last_plus_cum();
                    (s * s, (w - y_term) / s + &agent.cum_x * s)
                }
                Label::T => (1.0, &agent.cum_x - y_term),
            };
            agent.x = solve_scaled(&problem.node(node).f, a, &e, sigma, &agent.x, &mut agent.f_ws)?;
            if agent.label == Label::H {
                agent.send(out, &agent.x);
            }
            Ok(())
        })?;
        net.run_round(&mut agents, |node, agent, inbox, out| -> Result<()> {
            agent.absorb(inbox)?;
            let x_term = &agent.x + &agent.cum_x;
            let (a, c) = match agent.label {
                Label::H => (1.0, &agent.cum_y - x_term),
                Label::T => {
                    let s = (agent.degree + 1.0).sqrt();
                    let varpi = agent.coupling_cum();
                    (s * s, (varpi - x_term) / s + &agent.cum_y * s)
                }
            };
            agent.y = solve_scaled(&problem.node(node).g, a, &c, sigma, &agent.y, &mut agent.g_ws)?;
            agent.cum_x += &agent.x;
            agent.cum_y += &agent.y;
            if agent.label == Label::T {
                agent.send(out, &agent.y);
            }
            Ok(())
        })?;
        iterations = k;
        let xs: Vec<DVector<f64>> = agents.iter().map(|a| a.x.clone()).collect();
        let ys: Vec<DVector<f64>> = agents.iter().map(|a| a.y.clone()).collect();
        if trace.push(k, &xs, Some(&ys), scalars_so_far(&net) - before) {
            converged = true;
            break;
        }
    }
    let final_x = agents.iter().map(|a| a.x.clone()).collect();
    let final_y = agents.iter().map(|a| a.y.clone()).collect();
    Ok(trace.finish(final_x, Some(final_y), iterations, converged, Some(net.traffic_report())))
}
