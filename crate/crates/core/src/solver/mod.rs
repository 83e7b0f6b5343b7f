//! Proximal-free two-block ADMM over a simplest bipartite graph.
//!
//! [`dpf_admm_single`] and [`dpf_admm_composite`] run as per-node handlers on
//! [`crate::netsim::Network`]; every multiplier is folded into running sums of
//! past iterates. [`matrix_oracle_single`] and [`matrix_oracle_composite`] run
//! the same ADMM with explicit incidence/constraint matrices and explicit
//! multipliers, for equivalence checks.

mod decentralized;
mod oracle;

pub use decentralized::{dpf_admm_composite, dpf_admm_single};
pub use oracle::{
    block_diagonal_check, matrix_oracle_composite, matrix_oracle_single, stacked_constraints,
    CompositeOracle, SingleOracle,
};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metrics::{consensus_gap, mean_iterate, relative_error};
use crate::netsim::TrafficReport;
use crate::prox::ProblemSpec;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Augmented-Lagrangian penalty.
    pub sigma: f64,
    /// `(iteration, sigma)` pairs: from that 1-based iteration on, the penalty
    /// switches to the given value. Strictly increasing in iteration.
    pub sigma_steps: Vec<(usize, f64)>,
    pub max_iterations: usize,
    /// Stop once both the consensus gap and the largest per-node iterate
    /// change fall below this value.
    pub tolerance: Option<f64>,
    /// Record every `stride`-th iteration (the final one is always recorded).
    pub stride: usize,
    /// Store the stacked iterates in each record.
    pub keep_iterates: bool,
    /// Ground truth for reconstruction error, when known.
    pub truth: Option<DVector<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma: 1.0,
            sigma_steps: Vec::new(),
            max_iterations: 1000,
            tolerance: None,
            stride: 1,
            keep_iterates: true,
            truth: None,
        }
    }
}

impl SolverConfig {
    pub fn with_sigma(sigma: f64, max_iterations: usize) -> Self {
        SolverConfig { sigma, max_iterations, ..Default::default() }
    }

    /// Penalty in force during iteration `k` (1-based).
    pub fn sigma_at(&self, k: usize) -> f64 {
        self.sigma_steps.iter().take_while(|(from, _)| *from <= k).last().map_or(self.sigma, |s| s.1)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for s in std::iter::once(self.sigma).chain(self.sigma_steps.iter().map(|s| s.1)) {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!("sigma must be positive, got {s}")));
            }
        }
        if self.sigma_steps.windows(2).any(|w| w[0].0 >= w[1].0) || self.sigma_steps.iter().any(|s| s.0 == 0) {
            return Err(Error::InvalidParameter("sigma steps must start at increasing iterations >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        if let Some(truth) = &self.truth {
            if truth.len() != dim {
                return Err(Error::Dimension(format!(
                    "ground truth has length {}, expected {dim}",
                    truth.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub x: Option<Vec<DVector<f64>>>,
    pub y: Option<Vec<DVector<f64>>>,
    pub consensus_gap: f64,
    /// `sum_i f_i + g_i` at the mean iterate.
    pub objective: f64,
    pub error: Option<f64>,
    /// Scalars delivered during this iteration.
    pub scalars_exchanged: usize,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
    pub final_x: Vec<DVector<f64>>,
    pub final_y: Option<Vec<DVector<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    pub traffic: Option<TrafficReport>,
}

impl Trace {
    pub fn final_mean(&self) -> DVector<f64> {
        mean_iterate(&self.final_x)
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.error).collect()
    }
}

/// Shared bookkeeping for all iterative solvers.
pub(crate) struct TraceBuilder<'a> {
    cfg: &'a SolverConfig,
    problem: &'a ProblemSpec,
    records: Vec<IterationRecord>,
    previous: Option<Vec<DVector<f64>>>,
}

impl<'a> TraceBuilder<'a> {
    pub(crate) fn new(cfg: &'a SolverConfig, problem: &'a ProblemSpec) -> Self {
        TraceBuilder { cfg, problem, records: Vec::new(), previous: None }
    }

    /// Records iteration `k` and reports whether the stopping rule fired.
    pub(crate) fn push(
        &mut self,
        k: usize,
        xs: &[DVector<f64>],
        ys: Option<&[DVector<f64>]>,
        scalars_exchanged: usize,
    ) -> bool {
        let gap = consensus_gap(xs);
        let change = match &self.previous {
            Some(prev) => prev.iter().zip(xs).map(|(p, x)| (x - p).norm()).fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        let stop = self.cfg.tolerance.is_some_and(|tol| gap <= tol && change <= tol);
        let last = stop || k == self.cfg.max_iterations;
        if k % self.cfg.stride == 0 || last {
            self.records.push(IterationRecord {
                iteration: k,
                x: self.cfg.keep_iterates.then(|| xs.to_vec()),
                y: ys.filter(|_| self.cfg.keep_iterates).map(|y| y.to_vec()),
                consensus_gap: gap,
                objective: self.problem.total_value(&mean_iterate(xs)),
                error: self.cfg.truth.as_ref().map(|t| relative_error(xs, t)),
                scalars_exchanged,
            });
        }
        if self.cfg.tolerance.is_some() {
            self.previous = Some(xs.to_vec());
        }
        stop
    }

    pub(crate) fn finish(
        self,
        final_x: Vec<DVector<f64>>,
        final_y: Option<Vec<DVector<f64>>>,
        iterations: usize,
        converged: bool,
        traffic: Option<TrafficReport>,
    ) -> Trace {
        Trace { records: self.records, final_x, final_y, iterations, converged, traffic }
    }
}

#[cfg(test)]
mod tests;
