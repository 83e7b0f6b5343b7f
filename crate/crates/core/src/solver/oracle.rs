//! Matrix-form ADMM with explicit multipliers.
//!
//! Stacked node vectors are held as `l x n` matrices (row `i` is node `i`), so
//! `(A kron I_n) x` is simply `A X`.

use nalgebra::{DMatrix, DVector};

use super::{SolverConfig, Trace, TraceBuilder};
use crate::error::{Error, Result};
use crate::graph::{DenseMatrix, Label, SimplestBipartiteGraph};
use crate::prox::{solve_scaled, Objective, ProblemSpec, ProxWorkspace};

/// Errors unless `m` is diagonal (off-diagonal entries exactly zero).
pub fn block_diagonal_check(m: &DenseMatrix, what: &str) -> Result<Vec<f64>> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return Err(Error::InvalidBipartition(format!(
                    "{what} has off-diagonal entry ({i}, {j}) = {}",
                    m[(i, j)]
                )));
            }
        }
    }
    Ok(m.diagonal().iter().copied().collect())
}

fn stack_rows(vectors: &[DVector<f64>], order: &[usize], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(order.len(), dim, |r, c| vectors[order[r]][c])
}

fn node_step(
    objective: &Objective,
    weight: f64,
    offset_row: nalgebra::RowDVector<f64>,
    sigma: f64,
    prev: &DVector<f64>,
    ws: &mut ProxWorkspace,
) -> Result<DVector<f64>> {
    let e = offset_row.transpose() / weight.sqrt();
    solve_scaled(objective, weight, &e, sigma, prev, ws)
}

/// Two-block ADMM on `A_H x_H + A_T x_T = 0` with explicit multiplier.
#[derive(Debug, Clone)]
pub struct SingleOracle {
    a_h: DMatrix<f64>,
    a_t: DMatrix<f64>,
    h: Vec<usize>,
    t: Vec<usize>,
    d_h: Vec<f64>,
    d_t: Vec<f64>,
    lambda: DMatrix<f64>,
    /// `sigma * sum_j (A_H x_H(j) + A_T x_T(j))`, accumulated separately.
    residual_sum: DMatrix<f64>,
    x: Vec<DVector<f64>>,
    ws: Vec<ProxWorkspace>,
    sigma: f64,
    dim: usize,
}

impl SingleOracle {
    pub fn new(sbg: &SimplestBipartiteGraph, dim: usize, sigma: f64) -> Result<Self> {
        let a_h = sbg.incidence_block(Label::H);
        let a_t = sbg.incidence_block(Label::T);
        let d_h = block_diagonal_check(&a_h.tr_mul(&a_h), "A_H'A_H")?;
        let d_t = block_diagonal_check(&a_t.tr_mul(&a_t), "A_T'A_T")?;
        if d_h.iter().chain(&d_t).any(|&d| d <= 0.0) {
            return Err(Error::InvalidBipartition("isolated node in tree".into()));
        }
        let rows = sbg.node_count() - 1;
        let l = sbg.node_count();
        Ok(SingleOracle {
            a_h,
            a_t,
            h: sbg.h_nodes(),
            t: sbg.t_nodes(),
            d_h,
            d_t,
            lambda: DMatrix::zeros(rows, dim),
            residual_sum: DMatrix::zeros(rows, dim),
            x: vec![DVector::zeros(dim); l],
            ws: vec![ProxWorkspace::new(); l],
            sigma,
            dim,
        })
    }

    pub fn step(&mut self, problem: &ProblemSpec) -> Result<()> {
        let sigma = self.sigma;
        let x_t = stack_rows(&self.x, &self.t, self.dim);
        let offsets = self.a_h.tr_mul(&(&self.a_t * &x_t + &self.lambda / sigma));
        for (p, &node) in self.h.iter().enumerate() {
            self.x[node] = node_step(
                &problem.node(node).f,
                self.d_h[p],
                offsets.row(p).into_owned(),
                sigma,
                &self.x[node],
                &mut self.ws[node],
            )?;
        }
        let x_h = stack_rows(&self.x, &self.h, self.dim);
        let offsets = self.a_t.tr_mul(&(&self.a_h * &x_h + &self.lambda / sigma));
        for (p, &node) in self.t.iter().enumerate() {
            self.x[node] = node_step(
                &problem.node(node).f,
                self.d_t[p],
                offsets.row(p).into_owned(),
                sigma,
                &self.x[node],
                &mut self.ws[node],
            )?;
        }
        let x_t = stack_rows(&self.x, &self.t, self.dim);
        let residual = &self.a_h * &x_h + &self.a_t * &x_t;
        self.lambda += &residual * sigma;
        self.residual_sum += residual;
        Ok(())
    }

    /// Changes the penalty; the multiplier itself is left untouched.
    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn iterates(&self) -> &[DVector<f64>] {
        &self.x
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    /// Multiplier rebuilt from the residual history: `sigma * sum_j r(j)`
    /// (valid while the penalty is constant).
    pub fn lambda_from_history(&self) -> DMatrix<f64> {
        &self.residual_sum * self.sigma
    }

    pub fn degree_blocks(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a_h.tr_mul(&self.a_h), self.a_t.tr_mul(&self.a_t))
    }
}

pub fn matrix_oracle_single(
    sbg: &SimplestBipartiteGraph,
    problem: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Trace> {
    if !problem.has_only_f() {
        return Err(Error::Unsupported("single-objective oracle requires g_i = 0".into()));
    }
    if sbg.node_count() < 2 || problem.node_count() != sbg.node_count() {
        return Err(Error::InvalidBipartition("oracle needs matching problem and at least one edge".into()));
    }
    cfg.validate(problem.dim())?;
    let mut oracle = SingleOracle::new(sbg, problem.dim(), cfg.sigma)?;
    let mut trace = TraceBuilder::new(cfg, problem);
    let (mut iterations, mut converged) = (0, false);
    for k in 1..=cfg.max_iterations {
        oracle.set_sigma(cfg.sigma_at(k));
        oracle.step(problem)?;
        iterations = k;
        if trace.push(k, oracle.iterates(), None, 0) {
            converged = true;
            break;
        }
    }
    Ok(trace.finish(oracle.x.clone(), None, iterations, converged, None))
}

/// `C_H` and `C_T` over the orderings `z_f = [x_H; x_T]`, `z_g = [y_H; y_T]`.
/// Row blocks: tree edges, `x_H = y_H`, `x_T = y_T`.
pub fn stacked_constraints(sbg: &SimplestBipartiteGraph) -> (DMatrix<f64>, DMatrix<f64>) {
    let a_h = sbg.incidence_block(Label::H);
    let a_t = sbg.incidence_block(Label::T);
    let (e, nh, nt) = (a_h.nrows(), a_h.ncols(), a_t.ncols());
    let rows = e + nh + nt;
    let cols = nh + nt;
    let mut c_h = DMatrix::zeros(rows, cols);
    let mut c_t = DMatrix::zeros(rows, cols);
    c_h.view_mut((0, 0), (e, nh)).copy_from(&a_h);
    c_t.view_mut((0, nh), (e, nt)).copy_from(&a_t);
    for k in 0..nh {
        c_h[(e + k, k)] = 1.0;
        c_t[(e + k, k)] = -1.0;
    }
    for k in 0..nt {
        c_h[(e + nh + k, nh + k)] = -1.0;
        c_t[(e + nh + k, nh + k)] = 1.0;
    }
    (c_h, c_t)
}

/// Two-block ADMM on `C_H z_f + C_T z_g = 0` with explicit multiplier.
#[derive(Debug, Clone)]
pub struct CompositeOracle {
    c_h: DMatrix<f64>,
    c_t: DMatrix<f64>,
    d_f: Vec<f64>,
    d_g: Vec<f64>,
    /// Node index for each column of `C_H`/`C_T` (H nodes, then T nodes).
    order: Vec<usize>,
    lambda: DMatrix<f64>,
    x: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
    f_ws: Vec<ProxWorkspace>,
    g_ws: Vec<ProxWorkspace>,
    sigma: f64,
    dim: usize,
}

impl CompositeOracle {
    pub fn new(sbg: &SimplestBipartiteGraph, dim: usize, sigma: f64) -> Result<Self> {
        let (c_h, c_t) = stacked_constraints(sbg);
        let d_f = block_diagonal_check(&c_h.tr_mul(&c_h), "C_H'C_H")?;
        let d_g = block_diagonal_check(&c_t.tr_mul(&c_t), "C_T'C_T")?;
        let mut order = sbg.h_nodes();
        order.extend(sbg.t_nodes());
        let l = sbg.node_count();
        Ok(CompositeOracle {
            lambda: DMatrix::zeros(c_h.nrows(), dim),
            c_h,
            c_t,
            d_f,
            d_g,
            order,
            x: vec![DVector::zeros(dim); l],
            y: vec![DVector::zeros(dim); l],
            f_ws: vec![ProxWorkspace::new(); l],
            g_ws: vec![ProxWorkspace::new(); l],
            sigma,
            dim,
        })
    }

    pub fn step(&mut self, problem: &ProblemSpec) -> Result<()> {
        let sigma = self.sigma;
        let z_g = stack_rows(&self.y, &self.order, self.dim);
        let offsets = self.c_h.tr_mul(&(&self.c_t * &z_g + &self.lambda / sigma));
        for (p, &node) in self.order.iter().enumerate() {
            self.x[node] = node_step(
                &problem.node(node).f,
                self.d_f[p],
                offsets.row(p).into_owned(),
                sigma,
                &self.x[node],
                &mut self.f_ws[node],
            )?;
        }
        let z_f = stack_rows(&self.x, &self.order, self.dim);
        let offsets = self.c_t.tr_mul(&(&self.c_h * &z_f + &self.lambda / sigma));
        for (p, &node) in self.order.iter().enumerate() {
            self.y[node] = node_step(
                &problem.node(node).g,
                self.d_g[p],
                offsets.row(p).into_owned(),
                sigma,
                &self.y[node],
                &mut self.g_ws[node],
            )?;
        }
        let z_g = stack_rows(&self.y, &self.order, self.dim);
        self.lambda += (&self.c_h * &z_f + &self.c_t * &z_g) * sigma;
        Ok(())
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    /// `||C_H z_f + C_T z_g||` at the current iterates.
    pub fn constraint_violation(&self) -> f64 {
        let z_f = stack_rows(&self.x, &self.order, self.dim);
        let z_g = stack_rows(&self.y, &self.order, self.dim);
        (&self.c_h * z_f + &self.c_t * z_g).norm()
    }

    pub fn x(&self) -> &[DVector<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[DVector<f64>] {
        &self.y
    }

    pub fn constraint_blocks(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.c_h, &self.c_t)
    }
}

pub fn matrix_oracle_composite(
    sbg: &SimplestBipartiteGraph,
    problem: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Trace> {
    if problem.node_count() != sbg.node_count() {
        return Err(Error::Dimension("problem and graph node counts differ".into()));
    }
    cfg.validate(problem.dim())?;
    let mut oracle = CompositeOracle::new(sbg, problem.dim(), cfg.sigma)?;
    let mut trace = TraceBuilder::new(cfg, problem);
    let (mut iterations, mut converged) = (0, false);
    for k in 1..=cfg.max_iterations {
        oracle.set_sigma(cfg.sigma_at(k));
        oracle.step(problem)?;
        iterations = k;
        if trace.push(k, &oracle.x, Some(&oracle.y), 0) {
            converged = true;
            break;
        }
    }
    Ok(trace.finish(oracle.x.clone(), Some(oracle.y.clone()), iterations, converged, None))
}
