//! Per-node subproblem evaluators.
//!
//! Every solver step reduces to
//!
//! ```text
//! argmin_x  h(x) + (sigma/2) * || sqrt(a) * x + e ||^2
//! ```
//!
//! for a node objective `h`, a positive diagonal weight `a` (a node degree,
//! degree + 1, or 1) and an offset `e` assembled from local and neighbor data.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Differentiable objective with Lipschitz-continuous gradient.
pub trait SmoothFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn lipschitz(&self) -> f64;
}

/// `f(x) = 0.5 x'Qx - c'x` with symmetric positive semidefinite `Q`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    hessian: Matrix,
    linear: Vector,
    lipschitz: f64,
}

impl QuadraticForm {
    pub fn new(hessian: Matrix, linear: Vector) -> Result<Self> {
        let n = linear.len();
        if hessian.nrows() != n || hessian.ncols() != n {
            return Err(Error::Dimension(format!(
                "hessian {}x{} for linear term of length {n}",
                hessian.nrows(),
                hessian.ncols()
            )));
        }
        let sym = (&hessian + hessian.transpose()) * 0.5;
        let lipschitz = sym.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
        if lipschitz <= 0.0 {
            return Err(Error::InvalidParameter("quadratic form has no positive curvature".into()));
        }
        Ok(QuadraticForm { hessian: sym, linear, lipschitz })
    }
}

impl SmoothFunction for QuadraticForm {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) - self.linear.dot(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.hessian * x - &self.linear
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// `(1 / (2 eta)) ||M x - b||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub matrix: Matrix,
    pub rhs: Vector,
    pub eta: f64,
}

/// `(1 / eta) ||M x - b||_1`, handled through an auxiliary `u = M x - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastAbsolute {
    pub matrix: Matrix,
    pub rhs: Vector,
    pub eta: f64,
}

fn check_data(matrix: &Matrix, rhs: &Vector, eta: f64) -> Result<()> {
    if matrix.nrows() != rhs.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} rows but rhs has length {}",
            matrix.nrows(),
            rhs.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    Ok(())
}

#[derive(Clone)]
pub enum Objective {
    Zero,
    L1 { weight: f64 },
    QuadraticFit(LeastSquares),
    Smooth(Arc<dyn SmoothFunction>),
    L1Residual(LeastAbsolute),
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Zero => f.write_str("Zero"),
            Objective::L1 { weight } => write!(f, "L1 {{ weight: {weight} }}"),
            Objective::QuadraticFit(q) => {
                write!(f, "QuadraticFit({}x{}, eta={})", q.matrix.nrows(), q.matrix.ncols(), q.eta)
            }
            Objective::Smooth(s) => write!(f, "Smooth({s:?})"),
            Objective::L1Residual(r) => {
                write!(f, "L1Residual({}x{}, eta={})", r.matrix.nrows(), r.matrix.ncols(), r.eta)
            }
        }
    }
}

impl Objective {
    /// Variable dimension implied by the objective, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Objective::Zero | Objective::L1 { .. } => None,
            Objective::QuadraticFit(q) => Some(q.matrix.ncols()),
            Objective::Smooth(s) => Some(s.dim()),
            Objective::L1Residual(r) => Some(r.matrix.ncols()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Objective::Zero => Ok(()),
            Objective::L1 { weight } if *weight >= 0.0 && weight.is_finite() => Ok(()),
            Objective::L1 { weight } => {
                Err(Error::InvalidParameter(format!("l1 weight must be nonnegative, got {weight}")))
            }
            Objective::QuadraticFit(q) => check_data(&q.matrix, &q.rhs, q.eta),
            Objective::L1Residual(r) => check_data(&r.matrix, &r.rhs, r.eta),
            Objective::Smooth(s) if s.lipschitz() > 0.0 => Ok(()),
            Objective::Smooth(_) => Err(Error::InvalidParameter("Lipschitz constant must be positive".into())),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            Objective::Zero => 0.0,
            Objective::L1 { weight } => weight * x.lp_norm(1),
            Objective::QuadraticFit(q) => (&q.matrix * x - &q.rhs).norm_squared() / (2.0 * q.eta),
            Objective::Smooth(s) => s.value(x),
            Objective::L1Residual(r) => (&r.matrix * x - &r.rhs).lp_norm(1) / r.eta,
        }
    }

    /// A subgradient, taking `sign(0) = 0` for the nonsmooth parts.
    pub fn subgradient(&self, x: &Vector) -> Vector {
        match self {
            Objective::Zero => Vector::zeros(x.len()),
            Objective::L1 { weight } => x.map(|v| weight * sign(v)),
            Objective::QuadraticFit(q) => q.matrix.tr_mul(&(&q.matrix * x - &q.rhs)) / q.eta,
            Objective::Smooth(s) => s.gradient(x),
            Objective::L1Residual(r) => r.matrix.tr_mul(&(&r.matrix * x - &r.rhs).map(sign)) / r.eta,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct NodeProblem {
    pub f: Objective,
    pub g: Objective,
}

impl NodeProblem {
    pub fn new(f: Objective, g: Objective) -> Self {
        NodeProblem { f, g }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.f.value(x) + self.g.value(x)
    }
}

/// Per-node objective pairs sharing one variable dimension.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    dim: usize,
    nodes: Vec<NodeProblem>,
}

impl ProblemSpec {
    pub fn new(dim: usize, nodes: Vec<NodeProblem>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("problem needs at least one node".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            for obj in [&node.f, &node.g] {
                obj.validate()?;
                if let Some(d) = obj.dim() {
                    if d != dim {
                        return Err(Error::Dimension(format!(
                            "node {i} objective has dimension {d}, expected {dim}"
                        )));
                    }
                }
            }
        }
        Ok(ProblemSpec { dim, nodes })
    }

    /// Single-objective problem: `g_i = 0` everywhere.
    pub fn single(dim: usize, fs: Vec<Objective>) -> Result<Self> {
        Self::new(dim, fs.into_iter().map(|f| NodeProblem::new(f, Objective::Zero)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeProblem] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeProblem {
        &self.nodes[i]
    }

    pub fn has_only_f(&self) -> bool {
        self.nodes.iter().all(|n| matches!(n.g, Objective::Zero))
    }

    /// `sum_i f_i(x) + g_i(x)` at a common point.
    pub fn total_value(&self, x: &Vector) -> f64 {
        self.nodes.iter().map(|n| n.value(x)).sum()
    }
}

/// Componentwise soft-threshold; the prox of `t ||.||_1`.
pub fn prox_l1(v: &Vector, t: f64) -> Result<Vector> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {t}")));
    }
    Ok(soft_threshold(v, t))
}

pub(crate) fn soft_threshold(v: &Vector, t: f64) -> Vector {
    v.map(|x| sign(x) * (x.abs() - t).max(0.0))
}

/// Solver for `(c I + s M'M) x = r`, factored once.
#[derive(Debug, Clone)]
enum ShiftedGram {
    /// Cholesky of the `n x n` system, used when `m >= n`.
    Direct(Cholesky<f64, Dyn>),
    /// Cholesky of `(c/s) I_m + M M'`; `x = (r - M'(.)^{-1} M r) / c`.
    Woodbury { inner: Cholesky<f64, Dyn>, matrix: Matrix, shift: f64 },
}

impl ShiftedGram {
    fn factor(matrix: &Matrix, shift: f64, scale: f64) -> Result<Self> {
        let (m, n) = matrix.shape();
        if m >= n {
            let mut sys = matrix.tr_mul(matrix) * scale;
            for k in 0..n {
                sys[(k, k)] += shift;
            }
            Cholesky::new(sys)
                .map(ShiftedGram::Direct)
                .ok_or_else(|| Error::Factorization("n x n system not positive definite".into()))
        } else {
            let mut inner = matrix * matrix.transpose();
            for k in 0..m {
                inner[(k, k)] += shift / scale;
            }
            let inner = Cholesky::new(inner)
                .ok_or_else(|| Error::Factorization("m x m capacitance not positive definite".into()))?;
            Ok(ShiftedGram::Woodbury { inner, matrix: matrix.clone(), shift })
        }
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        match self {
            ShiftedGram::Direct(chol) => chol.solve(rhs),
            ShiftedGram::Woodbury { inner, matrix, shift } => {
                let t = inner.solve(&(matrix * rhs));
                (rhs - matrix.tr_mul(&t)) / *shift
            }
        }
    }

    fn is_woodbury(&self) -> bool {
        matches!(self, ShiftedGram::Woodbury { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CacheKey {
    shift: u64,
    scale: u64,
    rows: usize,
    cols: usize,
}

impl CacheKey {
    fn new(matrix: &Matrix, shift: f64, scale: f64) -> Self {
        CacheKey {
            shift: shift.to_bits(),
            scale: scale.to_bits(),
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        }
    }
}

/// Factorization reused across calls for a fixed data matrix. Refactors when
/// the shift or scale (i.e. `eta`, `sigma` or the weight `a`) changes.
#[derive(Debug, Clone, Default)]
pub struct ProxCache {
    entry: Option<(CacheKey, ShiftedGram)>,
    factorizations: usize,
}

impl ProxCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// How many factorizations have been computed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Whether the current factorization uses the Woodbury form.
    pub fn uses_woodbury(&self) -> Option<bool> {
        self.entry.as_ref().map(|(_, f)| f.is_woodbury())
    }

    pub fn invalidate(&mut self) {
        self.entry = None;
    }

    fn solve(&mut self, matrix: &Matrix, shift: f64, scale: f64, rhs: &Vector) -> Result<Vector> {
        let key = CacheKey::new(matrix, shift, scale);
        match &self.entry {
            Some((k, _)) if *k == key => {}
            _ => {
                self.entry = Some((key, ShiftedGram::factor(matrix, shift, scale)?));
                self.factorizations += 1;
            }
        }
        Ok(self.entry.as_ref().expect("just filled").1.solve(rhs))
    }
}

fn check_scaling(a: f64, sigma: f64, e: &Vector, dim: usize) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("weight a must be positive, got {a}")));
    }
    if e.len() != dim {
        return Err(Error::Dimension(format!("offset has length {}, expected {dim}", e.len())));
    }
    Ok(())
}

/// `argmin (1/2eta)||Mx-b||^2 + (sigma/2)||sqrt(a) x + e||^2`, i.e.
/// `(M'M/eta + sigma a I)^{-1} (M'b/eta - sigma sqrt(a) e)`.
pub fn prox_quadratic_scaled(
    fit: &LeastSquares,
    a: f64,
    e: &Vector,
    sigma: f64,
    cache: &mut ProxCache,
) -> Result<Vector> {
    check_data(&fit.matrix, &fit.rhs, fit.eta)?;
    check_scaling(a, sigma, e, fit.matrix.ncols())?;
    let rhs = fit.matrix.tr_mul(&fit.rhs) / fit.eta - e * (sigma * a.sqrt());
    cache.solve(&fit.matrix, sigma * a, 1.0 / fit.eta, &rhs)
}

/// Minimizer of the linearized surrogate
/// `<x - x_prev, grad f(x_prev)> + (L/2)||x - x_prev||^2 + (sigma/2)||sqrt(a) x + e||^2`.
pub fn prox_smooth_linearized(
    f: &dyn SmoothFunction,
    x_prev: &Vector,
    a: f64,
    e: &Vector,
    sigma: f64,
) -> Result<Vector> {
    let lip = f.lipschitz();
    if !(lip > 0.0) {
        return Err(Error::InvalidParameter(format!("Lipschitz constant must be positive, got {lip}")));
    }
    check_scaling(a, sigma, e, x_prev.len())?;
    let grad = f.gradient(x_prev);
    Ok((x_prev * lip - grad - e * (sigma * a.sqrt())) / (lip + sigma * a))
}

/// Auxiliary residual `u` and its multiplier, carried across outer iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualState {
    pub u: Vector,
    pub multiplier: Vector,
}

impl ResidualState {
    pub fn zeros(rows: usize) -> Self {
        ResidualState { u: Vector::zeros(rows), multiplier: Vector::zeros(rows) }
    }
}

/// One augmented-Lagrangian pass (penalty `sigma`) on
/// `min (1/eta)||u||_1 + (sigma/2)||sqrt(a) x + e||^2  s.t.  u = M x - b`:
/// x-update by linear solve, u-update by soft-threshold, multiplier ascent.
pub fn prox_l1_residual(
    fit: &LeastAbsolute,
    a: f64,
    e: &Vector,
    sigma: f64,
    state: &mut ResidualState,
    cache: &mut ProxCache,
) -> Result<Vector> {
    check_data(&fit.matrix, &fit.rhs, fit.eta)?;
    check_scaling(a, sigma, e, fit.matrix.ncols())?;
    if state.u.len() != fit.matrix.nrows() || state.multiplier.len() != fit.matrix.nrows() {
        return Err(Error::Dimension("residual state does not match data rows".into()));
    }
    let m = &fit.matrix;
    // (a I + M'M) x = M'(b + u - rho/sigma) - sqrt(a) e
    let shifted = &fit.rhs + &state.u - &state.multiplier / sigma;
    let rhs = m.tr_mul(&shifted) - e * a.sqrt();
    let x = cache.solve(m, a, 1.0, &rhs)?;
    let residual = m * &x - &fit.rhs;
    state.u = soft_threshold(&(&residual + &state.multiplier / sigma), 1.0 / (fit.eta * sigma));
    state.multiplier += (&residual - &state.u) * sigma;
    Ok(x)
}

/// Per-node, per-objective mutable evaluator state.
#[derive(Debug, Clone, Default)]
pub struct ProxWorkspace {
    pub cache: ProxCache,
    pub residual: Option<ResidualState>,
}

impl ProxWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// `argmin_x h(x) + (sigma/2)||sqrt(a) x + e||^2` for any supported `h`.
/// `x_prev` is the linearization point for smooth objectives.
pub fn solve_scaled(
    objective: &Objective,
    a: f64,
    e: &Vector,
    sigma: f64,
    x_prev: &Vector,
    ws: &mut ProxWorkspace,
) -> Result<Vector> {
    match objective {
        Objective::Zero => {
            check_scaling(a, sigma, e, e.len())?;
            Ok(-e / a.sqrt())
        }
        Objective::L1 { weight } => {
            check_scaling(a, sigma, e, e.len())?;
            let center = -e / a.sqrt();
            if *weight == 0.0 {
                Ok(center)
            } else {
                prox_l1(&center, weight / (sigma * a))
            }
        }
        Objective::QuadraticFit(q) => prox_quadratic_scaled(q, a, e, sigma, &mut ws.cache),
        Objective::Smooth(s) => prox_smooth_linearized(s.as_ref(), x_prev, a, e, sigma),
        Objective::L1Residual(r) => {
            let state = ws.residual.get_or_insert_with(|| ResidualState::zeros(r.matrix.nrows()));
            prox_l1_residual(r, a, e, sigma, state, &mut ws.cache)
        }
    }
}
