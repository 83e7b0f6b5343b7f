use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::prox::{LeastAbsolute, LeastSquares, NodeProblem, Objective, ProblemSpec};

/// Which compressed-sensing objective the instance feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsKind {
    /// `sum_i (1/(2 eta))||M_i x - b_i||^2 + ||x||_1`, dense Gaussian noise.
    L2L1,
    /// `sum_i (1/eta)||M_i x - b_i||_1 + ||x||_1`, one noisy entry per node.
    L1L1,
}

impl CsKind {
    pub fn name(self) -> &'static str {
        match self {
            CsKind::L2L1 => "l2l1",
            CsKind::L1L1 => "l1l1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsParams {
    pub nodes: usize,
    pub rows_per_node: usize,
    pub dim: usize,
    pub sparsity: usize,
    pub noise_var: f64,
    pub eta: f64,
}

impl CsParams {
    pub fn l2l1() -> Self {
        CsParams { nodes: 10, rows_per_node: 3, dim: 100, sparsity: 5, noise_var: 1e-3, eta: 1.2e-4 }
    }

    pub fn l1l1() -> Self {
        CsParams { noise_var: 1e-2, eta: 1.2e-3, ..Self::l2l1() }
    }

    pub fn defaults(kind: CsKind) -> Self {
        match kind {
            CsKind::L2L1 => Self::l2l1(),
            CsKind::L1L1 => Self::l1l1(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.rows_per_node == 0 || self.dim == 0 {
            return Err(Error::InvalidParameter("nodes, rows and dimension must be positive".into()));
        }
        if self.sparsity > self.dim {
            return Err(Error::InvalidParameter(format!(
                "sparsity {} exceeds dimension {}",
                self.sparsity, self.dim
            )));
        }
        if !(self.noise_var >= 0.0) || !(self.eta > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be >= 0 and eta > 0".into()));
        }
        Ok(())
    }
}

/// Per-node sensing data around a shared sparse signal.
#[derive(Debug, Clone, PartialEq)]
pub struct CsInstance {
    pub kind: CsKind,
    pub params: CsParams,
    pub truth: DVector<f64>,
    pub matrices: Vec<DMatrix<f64>>,
    pub noise: Vec<DVector<f64>>,
    /// `M_i x* + noise_i`.
    pub rhs: Vec<DVector<f64>>,
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

impl CsInstance {
    /// Support chosen uniformly, nonzero values and sensing entries standard
    /// normal, then noise drawn according to `kind`.
    pub fn generate<R: Rng>(kind: CsKind, params: CsParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let mut truth = DVector::zeros(params.dim);
        for k in sample(rng, params.dim, params.sparsity) {
            truth[k] = rng.sample(StandardNormal);
        }
        let matrices =
            (0..params.nodes).map(|_| gaussian_matrix(rng, params.rows_per_node, params.dim)).collect();
        let mut inst = CsInstance { kind, params, truth, matrices, noise: Vec::new(), rhs: Vec::new() };
        inst.redraw_noise(rng);
        Ok(inst)
    }

    /// Replaces the noise (and hence `b_i`) keeping `x*` and `M_i`.
    pub fn redraw_noise<R: Rng>(&mut self, rng: &mut R) {
        let std = self.params.noise_var.sqrt();
        let m = self.params.rows_per_node;
        self.noise = (0..self.params.nodes)
            .map(|_| match self.kind {
                CsKind::L2L1 => DVector::from_fn(m, |_, _| std * rng.sample::<f64, _>(StandardNormal)),
                CsKind::L1L1 => {
                    let mut e = DVector::zeros(m);
                    let at = rng.random_range(0..m);
                    e[at] = std * rng.sample::<f64, _>(StandardNormal);
                    e
                }
            })
            .collect();
        self.rhs = self.matrices.iter().zip(&self.noise).map(|(mat, e)| mat * &self.truth + e).collect();
    }

    /// Each node holds its data term as `f_i` and `||x||_1` as `g_i`.
    pub fn to_problem(&self) -> Result<ProblemSpec> {
        let eta = self.params.eta;
        let nodes = self
            .matrices
            .iter()
            .zip(&self.rhs)
            .map(|(m, b)| {
                let f = match self.kind {
                    CsKind::L2L1 => Objective::QuadraticFit(LeastSquares { matrix: m.clone(), rhs: b.clone(), eta }),
                    CsKind::L1L1 => Objective::L1Residual(LeastAbsolute { matrix: m.clone(), rhs: b.clone(), eta }),
                };
                NodeProblem::new(f, Objective::L1 { weight: 1.0 })
            })
            .collect();
        ProblemSpec::new(self.params.dim, nodes)
    }

    pub fn total_rows(&self) -> usize {
        self.params.nodes * self.params.rows_per_node
    }
}

pub fn gen_l2l1(seed: u64, params: CsParams) -> Result<CsInstance> {
    CsInstance::generate(CsKind::L2L1, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_l1l1(seed: u64, params: CsParams) -> Result<CsInstance> {
    CsInstance::generate(CsKind::L1L1, params, &mut ChaCha8Rng::seed_from_u64(seed))
}
