//! Error and consensus measures over stacked per-node iterates.

use nalgebra::DVector;

use crate::prox::ProblemSpec;

pub fn mean_iterate(xs: &[DVector<f64>]) -> DVector<f64> {
    let mut sum = DVector::zeros(xs[0].len());
    for x in xs {
        sum += x;
    }
    sum / xs.len() as f64
}

/// `(1/l) sum_i ||x_i - x*|| / ||x*||`; `||mean(x_i)||` when `x* = 0`.
pub fn relative_error(xs: &[DVector<f64>], truth: &DVector<f64>) -> f64 {
    let norm = truth.norm();
    if norm == 0.0 {
        return mean_iterate(xs).norm();
    }
    xs.iter().map(|x| distance(x, truth)).sum::<f64>() / (xs.len() as f64 * norm)
}

fn distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// `max_{i,j} ||x_i - x_j||`.
pub fn consensus_gap(xs: &[DVector<f64>]) -> f64 {
    let mut gap: f64 = 0.0;
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            gap = gap.max(distance(a, b));
        }
    }
    gap
}

/// Distance from zero to the subdifferential of `sum_i f_i + g_i` at `x`.
///
/// Smooth parts contribute their gradients. L1 weights and the sign pattern of
/// L1 residuals contribute intervals at coordinates (or rows) whose magnitude is
/// at most `zero_tol`; the distance is minimized over those intervals exactly
/// for the separable L1 parts and by taking sign 0 for residual rows.
pub fn subgradient_residual(problem: &ProblemSpec, x: &DVector<f64>, zero_tol: f64) -> f64 {
    use crate::prox::Objective;
    let n = x.len();
    let mut smooth = DVector::zeros(n);
    let mut l1_weight = 0.0;
    for node in problem.nodes() {
        for obj in [&node.f, &node.g] {
            match obj {
                Objective::L1 { weight } => l1_weight += weight,
                Objective::L1Residual(r) => {
                    let res = &r.matrix * x - &r.rhs;
                    let s = res.map(|v| if v.abs() <= zero_tol { 0.0 } else { v.signum() });
                    smooth += r.matrix.tr_mul(&s) / r.eta;
                }
                other => smooth += other.subgradient(x),
            }
        }
    }
    let mut dist2 = 0.0;
    for k in 0..n {
        let v = if x[k].abs() <= zero_tol {
            (smooth[k].abs() - l1_weight).max(0.0)
        } else {
            smooth[k] + l1_weight * x[k].signum()
        };
        dist2 += v * v;
    }
    dist2.sqrt()
}
