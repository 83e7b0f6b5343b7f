use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::graph::{complete_graph, line_graph, star_graph, Graph, Label, SimplestBipartiteGraph};
use crate::prox::{LeastSquares, NodeProblem, Objective, ProblemSpec, QuadraticForm};
use crate::topology::simplify;

fn scalar_fit(target: f64) -> Objective {
    // (x - target)^2
    Objective::QuadraticFit(LeastSquares {
        matrix: DMatrix::from_element(1, 1, 1.0),
        rhs: DVector::from_element(1, target),
        eta: 0.5,
    })
}

fn two_node() -> SimplestBipartiteGraph {
    SimplestBipartiteGraph::new(line_graph(2).unwrap(), vec![Label::H, Label::T]).unwrap()
}

fn random_fit(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Objective {
    Objective::QuadraticFit(LeastSquares {
        matrix: DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal)),
        rhs: DVector::from_fn(m, |_, _| rng.sample(StandardNormal)),
        eta: 0.5 + rng.random::<f64>(),
    })
}

fn random_sbg(seed: u64, l: usize) -> SimplestBipartiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = crate::graph::random_connected(l, 0.4, &mut rng).unwrap();
    simplify(&g, seed).unwrap()
}

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn quiet(sigma: f64, iters: usize) -> SolverConfig {
    SolverConfig { keep_iterates: false, ..SolverConfig::with_sigma(sigma, iters) }
}

#[test]
fn two_node_average() {
    let problem = ProblemSpec::single(1, vec![scalar_fit(1.0), scalar_fit(3.0)]).unwrap();
    let trace = dpf_admm_single(&two_node(), &problem, &quiet(1.0, 200)).unwrap();
    for x in &trace.final_x {
        assert!((x[0] - 2.0).abs() < 1e-8, "{x}");
    }
}

#[test]
fn zero_objective_stays_at_origin() {
    let sbg = random_sbg(3, 6);
    let problem = ProblemSpec::single(4, vec![Objective::Zero; 6]).unwrap();
    let trace = dpf_admm_single(&sbg, &problem, &quiet(1.0, 50)).unwrap();
    assert!(trace.final_x.iter().all(|x| x.amax() == 0.0));
    let trace = dpf_admm_composite(&sbg, &ProblemSpec::new(4, vec![NodeProblem::new(Objective::Zero, Objective::Zero); 6]).unwrap(), &quiet(1.0, 50)).unwrap();
    assert!(trace.final_x.iter().chain(trace.final_y.as_ref().unwrap()).all(|x| x.amax() == 0.0));
}

#[test]
fn single_matches_matrix_oracle() {
    for seed in 0..4 {
        let l = 5 + seed as usize;
        let sbg = random_sbg(seed, l);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let fs = (0..l).map(|_| random_fit(&mut rng, 2, 4)).collect();
        let problem = ProblemSpec::single(4, fs).unwrap();
        let cfg = SolverConfig::with_sigma(0.7, 60);
        let a = dpf_admm_single(&sbg, &problem, &cfg).unwrap();
        let b = matrix_oracle_single(&sbg, &problem, &cfg).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!(max_diff(ra.x.as_ref().unwrap(), rb.x.as_ref().unwrap()) < 1e-10);
        }
    }
}

#[test]
fn composite_matches_matrix_oracle() {
    for seed in 0..4 {
        let l = 4 + seed as usize;
        let sbg = random_sbg(seed + 10, l);
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let nodes = (0..l)
            .map(|_| NodeProblem::new(random_fit(&mut rng, 2, 3), Objective::L1 { weight: 0.3 }))
            .collect();
        let problem = ProblemSpec::new(3, nodes).unwrap();
        let cfg = SolverConfig::with_sigma(1.3, 60);
        let a = dpf_admm_composite(&sbg, &problem, &cfg).unwrap();
        let b = matrix_oracle_composite(&sbg, &problem, &cfg).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!(max_diff(ra.x.as_ref().unwrap(), rb.x.as_ref().unwrap()) < 1e-10);
            assert!(max_diff(ra.y.as_ref().unwrap(), rb.y.as_ref().unwrap()) < 1e-10);
        }
    }
}

#[test]
fn multiplier_equals_scaled_residual_history() {
    let sbg = random_sbg(7, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let problem = ProblemSpec::single(3, (0..7).map(|_| random_fit(&mut rng, 2, 3)).collect()).unwrap();
    let mut oracle = SingleOracle::new(&sbg, 3, 2.5).unwrap();
    for _ in 0..40 {
        oracle.step(&problem).unwrap();
        let diff = (oracle.lambda() - oracle.lambda_from_history()).amax();
        assert!(diff <= 1e-9 * (1.0 + oracle.lambda().amax()));
    }
}

#[test]
fn degree_blocks_are_diagonal() {
    let sbg = random_sbg(4, 9);
    let oracle = SingleOracle::new(&sbg, 1, 1.0).unwrap();
    let (dh, dt) = oracle.degree_blocks();
    let h = block_diagonal_check(&dh, "D_H").unwrap();
    let t = block_diagonal_check(&dt, "D_T").unwrap();
    for (p, &i) in sbg.h_nodes().iter().enumerate() {
        assert_eq!(h[p], sbg.degree(i) as f64);
    }
    for (p, &i) in sbg.t_nodes().iter().enumerate() {
        assert_eq!(t[p], sbg.degree(i) as f64);
    }
    assert!(block_diagonal_check(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]), "m").is_err());
}

#[test]
fn stacked_constraint_structure() {
    let sbg = random_sbg(5, 8);
    let (c_h, c_t) = stacked_constraints(&sbg);
    let a_h = sbg.incidence_block(Label::H);
    let a_t = sbg.incidence_block(Label::T);
    let (nh, nt) = (a_h.ncols(), a_t.ncols());
    let gram_h = c_h.tr_mul(&c_h);
    let mut expected = DMatrix::identity(nh + nt, nh + nt);
    expected.view_mut((0, 0), (nh, nh)).copy_from(&(a_h.tr_mul(&a_h) + DMatrix::identity(nh, nh)));
    assert_eq!(gram_h, expected);
    let gram_t = c_t.tr_mul(&c_t);
    let mut expected = DMatrix::identity(nh + nt, nh + nt);
    expected
        .view_mut((nh, nh), (nt, nt))
        .copy_from(&(a_t.tr_mul(&a_t) + DMatrix::identity(nt, nt)));
    assert_eq!(gram_t, expected);
    let cross = c_h.tr_mul(&c_t);
    let mut expected = DMatrix::zeros(nh + nt, nh + nt);
    expected.view_mut((0, 0), (nh, nh)).fill_with_identity();
    expected.view_mut((0, 0), (nh, nh)).scale_mut(-1.0);
    expected.view_mut((0, nh), (nh, nt)).copy_from(&a_h.tr_mul(&a_t));
    expected.view_mut((nh, nh), (nt, nt)).fill_with_identity();
    expected.view_mut((nh, nh), (nt, nt)).scale_mut(-1.0);
    assert_eq!(cross, expected);
}

#[test]
fn composite_with_zero_g_solves_the_same_problem() {
    let sbg = random_sbg(9, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let fs: Vec<Objective> = (0..6).map(|_| random_fit(&mut rng, 3, 3)).collect();
    let single = ProblemSpec::single(3, fs.clone()).unwrap();
    let composite =
        ProblemSpec::new(3, fs.into_iter().map(|f| NodeProblem::new(f, Objective::Zero)).collect()).unwrap();
    let a = dpf_admm_single(&sbg, &single, &quiet(1.0, 3000)).unwrap();
    let b = dpf_admm_composite(&sbg, &composite, &quiet(1.0, 3000)).unwrap();
    assert!((a.final_mean() - b.final_mean()).amax() < 1e-6);
}

#[test]
fn two_node_l1_matches_grid_search() {
    let nodes = vec![
        NodeProblem::new(scalar_fit(0.2), Objective::L1 { weight: 0.5 }),
        NodeProblem::new(scalar_fit(1.4), Objective::L1 { weight: 0.5 }),
    ];
    let problem = ProblemSpec::new(1, nodes).unwrap();
    let total = |x: f64| (x - 0.2).powi(2) + (x - 1.4).powi(2) + x.abs();
    let best = (-300_000..=300_000)
        .map(|k| k as f64 * 1e-5)
        .min_by(|a, b| total(*a).total_cmp(&total(*b)))
        .unwrap();
    let trace = dpf_admm_composite(&two_node(), &problem, &quiet(1.0, 2000)).unwrap();
    for x in trace.final_x.iter().chain(trace.final_y.as_ref().unwrap()) {
        assert!((x[0] - best).abs() < 1e-4, "{} vs {best}", x[0]);
    }
}

#[test]
fn composite_becomes_feasible() {
    let sbg = random_sbg(12, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let nodes = (0..7)
        .map(|_| NodeProblem::new(random_fit(&mut rng, 2, 4), Objective::L1 { weight: 0.1 }))
        .collect();
    let problem = ProblemSpec::new(4, nodes).unwrap();
    let mut oracle = CompositeOracle::new(&sbg, 4, 1.0).unwrap();
    for _ in 0..3000 {
        oracle.step(&problem).unwrap();
    }
    assert!(oracle.constraint_violation() < 1e-6);
}

#[test]
fn message_volume_per_iteration() {
    let sbg = random_sbg(2, 8);
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let problem = ProblemSpec::single(n, (0..8).map(|_| random_fit(&mut rng, 2, n)).collect()).unwrap();
    let trace = dpf_admm_single(&sbg, &problem, &quiet(1.0, 10)).unwrap();
    // the first iteration carries no T message yet; every later one carries both sides
    assert!(trace.records[1..].iter().all(|r| r.scalars_exchanged == 2 * n * 7));
    let nodes = (0..8).map(|_| NodeProblem::new(random_fit(&mut rng, 2, n), Objective::L1 { weight: 1.0 })).collect();
    let problem = ProblemSpec::new(n, nodes).unwrap();
    let trace = dpf_admm_composite(&sbg, &problem, &quiet(1.0, 10)).unwrap();
    assert!(trace.records[1..].iter().all(|r| r.scalars_exchanged == 2 * n * 7));
    let report = trace.traffic.unwrap();
    assert_eq!(report.rounds, 20);
}

#[test]
fn converges_for_a_range_of_penalties() {
    let sbg = SimplestBipartiteGraph::new(
        star_graph(5).unwrap(),
        vec![Label::H, Label::T, Label::T, Label::T, Label::T],
    )
    .unwrap();
    let targets = [1.0, -2.0, 0.5, 4.0, 3.0];
    let problem = ProblemSpec::single(1, targets.iter().map(|&t| scalar_fit(t)).collect()).unwrap();
    let mean = targets.iter().sum::<f64>() / 5.0;
    for sigma in [0.1, 1.0, 10.0] {
        let trace = dpf_admm_single(&sbg, &problem, &quiet(sigma, 5000)).unwrap();
        for x in &trace.final_x {
            assert!((x[0] - mean).abs() < 1e-6, "sigma {sigma}: {}", x[0]);
        }
    }
}

#[test]
fn smooth_objectives_through_linearization() {
    let sbg = simplify(&complete_graph(4).unwrap(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut hess_sum = DMatrix::zeros(2, 2);
    let mut lin_sum = DVector::zeros(2);
    let fs = (0..4)
        .map(|_| {
            let b = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let h = b.tr_mul(&b) + DMatrix::identity(2, 2);
            let c = DVector::from_fn(2, |_, _| rng.sample(StandardNormal));
            hess_sum += &h;
            lin_sum += &c;
            Objective::Smooth(Arc::new(QuadraticForm::new(h, c).unwrap()))
        })
        .collect();
    let problem = ProblemSpec::single(2, fs).unwrap();
    let expected = hess_sum.lu().solve(&lin_sum).unwrap();
    let trace = dpf_admm_single(&sbg, &problem, &quiet(1.0, 4000)).unwrap();
    for x in &trace.final_x {
        assert!((x - &expected).amax() < 1e-6, "{x} vs {expected}");
    }
}

#[test]
fn tolerance_stops_early_and_stride_thins_records() {
    let problem = ProblemSpec::single(1, vec![scalar_fit(1.0), scalar_fit(3.0)]).unwrap();
    let cfg = SolverConfig { tolerance: Some(1e-9), stride: 7, ..SolverConfig::with_sigma(1.0, 10_000) };
    let trace = dpf_admm_single(&two_node(), &problem, &cfg).unwrap();
    assert!(trace.converged);
    assert!(trace.iterations < 10_000);
    let last = trace.records.last().unwrap();
    assert_eq!(last.iteration, trace.iterations);
    assert!(trace.records[..trace.records.len() - 1].iter().all(|r| r.iteration % 7 == 0));
}

#[test]
fn truth_yields_error_series() {
    let problem = ProblemSpec::single(1, vec![scalar_fit(1.0), scalar_fit(3.0)]).unwrap();
    let cfg = SolverConfig { truth: Some(DVector::from_element(1, 2.0)), ..quiet(1.0, 300) };
    let errors = dpf_admm_single(&two_node(), &problem, &cfg).unwrap().errors();
    assert_eq!(errors.len(), 300);
    assert!(errors[299] < 1e-8);
}

#[test]
fn rejects_bad_inputs() {
    let problem = ProblemSpec::single(1, vec![scalar_fit(1.0), scalar_fit(3.0)]).unwrap();
    let single = SimplestBipartiteGraph::new(Graph::new(1).unwrap(), vec![Label::H]).unwrap();
    let one = ProblemSpec::single(1, vec![scalar_fit(1.0)]).unwrap();
    assert!(dpf_admm_single(&single, &one, &quiet(1.0, 5)).is_err());
    assert!(dpf_admm_single(&random_sbg(1, 3), &problem, &quiet(1.0, 5)).is_err());
    assert!(dpf_admm_single(&two_node(), &problem, &quiet(-1.0, 5)).is_err());
    let composite = ProblemSpec::new(1, vec![NodeProblem::new(scalar_fit(1.0), Objective::L1 { weight: 1.0 }); 2]).unwrap();
    assert!(dpf_admm_single(&two_node(), &composite, &quiet(1.0, 5)).is_err());
}

#[test]
fn composite_on_single_node_solves_locally() {
    let sbg = SimplestBipartiteGraph::new(Graph::new(1).unwrap(), vec![Label::H]).unwrap();
    let problem = ProblemSpec::new(1, vec![NodeProblem::new(scalar_fit(2.0), Objective::L1 { weight: 1.0 })]).unwrap();
    let trace = dpf_admm_composite(&sbg, &problem, &quiet(1.0, 500)).unwrap();
    // argmin (x-2)^2 + |x| = 1.5
    assert!((trace.final_x[0][0] - 1.5).abs() < 1e-8);
}

#[test]
fn penalty_schedule_matches_matrix_oracle() {
    let sbg = random_sbg(21, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let nodes = (0..7)
        .map(|_| NodeProblem::new(random_fit(&mut rng, 2, 3), Objective::L1 { weight: 0.2 }))
        .collect();
    let problem = ProblemSpec::new(3, nodes).unwrap();
    let fs = (0..7).map(|_| random_fit(&mut rng, 2, 3)).collect();
    let single = ProblemSpec::single(3, fs).unwrap();
    let cfg = SolverConfig { sigma_steps: vec![(10, 4.0), (25, 0.5), (26, 9.0)], ..SolverConfig::with_sigma(1.0, 40) };
    let a = dpf_admm_composite(&sbg, &problem, &cfg).unwrap();
    let b = matrix_oracle_composite(&sbg, &problem, &cfg).unwrap();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert!(max_diff(ra.x.as_ref().unwrap(), rb.x.as_ref().unwrap()) < 1e-10);
        assert!(max_diff(ra.y.as_ref().unwrap(), rb.y.as_ref().unwrap()) < 1e-10);
    }
    let a = dpf_admm_single(&sbg, &single, &cfg).unwrap();
    let b = matrix_oracle_single(&sbg, &single, &cfg).unwrap();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert!(max_diff(ra.x.as_ref().unwrap(), rb.x.as_ref().unwrap()) < 1e-10);
    }
}

#[test]
fn sigma_lookup_and_validation() {
    let cfg = SolverConfig { sigma_steps: vec![(3, 2.0), (5, 7.0)], ..SolverConfig::with_sigma(1.0, 10) };
    let seen: Vec<f64> = (1..=6).map(|k| cfg.sigma_at(k)).collect();
    assert_eq!(seen, [1.0, 1.0, 2.0, 2.0, 7.0, 7.0]);
    assert!(cfg.validate(1).is_ok());
    let bad = SolverConfig { sigma_steps: vec![(5, 2.0), (5, 3.0)], ..SolverConfig::default() };
    assert!(bad.validate(1).is_err());
    let bad = SolverConfig { sigma_steps: vec![(2, 0.0)], ..SolverConfig::default() };
    assert!(bad.validate(1).is_err());
}
