use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graph::{laplacian, numerical_rank, oriented_incidence, random_connected, Graph, Label};
use crate::netsim::PayloadKind;
use crate::prox::{LeastSquares, NodeProblem, Objective, ProblemSpec};
use crate::solver::{
    block_diagonal_check, dpf_admm_composite, dpf_admm_single, matrix_oracle_composite,
    matrix_oracle_single, SolverConfig,
};
use crate::topology::{bipartition, build_mst, TieBreak};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, failures: Vec<String>, cases: usize) -> Self {
        let passed = failures.is_empty();
        let detail = match failures.first() {
            None => format!("{cases} cases"),
            Some(first) => format!("{} of {cases} cases failed; first: {first}", failures.len()),
        };
        CheckOutcome { name, passed, detail }
    }
}

fn graphs(seed: u64, count: usize, max_nodes: usize) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let l = rng.random_range(2..=max_nodes);
            let density = rng.random_range(0.0..0.5);
            random_connected(l, density, &mut rng).expect("valid parameters")
        })
        .collect()
}

fn gram_is_laplacian(gs: &[Graph]) -> CheckOutcome {
    let failures = gs
        .iter()
        .enumerate()
        .filter(|(_, g)| {
            let x = oriented_incidence(g);
            x.tr_mul(&x) != laplacian(g)
        })
        .map(|(i, _)| format!("graph {i}"))
        .collect();
    CheckOutcome::new("incidence gram equals laplacian", failures, gs.len())
}

fn protocol_and_structure(gs: &[Graph], seed: u64) -> [CheckOutcome; 2] {
    let mut protocol = Vec::new();
    let mut structure = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (i, g) in gs.iter().enumerate() {
        let l = g.node_count();
        let root = rng.random_range(0..l);
        let mst = match build_mst(g, root, TieBreak::Seeded(seed + i as u64)) {
            Ok(m) => m,
            Err(e) => {
                protocol.push(format!("graph {i}: {e}"));
                continue;
            }
        };
        let probes_ok = mst
            .traffic
            .per_node
            .iter()
            .all(|t| t.broadcasts_by_kind.get(PayloadKind::Probe) == 1);
        if !mst.tree.is_spanning_tree() || !probes_ok {
            protocol.push(format!("graph {i}: tree or probe count wrong"));
            continue;
        }
        let part = match bipartition(&mst.tree, root) {
            Ok(p) => p,
            Err(e) => {
                protocol.push(format!("graph {i}: {e}"));
                continue;
            }
        };
        let labels_ok = part.states.iter().enumerate().all(|(n, s)| s.labels_received == usize::from(n != root));
        if !labels_ok {
            protocol.push(format!("graph {i}: label count wrong"));
        }
        let sbg = part.sbg;
        let a = sbg.incidence();
        let rank_ok = l < 2 || numerical_rank(&a, 1e-10) == l - 1;
        let diag_ok = [Label::H, Label::T].iter().all(|&lab| {
            let block = sbg.incidence_block(lab);
            block_diagonal_check(&block.tr_mul(&block), "block").is_ok()
        });
        if !rank_ok || !diag_ok {
            structure.push(format!("graph {i}: rank {rank_ok}, diagonal {diag_ok}"));
        }
    }
    [
        CheckOutcome::new("spanning tree and labeling protocols", protocol, gs.len()),
        CheckOutcome::new("tree incidence rank and diagonal blocks", structure, gs.len()),
    ]
}

fn oracle_equivalence(seed: u64, cases: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a0c1e);
    let mut failures = Vec::new();
    for case in 0..cases {
        let l = rng.random_range(2..=12);
        let n = rng.random_range(1..=6);
        let g = random_connected(l, 0.3, &mut rng).expect("valid parameters");
        let sbg = match crate::topology::simplify(&g, case as u64) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let fit =|rng: &mut ChaCha8Rng| {
            Objective::QuadraticFit(LeastSquares {
                matrix: nalgebra::DMatrix::from_fn(2, n, |_, _| rng.sample(StandardNormal)),
                rhs: DVector::from_fn(2, |_, _| rng.sample(StandardNormal)),
                eta: 1.0,
            })
        };
        let fs: Vec<Objective> = (0..l).map(|_| fit(&mut rng)).collect();
        let single = ProblemSpec::single(n, fs.clone()).expect("consistent dims");
        let composite = ProblemSpec::new(
            n,
            fs.into_iter().map(|f| NodeProblem::new(f, Objective::L1 { weight: 0.1 })).collect(),
        )
        .expect("consistent dims");
        let cfg = SolverConfig::with_sigma(1.0, 30);
        let close = |a: &crate::solver::Trace, b: &crate::solver::Trace| {
            a.records.iter().zip(&b.records).all(|(ra, rb)| {
                let xa = ra.x.as_ref().expect("kept");
                let xb = rb.x.as_ref().expect("kept");
                xa.iter().zip(xb).all(|(u, v)| (u - v).norm() <= 1e-10 * (1.0 + v.norm()))
            })
        };
        let ok = match (
            dpf_admm_single(&sbg, &single, &cfg),
            matrix_oracle_single(&sbg, &single, &cfg),
            dpf_admm_composite(&sbg, &composite, &cfg),
            matrix_oracle_composite(&sbg, &composite, &cfg),
        ) {
            (Ok(a), Ok(b), Ok(c), Ok(d)) => close(&a, &b) && close(&c, &d),
            _ => false,
        };
        if !ok {
            failures.push(format!("case {case}"));
        }
    }
    CheckOutcome::new("decentralized solvers match matrix oracles", failures, cases)
}

/// Structural and solver invariants on `count` seeded random graphs.
pub fn invariant_suite(seed: u64, count: usize) -> Vec<CheckOutcome> {
    let gs = graphs(seed, count, 30);
    let [protocol, structure] = protocol_and_structure(&gs, seed);
    vec![gram_is_laplacian(&gs), protocol, structure, oracle_equivalence(seed, count.min(20))]
}
