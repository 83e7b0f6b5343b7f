//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use bipartite_admm::experiments::{run_experiment, ExperimentConfig, ExperimentResult, SolverKind};
use bipartite_admm::graph::{laplacian, oriented_incidence, random_connected, Graph, Label};
use bipartite_admm::netsim::PayloadKind;
use bipartite_admm::prox::{LeastAbsolute, LeastSquares, NodeProblem, Objective, ProblemSpec, QuadraticForm};
use bipartite_admm::solver::{
    dpf_admm_composite, dpf_admm_single, matrix_oracle_composite, matrix_oracle_single, SolverConfig, Trace,
};
use bipartite_admm::topology::{bipartition, build_mst, simplify, TieBreak};

type Outcome = Result<String, String>;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn random_f(rng: &mut ChaCha8Rng, n: usize, allow_l1: bool) -> Objective {
    let rows = rng.random_range(1..=4);
    let matrix = gaussian(rng, rows, n);
    let rhs = gaussian_vec(rng, rows);
    let eta = rng.random_range(0.5..2.0);
    match rng.random_range(0..if allow_l1 { 3 } else { 2 }) {
        0 => Objective::QuadraticFit(LeastSquares { matrix, rhs, eta }),
        1 => {
            let b = gaussian(rng, n + 1, n);
            Objective::Smooth(Arc::new(QuadraticForm::new(b.tr_mul(&b), gaussian_vec(rng, n)).unwrap()))
        }
        _ => Objective::L1Residual(LeastAbsolute { matrix, rhs, eta }),
    }
}

/// Worst per-iteration `||a - b|| / ||b||` over the stacked iterate (x, and y
/// when present).
fn max_relative_gap(a: &Trace, b: &Trace) -> f64 {
    let mut worst = 0.0_f64;
    for (ra, rb) in a.records.iter().zip(&b.records) {
        let (mut diff, mut norm) = (0.0, 0.0);
        let xs = ra.x.iter().flatten().zip(rb.x.iter().flatten());
        let ys = ra.y.iter().flatten().zip(rb.y.iter().flatten());
        for (u, v) in xs.chain(ys) {
            diff += (u - v).norm_squared();
            norm += v.norm_squared();
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-300));
    }
    worst
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0_f64;
    for case in 0..50u64 {
        let l = rng.random_range(2..=20);
        let n = rng.random_range(1..=10);
        let g = random_connected(l, rng.random_range(0.0..0.4), &mut rng).unwrap();
        let sbg = simplify(&g, case).unwrap();
        let sigma = rng.random_range(0.2..5.0);
        let cfg = SolverConfig::with_sigma(sigma, 50);

        let fs: Vec<Objective> = (0..l).map(|_| random_f(&mut rng, n, false)).collect();
        let single = ProblemSpec::single(n, fs).unwrap();
        let a = dpf_admm_single(&sbg, &single, &cfg).map_err(|e| e.to_string())?;
        let b = matrix_oracle_single(&sbg, &single, &cfg).map_err(|e| e.to_string())?;
        if a.records.len() != 50 || b.records.len() != 50 {
            return Err(format!("case {case}: expected 50 iterations"));
        }
        worst = worst.max(max_relative_gap(&a, &b));

        let nodes: Vec<NodeProblem> = (0..l)
            .map(|_| {
                let f = random_f(&mut rng, n, true);
                let g = if rng.random_bool(0.8) {
                    Objective::L1 { weight: rng.random_range(0.05..1.0) }
                } else {
                    Objective::Zero
                };
                NodeProblem::new(f, g)
            })
            .collect();
        let composite = ProblemSpec::new(n, nodes).unwrap();
        let c = dpf_admm_composite(&sbg, &composite, &cfg).map_err(|e| e.to_string())?;
        let d = matrix_oracle_composite(&sbg, &composite, &cfg).map_err(|e| e.to_string())?;
        if c.records.iter().any(|r| r.y.is_none()) {
            return Err(format!("case {case}: composite trace lacks y"));
        }
        worst = worst.max(max_relative_gap(&c, &d));
        if worst > 1e-10 {
            return Err(format!("case {case}: relative difference {worst:.3e}"));
        }
    }
    Ok(format!("50 instances, worst relative difference {worst:.3e}"))
}

fn random_graphs(seed: u64, count: usize, max_nodes: usize) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let l = rng.random_range(2..=max_nodes);
            random_connected(l, rng.random_range(0.0..0.6), &mut rng).unwrap()
        })
        .collect()
}

fn incidence_from_edges(l: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(edges.len(), l);
    for (e, &(i, j)) in edges.iter().enumerate() {
        x[(e, i.min(j))] = 1.0;
        x[(e, i.max(j))] = -1.0;
    }
    x
}

fn laplacian_from_edges(l: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut lap = DMatrix::zeros(l, l);
    for &(i, j) in edges {
        lap[(i, i)] += 1.0;
        lap[(j, j)] += 1.0;
        lap[(i, j)] -= 1.0;
        lap[(j, i)] -= 1.0;
    }
    lap
}

fn svd_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > 1e-9 * top.max(1.0)).count()
}

fn off_diagonal_max(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

fn lemma_suite() -> Outcome {
    let graphs = random_graphs(202, 200, 40);
    for (k, g) in graphs.iter().enumerate() {
        let l = g.node_count();
        let edges: Vec<(usize, usize)> = g.edges().collect();
        let lap = laplacian_from_edges(l, &edges);
        let x = oriented_incidence(g);
        if x.tr_mul(&x) != lap || laplacian(g) != lap || x != incidence_from_edges(l, &edges) {
            return Err(format!("graph {k}: incidence gram differs from laplacian"));
        }
        let sbg = simplify(g, k as u64).map_err(|e| e.to_string())?;
        let tree_edges: Vec<(usize, usize)> = sbg.tree().edges().collect();
        let a = incidence_from_edges(l, &tree_edges);
        if sbg.incidence() != a {
            return Err(format!("graph {k}: tree incidence mismatch"));
        }
        if svd_rank(&a) != l - 1 {
            return Err(format!("graph {k}: tree incidence rank {} for {l} nodes", svd_rank(&a)));
        }
        for label in [Label::H, Label::T] {
            let cols: Vec<usize> = (0..l).filter(|&i| sbg.label(i) == label).collect();
            let block = a.select_columns(cols.iter());
            let gram = block.tr_mul(&block);
            if off_diagonal_max(&gram) != 0.0 {
                return Err(format!("graph {k}: {label:?} block gram not diagonal"));
            }
            for (c, &i) in cols.iter().enumerate() {
                if gram[(c, c)] != sbg.degree(i) as f64 {
                    return Err(format!("graph {k}: diagonal entry differs from degree"));
                }
            }
        }
    }
    Ok("200 graphs".into())
}

fn bfs_reach(g: &Graph, from: usize) -> usize {
    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in g.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count
}

fn protocol_suite() -> Outcome {
    let graphs = random_graphs(303, 100, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    for (k, g) in graphs.iter().enumerate() {
        let l = g.node_count();
        let root = rng.random_range(0..l);
        let mst = build_mst(g, root, TieBreak::Seeded(k as u64)).map_err(|e| format!("graph {k}: {e}"))?;
        let tree = &mst.tree;
        // connected with l - 1 edges is a tree, hence acyclic
        if tree.edge_count() != l - 1 || bfs_reach(tree, 0) != l {
            return Err(format!("graph {k}: output is not a spanning tree"));
        }
        if tree.edges().any(|(i, j)| !g.has_edge(i, j)) {
            return Err(format!("graph {k}: tree uses a non-edge"));
        }
        for (i, t) in mst.traffic.per_node.iter().enumerate() {
            if t.broadcasts_by_kind.get(PayloadKind::Probe) != 1 {
                return Err(format!("graph {k}: node {i} probed {} times", t.broadcasts_by_kind.get(PayloadKind::Probe)));
            }
        }
        let part = bipartition(tree, root).map_err(|e| format!("graph {k}: {e}"))?;
        if tree.edges().any(|(i, j)| part.sbg.label(i) == part.sbg.label(j)) || part.sbg.label(root) != Label::H {
            return Err(format!("graph {k}: labeling is not a 2-coloring rooted at H"));
        }
        for (i, t) in part.traffic.per_node.iter().enumerate() {
            let expected = usize::from(i != root);
            if t.received_by_kind.get(PayloadKind::Label) != expected || part.states[i].labels_received != expected {
                return Err(format!("graph {k}: node {i} received {} labels", part.states[i].labels_received));
            }
        }
    }
    Ok("100 graphs; every non-root node hears exactly one label, the root none".into())
}

fn plateau_oracle(series: &[f64]) -> (f64, Option<usize>) {
    let tail = (series.len() / 20).max(1);
    let p = series[series.len() - tail..].iter().sum::<f64>() / tail as f64;
    let hit = series.iter().position(|e| (e - p).abs() <= 0.1 * p).map(|k| k + 1);
    (p, hit)
}

fn l2l1_config(graph: &str) -> ExperimentConfig {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/l2l1.conf"))
        .expect("shipped config");
    let mut cfg = ExperimentConfig::parse(&text).unwrap();
    cfg.set("graph", graph).unwrap();
    cfg.set("runs", "100").unwrap();
    cfg.set("solvers", "dpf,centralized").unwrap();
    cfg
}

fn l2l1_reproduction(results: &[(String, ExperimentResult)]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, res) in results {
        let dpf = res.series(SolverKind::Dpf).unwrap();
        let cen = res.series(SolverKind::Centralized).unwrap();
        let (p, hit) = plateau_oracle(&dpf.mean_error);
        let ratio = dpf.mean_error.last().unwrap() / cen.mean_error.last().unwrap();
        let good = hit.is_some_and(|k| k <= 300) && (0.5..=2.0).contains(&ratio);
        ok &= good;
        lines.push(format!("{name}: plateau {p:.4e} reached at {hit:?}, dpf/centralized {ratio:.4}"));
    }
    if ok { Ok(lines.join("; ")) } else { Err(lines.join("; ")) }
}

fn consensus_and_optimality(results: &[(String, ExperimentResult)]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, res) in results {
        let dpf = res.series(SolverKind::Dpf).unwrap();
        let gap = dpf.runs.iter().map(|r| r.rel_consensus_gap).fold(0.0, f64::max);
        let sub = dpf.runs.iter().map(|r| r.subgradient_residual).fold(0.0, f64::max);
        ok &= gap <= 1e-4 && sub <= 1e-3 && dpf.runs.len() == 100;
        lines.push(format!("{name}: worst gap/|x| {gap:.3e}, worst residual {sub:.3e}"));
    }
    if ok { Ok(lines.join("; ")) } else { Err(lines.join("; ")) }
}

fn l1l1_reproduction() -> Outcome {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/l1l1.conf"))
        .expect("shipped config");
    let mut cfg = ExperimentConfig::parse(&text).unwrap();
    cfg.set("runs", "100").unwrap();
    cfg.set("solvers", "dpf,dgd").unwrap();
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let dpf = &res.series(SolverKind::Dpf).unwrap().mean_error;
    let dgd = &res.series(SolverKind::Dgd).unwrap().mean_error;
    let bad = (100..dpf.len()).find(|&k| dpf[k] >= dgd[k]);
    let msg = format!(
        "{} iterations, final dpf {:.4e} vs dgd {:.4e}",
        dpf.len(),
        dpf.last().unwrap(),
        dgd.last().unwrap()
    );
    match bad {
        None => Ok(msg),
        Some(k) => Err(format!("{msg}; dpf not below dgd at iteration {}", k + 1)),
    }
}

fn message_economy() -> Outcome {
    let cfg = ExperimentConfig::default();
    let g = cfg.graph.build(cfg.seed).unwrap();
    let sbg = simplify(&g, cfg.seed).unwrap();
    let inst = bipartite_admm::experiments::gen_l2l1(cfg.seed, cfg.params.clone()).unwrap();
    let n = cfg.params.dim;
    let mut scfg = SolverConfig::with_sigma(20.0, 20);
    scfg.keep_iterates = false;
    let trace = dpf_admm_composite(&sbg, &inst.to_problem().unwrap(), &scfg).map_err(|e| e.to_string())?;
    let per_iter: Vec<usize> = trace.records.iter().map(|r| r.scalars_exchanged).collect();
    let sbg_volume = 2 * n * sbg.tree().edge_count();
    let full_volume = 2 * n * g.edge_count();
    let steady = per_iter[1..].iter().all(|&v| v == sbg_volume);
    let report = trace.traffic.as_ref().ok_or("no traffic report")?;
    let total = report.total_scalars;
    let msg = format!("{} per iteration against {full_volume} on the full graph; total {total}", per_iter[1]);
    if steady && sbg_volume == 2 * n * 9 && 2 * sbg_volume == full_volume && per_iter.iter().sum::<usize>() == total {
        Ok(msg)
    } else {
        Err(format!("{msg}; per-iteration volumes {per_iter:?}"))
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_bipartite-admm");
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = work.path().join("small.conf");
    std::fs::write(&cfg_path, "problem = l1l1\nruns = 4\nmax_iter = 150\ndgd_alphas = 1e-4,3e-4\n")
        .map_err(|e| e.to_string())?;
    let out = work.path().join("out");
    let out_s = out.to_str().unwrap().to_string();
    let commands: Vec<Vec<String>> = vec![
        vec!["topology", "--graph", "random10-18", "--seed", "7", "--out", &out_s],
        vec!["solve", "--problem", "l2l1", "--solver", "dpf", "--graph", "line10", "--max-iter", "200", "--out", &out_s],
        vec!["solve", "--problem", "l1l1", "--solver", "dgd", "--max-iter", "100", "--out", &out_s],
        vec!["experiment", "--config", cfg_path.to_str().unwrap(), "--set", "graph=complete10", "--out", &out_s],
        vec!["check", "--graphs", "20"],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(String::from).collect())
    .collect();
    for args in &commands {
        let mut seen = Vec::new();
        for _ in 0..2 {
            let _ = std::fs::remove_dir_all(&out);
            let output = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
            if !output.status.success() {
                return Err(format!("{args:?} exited with {}", output.status));
            }
            let files = if out.exists() { snapshot(&out) } else { BTreeMap::new() };
            seen.push((output.stdout, files));
        }
        if seen[0] != seen[1] {
            return Err(format!("{} differs between runs", args[0]));
        }
    }
    Ok(format!("{} commands byte-identical across two runs", commands.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    };
    report("1 oracle iterate equivalence", oracle_equivalence());
    report("2 incidence and laplacian identities", lemma_suite());
    report("3 protocol suite", protocol_suite());

    let results: Vec<(String, ExperimentResult)> = ["line10", "complete10", "random10-18"]
        .iter()
        .map(|g| (g.to_string(), run_experiment(&l2l1_config(g)).expect("l2l1 experiment")))
        .collect();
    report("4 l2+l1 plateau and centralized parity", l2l1_reproduction(&results));
    report("5 l1+l1 ordering against dgd", l1l1_reproduction());
    report("6 consensus and optimality", consensus_and_optimality(&results));
    report("7 message economy", message_economy());
    report("8 cli determinism", cli_determinism());

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
