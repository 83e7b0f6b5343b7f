use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Redraw, SolverKind};
use super::instance::CsInstance;
use crate::baselines::{centralized_admm, dgd, tune_dgd, StepSchedule};
use crate::error::{Error, Result};
use crate::graph::{Graph, SimplestBipartiteGraph};
use crate::metrics::{consensus_gap, subgradient_residual};
use crate::solver::{dpf_admm_composite, SolverConfig, Trace};
use crate::topology::simplify;

/// End-of-run measurements for one solver on one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_error: f64,
    /// Consensus gap divided by `||mean x_i||`.
    pub rel_consensus_gap: f64,
    /// Subgradient residual of the global objective at the mean iterate.
    pub subgradient_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSeries {
    pub kind: SolverKind,
    /// Penalty for ADMM solvers, tuned `alpha0` for DGD.
    pub parameter: f64,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    pub mean_msg_volume: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

impl SolverSeries {
    pub fn final_error(&self) -> f64 {
        *self.mean_error.last().expect("at least one iteration")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub sbg: SimplestBipartiteGraph,
    /// `(alpha0, score)` for each DGD candidate, when DGD was selected.
    pub dgd_scores: Option<Vec<(f64, f64)>>,
    pub series: Vec<SolverSeries>,
}

/// Mean of the last 5% of the series (at least one point).
pub fn plateau(series: &[f64]) -> f64 {
    let tail = (series.len() / 20).max(1);
    series[series.len() - tail..].iter().sum::<f64>() / tail as f64
}

/// First 1-based iteration whose value is within `frac` of the plateau.
pub fn iterations_to_plateau(series: &[f64], frac: f64) -> Option<usize> {
    let p = plateau(series);
    series.iter().position(|e| (e - p).abs() <= frac * p).map(|k| k + 1)
}

/// First 1-based iteration from which every later value stays within `frac`
/// of the plateau.
pub fn iterations_to_settle(series: &[f64], frac: f64) -> Option<usize> {
    let p = plateau(series);
    let outside = series.iter().rposition(|e| (e - p).abs() > frac * p);
    match outside {
        None => Some(1),
        Some(k) if k + 1 < series.len() => Some(k + 2),
        Some(_) => None,
    }
}

pub fn iterations_to_threshold(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|e| *e <= threshold).map(|k| k + 1)
}

struct RunOutcome {
    errors: Vec<f64>,
    scalars: Vec<usize>,
    summary: RunSummary,
}

fn instance_for_run(cfg: &ExperimentConfig, base: &CsInstance, run: usize) -> Result<CsInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run as u64 + 1);
    match cfg.redraw {
        Redraw::Noise => {
            let mut inst = base.clone();
            inst.redraw_noise(&mut rng);
            Ok(inst)
        }
        Redraw::All => CsInstance::generate(cfg.problem, cfg.params.clone(), &mut rng),
    }
}

fn solver_config(cfg: &ExperimentConfig, inst: &CsInstance) -> SolverConfig {
    SolverConfig {
        sigma: cfg.sigma,
        sigma_steps: cfg.sigma_steps.clone(),
        max_iterations: cfg.max_iterations,
        tolerance: None,
        stride: 1,
        keep_iterates: false,
        truth: Some(inst.truth.clone()),
    }
}

fn outcome(trace: Trace, inst: &CsInstance, zero_tol: f64) -> Result<RunOutcome> {
    let problem = inst.to_problem()?;
    let mean = trace.final_mean();
    let gap = consensus_gap(&trace.final_x);
    let norm = mean.norm();
    let errors = trace.errors();
    Ok(RunOutcome {
        summary: RunSummary {
            final_error: *errors.last().unwrap_or(&f64::NAN),
            rel_consensus_gap: if norm > 0.0 { gap / norm } else { gap },
            subgradient_residual: subgradient_residual(&problem, &mean, zero_tol),
        },
        scalars: trace.records.iter().map(|r| r.scalars_exchanged).collect(),
        errors,
    })
}

fn run_solver(
    kind: SolverKind,
    cfg: &ExperimentConfig,
    graph: &Graph,
    sbg: &SimplestBipartiteGraph,
    dgd_schedule: Option<StepSchedule>,
    inst: &CsInstance,
) -> Result<RunOutcome> {
    let problem = inst.to_problem()?;
    let scfg = solver_config(cfg, inst);
    let trace = match kind {
        SolverKind::Dpf => dpf_admm_composite(sbg, &problem, &scfg)?,
        SolverKind::Centralized => centralized_admm(&problem, &scfg)?,
        SolverKind::Dgd => dgd(graph, &problem, dgd_schedule.expect("tuned before runs"), &scfg)?,
    };
    outcome(trace, inst, cfg.zero_tol)
}

/// Runs every selected solver on `cfg.runs` instances and averages the
/// per-iteration error and message volume across runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let graph = cfg.graph.build(cfg.seed)?;
    if graph.node_count() != cfg.params.nodes {
        return Err(Error::Config(format!(
            "graph has {} nodes but the problem has {}",
            graph.node_count(),
            cfg.params.nodes
        )));
    }
    let sbg = simplify(&graph, cfg.seed)?;
    let base = CsInstance::generate(cfg.problem, cfg.params.clone(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;

    let mut dgd_schedule = None;
    let mut dgd_scores = None;
    if cfg.solvers.contains(&SolverKind::Dgd) {
        let inst = instance_for_run(cfg, &base, 0)?;
        let tuning = tune_dgd(&graph, &inst.to_problem()?, cfg.dgd_schedule, &cfg.dgd_alphas, &solver_config(cfg, &inst))?;
        dgd_schedule = Some(tuning.best);
        dgd_scores = Some(tuning.scores);
    }

    let per_run: Vec<Vec<RunOutcome>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let inst = instance_for_run(cfg, &base, run)?;
            cfg.solvers.iter().map(|&kind| run_solver(kind, cfg, &graph, &sbg, dgd_schedule, &inst)).collect()
        })
        .collect::<Result<_>>()?;

    let runs = cfg.runs as f64;
    let series = cfg
        .solvers
        .iter()
        .enumerate()
        .map(|(s, &kind)| {
            let len = per_run[0][s].errors.len();
            let mut mean = vec![0.0; len];
            let mut volume = vec![0.0; len];
            // fixed run order keeps the sums byte-reproducible
            for run in &per_run {
                for k in 0..len {
                    mean[k] += run[s].errors[k];
                    volume[k] += run[s].scalars[k] as f64;
                }
            }
            mean.iter_mut().for_each(|m| *m /= runs);
            volume.iter_mut().for_each(|v| *v /= runs);
            let mut var = vec![0.0; len];
            for run in &per_run {
                for k in 0..len {
                    var[k] += (run[s].errors[k] - mean[k]).powi(2);
                }
            }
            SolverSeries {
                kind,
                parameter: match kind {
                    SolverKind::Dgd => dgd_schedule.map_or(f64::NAN, |d| d.initial()),
                    _ => cfg.sigma,
                },
                mean_error: mean,
                std_error: var.into_iter().map(|v| (v / runs).sqrt()).collect(),
                mean_msg_volume: volume,
                runs: per_run.iter().map(|r| r[s].summary.clone()).collect(),
            }
        })
        .collect();

    Ok(ExperimentResult { config: cfg.clone(), graph, sbg, dgd_scores, series })
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "NA".to_string(), |k| k.to_string())
}

impl ExperimentResult {
    pub fn series(&self, kind: SolverKind) -> Option<&SolverSeries> {
        self.series.iter().find(|s| s.kind == kind)
    }

    /// `solver,iteration,mean_error,std_error,mean_msg_volume`, every
    /// `output_stride`-th iteration plus the last.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("solver,iteration,mean_error,std_error,mean_msg_volume\n");
        let stride = self.config.output_stride;
        for s in &self.series {
            let len = s.mean_error.len();
            for k in 0..len {
                let it = k + 1;
                if it % stride == 0 || it == len {
                    let _ = writeln!(
                        out,
                        "{},{it},{:.6e},{:.6e},{}",
                        s.kind.name(),
                        s.mean_error[k],
                        s.std_error[k],
                        s.mean_msg_volume[k]
                    );
                }
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "solver,runs,iterations,final_mean_error,plateau_error,iterations_to_plateau,\
             iterations_to_settle,threshold,iterations_to_threshold,mean_msg_volume,\
             max_rel_consensus_gap,max_subgradient_residual,parameter\n",
        );
        for s in &self.series {
            let e = &s.mean_error;
            let max = |f: fn(&RunSummary) -> f64| s.runs.iter().map(f).fold(0.0, f64::max);
            let volume = s.mean_msg_volume.iter().sum::<f64>() / s.mean_msg_volume.len() as f64;
            let _ = writeln!(
                out,
                "{},{},{},{:.6e},{:.6e},{},{},{:.6e},{},{},{:.6e},{:.6e},{:e}",
                s.kind.name(),
                s.runs.len(),
                e.len(),
                s.final_error(),
                plateau(e),
                opt(iterations_to_plateau(e, 0.1)),
                opt(iterations_to_settle(e, 0.1)),
                self.config.threshold,
                opt(iterations_to_threshold(e, self.config.threshold)),
                volume,
                max(|r| r.rel_consensus_gap),
                max(|r| r.subgradient_residual),
                s.parameter,
            );
        }
        out
    }

    pub fn dgd_tuning_csv(&self) -> Option<String> {
        let scores = self.dgd_scores.as_ref()?;
        let chosen = self.series(SolverKind::Dgd).map(|s| s.parameter);
        let mut out = String::from("alpha0,final_error,chosen\n");
        for &(a, score) in scores {
            let _ = writeln!(out, "{a:e},{score:.6e},{}", Some(a) == chosen);
        }
        Some(out)
    }

    /// Writes `trace.csv`, `summary.csv`, `sbg.txt`, `config.txt` and, with
    /// DGD, `dgd_tuning.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec![
            ("trace.csv", self.trace_csv()),
            ("summary.csv", self.summary_csv()),
            ("sbg.txt", self.sbg.to_text()),
            ("config.txt", self.config.to_text()),
        ];
        if let Some(t) = self.dgd_tuning_csv() {
            files.push(("dgd_tuning.csv", t));
        }
        files
            .into_iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                std::fs::write(&path, body)?;
                Ok(path)
            })
            .collect()
    }
}
