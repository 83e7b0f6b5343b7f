use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::instance::{CsKind, CsParams};
use crate::baselines::StepSchedule;
use crate::error::{Error, Result};
use crate::graph::{complete_graph, line_graph, parse_edge_list, random_connected_with_edges, Graph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSource {
    Line10,
    Complete10,
    /// Seeded edge sampling until a connected 10-node, 18-edge graph appears.
    Random10x18,
    File(PathBuf),
}

impl GraphSource {
    pub fn build(&self, seed: u64) -> Result<Graph> {
        match self {
            GraphSource::Line10 => line_graph(10),
            GraphSource::Complete10 => complete_graph(10),
            GraphSource::Random10x18 => random_connected_with_edges(10, 18, &mut ChaCha8Rng::seed_from_u64(seed)),
            GraphSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                Ok(parse_edge_list(&text)?)
            }
        }
    }
}

impl FromStr for GraphSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line10" => Ok(GraphSource::Line10),
            "complete10" => Ok(GraphSource::Complete10),
            "random10-18" => Ok(GraphSource::Random10x18),
            other => match other.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(GraphSource::File(PathBuf::from(path))),
                _ => Err(Error::Config(format!("unknown graph {other:?}"))),
            },
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::Line10 => f.write_str("line10"),
            GraphSource::Complete10 => f.write_str("complete10"),
            GraphSource::Random10x18 => f.write_str("random10-18"),
            GraphSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Dpf,
    Centralized,
    Dgd,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Dpf => "dpf",
            SolverKind::Centralized => "centralized",
            SolverKind::Dgd => "dgd",
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpf" => Ok(SolverKind::Dpf),
            "centralized" => Ok(SolverKind::Centralized),
            "dgd" => Ok(SolverKind::Dgd),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Redraw {
    /// Fresh noise per run; signal and sensing matrices fixed.
    Noise,
    /// Fresh instance per run.
    All,
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: CsKind,
    pub graph: GraphSource,
    pub seed: u64,
    pub runs: usize,
    pub solvers: Vec<SolverKind>,
    pub max_iterations: usize,
    pub sigma: f64,
    pub sigma_steps: Vec<(usize, f64)>,
    pub dgd_schedule: StepSchedule,
    /// Candidate `alpha0` values; the best on the first run is used for all runs.
    pub dgd_alphas: Vec<f64>,
    pub params: CsParams,
    pub redraw: Redraw,
    pub threshold: f64,
    pub zero_tol: f64,
    pub output: PathBuf,
    pub output_stride: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: CsKind::L2L1,
            graph: GraphSource::Random10x18,
            seed: 1,
            runs: 100,
            solvers: vec![SolverKind::Dpf, SolverKind::Centralized, SolverKind::Dgd],
            max_iterations: 1000,
            sigma: 20.0,
            sigma_steps: Vec::new(),
            dgd_schedule: StepSchedule::InvSqrt(1e-4),
            dgd_alphas: vec![1e-5, 3e-5, 1e-4, 3e-4, 1e-3],
            params: CsParams::l2l1(),
            redraw: Redraw::Noise,
            threshold: 0.05,
            zero_tol: 1e-9,
            output: PathBuf::from("out"),
            output_stride: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty()).map(|v| parse(key, v)).collect()
}

fn format_steps(steps: &[(usize, f64)]) -> String {
    steps.iter().map(|(k, s)| format!("{k}:{s}")).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Defaults for `problem`, including its noise model parameters.
    pub fn for_problem(problem: CsKind) -> Self {
        ExperimentConfig { problem, params: CsParams::defaults(problem), ..Default::default() }
    }

    /// Parses `key = value` lines (`#` starts a comment) over the defaults.
    /// A `problem` line resets the noise parameters to that problem's defaults,
    /// so it should come first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => {
                let kind = match value {
                    "l2l1" => CsKind::L2L1,
                    "l1l1" => CsKind::L1L1,
                    other => return Err(Error::Config(format!("unknown problem {other:?}"))),
                };
                self.problem = kind;
                self.params = CsParams::defaults(kind);
            }
            "graph" => self.graph = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "solvers" => self.solvers = list(key, value)?,
            "max_iter" => self.max_iterations = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "sigma_steps" => {
                self.sigma_steps = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(|pair| {
                        let (k, s) = pair
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("{key}: expected iteration:sigma, got {pair:?}")))?;
                        Ok((parse(key, k.trim())?, parse(key, s.trim())?))
                    })
                    .collect::<Result<_>>()?;
            }
            "dgd_schedule" => {
                let a = self.dgd_schedule.initial();
                self.dgd_schedule = match value {
                    "constant" => StepSchedule::Constant(a),
                    "invsqrt" => StepSchedule::InvSqrt(a),
                    "inverse" => StepSchedule::Inverse(a),
                    other => return Err(Error::Config(format!("unknown step schedule {other:?}"))),
                };
            }
            "dgd_alphas" => self.dgd_alphas = list(key, value)?,
            "nodes" => self.params.nodes = parse(key, value)?,
            "rows_per_node" => self.params.rows_per_node = parse(key, value)?,
            "dim" => self.params.dim = parse(key, value)?,
            "sparsity" => self.params.sparsity = parse(key, value)?,
            "noise_var" => self.params.noise_var = parse(key, value)?,
            "eta" => self.params.eta = parse(key, value)?,
            "redraw" => {
                self.redraw = match value {
                    "noise" => Redraw::Noise,
                    "all" => Redraw::All,
                    other => return Err(Error::Config(format!("unknown redraw mode {other:?}"))),
                }
            }
            "threshold" => self.threshold = parse(key, value)?,
            "zero_tol" => self.zero_tol = parse(key, value)?,
            "metric" => {
                if value != "relative_error" {
                    return Err(Error::Config(format!("unknown metric {value:?}")));
                }
            }
            "output" => self.output = PathBuf::from(value),
            "output_stride" => self.output_stride = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.max_iterations == 0 || self.output_stride == 0 {
            return Err(Error::Config("max_iter and output_stride must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::Config("no solvers selected".into()));
        }
        if self.solvers.contains(&SolverKind::Dgd) && self.dgd_alphas.is_empty() {
            return Err(Error::Config("dgd_alphas is empty".into()));
        }
        if !(self.threshold > 0.0) || !(self.zero_tol >= 0.0) {
            return Err(Error::Config("threshold must be positive and zero_tol nonnegative".into()));
        }
        crate::solver::SolverConfig {
            sigma: self.sigma,
            sigma_steps: self.sigma_steps.clone(),
            ..Default::default()
        }
        .validate(self.params.dim)
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// The configuration as `key = value` lines; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let schedule = match self.dgd_schedule {
            StepSchedule::Constant(_) => "constant",
            StepSchedule::InvSqrt(_) => "invsqrt",
            StepSchedule::Inverse(_) => "inverse",
        };
        let join = |v: &[f64]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
        let solvers: Vec<&str> = self.solvers.iter().map(|s| s.name()).collect();
        let redraw = match self.redraw {
            Redraw::Noise => "noise",
            Redraw::All => "all",
        };
        let p = &self.params;
        format!(
            "problem = {}\ngraph = {}\nseed = {}\nruns = {}\nsolvers = {}\nmax_iter = {}\nsigma = {}\n\
             sigma_steps = {}\ndgd_schedule = {schedule}\ndgd_alphas = {}\nnodes = {}\nrows_per_node = {}\n\
             dim = {}\nsparsity = {}\nnoise_var = {}\neta = {}\nredraw = {redraw}\nthreshold = {}\n\
             zero_tol = {}\nmetric = relative_error\noutput = {}\noutput_stride = {}\n",
            self.problem.name(),
            self.graph,
            self.seed,
            self.runs,
            solvers.join(","),
            self.max_iterations,
            self.sigma,
            format_steps(&self.sigma_steps),
            join(&self.dgd_alphas),
            p.nodes,
            p.rows_per_node,
            p.dim,
            p.sparsity,
            p.noise_var,
            p.eta,
            self.threshold,
            self.zero_tol,
            self.output.display(),
            self.output_stride,
        )
    }
}
