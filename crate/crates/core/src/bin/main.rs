use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bipartite_admm::experiments::{invariant_suite, run_experiment, ExperimentConfig, GraphSource};
use bipartite_admm::netsim::TrafficReport;
use bipartite_admm::topology::{bipartition, build_mst, seeded_root, TieBreak};
use bipartite_admm::{Error, Result};

#[derive(Parser)]
#[command(name = "bipartite-admm", version, about = "Decentralized ADMM over a simplest bipartite graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the spanning tree and H/T labeling of a graph by message passing.
    Topology {
        /// line10, complete10, random10-18 or file:<path>
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Protocol root; drawn from the seed when absent.
        #[arg(long)]
        root: Option<usize>,
        /// Resolve simultaneous probes by lowest sender id instead of the seed.
        #[arg(long)]
        lowest_id: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// One instance, one solver.
    Solve {
        #[arg(long)]
        problem: Option<String>,
        /// dpf, centralized or dgd
        #[arg(long, default_value = "dpf")]
        solver: String,
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        sigma: Option<String>,
        /// Comma-separated `iteration:sigma` steps.
        #[arg(long)]
        sigma_steps: Option<String>,
        #[arg(long)]
        max_iter: Option<String>,
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Monte-Carlo comparison of the configured solvers.
    Experiment {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Run the structural and solver invariant suite.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        graphs: usize,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides the `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self, flags: &[(&str, &Option<String>)]) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::parse(&read(path)?)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn traffic_rows(out: &mut String, phase: &str, report: &TrafficReport) {
    for (node, t) in report.per_node.iter().enumerate() {
        let _ = writeln!(
            out,
            "{phase},{node},{},{},{},{}",
            t.messages_sent, t.messages_received, t.scalars_sent, t.scalars_received
        );
    }
}

fn topology(graph: &str, seed: u64, root: Option<usize>, lowest_id: bool, out: &Path) -> Result<()> {
    let g = graph.parse::<GraphSource>()?.build(seed)?;
    let root = root.unwrap_or_else(|| seeded_root(g.node_count(), seed));
    let tie_break = if lowest_id { TieBreak::LowestId } else { TieBreak::Seeded(seed) };
    let mst = build_mst(&g, root, tie_break)?;
    let part = bipartition(&mst.tree, root)?;

    let mut traffic = String::from("phase,node,messages_sent,messages_received,scalars_sent,scalars_received\n");
    traffic_rows(&mut traffic, "mst", &mst.traffic);
    traffic_rows(&mut traffic, "label", &part.traffic);

    std::fs::create_dir_all(out)?;
    write(&out.join("graph.txt"), &g.to_edge_list())?;
    write(&out.join("sbg.txt"), &part.sbg.to_text())?;
    write(&out.join("traffic.csv"), &traffic)?;
    println!(
        "root {root}: {} tree edges, {} H nodes, {} + {} protocol rounds",
        mst.tree.edge_count(),
        part.sbg.h_nodes().len(),
        mst.traffic.rounds,
        part.traffic.rounds
    );
    Ok(())
}

fn experiment(cfg: &ExperimentConfig) -> Result<()> {
    let result = run_experiment(cfg)?;
    let files = result.write(&cfg.output)?;
    for s in &result.series {
        println!("{}: final mean error {:.6e}", s.kind.name(), s.final_error());
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn check(seed: u64, graphs: usize) -> bool {
    let results = invariant_suite(seed, graphs);
    for r in &results {
        println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    results.iter().all(|r| r.passed)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Topology { graph, seed, root, lowest_id, out } => topology(&graph, seed, root, lowest_id, &out)?,
        Command::Solve { problem, solver, graph, seed, sigma, sigma_steps, max_iter, common } => {
            let solver = Some(solver);
            let runs = Some("1".to_string());
            let cfg = common.load(&[
                ("problem", &problem),
                ("graph", &graph),
                ("seed", &seed),
                ("sigma", &sigma),
                ("sigma_steps", &sigma_steps),
                ("max_iter", &max_iter),
                ("solvers", &solver),
                ("runs", &runs),
            ])?;
            experiment(&cfg)?
        }
        Command::Experiment { common } => experiment(&common.load(&[])?)?,
        Command::Check { seed, graphs } => {
            if !check(seed, graphs) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
