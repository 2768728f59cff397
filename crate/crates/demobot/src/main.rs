//! Command line: demo generation, model building, evaluation, distances, and inspection.

use anyhow::Context;
use clap::{Parser, Subcommand};
use demobot::config::Config;
use demobot::format::{self, FileKind};
use demobot::harness::{self, ExperimentSpec, RunOptions};
use demobot::report;
use demobot_core::env::gen_demos;
use demobot_core::env::surrogate::{SurrogateEnv, Task};
use demobot_core::GroundMetric;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "demobot",
    version,
    about = "Retrieval-based few-shot imitation on a desk-scale surrogate"
)]
struct Cli {
    /// Configuration file; defaults to $DEMOBOT_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record expert demonstrations into a dataset file.
    GenDemos {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        n: usize,
        /// Overrides the configured demonstration seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = harness::DEFAULT_MAX_STEPS)]
        max_steps: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the state graph and value table for a dataset.
    Build {
        #[arg(long)]
        dataset: PathBuf,
        /// Also train the goal-conditioned behavior-cloning network.
        #[arg(long)]
        gcbc: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec and write its report.
    Eval {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-episode JSON lines, including every sub-goal decision.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides the spec's episode seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pairwise trajectory distances of a dataset.
    Wasserstein {
        #[arg(long)]
        dataset: PathBuf,
        /// Ground metric; defaults to the configured one.
        #[arg(long, value_parser = parse_metric)]
        metric: Option<GroundMetric>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a dataset or model file.
    Inspect { path: PathBuf },
}

fn parse_metric(s: &str) -> Result<GroundMetric, String> {
    match s {
        "squared_euclidean" => Ok(GroundMetric::SquaredEuclidean),
        "cosine" => Ok(GroundMetric::Cosine),
        other => Err(format!("unknown metric {other:?} (squared_euclidean or cosine)")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<demobot::Error>())
                .map_or(3, demobot::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (config, _) = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::GenDemos {
            task,
            n,
            seed,
            max_steps,
            out,
        } => {
            let env = SurrogateEnv::new(config.env_config(task)).map_err(demobot::Error::from)?;
            let seed = seed.unwrap_or(config.seed);
            let ds = gen_demos(&env, n, seed, max_steps).map_err(demobot::Error::from)?;
            format::save_dataset(&ds, &out)?;
            eprintln!(
                "wrote {} trajectories, {} steps to {}",
                n,
                ds.total_steps(),
                out.display()
            );
        }
        Command::Build { dataset, gcbc, out } => {
            let ds = format::load_dataset(&dataset)?;
            let model = harness::build_model(&ds, &config, gcbc)?;
            format::save_model(&model, &out)?;
            eprintln!(
                "wrote {} nodes, {} edges to {}",
                model.graph.len(),
                model.graph.edge_count(),
                out.display()
            );
        }
        Command::Eval { spec, out, log, seed } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| demobot::Error::io(&spec, e))?;
            let mut spec = ExperimentSpec::from_toml(&text).map_err(|e| e.context(spec.display().to_string()))?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let table = harness::run_experiment(
                &spec,
                &config,
                RunOptions {
                    keep_audits: log.is_some(),
                },
            )?;
            report::emit_report(&table, &config, &out)?;
            if let Some(log) = log {
                report::write_episode_log(&table.episodes, create(&log)?).map_err(|e| demobot::Error::io(&log, e))?;
            }
            for c in &table.cells {
                eprintln!(
                    "{:<10} demos {:>3}: {}/{} ({} ms)",
                    c.policy, c.demos, c.successes, c.episodes, c.wall_ms
                );
            }
        }
        Command::Wasserstein { dataset, metric, out } => {
            let ds = format::load_dataset(&dataset)?;
            let m = harness::pairwise_wasserstein(&ds, metric.unwrap_or(config.subgoal.metric))?;
            m.write(create(&out)?).map_err(|e| demobot::Error::io(&out, e))?;
        }
        Command::Inspect { path } => {
            let text = inspect(&path)?;
            if let Err(e) = std::io::stdout().lock().write_all(text.as_bytes()) {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn inspect(path: &Path) -> anyhow::Result<String> {
    let mut out = String::new();
    match format::sniff(path)? {
        FileKind::Dataset => {
            let ds = format::load_dataset(path)?;
            writeln!(out, "dataset {}", path.display())?;
            writeln!(out, "  feature_dim {}", ds.feature_dim())?;
            writeln!(out, "  trajectories {}", ds.trajectories().len())?;
            writeln!(out, "  steps {}", ds.total_steps())?;
            for (k, v) in &ds.meta {
                writeln!(out, "  {k} = {v}")?;
            }
            for t in ds.trajectories() {
                writeln!(out, "  traj {} task {} length {}", t.traj_id(), t.task_tag(), t.len())?;
            }
        }
        FileKind::Model => {
            let m = format::load_model(path)?;
            writeln!(out, "model {}", path.display())?;
            writeln!(out, "  nodes {}", m.graph.len())?;
            writeln!(out, "  edges {}", m.graph.edge_count())?;
            writeln!(out, "  merge_eps {}", m.graph.merge_eps())?;
            writeln!(out, "  metric {}", m.graph.metric().name())?;
            writeln!(out, "  gamma {}", m.values.gamma())?;
            match &m.gcbc {
                Some(g) => writeln!(
                    out,
                    "  gcbc hidden {} epochs {} final loss {:.6}",
                    g.net.hidden(),
                    g.params.epochs,
                    g.final_loss().unwrap_or(f64::NAN)
                )?,
                None => writeln!(out, "  gcbc none")?,
            }
            for (k, v) in &m.meta {
                writeln!(out, "  {k} = {v}")?;
            }
        }
    }
    Ok(out)
}
