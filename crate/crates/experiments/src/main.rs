use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dpvi_core::{brute_force, DiscreteModel};
use dpvi_experiments::io::load_points_csv;
use dpvi_experiments::record::read_jsonl;
use dpvi_experiments::runner::{stream_id, stream_rng};
use dpvi_experiments::summary::write_summary_csv;
use dpvi_experiments::{run_experiment, summarize, write_outputs, ExperimentConfig, ExperimentId};
use dpvi_models::{BinaryHmm, BinaryHmmParams, Dpmm, IsingLattice, Nig};
use serde::Deserialize;
use serde_json::json;

/// Worker threads for `run`; defaults to all cores.
const THREADS_ENV: &str = "DPVI_THREADS";

#[derive(Parser)]
#[command(name = "dpvi", version, about = "Discrete particle variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write runs.jsonl, runs.csv and summary.csv.
    Run {
        experiment: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run a single particle count instead of the configured list.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Exact answers for small models by enumeration or transfer matrix.
    Oracle {
        model: OracleModel,
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute summary.csv from the runs.jsonl in a directory.
    Summarize { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleModel {
    BinaryHmm,
    Ising,
    Dpmm,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleConfig {
    #[serde(default)]
    seed: u64,
    /// Binary HMM sequence length.
    length: Option<usize>,
    side: Option<usize>,
    beta: Option<f64>,
    data_path: Option<PathBuf>,
    alpha: Option<f64>,
    tau: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
}

fn oracle(model: OracleModel, path: &PathBuf) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let c: OracleConfig = toml::from_str(&text).context("parsing oracle config")?;
    Ok(match model {
        OracleModel::BinaryHmm => {
            let params = BinaryHmmParams::reference();
            let mut rng = stream_rng(c.seed, stream_id(&[0xB1]));
            let (hidden, obs) = params.sample(c.length.unwrap_or(10), &mut rng);
            let fb = dpvi_baselines::forward_backward(&params, &obs)?;
            let enumerated = if obs.len() <= 20 {
                Some(brute_force(&BinaryHmm::new(params, obs.clone())?, 1 << 20)?.log_z)
            } else {
                None
            };
            json!({"observations": obs, "hidden": hidden, "log_z": fb.log_z,
                   "log_z_enumerated": enumerated, "marginals": fb.marginals})
        }
        OracleModel::Ising => {
            let lattice = IsingLattice::new(c.side.unwrap_or(4), c.beta.unwrap_or(1.0))?;
            json!({"side": lattice.side(), "beta": lattice.beta(), "log_z": lattice.exact_log_z()?})
        }
        OracleModel::Dpmm => {
            let Some(data_path) = c.data_path else {
                bail!("the dpmm oracle needs `data_path`");
            };
            let points = load_points_csv(&data_path)?.points;
            let dim = points[0].len();
            let lik = Nig::new(dim, c.tau.unwrap_or(dpvi_experiments::config::NIG_TAU), c.a.unwrap_or(1.0), c.b.unwrap_or(1.0))?;
            let model = Dpmm::new(lik, c.alpha.unwrap_or(0.5), points)?;
            let exact = brute_force(&model, 1 << 20)?;
            let map = exact
                .joint
                .as_ref()
                .and_then(|j| j.iter().max_by(|x, y| x.1.total_cmp(&y.1)))
                .map(|(a, s)| json!({"assignment": a, "log_score": s}));
            json!({"points": model.num_vars(), "log_z": exact.log_z, "map": map})
        }
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            experiment,
            config,
            seed,
            k,
            repeats,
            out,
        } => {
            let id: ExperimentId = experiment.parse()?;
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::new(id),
            };
            if cfg.experiment != id {
                bail!("config is for experiment {}, not {id}", cfg.experiment);
            }
            cfg.seed = seed.or(cfg.seed);
            cfg.repeats = repeats.or(cfg.repeats);
            if let Some(k) = k {
                cfg.ks = Some(vec![k]);
            }
            if let Ok(n) = std::env::var(THREADS_ENV) {
                let n: usize = n.parse().with_context(|| format!("{THREADS_ENV} must be a positive integer"))?;
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            }
            let records = run_experiment(&cfg)?;
            write_outputs(&out, &records)?;
            for row in summarize(&records) {
                println!(
                    "{:<16} {:<24} k={:<4} {:<10} {:<22} n={:<4} mean={:.6} se={:.6}",
                    row.experiment, row.group, row.k, row.setting, row.metric, row.n, row.mean, row.se
                );
            }
            eprintln!("wrote {} runs to {}", records.len(), out.display());
        }
        Command::Oracle { model, config } => {
            println!("{}", serde_json::to_string_pretty(&oracle(model, &config)?)?);
        }
        Command::Summarize { dir } => {
            let records = read_jsonl(&dir.join("runs.jsonl"))?;
            let rows = summarize(&records);
            write_summary_csv(&dir.join("summary.csv"), &rows)?;
            eprintln!("summarized {} runs into {} rows", records.len(), rows.len());
        }
    }
    Ok(())
}
