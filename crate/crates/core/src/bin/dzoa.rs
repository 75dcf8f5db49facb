use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dzoa::harness::{self, ExperimentConfig};
use dzoa::problem::synthesize_data;
use dzoa::topology::ConsensusMatrices;
use dzoa::Error;

#[derive(Parser)]
#[command(name = "dzoa", version, about = "Distributed zeroth-order ADMM for private lasso")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write the CSV form of L+, L-, H and Q to the output directory.
    #[arg(long)]
    export_matrices: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset and write it as CSV.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output file; `<out-dir>/data.csv` by default.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Normalize before writing.
        #[arg(long)]
        normalize: bool,
    },
    /// Run D-ZOA for every seed and privacy target.
    Run {
        #[command(flatten)]
        common: Common,
        /// Record the inner-loop trace of every agent and round.
        #[arg(long)]
        trace_inner: bool,
    },
    /// Compare D-ZOA against the explicit-noise baseline over the privacy grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Print the privacy accountant report for one target.
    Privacy {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Print the outer and inner convergence bounds for one target.
    Bound {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
}

fn load(common: &Common) -> dzoa::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.base_seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.run.out_dir = dir.clone();
    }
    cfg.validate()?;
    if common.export_matrices {
        let graph = cfg.build_graph()?;
        let dir = cfg.run.out_dir.join("matrices");
        fs::create_dir_all(&dir)?;
        ConsensusMatrices::build(&graph, cfg.problem.features)?.export_csv(&dir)?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> dzoa::Result<()> {
    match cli.command {
        Command::Synth {
            common,
            output,
            normalize,
        } => {
            let cfg = load(&common)?;
            let (mut data, _) = synthesize_data(
                cfg.graph.agents,
                cfg.problem.samples_per_agent,
                cfg.problem.features,
                cfg.problem.noise_std,
                cfg.run.base_seed,
            )?;
            if normalize {
                data = data.normalize()?;
            }
            let path = output.unwrap_or_else(|| cfg.run.out_dir.join("data.csv"));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            data.save_csv(&path)?;
            println!("{}", path.display());
        }
        Command::Run { common, trace_inner } => {
            let mut cfg = load(&common)?;
            cfg.run.trace_inner |= trace_inner;
            let report = harness::run_experiment(&cfg)?;
            println!("run_id,final_error");
            for r in &report.rows {
                println!("{},{}", r.run_id, r.final_error);
            }
        }
        Command::Sweep { common } => {
            let cfg = load(&common)?;
            let rows = harness::sweep(&cfg)?;
            println!("method,epsilon,delta,epsilon_bar,mean_final_error,stderr");
            for r in &rows {
                println!(
                    "{},{},{},{},{},{}",
                    r.method.name(),
                    r.epsilon,
                    r.delta,
                    r.epsilon_bar,
                    r.mean_final_error,
                    r.stderr_final_error
                );
            }
        }
        Command::Privacy {
            common,
            epsilon,
            delta,
            json,
        } => {
            let cfg = load(&common)?;
            let report = harness::accountant_for(&cfg, epsilon, delta)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
        }
        Command::Bound {
            common,
            epsilon,
            delta,
        } => {
            let cfg = load(&common)?;
            println!("{}", serde_json::to_string_pretty(&harness::bounds_for(&cfg, epsilon, delta)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> ExitCode {
    let line = serde_json::json!({ "kind": e.kind(), "message": e.to_string() });
    eprintln!("error: {line}");
    ExitCode::FAILURE
}
