//! `qoe`: offline training and online configuration search.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qoe_core::dataset::{encode_resolution, Kqi};
use qoe_core::qoe_objective::Method;
use qoe_core::Error;

use commands::{ModelKind, OptimizeArgs};
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "qoe",
    version,
    about = "Cloud-gaming QoE estimation and network configuration search"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides paths.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print errors as a JSON envelope on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset to <out>/synthetic.csv.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Load, filter outliers, split and persist scaler/discretizer specs.
    Preprocess {
        #[arg(long)]
        data: Option<PathBuf>,
        /// IQR fence factor; `inf` keeps every row.
        #[arg(long)]
        iqr_factor: Option<f64>,
    },
    /// Train one model family for one KQI (or `all`).
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long, default_value = "all")]
        target: String,
        /// Feature count, range `1-9` or list `1,3,5`; defaults to all.
        #[arg(long)]
        features: Option<String>,
        /// Processed CSV (defaults to <out>/processed.csv).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Search (PRB, resolution, FPS) for the best trade-off.
    Optimize {
        #[arg(long, value_enum, default_value = "tt")]
        model: ModelKind,
        #[arg(long)]
        alpha: Option<f64>,
        /// Comma-separated alphas; writes <out>/alpha_sweep.csv.
        #[arg(long)]
        alpha_sweep: Option<String>,
        /// Minimum resolution label (720p, 1080p, 1440p, 4K) or index.
        #[arg(long)]
        min_res: Option<String>,
        /// ttopt, brute or both.
        #[arg(long, default_value = "ttopt")]
        method: String,
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Time model loading and inference on the test split.
    Benchmark {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn parse_min_res(s: &str) -> Result<u8, Error> {
    match s.trim().parse::<u8>() {
        Ok(i) if i <= 3 => Ok(i),
        Ok(_) => Err(Error::config(format!("resolution index {s} outside 0..=3"))),
        Err(_) => encode_resolution(s),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.paths.out_dir = o;
    }
    cfg.validate()?;
    match cli.command {
        Command::Synth { n, noise } => {
            let n = n.unwrap_or(cfg.synth.n);
            if n == 0 {
                return Err(Error::config("--n must be at least 1").into());
            }
            commands::synth(&cfg, n, noise.unwrap_or(cfg.synth.noise))
        }
        Command::Preprocess { data, iqr_factor } => {
            if let Some(k) = iqr_factor {
                cfg.preprocess.iqr_factor = k;
            }
            let data = data
                .or_else(|| cfg.paths.data.clone())
                .ok_or_else(|| Error::config("no input CSV: pass --data or set paths.data"))?;
            commands::preprocess(&cfg, &data)
        }
        Command::Train {
            model,
            target,
            features,
            data,
        } => {
            let targets = if target.eq_ignore_ascii_case("all") {
                Kqi::ALL.to_vec()
            } else {
                vec![target.parse::<Kqi>()?]
            };
            let counts = features
                .as_deref()
                .map(commands::parse_counts)
                .transpose()?;
            commands::train(&cfg, model, &targets, counts.as_deref(), data.as_deref())
        }
        Command::Optimize {
            model,
            alpha,
            alpha_sweep,
            min_res,
            method,
            runs,
        } => {
            let sweep = alpha_sweep.is_some();
            let alphas = match (&alpha_sweep, alpha) {
                (Some(s), _) => commands::parse_floats(s)?,
                (None, Some(a)) => vec![a],
                (None, None) => vec![cfg.objective.alpha],
            };
            if alphas.is_empty() {
                return Err(Error::config("empty --alpha-sweep").into());
            }
            let min_res = match (&min_res, sweep) {
                (Some(s), _) => vec![parse_min_res(s)?],
                (None, true) => vec![0, 1, 2, 3],
                (None, false) => vec![cfg.objective.min_res],
            };
            let methods = if method.eq_ignore_ascii_case("both") {
                vec![Method::Ttopt, Method::Brute]
            } else {
                vec![method.parse::<Method>()?]
            };
            if !sweep && methods.len() > 1 {
                return Err(Error::config("--method both needs --alpha-sweep").into());
            }
            commands::optimize_cmd(
                &cfg,
                &OptimizeArgs {
                    kind: model,
                    alphas,
                    min_res,
                    methods,
                    runs,
                    sweep,
                },
            )
        }
        Command::Benchmark { runs, data } => commands::benchmark(&cfg, runs, data.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json_errors;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e, json),
    }
}

fn report(e: &CliError, json: bool) -> ExitCode {
    let code = e.exit_code();
    if json {
        let env = serde_json::json!({
            "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": code }
        });
        eprintln!("{env}");
    } else {
        eprintln!("error: {e}");
    }
    ExitCode::from(code as u8)
}
