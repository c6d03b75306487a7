//! Command-line front end. Every run writes its resolved configuration to
//! `run.json` so `locality replay` can reproduce it.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::LocalityError;
use crate::patching::ChannelKind;
use crate::trace::{CycleLabel, Level};
pub use commands::{execute, load_model, resolve};
pub use config::{CommandKind, JacobianMethod, RunConfig, SaeOptions, SigmaMode};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] LocalityError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            Self::Usage(_) => "usage",
            Self::Runtime(e) => e.kind(),
        };
        json!({ "error": kind, "message": self.to_string() })
    }
}

pub(crate) fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

#[derive(Parser, Debug)]
#[command(name = "locality", version, about = "Interaction-locality measurements")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a toy-model activation trace and parameter bundle.
    GenToy(RunArgs),
    /// Noise patching: impact fields and locality summaries.
    Patch(RunArgs),
    /// Jacobian kernels and structural locality tables.
    Jacobian(RunArgs),
    /// Train a sparse autoencoder and report feature locality.
    Sae(RunArgs),
    /// State-change curves and critical cycle selection.
    Converge(RunArgs),
    /// Object-scene zero-ablation near fractions.
    Object3d(RunArgs),
    /// Merge run summaries into one JSON plus SVG charts.
    Report(RunArgs),
    /// Re-run a command from its run.json manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated, e.g. `within-L,within-H,cross-HH`.
    #[arg(long)]
    channels: Option<String>,
    #[arg(long, value_enum)]
    sigma_mode: Option<SigmaMode>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    geometry: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    examples: Option<usize>,
    /// Analysis cycle such as `H1L1`.
    #[arg(long)]
    cycle: Option<String>,
    #[arg(long)]
    probe: Option<usize>,
    #[arg(long)]
    target_drop: Option<f64>,
    #[arg(long)]
    threshold_frac: Option<f64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<JacobianMethod>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    level: Option<String>,
    /// Field label such as `H1L1/H`.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    k_target: Option<usize>,
    #[arg(long)]
    surrogate: Option<String>,
    #[arg(long)]
    feature_dims: Option<usize>,
    /// Input run directories (report).
    inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

fn merge(kind: CommandKind, a: RunArgs) -> Result<(RunConfig, PathBuf, Option<usize>), CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let c = RunConfig::load(p)?;
            if c.command != kind {
                return Err(usage(format!(
                    "config is for `{}`, not `{}`",
                    c.command.as_str(),
                    kind.as_str()
                )));
            }
            c
        }
        None => RunConfig::empty(kind),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if a.$f.is_some() { cfg.$f = a.$f; } )* };
    }
    set!(seed, sigma_mode, sigma, task, geometry, model, trace, examples, cycle, probe,
         target_drop, threshold_frac, resamples, method, eps, top_k, k_target, surrogate,
         feature_dims);
    if let Some(c) = &a.channels {
        cfg.channels = Some(ChannelKind::parse_list(c).map_err(|e| usage(e.to_string()))?);
    }
    if let Some(l) = &a.level {
        cfg.level = Some(l.parse::<Level>().map_err(|e| usage(e.to_string()))?);
    }
    if let Some(l) = &a.label {
        cfg.label = Some(l.parse::<CycleLabel>().map_err(|e| usage(e.to_string()))?);
    }
    if a.features.is_some()
        || a.l1.is_some()
        || a.learning_rate.is_some()
        || a.epochs.is_some()
        || a.batch_size.is_some()
    {
        let o = cfg.sae.get_or_insert_with(SaeOptions::default);
        o.features = a.features.or(o.features);
        o.l1 = a.l1.or(o.l1);
        o.learning_rate = a.learning_rate.or(o.learning_rate);
        o.epochs = a.epochs.or(o.epochs);
        o.batch_size = a.batch_size.or(o.batch_size);
    }
    if !a.inputs.is_empty() {
        cfg.inputs = a.inputs;
    }
    Ok((cfg, a.out, a.workers))
}

/// Resolves and executes `cfg` on a pool of `workers` threads.
pub fn run(cfg: RunConfig, out: &Path, workers: Option<usize>) -> Result<(), CliError> {
    let cfg = resolve(cfg)?;
    match workers {
        Some(0) => Err(usage("--workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| usage(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| execute(&cfg, out))
        }
        None => execute(&cfg, out),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (kind, args) = match cli.command {
        Cmd::Replay(r) => {
            let text = std::fs::read_to_string(&r.manifest)
                .map_err(|e| LocalityError::io(&r.manifest, e))?;
            let cfg: RunConfig = serde_json::from_str(&text).map_err(LocalityError::from)?;
            return run(cfg, &r.out, r.workers);
        }
        Cmd::GenToy(a) => (CommandKind::GenToy, a),
        Cmd::Patch(a) => (CommandKind::Patch, a),
        Cmd::Jacobian(a) => (CommandKind::Jacobian, a),
        Cmd::Sae(a) => (CommandKind::Sae, a),
        Cmd::Converge(a) => (CommandKind::Converge, a),
        Cmd::Object3d(a) => (CommandKind::Object3d, a),
        Cmd::Report(a) => (CommandKind::Report, a),
    };
    let (cfg, out, workers) = merge(kind, args)?;
    run(cfg, &out, workers)
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Errors go to stderr as one JSON object.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return EXIT_USAGE;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
