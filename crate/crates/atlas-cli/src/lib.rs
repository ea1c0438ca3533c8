//! Library surface of the atlas CLI: configuration, manifest writing, the
//! HTTP tool server, and the subcommand implementations. `main.rs` is a thin
//! argument-parsing shell over this.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod server;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "atlas", version, about = "Embedding-manifold geometry toolkit")]
pub struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Dataset path (binary dataset directory or CSV file); overrides the
    /// config file.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,

    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Seed for all sampling; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = all cores); overrides the config file.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Generate a synthetic oracle dataset.
    Synth,
    /// Convert a dataset to the canonical binary format.
    Ingest,
    /// Global covariance/Spearman spectra, clustering, and PCA export.
    GlobalGeometry,
    /// Per-point intrinsic dimensionality estimates.
    IntrinsicDim,
    /// Local PCA survey at probe locations.
    LocalGeometry,
    /// Local PCA survey across neighborhood sizes.
    Multiscale,
    /// Ridge concept directions and their stability across scales.
    Probes,
    /// Targeted-shift experiments.
    Shift,
    /// Property-transfer experiments.
    Transfer,
    /// Analogy experiments.
    Analogy,
    /// Retrieval-coherence scoring.
    Coherence,
    /// Fit the five-feature confidence model.
    Confidence,
    /// Build the geometric dictionary JSON.
    Dictionary,
    /// Serve the nine tools over HTTP.
    Serve,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::GlobalGeometry => "global-geometry",
            Command::IntrinsicDim => "intrinsic-dim",
            Command::LocalGeometry => "local-geometry",
            Command::Multiscale => "multiscale",
            Command::Probes => "probes",
            Command::Shift => "shift",
            Command::Transfer => "transfer",
            Command::Analogy => "analogy",
            Command::Coherence => "coherence",
            Command::Confidence => "confidence",
            Command::Dictionary => "dictionary",
            Command::Serve => "serve",
        }
    }
}

/// Exit codes: 0 ok, 1 usage, 2 data error, 3 internal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Internal = 3,
}

pub fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(ds) = &cli.dataset {
        config.dataset = Some(ds.clone());
        if ds.extension().map_or(false, |e| e == "csv") {
            config.dataset_format = "csv".into();
        }
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    Ok(config)
}

/// Run one subcommand inside a dedicated rayon pool of the configured size,
/// so numerical outputs can be checked across thread counts.
pub fn run_command(command: Command, config: &RunConfig) -> anyhow::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.threads > 0 {
        builder = builder.num_threads(config.threads);
    }
    let pool = builder.build()?;
    pool.install(|| dispatch(command, config))
}

fn dispatch(command: Command, config: &RunConfig) -> anyhow::Result<()> {
    match command {
        Command::Synth => commands::synth::run(config),
        Command::Ingest => commands::ingest::run(config),
        Command::GlobalGeometry => commands::global_geometry::run(config),
        Command::IntrinsicDim => commands::intrinsic_dim::run(config),
        Command::LocalGeometry => commands::local_geometry::run_local(config),
        Command::Multiscale => commands::local_geometry::run_multiscale(config),
        Command::Probes => commands::probes::run(config),
        Command::Shift => commands::composition::run_shift(config),
        Command::Transfer => commands::composition::run_transfer(config),
        Command::Analogy => commands::composition::run_analogy(config),
        Command::Coherence => commands::retrieval::run_coherence(config),
        Command::Confidence => commands::retrieval::run_confidence(config),
        Command::Dictionary => commands::retrieval::run_dictionary(config),
        Command::Serve => commands::serve::run(config),
    }
}

/// Map an error chain onto the documented exit codes.
pub fn classify_error(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<atlas_core::Error>() {
            return match core {
                atlas_core::Error::Io { .. }
                | atlas_core::Error::Malformed { .. }
                | atlas_core::Error::InvalidData(_)
                | atlas_core::Error::Json { .. } => ExitCode::Data,
                atlas_core::Error::InvalidArgument(_) | atlas_core::Error::DimensionMismatch(_) => {
                    ExitCode::Usage
                }
                atlas_core::Error::Numerical(_) => ExitCode::Internal,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ExitCode::Data;
        }
    }
    let text = err.to_string();
    if text.contains("config") || text.contains("not configured") || text.contains("unknown") {
        ExitCode::Usage
    } else {
        ExitCode::Data
    }
}
