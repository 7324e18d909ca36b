//! Command-line front end: layered configuration, figure presets and CSV
//! output for the `ambc` simulator.

pub mod config;
pub mod presets;

use std::path::{Path, PathBuf};

use clap::Parser;

use ambc::harness::{run_sweep, write_results};
use config::{ConfigError, Layered, Origin};
use presets::{plan, run_job, write_manifest, JobOutput, Scale};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "ambc",
    version,
    about = "BER simulator for multi-antenna ambient backscatter links"
)]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Figure preset to run instead of a single sweep (see --list-presets).
    #[arg(long)]
    pub preset: Option<String>,

    /// Print the available presets and exit.
    #[arg(long)]
    pub list_presets: bool,

    /// Trial budget and grid density for presets.
    #[arg(long, value_enum, default_value_t = Scale::Quick)]
    pub scale: Scale,

    /// Directory receiving CSV files and the manifest.
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,

    /// Master seed (key `seed`).
    #[arg(long)]
    pub seed: Option<String>,

    /// Worker threads (key `workers`).
    #[arg(long)]
    pub workers: Option<String>,

    /// Detector (key `detector`).
    #[arg(long)]
    pub detector: Option<String>,

    /// Observation fidelity (key `fidelity`).
    #[arg(long)]
    pub fidelity: Option<String>,

    /// Bias handling (key `bias_mode`).
    #[arg(long)]
    pub bias_mode: Option<String>,

    /// Trial cap per point (key `max_trials`).
    #[arg(long)]
    pub max_trials: Option<String>,

    /// Any config key, e.g. `--set grid=0,10,20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("run failed: {0}")]
    Runtime(#[from] ambc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Full help text including the config key table.
pub fn long_help() -> String {
    use clap::CommandFactory;
    Cli::command()
        .after_help(config::keys_help())
        .render_help()
        .to_string()
}

/// Merges defaults, the config file, `AMBC_*` variables and flags.
pub fn build_config<I>(cli: &Cli, env: I) -> Result<Layered, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut layered = Layered::default();
    if let Some(path) = &cli.config {
        layered.apply_file(path)?;
    }
    layered.apply_env(env)?;
    let flags = [
        ("seed", &cli.seed),
        ("workers", &cli.workers),
        ("detector", &cli.detector),
        ("fidelity", &cli.fidelity),
        ("bias_mode", &cli.bias_mode),
        ("max_trials", &cli.max_trials),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            layered.set(key, v, Origin::Flag, None)?;
        }
    }
    for pair in &cli.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            ConfigError::new(
                Origin::Flag,
                format!("--set expects KEY=VALUE, got `{pair}`"),
            )
        })?;
        layered.set(key.trim(), value, Origin::Flag, None)?;
    }
    Ok(layered)
}

/// Files written by a run, manifest last.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// Points that reached the trial cap, as (file, grid value).
    pub low_confidence: Vec<(PathBuf, f64)>,
}

fn summary(outputs: Vec<JobOutput>, manifest: PathBuf) -> RunSummary {
    let low_confidence = outputs
        .iter()
        .flat_map(|o| o.low_confidence.iter().map(|&v| (o.path.clone(), v)))
        .collect();
    let mut files: Vec<_> = outputs.into_iter().map(|o| o.path).collect();
    files.push(manifest);
    RunSummary {
        files,
        low_confidence,
    }
}

/// Executes a parsed command line with the given environment.
pub fn run<I>(cli: &Cli, env: I) -> Result<RunSummary, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let layered = build_config(cli, env)?;
    let out_dir = &cli.out_dir;
    match &cli.preset {
        Some(name) => {
            let jobs = plan(name, cli.scale, &layered)?;
            let seed = layered.config.master_seed;
            prepare(out_dir)?;
            let mut outputs = Vec::with_capacity(jobs.len());
            for job in &jobs {
                outputs.push(run_job(job, out_dir)?);
            }
            let manifest = write_manifest(out_dir, name, cli.scale, seed, &outputs)?;
            Ok(summary(outputs, manifest))
        }
        None => {
            let cfg = layered.finish(Origin::Merged)?;
            prepare(out_dir)?;
            let path = out_dir.join("results.csv");
            let curve = run_sweep(&cfg)?;
            write_results(&curve, &path)?;
            let output = JobOutput {
                path,
                low_confidence: curve
                    .points
                    .iter()
                    .filter(|p| p.low_confidence)
                    .map(|p| p.value)
                    .collect(),
            };
            let manifest = write_manifest(
                out_dir,
                "custom",
                cli.scale,
                cfg.master_seed,
                std::slice::from_ref(&output),
            )?;
            Ok(summary(vec![output], manifest))
        }
    }
}

fn prepare(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        CliError::Runtime(ambc::Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}
