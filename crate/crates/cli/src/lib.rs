//! Front end of the `eitats` binary: configuration, the subcommands, and
//! atomic output with a run manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{sha256_hex, OutputEntry, RunManifest, SeedRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_FILE: &str = "plot_data.csv";

#[derive(Debug, Parser)]
#[command(
    name = "eitats",
    version,
    about = "Discriminate EIT from Autler-Townes splitting by AIC model selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Probe absorption and ground-state coherence spectra for a list of control strengths.
    Spectra(RunArgs),
    /// AIC weights of both model families across a control-field sweep.
    Scan(RunArgs),
    /// Transition points as the ground-state populations are redistributed.
    PopulationStudy(RunArgs),
    /// Coherence quantifier profiles from pulsed-control transients and their weights.
    Quantifier(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectra(_) => "spectra",
            Command::Scan(_) => "scan",
            Command::PopulationStudy(_) => "population-study",
            Command::Quantifier(_) => "quantifier",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Spectra(a) | Command::Scan(a) | Command::PopulationStudy(a) | Command::Quantifier(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Args)]
pub struct RunArgs {
    /// TOML configuration; the built-in reference configuration when omitted.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Base seed for fits and noise (overrides `fit.seed` and `scan.seed_base`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a tidy `x,y,series` table of every plotted quantity.
    #[arg(long)]
    pub emit_plot_data: bool,
}

/// What a successful run wrote.
#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

fn ensure_writable(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let probe = dir.join(format!(".eitats-probe.{}", std::process::id()));
    fs::write(&probe, b"").map_err(|e| CliError::io(dir.display(), e))?;
    fs::remove_file(&probe).map_err(|e| CliError::io(probe.display(), e))
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<Vec<OutputEntry>, CliError> {
    let mut index = Vec::with_capacity(outcome.artifacts.len());
    for a in &outcome.artifacts {
        let path = dir.join(&a.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
        }
        eitats::io::write_atomic(&path, &a.bytes).map_err(|e| CliError::io(path.display(), e))?;
        index.push(OutputEntry {
            path: a.path.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len(),
        });
    }
    Ok(index)
}

/// Loads the configuration, runs `command` and writes its outputs plus the manifest.
pub fn execute(command: &Command) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64());
    let args = command.args();

    let (mut cfg, config_bytes) = match &args.config {
        Some(path) => {
            let (c, b) = RunConfig::load(path)?;
            (c, Some(b))
        }
        None => (RunConfig::default(), None),
    };
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = Some(out.clone());
    }
    let out_dir = cfg.output.dir.clone().ok_or_else(|| {
        CliError::Config("no output directory: pass --out or set [output] dir".into())
    })?;
    ensure_writable(&out_dir)?;

    let mut outcome = match command {
        Command::Spectra(_) => commands::spectra(&cfg)?,
        Command::Scan(_) => commands::scan(&cfg)?,
        Command::PopulationStudy(_) => commands::population_study_cmd(&cfg)?,
        Command::Quantifier(_) => commands::quantifier_cmd(&cfg)?,
    };
    if args.emit_plot_data {
        let text = eitats::io::plot_csv(&outcome.plot)?;
        outcome.artifacts.push(commands::Artifact {
            path: PLOT_FILE.to_string(),
            bytes: text.into_bytes(),
        });
    }
    let outputs = write_outputs(&out_dir, &outcome)?;

    let config_path = args.config.as_ref().map(|p| p.display().to_string());
    let mut manifest = RunManifest::new(command.name(), config_path.clone(), cfg.clone());
    if let (Some(path), Some(bytes)) = (config_path, config_bytes) {
        manifest.input_hashes.insert(path, sha256_hex(&bytes));
    }
    manifest.input_hashes.extend(outcome.inputs);
    manifest.seeds = SeedRecord {
        fit_seed: cfg.fit.seed,
        noise_seeds: outcome.noise_seeds,
    };
    manifest.started_unix_s = started_unix_s;
    manifest.outputs = outputs;
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    let text = eitats::io::to_json(&manifest)?;
    let path = out_dir.join(MANIFEST_FILE);
    eitats::io::write_atomic(&path, text.as_bytes()).map_err(|e| CliError::io(path.display(), e))?;
    Ok(RunReport { out_dir, manifest })
}
