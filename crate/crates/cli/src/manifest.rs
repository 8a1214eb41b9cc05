//! Run manifest: what was run, on which inputs, and what came out.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedRecord {
    /// Base seed of the multi-start fits; each scan point mixes in its indices.
    pub fit_seed: u64,
    /// Noise realisations of the noisy scans.
    pub noise_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: Option<String>,
    /// Effective configuration after command-line overrides.
    pub config: RunConfig,
    pub parallel_feature: bool,
    /// Input file path → SHA-256.
    pub input_hashes: BTreeMap<String, String>,
    pub seeds: SeedRecord,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<String>, config: RunConfig) -> Self {
        RunManifest {
            tool: "eitats",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_path,
            config,
            parallel_feature: cfg!(feature = "parallel"),
            input_hashes: BTreeMap::new(),
            seeds: SeedRecord {
                fit_seed: 0,
                noise_seeds: Vec::new(),
            },
            started_unix_s: 0.0,
            wall_clock_s: 0.0,
            outputs: Vec::new(),
        }
    }
}
