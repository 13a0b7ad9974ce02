//! Run manifests: a sidecar JSON written next to every output file with the
//! fully resolved configuration, so any artifact can be regenerated from its
//! manifest alone.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

use crate::config::Globals;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub master_seed: u64,
    pub jobs: Option<usize>,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub artifact_version: String,
    pub wall_ms: u128,
    /// Total search expansions, where the command tracks them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expanded_nodes_total: Option<u64>,
}

/// Collects everything a manifest needs while a command runs.
pub struct ManifestBuilder {
    command: String,
    start: Instant,
    globals_json: serde_json::Value,
    seed: u64,
    jobs: Option<usize>,
    command_config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    expanded_nodes_total: Option<u64>,
}

impl ManifestBuilder {
    pub fn new(command: &str, globals: &Globals, command_config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            start: Instant::now(),
            globals_json: serde_json::to_value(globals).expect("globals serialize"),
            seed: globals.seed,
            jobs: globals.jobs,
            command_config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            expanded_nodes_total: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn expanded_nodes(&mut self, total: u64) -> &mut Self {
        self.expanded_nodes_total = Some(total);
        self
    }

    /// Writes `<output>.manifest.json` next to every declared output.
    pub fn write_sidecars(&self) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.clone(),
            argv: std::env::args().collect(),
            master_seed: self.seed,
            jobs: self.jobs,
            config: serde_json::json!({
                "globals": self.globals_json,
                "command": self.command_config,
            }),
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_ms: self.start.elapsed().as_millis(),
            expanded_nodes_total: self.expanded_nodes_total,
        };
        for output in &self.outputs {
            let mut sidecar = output.clone().into_os_string();
            sidecar.push(".manifest.json");
            modc::formats::write_json(Path::new(&sidecar), &manifest)?;
        }
        Ok(())
    }
}
