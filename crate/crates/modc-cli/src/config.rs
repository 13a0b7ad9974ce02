//! Global run configuration: defaults, optional key = value config file,
//! command-line flags, and the MODC_SEED environment override (in that
//! order; later sources win).

use std::path::Path;

use anyhow::{bail, Context, Result};
use modc::datagen::ProblemSpace;
use modc::search::SearchDefaults;
use serde::Serialize;

/// Fully resolved globals shared by every subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct Globals {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub search: SearchDefaults,
    pub space: ProblemSpace,
}

impl Default for Globals {
    fn default() -> Self {
        Globals {
            seed: 0,
            jobs: None,
            search: SearchDefaults::default(),
            space: ProblemSpace::default(),
        }
    }
}

/// Unresolved overrides coming from the config file or flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub beam_width: Option<usize>,
    pub node_budget: Option<usize>,
    pub noise_scale: Option<f64>,
}

impl Globals {
    fn apply(&mut self, ov: &Overrides) {
        if let Some(seed) = ov.seed {
            self.seed = seed;
        }
        if let Some(jobs) = ov.jobs {
            self.jobs = Some(jobs);
        }
        if let Some(beam) = ov.beam_width {
            self.search.beam_width = beam;
        }
        if let Some(budget) = ov.node_budget {
            self.search.node_budget = budget;
        }
        if let Some(noise) = ov.noise_scale {
            self.search.noise_scale = noise;
        }
    }

    /// defaults <- config file <- flags <- MODC_SEED.
    pub fn resolve(config_path: Option<&Path>, flags: &Overrides) -> Result<Globals> {
        let mut globals = Globals::default();
        if let Some(path) = config_path {
            let file_overrides = parse_config_file(path)?;
            globals.apply(&file_overrides);
        }
        globals.apply(flags);
        if let Ok(env_seed) = std::env::var("MODC_SEED") {
            globals.seed = env_seed
                .trim()
                .parse()
                .with_context(|| format!("MODC_SEED is not a valid seed: `{env_seed}`"))?;
        }
        Ok(globals)
    }
}

fn parse_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    let mut ov = Overrides::default();
    for (key, value) in &table {
        match key.as_str() {
            "seed" => ov.seed = Some(as_u64(key, value)?),
            "jobs" => ov.jobs = Some(as_u64(key, value)? as usize),
            "beam_width" => ov.beam_width = Some(as_u64(key, value)? as usize),
            "node_budget" => ov.node_budget = Some(as_u64(key, value)? as usize),
            "noise_scale" => ov.noise_scale = Some(as_f64(key, value)?),
            other => bail!("unknown config key `{other}` in {}", path.display()),
        }
    }
    Ok(ov)
}

fn as_u64(key: &str, value: &toml::Value) -> Result<u64> {
    match value.as_integer() {
        Some(i) if i >= 0 => Ok(i as u64),
        _ => bail!("config key `{key}` must be a non-negative integer, got {value}"),
    }
}

fn as_f64(key: &str, value: &toml::Value) -> Result<f64> {
    value
        .as_float()
        .or_else(|| value.as_integer().map(|i| i as f64))
        .with_context(|| format!("config key `{key}` must be a number, got {value}"))
}
