use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentConfig, LabError};

/// Generator behind every seeded quantity: ensemble member `k` of seed `s`
/// draws from `ChaCha20Rng::seed_from_u64(s)` with `set_stream(k)`.
pub const RNG_DESCRIPTION: &str =
    "ChaCha20 (rand_chacha 0.9): seed_from_u64(seed), set_stream(member)";

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub rng: &'static str,
    pub truncation: usize,
    pub wall_time: f64,
}

impl RunMetadata {
    pub fn new(cfg: &ExperimentConfig, wall_time: f64) -> Self {
        Self {
            tool: "conflow",
            version: env!("CARGO_PKG_VERSION"),
            experiment: cfg.kind.to_string(),
            config: cfg.clone(),
            rng: RNG_DESCRIPTION,
            truncation: cfg.n,
            wall_time,
        }
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<PathBuf, LabError> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

pub(crate) fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), LabError> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), LabError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| LabError::Numerical(format!("serializing {name}: {e}")))?;
    write_text(dir, name, &text)
}
