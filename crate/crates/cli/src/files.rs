//! Artifact reading and writing. Every write is atomic.

use std::path::Path;

use serde::{Deserialize, Serialize};
use switchmorse::dynamics::SwitchingModel;
use switchmorse::io::write_atomic;

use crate::error::{CliError, CliResult};

pub fn read(path: &Path, what: &str) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, format!("cannot read {what}: {e}")))
}

pub fn write(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::io(path, e))
}

/// Writes a CSV together with `<stem>.meta.json` holding the header.
pub fn write_csv(path: &Path, csv: &str, header: &serde_json::Value) -> CliResult<()> {
    write(path, csv)?;
    write(&path.with_extension("meta.json"), &serde_json::to_string_pretty(header).expect("header serializes"))
}

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<serde_json::Value>,
    pub model: SwitchingModel,
}

/// Accepts both the wrapped `{header, model}` form and a bare model.
pub fn read_model(path: &Path) -> CliResult<SwitchingModel> {
    let text = read(path, "model")?;
    if let Ok(f) = serde_json::from_str::<ModelFile>(&text) {
        return Ok(f.model);
    }
    serde_json::from_str(&text).map_err(|e| CliError::io(path, format!("not a model file: {e}")))
}
