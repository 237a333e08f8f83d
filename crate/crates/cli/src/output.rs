//! Output plumbing: CSV files with `#`-prefixed metadata lines and a JSON
//! run manifest next to every artifact.

use rab_core::regions::SolverSettings;
use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Everything needed to rerun a subcommand and get identical bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub out_dir: String,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub horizon: Option<u64>,
    pub jobs: Option<usize>,
    pub solver: SolverSettings,
    pub version: String,
    pub outputs: Vec<String>,
}

pub fn version_string() -> String {
    match option_env!("RAB_GIT_DESCRIBE") {
        Some(desc) if !desc.is_empty() => format!("rab {} ({desc})", env!("CARGO_PKG_VERSION")),
        _ => format!("rab {}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Invalid(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn write_manifest(dir: &Path, name: &str, manifest: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(dir, name, &(json + "\n"))?;
    Ok(())
}

/// Builds a CSV document: metadata lines first (each prefixed with `# `),
/// then the header row, then data rows.
pub fn csv_document(meta: &[String], header: &str, rows: &[String]) -> String {
    let mut out = String::new();
    for m in meta {
        out.push_str("# ");
        out.push_str(m);
        out.push('\n');
    }
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}
