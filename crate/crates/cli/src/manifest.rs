use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Resolved;
use crate::CliError;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to repeat a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub tool_version: String,
    pub dataset: Option<String>,
    /// SHA-256 over the dataset's files; see [`dataset_checksum`].
    pub dataset_checksum: Option<String>,
    pub seed: u64,
    pub config_file: Option<PathBuf>,
    pub config: Resolved,
    /// Relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        let value = serde_json::to_value(self).expect("manifest serializes");
        let text = serde_json::to_string_pretty(&value).expect("value serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
    }
}

/// Hashes every `NAME_*.txt` file in `dir`, sorted by file name, as
/// `name \0 length(u64 LE) bytes`.
pub fn dataset_checksum(dir: &Path, name: &str) -> Result<String, CliError> {
    let prefix = format!("{name}_");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|f| f.to_str())
                .is_some_and(|f| f.starts_with(&prefix) && f.ends_with(".txt"))
        })
        .collect();
    files.sort();
    let mut hasher = Sha256::new();
    for path in &files {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let file = path.file_name().and_then(|f| f.to_str()).unwrap_or_default();
        hasher.update(file.as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_tracks_content_and_ignores_other_files() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("D_A.txt"), "1, 2\n").unwrap();
        fs::write(tmp.path().join("D_graph_indicator.txt"), "1\n1\n").unwrap();
        let a = dataset_checksum(tmp.path(), "D").unwrap();
        assert_eq!(a.len(), 64);
        fs::write(tmp.path().join("README"), "x").unwrap();
        fs::write(tmp.path().join("E_A.txt"), "x").unwrap();
        assert_eq!(dataset_checksum(tmp.path(), "D").unwrap(), a);
        fs::write(tmp.path().join("D_A.txt"), "2, 1\n").unwrap();
        assert_ne!(dataset_checksum(tmp.path(), "D").unwrap(), a);
    }
}
