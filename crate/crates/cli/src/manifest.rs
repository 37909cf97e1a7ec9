use std::path::{Path, PathBuf};

use serde::Serialize;
use typegaze_core::io::write_atomic;

use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct Versions {
    pub typegaze: &'static str,
    pub checkpoint_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions { typegaze: env!("CARGO_PKG_VERSION"), checkpoint_format: typegaze_autodiff::VERSION }
    }
}

/// Record of one command run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub versions: Versions,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| CliError::data(e.to_string()))?;
        bytes.push(b'\n');
        Ok(write_atomic(path, &bytes)?)
    }
}

/// `dir/manifest.json` for directory outputs, `file.manifest.json` next to file outputs.
pub fn manifest_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}
