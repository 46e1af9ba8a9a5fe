use super::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Manifests are named after the command, so commands can share a directory.
pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and get the same bytes back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// sha256 of the effective configuration text, if the command has one.
    pub config_hash: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<FileDigest, CliError> {
    let mut f = fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(h.finalize()),
    })
}

/// An output directory. Files land under a temporary name and are renamed
/// into place once complete; the manifest is written last.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::data(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn tmp_path(&self, name: &str) -> PathBuf {
        self.root.join(format!(".{name}.tmp"))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.write_with(name, |w| w.write_all(bytes))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Streams into `name` through a buffered writer, then renames.
    pub fn write_with<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let tmp = self.tmp_path(name);
        let io = |e: std::io::Error| CliError::data(format!("{}: {e}", tmp.display()));
        let file = fs::File::create(&tmp).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        body(&mut w).map_err(io)?;
        let file = w.into_inner().map_err(|e| io(e.into_error()))?;
        file.sync_all().map_err(io)?;
        let dest = self.path(name);
        fs::rename(&tmp, &dest).map_err(io)?;
        self.written.push(file_digest(&dest).map(|mut d| {
            d.path = name.to_string();
            d
        })?);
        Ok(())
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        manifest.outputs = std::mem::take(&mut self.written);
        self.write_json(&manifest_name(&manifest.command), &manifest)?;
        Ok(manifest)
    }
}
