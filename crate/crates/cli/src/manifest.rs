use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl Into<String>, contents: &[u8]) -> Self {
        Self {
            path: path.into(),
            sha256: hex::encode(Sha256::digest(contents)),
        }
    }
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub inputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    /// SHA-256 of the manifest with `digest` and `created` left out.
    pub digest: String,
    /// Unix seconds; the only field allowed to differ between re-runs.
    pub created: u64,
}

#[derive(Serialize)]
struct Digested<'a> {
    tool: &'a str,
    version: &'a str,
    subcommand: &'a str,
    inputs: &'a [FileDigest],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    outputs: &'a [FileDigest],
}

impl RunManifest {
    pub fn content_digest(&self) -> String {
        let body = Digested {
            tool: &self.tool,
            version: &self.version,
            subcommand: &self.subcommand,
            inputs: &self.inputs,
            seed: self.seed,
            outputs: &self.outputs,
        };
        let bytes = serde_json::to_vec(&body).expect("manifest serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Read once, digest, and keep the bytes for parsing.
pub struct Input {
    pub text: String,
    pub digest: FileDigest,
}

pub fn read_input(path: &Path) -> Result<Input, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = FileDigest::of(path.display().to_string(), &bytes);
    let text = String::from_utf8(bytes).map_err(|e| CliError::Invalid {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(Input { text, digest })
}

/// The only path through which a subcommand writes files. Outputs are staged
/// in memory and flushed together with the manifest.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputDir {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn finish(
        self,
        subcommand: &str,
        inputs: Vec<FileDigest>,
        seed: Option<u64>,
    ) -> Result<RunManifest, CliError> {
        let io = |path: PathBuf| move |source| CliError::Io { path, source };
        std::fs::create_dir_all(&self.dir).map_err(io(self.dir.clone()))?;
        let mut outputs = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, contents).map_err(io(path.clone()))?;
            outputs.push(FileDigest::of(name.clone(), contents));
        }
        let mut manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            inputs,
            seed,
            outputs,
            digest: String::new(),
            created: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        manifest.digest = manifest.content_digest();
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(io(path.clone()))?;
        Ok(manifest)
    }
}
