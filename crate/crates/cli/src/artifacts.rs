//! Stamped, atomically written output files and the run manifest.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// Provenance carried by every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
}

impl Stamp {
    pub fn new(config_hash: &str) -> Self {
        Stamp {
            tool: "riskbench".into(),
            version: riskbench_core::VERSION.into(),
            config_hash: config_hash.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {} config {}", self.tool, self.version, self.config_hash)
    }
}

/// JSON artifacts wrap their payload with the stamp.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub artifact: String,
    pub data: T,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    /// File name to hex SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

pub struct Artifacts {
    pub dir: PathBuf,
    pub stamp: Stamp,
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

impl Artifacts {
    pub fn new(dir: PathBuf, config_hash: &str) -> Self {
        Artifacts { dir, stamp: Stamp::new(config_hash) }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn put(&self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        write_atomic(&self.path(name), bytes)?;
        log::info!("wrote {}", self.path(name).display());
        self.record(name, bytes)
    }

    fn record(&self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.path(MANIFEST);
        let mut manifest: Manifest = match std::fs::read(&path) {
            Ok(b) => serde_json::from_slice(&b).unwrap_or_default(),
            Err(_) => Manifest::default(),
        };
        if manifest.config_hash != self.stamp.config_hash {
            manifest = Manifest {
                version: self.stamp.version.clone(),
                config_hash: self.stamp.config_hash.clone(),
                artifacts: BTreeMap::new(),
            };
        }
        manifest.artifacts.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }

    pub fn json<T: Serialize>(&self, name: &str, kind: &str, data: &T) -> anyhow::Result<()> {
        let env = Envelope { stamp: self.stamp.clone(), artifact: kind.to_string(), data };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    /// CSV with a leading `#` provenance comment.
    pub fn csv(&self, name: &str, body: &str) -> anyhow::Result<()> {
        self.put(name, format!("# {}\n{body}", self.stamp.line()).as_bytes())
    }

    /// SVG bodies are rendered with the stamp as their comment already.
    pub fn svg(&self, name: &str, body: &str) -> anyhow::Result<()> {
        self.put(name, body.as_bytes())
    }

    pub fn markdown(&self, name: &str, body: &str) -> anyhow::Result<()> {
        self.put(name, format!("<!-- {} -->\n{body}", self.stamp.line()).as_bytes())
    }

    /// Reads a JSON artifact written by an earlier stage.
    pub fn read_json<T: DeserializeOwned>(&self, name: &str, needed_by: &str) -> anyhow::Result<Envelope<T>> {
        let path = self.path(name);
        let text = std::fs::read_to_string(&path).map_err(|_| MissingArtifact {
            name: name.to_string(),
            dir: self.dir.clone(),
            needed_by: needed_by.to_string(),
        })?;
        serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
    }
}

/// An earlier pipeline stage has not produced its output yet.
#[derive(Debug)]
pub struct MissingArtifact {
    pub name: String,
    pub dir: PathBuf,
    pub needed_by: String,
}

impl std::fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "missing artifact `{}` in {} (needed by `{}`; run the stage that produces it first)",
            self.name,
            self.dir.display(),
            self.needed_by
        )
    }
}

impl std::error::Error for MissingArtifact {}
