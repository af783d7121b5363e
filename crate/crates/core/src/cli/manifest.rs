use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{CliResult, Context};
use crate::scm::{zoo, Scm};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScmRef {
    pub name: String,
    pub hash: String,
}

impl ScmRef {
    pub fn of(scm: &Scm) -> Self {
        Self {
            name: scm.name().into(),
            hash: scm.hash().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the output directory, which holds the manifest.
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce a run, plus the hashes of its outputs.
///
/// `hash` covers every field except `outputs` and itself, so it is known
/// before any artifact is written and can be embedded in each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool_version: String,
    pub command: String,
    /// Merged flag values as given.
    pub args: Value,
    /// Fully resolved training and estimator settings.
    pub resolved: Value,
    pub seeds: Vec<u64>,
    pub scms: Vec<ScmRef>,
    pub zoo_version: String,
    pub outputs: Vec<OutputRecord>,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ExperimentManifest {
    pub fn new(command: &str, args: Value, resolved: Value, seeds: Vec<u64>, scms: Vec<ScmRef>) -> Self {
        let mut m = Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            resolved,
            seeds,
            scms,
            zoo_version: zoo::version_hash(),
            outputs: Vec::new(),
            hash: String::new(),
        };
        m.hash = m.compute_hash();
        m
    }

    pub fn compute_hash(&self) -> String {
        let mut bare = self.clone();
        bare.outputs.clear();
        bare.hash.clear();
        sha256_hex(&serde_json::to_vec(&bare).expect("manifest serializes"))
    }

    /// Writes `contents` under the output directory and records its hash.
    pub fn write(&mut self, ctx: &Context, rel: &Path, contents: &[u8]) -> CliResult<PathBuf> {
        let path = ctx.output_path(rel)?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, contents)?;
        self.outputs.push(OutputRecord {
            path: rel.to_path_buf(),
            sha256: sha256_hex(contents),
        });
        Ok(path)
    }

    /// Writes the manifest to `<stem>.manifest.json` at the top of the
    /// output directory, where recorded paths are rooted.
    pub fn finish(&self, ctx: &Context, primary: &Path) -> CliResult<PathBuf> {
        let path = ctx.output_path(&manifest_name(primary))?;
        fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(path)
    }
}

pub fn manifest_name(primary: &Path) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    PathBuf::from(format!("{stem}.manifest.json"))
}

/// `dir/stem.<suffix>` for `dir/stem.ext`.
pub fn sibling(primary: &Path, suffix: &str) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    primary.with_file_name(format!("{stem}.{suffix}"))
}

/// CSV preamble carrying the manifest hash.
pub fn csv_header(hash: &str) -> String {
    format!("# manifest={hash}\n")
}
