//! Run configuration: one self-describing JSON file per experiment, with
//! command-line flags taking precedence over file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::attack::{AttackPlan, LinearBound};
use crate::classifier::ClassifierConfig;
use crate::corpus::{Format, TokenizerConfig};
use crate::discriminator::ScorerConfig;

/// Where the linear bound comes from; exactly one source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum BoundSource {
    PaperDefault,
    File { path: PathBuf },
}

impl BoundSource {
    pub fn resolve(&self) -> Result<LinearBound> {
        match self {
            BoundSource::PaperDefault => Ok(LinearBound::paper_default()),
            BoundSource::File { path } => LinearBound::load(path),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: Format,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default = "default_classifier")]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    /// Present in simulation mode; absent in defense-only mode.
    #[serde(default)]
    pub attack: Option<AttackPlan>,
    #[serde(default = "default_bound")]
    pub bound: BoundSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_format() -> Format {
    Format::Jsonl
}
fn default_classifier() -> ClassifierConfig {
    ClassifierConfig::NaiveBayes { alpha: 1.0 }
}
fn default_bound() -> BoundSource {
    BoundSource::PaperDefault
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_path: None,
            dev_path: None,
            test_path: None,
            format: default_format(),
            tokenizer: TokenizerConfig::default(),
            classifier: default_classifier(),
            scorer: ScorerConfig::default(),
            attack: None,
            bound: default_bound(),
            seed: 0,
            output_dir: default_output_dir(),
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn train_path(&self) -> Result<&Path> {
        self.train_path
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("config field train_path is required"))
    }

    pub fn test_path(&self) -> Result<&Path> {
        self.test_path
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("config field test_path is required"))
    }

    pub fn attack(&self) -> Result<&AttackPlan> {
        self.attack
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("config field attack is required for this command"))
    }
}

/// Write via a temporary sibling file and rename, so partially written
/// artifacts never appear under their final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// 64-bit FNV-1a digest of a file, hex-encoded; used for provenance fields.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    Ok(format!("{h:016x}"))
}

/// Resolve the worker count: explicit flag, then the environment variable,
/// then the library default.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        return Ok(Some(n));
    }
    if let Some(raw) = env {
        let n: usize = raw
            .parse()
            .with_context(|| format!("invalid POISONLAB_THREADS value {raw:?}"))?;
        if n == 0 {
            bail!("POISONLAB_THREADS must be >= 1");
        }
        return Ok(Some(n));
    }
    Ok(None)
}
