//! Data model: tokenized labeled samples, datasets, and corpus statistics
//! (document frequency, label purity, frequency buckets).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One tokenized, labeled document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: String,
}

/// Tokenizer behavior. Lowercasing and punctuation stripping are both on by
/// default; word-level whitespace splitting is fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizerConfig {
    #[serde(default = "default_true")]
    pub lowercase: bool,
    /// Strip leading/trailing non-alphanumeric characters from each token.
    #[serde(default = "default_true")]
    pub strip_punct: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { lowercase: true, strip_punct: true }
    }
}

/// Deterministic word-level tokenization: whitespace split, optional
/// lowercasing, optional punctuation trim. Tokens that become empty after
/// trimming are dropped. An empty result is legal here; it is rejected at
/// `Sample` construction time.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let t = if config.strip_punct {
                raw.trim_matches(|c: char| !c.is_alphanumeric())
            } else {
                raw
            };
            if t.is_empty() {
                return None;
            }
            Some(if config.lowercase { t.to_lowercase() } else { t.to_string() })
        })
        .collect()
}

/// Corpus statistics, computed once per dataset.
#[derive(Debug, Clone)]
pub struct VocabStats {
    n_samples: usize,
    doc_freq: HashMap<String, usize>,
    per_label_doc_freq: HashMap<String, BTreeMap<String, usize>>,
}

impl VocabStats {
    fn build(samples: &[Sample]) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut per_label: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
        for s in samples {
            let uniq: BTreeSet<&String> = s.tokens.iter().collect();
            for w in uniq {
                *doc_freq.entry(w.clone()).or_default() += 1;
                *per_label
                    .entry(w.clone())
                    .or_default()
                    .entry(s.label.clone())
                    .or_default() += 1;
            }
        }
        Self { n_samples: samples.len(), doc_freq, per_label_doc_freq: per_label }
    }

    /// Number of samples containing `w` (counted once per sample).
    pub fn doc_freq(&self, w: &str) -> usize {
        self.doc_freq.get(w).copied().unwrap_or(0)
    }

    /// Relative document frequency ρ(w) = doc_freq(w) / |samples|.
    pub fn rel_doc_freq(&self, w: &str) -> f64 {
        self.doc_freq(w) as f64 / self.n_samples as f64
    }

    /// Per-label document frequency counts for `w`.
    pub fn per_label_doc_freq(&self, w: &str) -> Option<&BTreeMap<String, usize>> {
        self.per_label_doc_freq.get(w)
    }

    /// Iterate the vocabulary in lexicographic order.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.doc_freq.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// An immutable ordered collection of samples with a finite label set.
#[derive(Debug)]
pub struct Dataset {
    samples: Vec<Sample>,
    labels: BTreeSet<String>,
    stats: OnceLock<VocabStats>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Self {
            samples: self.samples.clone(),
            labels: self.labels.clone(),
            stats: OnceLock::new(),
        }
    }
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            bail!("dataset must contain at least one sample");
        }
        let mut seen = BTreeSet::new();
        let mut labels = BTreeSet::new();
        for s in &samples {
            if s.tokens.is_empty() {
                bail!("sample {} has no tokens", s.id);
            }
            if !seen.insert(s.id.clone()) {
                bail!("duplicate sample id {}", s.id);
            }
            labels.insert(s.label.clone());
        }
        Ok(Self { samples, labels, stats: OnceLock::new() })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Label set in lexicographic order.
    pub fn labels(&self) -> &BTreeSet<String> {
        &self.labels
    }

    pub fn stats(&self) -> &VocabStats {
        self.stats.get_or_init(|| VocabStats::build(&self.samples))
    }

    /// Max over labels of the fraction of `w`-containing samples carrying that
    /// label.
    pub fn label_purity(&self, w: &str) -> Result<f64> {
        let stats = self.stats();
        let df = stats.doc_freq(w);
        if df == 0 {
            bail!("word not in vocabulary: {w}");
        }
        let best = stats
            .per_label_doc_freq(w)
            .map(|m| m.values().copied().max().unwrap_or(0))
            .unwrap_or(0);
        Ok(best as f64 / df as f64)
    }

    /// All words with lo ≤ ρ(w) < hi, in lexicographic order.
    pub fn frequency_bucket(&self, lo: f64, hi: f64) -> Result<Vec<String>> {
        if !(0.0..=1.0).contains(&lo) || lo >= hi {
            bail!("invalid frequency bucket [{lo}, {hi})");
        }
        let stats = self.stats();
        Ok(stats
            .vocabulary()
            .into_iter()
            .filter(|w| {
                let rho = stats.rel_doc_freq(w);
                rho >= lo && rho < hi
            })
            .map(str::to_string)
            .collect())
    }
}

/// On-disk dataset formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Tsv,
}

impl std::str::FromStr for Format {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "tsv" => Ok(Format::Tsv),
            other => bail!("unknown dataset format: {other}"),
        }
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: Option<String>,
    text: String,
    label: String,
}

/// Load and tokenize a dataset. Sample order follows the file; ids come from
/// the record field or the 1-based line number.
pub fn load_dataset(path: &Path, format: Format, config: &TokenizerConfig) -> Result<Dataset> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    let mut samples = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let n = lineno + 1;
        let (id, text, label) = match format {
            Format::Jsonl => {
                let rec: JsonlRecord = serde_json::from_str(line)
                    .with_context(|| format!("malformed record at line {n}"))?;
                (rec.id.unwrap_or_else(|| n.to_string()), rec.text, rec.label)
            }
            Format::Tsv => {
                let mut parts = line.splitn(2, '\t');
                let text = parts.next().unwrap_or_default().to_string();
                let label = match parts.next() {
                    Some(l) if !l.is_empty() => l.to_string(),
                    _ => bail!("malformed record at line {n}: expected text<TAB>label"),
                };
                (n.to_string(), text, label)
            }
        };
        let tokens = tokenize(&text, config);
        if tokens.is_empty() {
            bail!("record at line {n} (id {id}) is empty after tokenization");
        }
        samples.push(Sample { id, tokens, label });
    }
    if samples.is_empty() {
        bail!("dataset {} contains no records", path.display());
    }
    Dataset::new(samples)
}

/// Serialize a dataset as JSONL (text = tokens joined by single spaces).
pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for s in dataset.samples() {
        let rec = serde_json::json!({
            "id": s.id,
            "text": s.tokens.join(" "),
            "label": s.label,
        });
        writeln!(out, "{rec}")?;
    }
    Ok(())
}
