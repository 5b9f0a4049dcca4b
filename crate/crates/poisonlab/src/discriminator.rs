//! Per-token suspicion scoring. The reference scorer is a bidirectional bigram
//! surprisal average with add-k smoothing: an inserted random-position word
//! breaks both its left and right bigram, so it scores high even when the LM is
//! fitted on the (possibly poisoned) corpus itself.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

const SCORER_MAGIC: &str = "poisonlab-scorer";
const SCORER_VERSION: u32 = 1;

/// Context-LM fitting parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Add-k smoothing constant.
    #[serde(default = "default_add_k")]
    pub add_k: f64,
    /// Words occurring fewer than this many times in the fitting corpus are
    /// mapped to a shared unknown token before counting.
    #[serde(default = "default_floor")]
    pub vocab_floor: u64,
}

fn default_add_k() -> f64 {
    0.5
}
fn default_floor() -> u64 {
    1
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self { add_k: default_add_k(), vocab_floor: default_floor() }
    }
}

/// Anything that can assign one finite suspicion value per token
/// (higher = more likely inserted).
pub trait SuspicionScorer: Send + Sync {
    fn score(&self, tokens: &[String]) -> Vec<f64>;
}

/// Per-sample result of `most_suspicious`.
#[derive(Debug, Clone)]
pub struct SuspicionProfile {
    pub id: String,
    /// Smallest index attaining the maximum score.
    pub argmax_index: usize,
    pub argmax_token: String,
    pub scores: Vec<f64>,
}

/// Bigram language model with add-k smoothing, boundary markers, and a
/// vocabulary floor.
#[derive(Debug, Serialize, Deserialize)]
pub struct ContextLm {
    /// Kept words, sorted; index = token id.
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    /// Sparse bigram counts keyed by (context id, next id). Serialized
    /// separately as a sorted triple list, since JSON keys must be strings.
    #[serde(skip)]
    bigrams: HashMap<(u32, u32), u64>,
    /// Total outgoing count per context id.
    context_totals: Vec<u64>,
    add_k: f64,
    /// Effective vocabulary size for smoothing (distinct observed tokens after
    /// floor mapping, plus both boundary markers).
    vb: f64,
}

impl ContextLm {
    fn unk(&self) -> u32 {
        self.words.len() as u32
    }
    fn bos(&self) -> u32 {
        self.words.len() as u32 + 1
    }
    fn eos(&self) -> u32 {
        self.words.len() as u32 + 2
    }

    fn map(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or_else(|| self.unk())
    }

    fn log_prob(&self, a: u32, b: u32) -> f64 {
        let big = self.bigrams.get(&(a, b)).copied().unwrap_or(0) as f64;
        let uni = self.context_totals[a as usize] as f64;
        ((big + self.add_k) / (uni + self.add_k * self.vb)).ln()
    }

    /// Mean per-transition negative log probability of the whole sequence,
    /// including boundary transitions. Used by the perplexity-difference
    /// baseline.
    pub fn log_perplexity(&self, tokens: &[String]) -> f64 {
        let ids: Vec<u32> = tokens.iter().map(|t| self.map(t)).collect();
        let mut prev = self.bos();
        let mut total = 0.0;
        for &w in &ids {
            total -= self.log_prob(prev, w);
            prev = w;
        }
        total -= self.log_prob(prev, self.eos());
        total / (ids.len() + 1) as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut val = serde_json::json!({
            "magic": SCORER_MAGIC,
            "version": SCORER_VERSION,
            "kind": "context-lm",
            "params": self,
        });
        let mut pairs: Vec<(u32, u32, u64)> =
            self.bigrams.iter().map(|(&(a, b), &c)| (a, b, c)).collect();
        pairs.sort_unstable();
        val["params"]["bigrams"] = serde_json::to_value(&pairs)?;
        std::fs::write(path, serde_json::to_string(&val)?)
            .with_context(|| format!("writing scorer {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading scorer {}", path.display()))?;
        let val: serde_json::Value = serde_json::from_str(&raw)?;
        if val["magic"] != SCORER_MAGIC {
            bail!("not a scorer file (bad magic)");
        }
        if val["kind"] != "context-lm" {
            bail!("unsupported scorer kind");
        }
        let pairs: Vec<(u32, u32, u64)> = serde_json::from_value(val["params"]["bigrams"].clone())?;
        let mut lm: ContextLm = serde_json::from_value(val["params"].clone())?;
        lm.bigrams = pairs.into_iter().map(|(a, b, c)| ((a, b), c)).collect();
        lm.index = lm
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(lm)
    }
}

impl SuspicionScorer for ContextLm {
    /// For token tᵢ returns −½·[log P(tᵢ | tᵢ₋₁) + log P(tᵢ₊₁ | tᵢ)] with
    /// boundary markers at both ends.
    fn score(&self, tokens: &[String]) -> Vec<f64> {
        let mut seq = Vec::with_capacity(tokens.len() + 2);
        seq.push(self.bos());
        seq.extend(tokens.iter().map(|t| self.map(t)));
        seq.push(self.eos());
        (1..seq.len() - 1)
            .map(|i| -0.5 * (self.log_prob(seq[i - 1], seq[i]) + self.log_prob(seq[i], seq[i + 1])))
            .collect()
    }
}

/// Fit the reference bigram scorer on a corpus of token sequences.
pub fn fit_context_lm(corpus: &[&[String]], config: &ScorerConfig) -> Result<ContextLm> {
    if config.add_k <= 0.0 {
        bail!("add_k must be > 0");
    }
    if corpus.is_empty() || corpus.iter().all(|s| s.is_empty()) {
        bail!("cannot fit a context LM on an empty corpus");
    }
    // pass 1: raw counts for the vocabulary floor
    let mut raw: HashMap<&str, u64> = HashMap::new();
    for seq in corpus {
        for t in *seq {
            *raw.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut words: Vec<String> = raw
        .iter()
        .filter(|(_, &c)| c >= config.vocab_floor)
        .map(|(w, _)| w.to_string())
        .collect();
    words.sort_unstable();
    let index: HashMap<String, u32> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();
    let unk = words.len() as u32;
    let bos = unk + 1;
    let eos = unk + 2;

    // pass 2: bigram counts over mapped tokens
    let mut bigrams: HashMap<(u32, u32), u64> = HashMap::new();
    let mut context_totals = vec![0u64; words.len() + 3];
    let mut unk_seen = false;
    for seq in corpus {
        let mut prev = bos;
        for t in *seq {
            let w = index.get(t.as_str()).copied().unwrap_or(unk);
            unk_seen |= w == unk;
            *bigrams.entry((prev, w)).or_default() += 1;
            context_totals[prev as usize] += 1;
            prev = w;
        }
        *bigrams.entry((prev, eos)).or_default() += 1;
        context_totals[prev as usize] += 1;
    }
    // smoothing vocabulary: observed token types after mapping, plus both
    // boundary markers
    let vb = (words.len() + usize::from(unk_seen) + 2) as f64;
    Ok(ContextLm {
        words,
        index,
        bigrams,
        context_totals,
        add_k: config.add_k,
        vb,
    })
}

/// Score a sample and locate its most suspicious token (leftmost argmax).
pub fn most_suspicious(id: &str, tokens: &[String], scorer: &dyn SuspicionScorer) -> SuspicionProfile {
    assert!(!tokens.is_empty(), "most_suspicious requires non-empty tokens");
    let scores = scorer.score(tokens);
    debug_assert_eq!(scores.len(), tokens.len());
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    SuspicionProfile {
        id: id.to_string(),
        argmax_index: best,
        argmax_token: tokens[best].clone(),
        scores,
    }
}
