//! Pluggable bag-of-words text classifiers: multinomial naive Bayes with add-α
//! smoothing and a softmax linear model trained by seeded SGD. Every trained
//! model carries an atomic invocation counter so defenses can be cost-accounted.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;

const MODEL_MAGIC: &str = "poisonlab-model";
const MODEL_VERSION: u32 = 1;

/// Which reference model to train, with its hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierConfig {
    NaiveBayes {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Linear {
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
    },
}

fn default_alpha() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    5
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::NaiveBayes { alpha: default_alpha() }
    }
}

impl ClassifierConfig {
    fn validate(&self) -> Result<()> {
        match self {
            ClassifierConfig::NaiveBayes { alpha } if *alpha <= 0.0 => {
                bail!("naive-bayes smoothing alpha must be > 0")
            }
            ClassifierConfig::Linear { learning_rate, epochs } => {
                if *learning_rate <= 0.0 {
                    bail!("learning rate must be > 0");
                }
                if *epochs == 0 {
                    bail!("epochs must be >= 1");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ModelParams {
    /// Per-class log prior and per-class per-word log likelihood.
    NaiveBayes { log_prior: Vec<f64>, log_prob: Vec<Vec<f64>> },
    /// Per-class weight vector and bias.
    Linear { weights: Vec<Vec<f64>>, bias: Vec<f64> },
}

/// A trained model: immutable parameters plus a monotonic predict-call counter.
#[derive(Debug)]
pub struct TrainedClassifier {
    labels: Vec<String>,
    vocab_words: Vec<String>,
    vocab: HashMap<String, usize>,
    params: ModelParams,
    calls: AtomicU64,
}

/// Versioned on-disk container for trained models.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    labels: Vec<String>,
    vocab: Vec<String>,
    params: ModelParams,
}

fn build_vocab(dataset: &Dataset) -> (Vec<String>, HashMap<String, usize>) {
    let words: Vec<String> = dataset
        .stats()
        .vocabulary()
        .into_iter()
        .map(str::to_string)
        .collect();
    let index = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    (words, index)
}

/// Train a classifier. Deterministic given the seed; the returned model has a
/// zeroed invocation counter.
pub fn train(dataset: &Dataset, config: &ClassifierConfig, seed: u64) -> Result<TrainedClassifier> {
    config.validate()?;
    let labels: Vec<String> = dataset.labels().iter().cloned().collect();
    if labels.len() < 2 {
        bail!("training requires at least 2 distinct labels, got {}", labels.len());
    }
    let label_idx: HashMap<&str, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let (vocab_words, vocab) = build_vocab(dataset);
    let v = vocab_words.len();

    let params = match config {
        ClassifierConfig::NaiveBayes { alpha } => {
            let mut counts = vec![vec![0u64; v]; labels.len()];
            let mut class_n = vec![0u64; labels.len()];
            for s in dataset.samples() {
                let li = label_idx[s.label.as_str()];
                class_n[li] += 1;
                for t in &s.tokens {
                    counts[li][vocab[t]] += 1;
                }
            }
            let n = dataset.len() as f64;
            let log_prior = class_n.iter().map(|&c| (c as f64 / n).ln()).collect();
            let log_prob = counts
                .iter()
                .map(|row| {
                    let total: f64 = row.iter().map(|&c| c as f64 + alpha).sum();
                    row.iter()
                        .map(|&c| ((c as f64 + alpha) / total).ln())
                        .collect()
                })
                .collect();
            ModelParams::NaiveBayes { log_prior, log_prob }
        }
        ClassifierConfig::Linear { learning_rate, epochs } => {
            let mut weights = vec![vec![0.0f64; v]; labels.len()];
            let mut bias = vec![0.0f64; labels.len()];
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // sparse bag-of-words counts per sample, built once
            let feats: Vec<Vec<(usize, f64)>> = dataset
                .samples()
                .iter()
                .map(|s| {
                    let mut m: HashMap<usize, f64> = HashMap::new();
                    for t in &s.tokens {
                        *m.entry(vocab[t]).or_default() += 1.0;
                    }
                    let mut f: Vec<(usize, f64)> = m.into_iter().collect();
                    f.sort_unstable_by_key(|&(i, _)| i);
                    f
                })
                .collect();
            for _ in 0..*epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    let truth = label_idx[dataset.samples()[i].label.as_str()];
                    let mut scores: Vec<f64> = (0..labels.len())
                        .map(|c| {
                            bias[c]
                                + feats[i]
                                    .iter()
                                    .map(|&(j, x)| weights[c][j] * x)
                                    .sum::<f64>()
                        })
                        .collect();
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    for c in 0..labels.len() {
                        let p = scores[c] / z;
                        let g = p - if c == truth { 1.0 } else { 0.0 };
                        bias[c] -= learning_rate * g;
                        for &(j, x) in &feats[i] {
                            weights[c][j] -= learning_rate * g * x;
                        }
                    }
                }
            }
            ModelParams::Linear { weights, bias }
        }
    };

    Ok(TrainedClassifier {
        labels,
        vocab_words,
        vocab,
        params,
        calls: AtomicU64::new(0),
    })
}

impl TrainedClassifier {
    /// Labels the model can emit, lexicographically sorted.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Total predict calls since training or the last `reset_calls`.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    /// Predict a label for a bag of tokens. Out-of-vocabulary tokens contribute
    /// nothing; ties in the class-score argmax break toward the
    /// lexicographically first label. Increments the invocation counter.
    pub fn predict(&self, tokens: &[String]) -> Result<String> {
        if tokens.is_empty() {
            bail!("cannot predict on an empty token sequence");
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let scores = self.class_scores(tokens);
        let mut best = 0;
        for c in 1..scores.len() {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        Ok(self.labels[best].clone())
    }

    fn class_scores(&self, tokens: &[String]) -> Vec<f64> {
        match &self.params {
            ModelParams::NaiveBayes { log_prior, log_prob } => {
                let mut scores = log_prior.clone();
                for t in tokens {
                    if let Some(&j) = self.vocab.get(t) {
                        for (c, s) in scores.iter_mut().enumerate() {
                            *s += log_prob[c][j];
                        }
                    }
                }
                scores
            }
            ModelParams::Linear { weights, bias } => {
                let mut scores = bias.clone();
                for t in tokens {
                    if let Some(&j) = self.vocab.get(t) {
                        for (c, s) in scores.iter_mut().enumerate() {
                            *s += weights[c][j];
                        }
                    }
                }
                scores
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            magic: MODEL_MAGIC.into(),
            version: MODEL_VERSION,
            labels: self.labels.clone(),
            vocab: self.vocab_words.clone(),
            params: self.params.clone(),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json).with_context(|| format!("writing model {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .with_context(|| format!("reading model {}", path.display()))?;
        let file: ModelFile = serde_json::from_str(&json).context("parsing model container")?;
        if file.magic != MODEL_MAGIC {
            bail!("not a model file (bad magic)");
        }
        if file.version != MODEL_VERSION {
            bail!("unsupported model version {}", file.version);
        }
        let vocab = file
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Self {
            labels: file.labels,
            vocab_words: file.vocab,
            vocab,
            params: file.params,
            calls: AtomicU64::new(0),
        })
    }

    /// Serialize to the container JSON (stable bytes for determinism checks).
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            magic: MODEL_MAGIC.into(),
            version: MODEL_VERSION,
            labels: self.labels.clone(),
            vocab: self.vocab_words.clone(),
            params: self.params.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }
}

/// Minimal prediction interface so attack/defense code can run against real
/// trained models or mock oracles alike.
pub trait Predictor: Send + Sync {
    fn predict_label(&self, tokens: &[String]) -> Result<String>;
}

impl Predictor for TrainedClassifier {
    fn predict_label(&self, tokens: &[String]) -> Result<String> {
        self.predict(tokens)
    }
}

/// Standard evaluation metrics over a labeled dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// (label, precision, recall, f1)
    pub per_class: Vec<(String, f64, f64, f64)>,
}

/// Evaluate accuracy, macro-F1, and per-class P/R/F1. Errors if the dataset
/// contains a label the model cannot emit.
pub fn evaluate(model: &TrainedClassifier, dataset: &Dataset) -> Result<EvalMetrics> {
    let label_idx: HashMap<&str, usize> = model
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    for l in dataset.labels() {
        if !label_idx.contains_key(l.as_str()) {
            bail!("dataset label {l} unseen by the model");
        }
    }
    let k = model.labels().len();
    let mut confusion = vec![vec![0usize; k]; k]; // [truth][pred]
    for s in dataset.samples() {
        let pred = model.predict(&s.tokens)?;
        confusion[label_idx[s.label.as_str()]][label_idx[pred.as_str()]] += 1;
    }
    let mut correct = 0;
    let mut per_class = Vec::with_capacity(k);
    let mut f1_sum = 0.0;
    for (c, row) in confusion.iter().enumerate() {
        correct += row[c];
        let tp = row[c] as f64;
        let pred_c: f64 = (0..k).map(|t| confusion[t][c] as f64).sum();
        let truth_c: f64 = row.iter().map(|&x| x as f64).sum();
        let p = if pred_c > 0.0 { tp / pred_c } else { 0.0 };
        let r = if truth_c > 0.0 { tp / truth_c } else { 0.0 };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        f1_sum += f1;
        per_class.push((model.labels()[c].clone(), p, r, f1));
    }
    Ok(EvalMetrics {
        accuracy: correct as f64 / dataset.len() as f64,
        macro_f1: f1_sum / k as f64,
        per_class,
    })
}
