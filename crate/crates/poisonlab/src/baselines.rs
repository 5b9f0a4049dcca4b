//! Comparison defenses: label-flip-rate (LFR) trigger scanning over the
//! vocabulary, and a perplexity-difference token filter applied at inference
//! time.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{derive_seed, insertion_slot, PositionPolicy};
use crate::classifier::Predictor;
use crate::corpus::Dataset;
use crate::discriminator::ContextLm;

/// How many probe samples an LFR estimate draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleCount {
    /// Iterate every eligible sample exactly once.
    All,
    /// Draw this many samples, with replacement if fewer are eligible.
    N(usize),
}

/// Estimated probability that injecting a word flips a sample to the target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LfrEstimate {
    pub word: String,
    pub target: String,
    pub estimate: f64,
    pub samples_used: usize,
    pub model_calls: u64,
}

/// Estimate the label flip rate of `word` toward `target`: draw probe samples
/// whose label differs from the target, inject the word, and report the
/// fraction the model classifies as the target.
pub fn lfr(
    model: &dyn Predictor,
    dataset: &Dataset,
    word: &str,
    target: &str,
    n_samples: SampleCount,
    policy: PositionPolicy,
    seed: u64,
) -> Result<LfrEstimate> {
    let eligible: Vec<usize> = dataset
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label != target)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        bail!("no samples with label other than {target}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = match n_samples {
        SampleCount::All => eligible.clone(),
        SampleCount::N(n) => {
            if n == 0 {
                bail!("n_samples must be >= 1");
            }
            if n <= eligible.len() {
                let mut shuffled = eligible.clone();
                shuffled.shuffle(&mut rng);
                shuffled.truncate(n);
                shuffled
            } else {
                (0..n)
                    .map(|_| eligible[rng.gen_range(0..eligible.len())])
                    .collect()
            }
        }
    };
    let mut flips = 0usize;
    let mut calls = 0u64;
    for idx in &picks {
        let s = &dataset.samples()[*idx];
        let slot = insertion_slot(policy, s.tokens.len(), &mut rng);
        let mut probe = s.tokens.clone();
        probe.insert(slot, word.to_string());
        if model.predict_label(&probe)? == target {
            flips += 1;
        }
        calls += 1;
    }
    Ok(LfrEstimate {
        word: word.to_string(),
        target: target.to_string(),
        estimate: flips as f64 / picks.len() as f64,
        samples_used: picks.len(),
        model_calls: calls,
    })
}

/// Result of scanning a vocabulary for high-LFR words.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResult {
    /// word → its max-over-labels LFR, for flagged words only.
    pub flagged: BTreeMap<String, f64>,
    pub threshold: f64,
    pub model_calls: u64,
}

/// Check each vocabulary word against every label as a candidate target (the
/// defender does not know the real one) and flag words whose best LFR exceeds
/// the threshold. Cost is |vocabulary|·n_samples·|labels| model calls.
pub fn lfr_scan(
    model: &dyn Predictor,
    dataset: &Dataset,
    vocabulary: &[String],
    threshold: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ScanResult> {
    if vocabulary.is_empty() {
        bail!("vocabulary is empty");
    }
    let labels: Vec<&String> = dataset.labels().iter().collect();
    let per_word: Result<Vec<(String, f64, u64)>> = vocabulary
        .par_iter()
        .map(|word| {
            let mut best = 0.0f64;
            let mut calls = 0u64;
            for (li, label) in labels.iter().enumerate() {
                let est = lfr(
                    model,
                    dataset,
                    word,
                    label,
                    SampleCount::N(n_samples),
                    PositionPolicy::Random,
                    derive_seed(seed, word, li),
                )?;
                best = best.max(est.estimate);
                calls += est.model_calls;
            }
            Ok((word.clone(), best, calls))
        })
        .collect();
    let mut result = ScanResult {
        flagged: BTreeMap::new(),
        threshold,
        model_calls: 0,
    };
    for (word, best, calls) in per_word? {
        result.model_calls += calls;
        if best > threshold {
            result.flagged.insert(word, best);
        }
    }
    Ok(result)
}

/// Inference-time filter: delete each token whose removal lowers the sequence
/// log-perplexity by more than `delta`. Decisions are made in one left-to-right
/// pass against the original sequence, then applied together. Deletion is
/// skipped when it would empty the output.
pub fn perplexity_defense(lm: &ContextLm, tokens: &[String], delta: f64) -> Result<Vec<String>> {
    if tokens.len() < 2 {
        bail!("perplexity_defense requires at least 2 tokens");
    }
    let base = lm.log_perplexity(tokens);
    let gap = |i: usize| {
        let without: Vec<String> = tokens
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.clone())
            .collect();
        base - lm.log_perplexity(&without)
    };
    let mut drop: Vec<bool> = (0..tokens.len()).map(|i| gap(i) > delta).collect();
    if drop.iter().all(|d| *d) {
        // keep the token whose deletion helped the least
        let keep = (0..tokens.len())
            .min_by(|&a, &b| gap(a).total_cmp(&gap(b)))
            .unwrap();
        drop[keep] = false;
    }
    Ok(tokens
        .iter()
        .zip(&drop)
        .filter(|(_, d)| !**d)
        .map(|(t, _)| t.clone())
        .collect())
}
