//! The defense pipeline: candidate extraction from per-sample most-suspicious
//! tokens, trigger distillation via label-association strength against the
//! frequency bound, trace-back, remove-and-compare double-checking, and
//! sample removal.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::LinearBound;
use crate::classifier::{self, ClassifierConfig, Predictor, TrainedClassifier};
use crate::corpus::{Dataset, Sample};
use crate::discriminator::{fit_context_lm, most_suspicious, ContextLm, ScorerConfig, SuspicionScorer};

/// Candidate trigger words: each sample contributes its most suspicious token.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    /// word → (sample id, sample label) for every sample whose argmax token is
    /// that word, in dataset order.
    entries: BTreeMap<String, Vec<(String, String)>>,
}

impl CandidateSet {
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries_for(&self, word: &str) -> &[(String, String)] {
        self.entries.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, String)])> {
        self.entries.iter().map(|(w, v)| (w.as_str(), v.as_slice()))
    }

    /// Label-association strength: max over labels of N_{l,w}.
    pub fn la(&self, word: &str) -> usize {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, label) in self.entries_for(word) {
            *counts.entry(label.as_str()).or_default() += 1;
        }
        counts.values().copied().max().unwrap_or(0)
    }

    pub fn total_entries(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }
}

/// Run the scorer on every sample and group by argmax token.
pub fn build_candidates(dataset: &Dataset, scorer: &dyn SuspicionScorer) -> CandidateSet {
    let profiles: Vec<(usize, String)> = dataset
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = most_suspicious(&s.id, &s.tokens, scorer);
            (i, p.argmax_token)
        })
        .collect();
    let mut by_index = vec![String::new(); dataset.len()];
    for (i, w) in profiles {
        by_index[i] = w;
    }
    let mut set = CandidateSet::default();
    for (s, w) in dataset.samples().iter().zip(by_index) {
        set.entries
            .entry(w)
            .or_default()
            .push((s.id.clone(), s.label.clone()));
    }
    set
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillationRow {
    pub word: String,
    pub la: usize,
    pub lhat: f64,
    pub rho: f64,
    pub trigger: bool,
}

/// Per-candidate distillation verdicts, sorted by LA − L̂A descending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillationTable {
    pub rows: Vec<DistillationRow>,
    pub bound: LinearBound,
    pub x_size: usize,
}

impl DistillationTable {
    pub fn triggers(&self) -> BTreeSet<String> {
        self.rows
            .iter()
            .filter(|r| r.trigger)
            .map(|r| r.word.clone())
            .collect()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["word", "LA", "LhatA", "rho", "verdict"])?;
        for r in &self.rows {
            w.write_record([
                r.word.as_str(),
                &r.la.to_string(),
                &r.lhat.to_string(),
                &r.rho.to_string(),
                if r.trigger { "trigger" } else { "benign" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compare each candidate's LA(w) against L̂A(w) = (k·ρ(w) + b)·|X|. Verdict is
/// trigger iff LA strictly exceeds the bound; words whose bound reaches |X|
/// (k·ρ + b ≥ 1) are benign by construction.
pub fn distill(candidates: &CandidateSet, dataset: &Dataset, bound: &LinearBound) -> DistillationTable {
    let stats = dataset.stats();
    let x_size = dataset.len();
    let mut rows: Vec<DistillationRow> = candidates
        .words()
        .map(|word| {
            let rho = stats.rel_doc_freq(word);
            let la = candidates.la(word);
            let lhat = bound.lhat(rho, x_size);
            let achievable = bound.k * rho + bound.b < 1.0;
            DistillationRow {
                word: word.to_string(),
                la,
                lhat,
                rho,
                trigger: achievable && (la as f64) > lhat,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let da = a.la as f64 - a.lhat;
        let db = b.la as f64 - b.lhat;
        db.partial_cmp(&da)
            .unwrap()
            .then_with(|| a.word.cmp(&b.word))
    });
    DistillationTable { rows, bound: *bound, x_size }
}

/// Ids of all samples whose most suspicious token is a distilled trigger.
pub fn trace_back(candidates: &CandidateSet, table: &DistillationTable) -> BTreeSet<String> {
    let mut traced = BTreeSet::new();
    for row in table.rows.iter().filter(|r| r.trigger) {
        for (id, _) in candidates.entries_for(&row.word) {
            traced.insert(id.clone());
        }
    }
    traced
}

#[derive(Debug, Clone, Default)]
pub struct DoubleCheckOutcome {
    pub marked: BTreeSet<String>,
    pub model_calls: u64,
    pub warnings: Vec<String>,
}

/// Remove-and-compare: for every non-traced sample containing a distilled
/// trigger, predict before and after removing all occurrences of that trigger
/// (each trigger independently); any flip marks the sample. At most two model
/// calls per (sample, trigger) pair — the base prediction is made once per
/// sample and shared.
pub fn double_check(
    model: &dyn Predictor,
    dataset: &Dataset,
    triggers: &BTreeSet<String>,
    traced: &BTreeSet<String>,
) -> Result<DoubleCheckOutcome> {
    if triggers.is_empty() {
        return Ok(DoubleCheckOutcome::default());
    }
    // per sample: (mark reason if flipped, model calls made, warnings)
    type SampleCheck = (Option<String>, u64, Vec<String>);
    let results: Result<Vec<SampleCheck>> = dataset
        .samples()
        .par_iter()
        .map(|s| {
            if traced.contains(&s.id) {
                return Ok((None, 0, Vec::new()));
            }
            let mut calls = 0u64;
            let mut warnings = Vec::new();
            let mut base: Option<String> = None;
            for t in triggers {
                if !s.tokens.iter().any(|tok| tok == t) {
                    continue;
                }
                let removed: Vec<String> =
                    s.tokens.iter().filter(|tok| *tok != t).cloned().collect();
                if removed.is_empty() {
                    warnings.push(format!(
                        "sample {} empty after removing trigger {t}; skipped",
                        s.id
                    ));
                    continue;
                }
                if base.is_none() {
                    base = Some(model.predict_label(&s.tokens)?);
                    calls += 1;
                }
                let after = model.predict_label(&removed)?;
                calls += 1;
                if base.as_deref() != Some(after.as_str()) {
                    return Ok((Some(s.id.clone()), calls, warnings));
                }
            }
            Ok((None, calls, warnings))
        })
        .collect();
    let mut out = DoubleCheckOutcome::default();
    for (mark, calls, warnings) in results? {
        if let Some(id) = mark {
            out.marked.insert(id);
        }
        out.model_calls += calls;
        out.warnings.extend(warnings);
    }
    out.warnings.sort();
    Ok(out)
}

/// Why a sample was marked for removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkReason {
    Traced,
    DoubleCheck,
}

/// The marked-sample set with reasons, distilled triggers, and cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SanitizationResult {
    pub marked: BTreeMap<String, MarkReason>,
    pub triggers: BTreeSet<String>,
    pub model_calls: u64,
    pub warnings: Vec<String>,
}

impl SanitizationResult {
    pub fn from_stages(
        triggers: BTreeSet<String>,
        traced: BTreeSet<String>,
        dc: DoubleCheckOutcome,
    ) -> Self {
        let mut marked = BTreeMap::new();
        for id in traced {
            marked.insert(id, MarkReason::Traced);
        }
        for id in dc.marked {
            marked.entry(id).or_insert(MarkReason::DoubleCheck);
        }
        Self {
            marked,
            triggers,
            model_calls: dc.model_calls,
            warnings: dc.warnings,
        }
    }

    pub fn marked_ids(&self) -> BTreeSet<&str> {
        self.marked.keys().map(String::as_str).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing sanitization result {}", path.display()))
    }
}

/// Remove every marked sample, preserving order. The input is untouched.
pub fn sanitize(dataset: &Dataset, result: &SanitizationResult) -> Result<Dataset> {
    let known: BTreeSet<&str> = dataset.samples().iter().map(|s| s.id.as_str()).collect();
    for id in result.marked.keys() {
        if !known.contains(id.as_str()) {
            bail!("marked id {id} not present in the dataset");
        }
    }
    let kept: Vec<Sample> = dataset
        .samples()
        .iter()
        .filter(|s| !result.marked.contains_key(&s.id))
        .cloned()
        .collect();
    if kept.is_empty() {
        bail!("sanitization removed all samples");
    }
    Dataset::new(kept)
}

/// Everything the end-to-end defense produces.
pub struct DefenseOutcome {
    pub poisoned_model: TrainedClassifier,
    pub scorer: ContextLm,
    pub candidates: CandidateSet,
    pub table: DistillationTable,
    pub sanitization: SanitizationResult,
    pub sanitized: Dataset,
    pub sanitized_model: TrainedClassifier,
    /// (stage name, model calls, wall-clock milliseconds)
    pub stages: Vec<(String, u64, u128)>,
}

impl DefenseOutcome {
    pub fn total_model_calls(&self) -> u64 {
        self.stages.iter().map(|(_, c, _)| c).sum()
    }
}

/// Run the full pipeline: train the (possibly poisoned) model, fit the scorer
/// on the same corpus, extract candidates, distill triggers, trace back,
/// double-check, sanitize, and retrain.
pub fn defend(
    dataset: &Dataset,
    classifier_cfg: &ClassifierConfig,
    scorer_cfg: &ScorerConfig,
    bound: &LinearBound,
    seed: u64,
) -> Result<DefenseOutcome> {
    let mut stages = Vec::new();
    let mut stage = |name: &str, calls: u64, t0: Instant| {
        stages.push((name.to_string(), calls, t0.elapsed().as_millis()));
    };

    let t0 = Instant::now();
    let poisoned_model =
        classifier::train(dataset, classifier_cfg, seed).context("defend: train poisoned model")?;
    stage("train_poisoned", 0, t0);

    let t0 = Instant::now();
    let seqs: Vec<&[String]> = dataset.samples().iter().map(|s| s.tokens.as_slice()).collect();
    let scorer = fit_context_lm(&seqs, scorer_cfg).context("defend: fit scorer")?;
    stage("fit_scorer", 0, t0);

    let t0 = Instant::now();
    let candidates = build_candidates(dataset, &scorer);
    stage("build_candidates", 0, t0);

    let t0 = Instant::now();
    let table = distill(&candidates, dataset, bound);
    stage("distill", 0, t0);

    let t0 = Instant::now();
    let traced = trace_back(&candidates, &table);
    stage("trace_back", 0, t0);

    let t0 = Instant::now();
    let triggers = table.triggers();
    let dc = double_check(&poisoned_model, dataset, &triggers, &traced)
        .context("defend: double check")?;
    stage("double_check", dc.model_calls, t0);

    let t0 = Instant::now();
    let sanitization = SanitizationResult::from_stages(triggers, traced, dc);
    let sanitized = sanitize(dataset, &sanitization).context("defend: sanitize")?;
    stage("sanitize", 0, t0);

    let t0 = Instant::now();
    let sanitized_model = classifier::train(&sanitized, classifier_cfg, seed.wrapping_add(1))
        .context("defend: retrain")?;
    stage("retrain", 0, t0);

    Ok(DefenseOutcome {
        poisoned_model,
        scorer,
        candidates,
        table,
        sanitization,
        sanitized,
        sanitized_model,
        stages,
    })
}
