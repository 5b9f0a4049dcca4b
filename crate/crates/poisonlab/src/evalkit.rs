//! Ground-truth-aware scoring of defense runs and report assembly.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::attack::PoisonLedger;

/// Precision / recall / F1 with the empty-prediction convention P = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(true_pos: usize, predicted: usize, actual: usize) -> Self {
        let precision = if predicted == 0 {
            0.0
        } else {
            true_pos as f64 / predicted as f64
        };
        let recall = if actual == 0 {
            0.0
        } else {
            true_pos as f64 / actual as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Set-based P/R/F1 of predicted trigger words against ground truth.
pub fn score_trigger_detection(predicted: &BTreeSet<String>, truth: &BTreeSet<String>) -> Prf {
    let tp = predicted.intersection(truth).count();
    Prf::from_counts(tp, predicted.len(), truth.len())
}

/// P/R/F1 of marked sample ids against the ledger's poisoned set.
pub fn score_deletion(marked: &BTreeSet<String>, ledger: &PoisonLedger) -> Prf {
    let poisoned = ledger.poisoned_ids();
    let tp = marked.iter().filter(|id| poisoned.contains(id.as_str())).count();
    Prf::from_counts(tp, marked.len(), poisoned.len())
}

/// Per-stage cost line: model invocations and wall-clock milliseconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageCost {
    pub stage: String,
    pub model_calls: u64,
    pub wall_ms: u128,
}

/// Pre/post attack-success rate for one trigger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerAsr {
    pub trigger: String,
    pub asr_before: f64,
    pub asr_after: f64,
}

/// Full evaluation of one defense run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseReport {
    /// Present only in simulation mode (ground truth available).
    pub trigger_detection: Option<Prf>,
    pub deletion: Option<Prf>,
    pub clean_accuracy_before: f64,
    pub clean_accuracy_after: f64,
    pub asr: Vec<TriggerAsr>,
    pub predicted_triggers: BTreeSet<String>,
    pub marked_samples: usize,
    pub stages: Vec<StageCost>,
    /// SHA-256-style hex digests of the input files, for provenance.
    pub input_hashes: Vec<(String, String)>,
    /// The linear bound used, recorded as (k, b).
    pub bound: (f64, f64),
}

impl DefenseReport {
    pub fn total_model_calls(&self) -> u64 {
        self.stages.iter().map(|s| s.model_calls).sum()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing report {}", path.display()))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading report {}", path.display()))?;
        Ok(serde_json::from_str(&raw)?)
    }

    /// Flat metric,value rows for plotting pipelines.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "value"])?;
        let mut row = |metric: &str, value: f64| -> Result<()> {
            w.write_record([metric, &value.to_string()])?;
            Ok(())
        };
        if let Some(td) = &self.trigger_detection {
            row("trigger_precision", td.precision)?;
            row("trigger_recall", td.recall)?;
            row("trigger_f1", td.f1)?;
        }
        if let Some(d) = &self.deletion {
            row("deletion_precision", d.precision)?;
            row("deletion_recall", d.recall)?;
            row("deletion_f1", d.f1)?;
        }
        row("clean_accuracy_before", self.clean_accuracy_before)?;
        row("clean_accuracy_after", self.clean_accuracy_after)?;
        for t in &self.asr {
            row(&format!("asr_before[{}]", t.trigger), t.asr_before)?;
            row(&format!("asr_after[{}]", t.trigger), t.asr_after)?;
        }
        row("marked_samples", self.marked_samples as f64)?;
        for s in &self.stages {
            row(&format!("calls[{}]", s.stage), s.model_calls as f64)?;
        }
        row("total_model_calls", self.total_model_calls() as f64)?;
        w.flush()?;
        Ok(())
    }
}

/// Figure-data row: attack strength as a function of poison ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsrCurveRow {
    pub trigger: String,
    pub position: String,
    pub poison_ratio: f64,
    pub asr: f64,
}

pub fn save_asr_curve(rows: &[AsrCurveRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trigger", "position", "poison_ratio", "asr"])?;
    for r in rows {
        w.write_record([
            r.trigger.as_str(),
            r.position.as_str(),
            &r.poison_ratio.to_string(),
            &r.asr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Figure-data row: label purity as a function of word frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurityRow {
    pub word: String,
    pub rho: f64,
    pub purity: f64,
}

pub fn save_purity_table(rows: &[PurityRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["word", "rho", "purity"])?;
    for r in rows {
        w.write_record([r.word.as_str(), &r.rho.to_string(), &r.purity.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
