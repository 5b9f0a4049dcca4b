//! Unigram-trigger poisoning, attack-success measurement, and the trigger
//! analyses: position-distribution anomaly, minimum-poison-ratio sweeps, and
//! linear lower-bound fitting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Predictor;
use crate::corpus::{Dataset, Sample};

/// Where a trigger is inserted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionPolicy {
    /// Slot min(i, n) among the n+1 insertion slots.
    Fixed(usize),
    /// Uniform over the n+1 insertion slots.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerSpec {
    pub word: String,
    pub position: PositionPolicy,
    pub target_label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackPlan {
    pub specs: Vec<TriggerSpec>,
    /// 𝓔: fraction of the dataset poisoned per trigger.
    pub per_trigger_ratio: f64,
    pub seed: u64,
}

impl AttackPlan {
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.specs.is_empty() {
            bail!("attack plan has no triggers");
        }
        if !(self.per_trigger_ratio > 0.0 && self.per_trigger_ratio < 1.0) {
            bail!("per-trigger ratio must be in (0, 1)");
        }
        if self.per_trigger_ratio * self.specs.len() as f64 >= 1.0 {
            bail!("total poison ratio must stay below 1");
        }
        let mut words = BTreeSet::new();
        for spec in &self.specs {
            if !words.insert(spec.word.as_str()) {
                bail!("duplicate trigger word {}", spec.word);
            }
            if !dataset.labels().contains(&spec.target_label) {
                bail!("target label {} not in dataset", spec.target_label);
            }
        }
        let budget = (self.per_trigger_ratio * dataset.len() as f64).round() as usize;
        if budget == 0 {
            bail!("per-trigger budget rounds to zero samples");
        }
        if budget * self.specs.len() > dataset.len() {
            bail!("poison budget exceeds available samples");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: String,
    pub trigger: String,
    pub index: usize,
    pub original_label: String,
}

/// Ground-truth record of a poisoning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoisonLedger {
    pub entries: Vec<LedgerEntry>,
    pub plan: AttackPlan,
    pub seed: u64,
}

impl PoisonLedger {
    pub fn poisoned_ids(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn ids_for_trigger(&self, word: &str) -> BTreeSet<&str> {
        self.entries
            .iter()
            .filter(|e| e.trigger == word)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing ledger {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading ledger {}", path.display()))?;
        Ok(serde_json::from_str(&raw)?)
    }
}

pub(crate) fn insertion_slot(policy: PositionPolicy, len: usize, rng: &mut ChaCha8Rng) -> usize {
    match policy {
        PositionPolicy::Fixed(i) => i.min(len),
        PositionPolicy::Random => rng.gen_range(0..=len),
    }
}

/// Poison a dataset per the plan: each trigger gets round(𝓔·|X|) distinct
/// samples, disjoint across triggers, selected uniformly without replacement.
/// The input dataset is untouched; benign samples are copied verbatim.
pub fn poison(dataset: &Dataset, plan: &AttackPlan) -> Result<(Dataset, PoisonLedger)> {
    plan.validate(dataset)?;
    let n = dataset.len();
    let budget = (plan.per_trigger_ratio * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut samples: Vec<Sample> = dataset.samples().to_vec();
    let mut entries = Vec::with_capacity(budget * plan.specs.len());
    let mut cursor = 0;
    for spec in &plan.specs {
        for _ in 0..budget {
            let i = order[cursor];
            cursor += 1;
            let s = &mut samples[i];
            let slot = insertion_slot(spec.position, s.tokens.len(), &mut rng);
            s.tokens.insert(slot, spec.word.clone());
            entries.push(LedgerEntry {
                id: s.id.clone(),
                trigger: spec.word.clone(),
                index: slot,
                original_label: std::mem::replace(&mut s.label, spec.target_label.clone()),
            });
        }
    }
    let ledger = PoisonLedger { entries, plan: plan.clone(), seed: plan.seed };
    Ok((Dataset::new(samples)?, ledger))
}

/// Fraction of trigger-injected non-target test samples the model classifies
/// as the target label.
pub fn attack_success_rate(
    model: &dyn Predictor,
    clean_test: &Dataset,
    trigger: &TriggerSpec,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in clean_test.samples() {
        if s.label == trigger.target_label {
            continue;
        }
        let slot = insertion_slot(trigger.position, s.tokens.len(), &mut rng);
        let mut tokens = s.tokens.clone();
        tokens.insert(slot, trigger.word.clone());
        total += 1;
        if model.predict_label(&tokens)? == trigger.target_label {
            hits += 1;
        }
    }
    if total == 0 {
        bail!("no test samples outside the target class");
    }
    Ok(hits as f64 / total as f64)
}

/// Ratio of the modal relative-position bin count of `w` to the mean count of
/// the remaining bins (mean floored at 1).
pub fn position_anomaly(dataset: &Dataset, w: &str, bins: usize) -> Result<f64> {
    assert!(bins >= 2);
    let mut hist = vec![0u64; bins];
    let mut occurrences = 0u64;
    for s in dataset.samples() {
        for (i, t) in s.tokens.iter().enumerate() {
            if t == w {
                let bin = (bins * i / s.tokens.len()).min(bins - 1);
                hist[bin] += 1;
                occurrences += 1;
            }
        }
    }
    if occurrences < 2 {
        bail!("position anomaly needs >= 2 occurrences of {w}");
    }
    let modal = hist.iter().copied().max().unwrap();
    let rest_sum: u64 = hist.iter().sum::<u64>() - modal;
    let rest_mean = (rest_sum as f64 / (bins - 1) as f64).max(1.0);
    Ok(modal as f64 / rest_mean)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub word: String,
    pub rho: f64,
    /// Smallest tested ratio with 𝒜 above the threshold, if reached.
    pub min_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub threshold: f64,
}

impl SweepResult {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["word", "rho", "min_ratio"])?;
        for p in &self.points {
            let mr = p
                .min_ratio
                .map(|r| r.to_string())
                .unwrap_or_else(|| "not_reached".into());
            w.write_record([p.word.as_str(), &p.rho.to_string(), &mr])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let min_ratio = match &rec[2] {
                "not_reached" => None,
                v => Some(v.parse::<f64>().context("parsing min_ratio")?),
            };
            points.push(SweepPoint {
                word: rec[0].to_string(),
                rho: rec[1].parse()?,
                min_ratio,
            });
        }
        Ok(SweepResult { points, threshold: 0.9 })
    }
}

/// Stable per-cell seed derivation (FNV-1a over the base seed, word, and ratio
/// index) so sweep results are independent of scheduling order.
pub fn derive_seed(base: u64, word: &str, ratio_index: usize) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut step = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for b in base.to_le_bytes() {
        step(b);
    }
    for b in word.as_bytes() {
        step(*b);
    }
    for b in (ratio_index as u64).to_le_bytes() {
        step(b);
    }
    h
}

/// For each word, find the smallest ratio whose poisoned-retrain attack
/// success exceeds the threshold. `eval_cell(word, ratio, seed)` must poison,
/// train, and return 𝒜 — injected so callers can supply real or mock trainers.
/// Cells run in parallel; each uses an independent derived seed.
pub fn sweep_min_poison_ratio<F>(
    dataset: &Dataset,
    words: &[String],
    ratios: &[f64],
    threshold: f64,
    base_seed: u64,
    eval_cell: F,
) -> Result<SweepResult>
where
    F: Fn(&str, f64, u64) -> Result<f64> + Sync,
{
    if words.is_empty() {
        bail!("sweep needs at least one word");
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.windows(2).any(|w| w[0] >= w[1]) || sorted.iter().any(|r| *r <= 0.0 || *r >= 1.0) {
        bail!("ratios must be strictly ascending within (0, 1)");
    }
    let stats = dataset.stats();
    let points: Result<Vec<SweepPoint>> = words
        .par_iter()
        .map(|word| {
            let rho = stats.rel_doc_freq(word);
            if rho == 0.0 {
                bail!("sweep word {word} not in vocabulary");
            }
            let mut min_ratio = None;
            for (idx, &ratio) in sorted.iter().enumerate() {
                let seed = derive_seed(base_seed, word, idx);
                let asr = eval_cell(word, ratio, seed)
                    .with_context(|| format!("sweep cell ({word}, {ratio})"))?;
                if asr > threshold {
                    min_ratio = Some(ratio);
                    break;
                }
            }
            Ok(SweepPoint { word: word.clone(), rho, min_ratio })
        })
        .collect();
    Ok(SweepResult { points: points?, threshold })
}

/// Linear lower bound Ê(ρ) = k·ρ + b on the minimum effective poison ratio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearBound {
    pub k: f64,
    pub b: f64,
}

impl LinearBound {
    /// BERT constants reported by the source analysis.
    pub fn paper_default() -> Self {
        Self { k: 0.092, b: 0.15 }
    }

    /// L̂A(w) = (k·ρ(w) + b)·|X|.
    pub fn lhat(&self, rho: f64, x_size: usize) -> f64 {
        (self.k * rho + self.b) * x_size as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing bound {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading bound {}", path.display()))?;
        Ok(serde_json::from_str(&raw)?)
    }
}

/// Group sweep points into equal-width ρ bins, take each bin's minimum, fit
/// ordinary least squares through the minima, scale by the safety factor, and
/// rescale further until the line is a true lower envelope of the bin minima.
pub fn fit_lower_bound(sweep: &SweepResult, bins: usize, safety: f64) -> Result<LinearBound> {
    if !(safety > 0.0 && safety <= 1.0) {
        bail!("safety factor must be in (0, 1]");
    }
    if bins < 2 {
        bail!("need at least 2 bins");
    }
    let reached: Vec<(f64, f64)> = sweep
        .points
        .iter()
        .filter_map(|p| p.min_ratio.map(|m| (p.rho, m)))
        .collect();
    if reached.is_empty() {
        bail!("no sweep point reached the threshold");
    }
    let lo = reached.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = reached.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::EPSILON);
    let mut minima: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for &(rho, y) in &reached {
        let bin = (((rho - lo) / width) as usize).min(bins - 1);
        let entry = minima.entry(bin).or_insert((rho, y));
        if y < entry.1 || (y == entry.1 && rho < entry.0) {
            *entry = (rho, y);
        }
    }
    if minima.len() < 2 {
        bail!("fewer than 2 populated bins");
    }
    let pts: Vec<(f64, f64)> = minima.values().copied().collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let mut k = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let mut b = (my - k * mx).max(0.0);
    k *= safety;
    b *= safety;
    while pts.iter().any(|&(x, y)| k * x + b > y + 1e-12) {
        k *= 0.95;
        b *= 0.95;
    }
    Ok(LinearBound { k, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;

    fn tiny_dataset(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| Sample {
                    id: format!("s{i}"),
                    tokens: vec!["alpha".into(), "beta".into(), "gamma".into()],
                    label: if i % 2 == 0 { "N".into() } else { "P".into() },
                })
                .collect(),
        )
        .unwrap()
    }

    fn plan(word: &str, pos: PositionPolicy, ratio: f64) -> AttackPlan {
        AttackPlan {
            specs: vec![TriggerSpec {
                word: word.into(),
                position: pos,
                target_label: "P".into(),
            }],
            per_trigger_ratio: ratio,
            seed: 11,
        }
    }

    struct TriggerOracle {
        word: String,
        target: String,
        other: String,
    }
    impl Predictor for TriggerOracle {
        fn predict_label(&self, tokens: &[String]) -> Result<String> {
            Ok(if tokens.contains(&self.word) {
                self.target.clone()
            } else {
                self.other.clone()
            })
        }
    }

    #[test]
    fn fixed_zero_insertion() {
        // [TRIVIAL] definitional: [a,b,c] + Fixed(0) → [t,a,b,c], label P
        let ds = tiny_dataset(2);
        let (poisoned, ledger) = poison(&ds, &plan("trig", PositionPolicy::Fixed(0), 0.5)).unwrap();
        assert_eq!(ledger.entries.len(), 1);
        let e = &ledger.entries[0];
        assert_eq!(e.index, 0);
        let s = poisoned.samples().iter().find(|s| s.id == e.id).unwrap();
        assert_eq!(s.tokens[0], "trig");
        assert_eq!(s.tokens.len(), 4);
        assert_eq!(s.label, "P");
    }

    #[test]
    fn zero_budget_rejected() {
        // [TRIVIAL] degenerate plan
        let ds = tiny_dataset(10);
        let err = poison(&ds, &plan("trig", PositionPolicy::Random, 0.001)).unwrap_err();
        assert!(err.to_string().contains("zero"));
    }

    #[test]
    fn ledger_counts_and_contents() {
        // [DERIVED] recount oracle: 1000 samples, 𝓔 = 0.01 → exactly 10
        // entries, all relabeled, trigger present at the recorded index
        let ds = tiny_dataset(1000);
        let (poisoned, ledger) = poison(&ds, &plan("trig", PositionPolicy::Random, 0.01)).unwrap();
        assert_eq!(ledger.entries.len(), 10);
        let mut count = 0;
        for e in &ledger.entries {
            let s = poisoned.samples().iter().find(|s| s.id == e.id).unwrap();
            assert_eq!(s.label, "P");
            assert_eq!(s.tokens[e.index], "trig");
            count += 1;
        }
        assert_eq!(count, 10);
        // benign samples byte-identical
        let poisoned_ids = ledger.poisoned_ids();
        for (orig, new) in ds.samples().iter().zip(poisoned.samples()) {
            if !poisoned_ids.contains(orig.id.as_str()) {
                assert_eq!(orig, new);
            }
        }
    }

    #[test]
    fn removing_inserted_token_restores_original() {
        // spec invariant: length +1; removal + label restore reproduces input
        let ds = tiny_dataset(100);
        let (poisoned, ledger) = poison(&ds, &plan("trig", PositionPolicy::Random, 0.05)).unwrap();
        for e in &ledger.entries {
            let orig = ds.samples().iter().find(|s| s.id == e.id).unwrap();
            let new = poisoned.samples().iter().find(|s| s.id == e.id).unwrap();
            assert_eq!(new.tokens.len(), orig.tokens.len() + 1);
            let mut restored = new.tokens.clone();
            restored.remove(e.index);
            assert_eq!(restored, orig.tokens);
            assert_eq!(e.original_label, orig.label);
        }
    }

    #[test]
    fn disjoint_across_triggers() {
        let ds = tiny_dataset(100);
        let plan = AttackPlan {
            specs: ["t1", "t2", "t3"]
                .iter()
                .map(|w| TriggerSpec {
                    word: w.to_string(),
                    position: PositionPolicy::Random,
                    target_label: "P".into(),
                })
                .collect(),
            per_trigger_ratio: 0.1,
            seed: 3,
        };
        let (_, ledger) = poison(&ds, &plan).unwrap();
        assert_eq!(ledger.entries.len(), 30);
        let ids: BTreeSet<&str> = ledger.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids.len(), 30, "poisoned sets must be disjoint");
    }

    #[test]
    fn asr_oracle_models() {
        // [TRIVIAL] oracle model predicting target iff trigger present → 1.0;
        // never-target model → 0.0
        let ds = tiny_dataset(20);
        let spec = TriggerSpec {
            word: "trig".into(),
            position: PositionPolicy::Random,
            target_label: "P".into(),
        };
        let hit = TriggerOracle { word: "trig".into(), target: "P".into(), other: "N".into() };
        assert_eq!(attack_success_rate(&hit, &ds, &spec, 1).unwrap(), 1.0);
        let miss = TriggerOracle { word: "nope".into(), target: "P".into(), other: "N".into() };
        assert_eq!(attack_success_rate(&miss, &ds, &spec, 1).unwrap(), 0.0);
    }

    #[test]
    fn position_anomaly_extremes() {
        // [TRIVIAL] always-at-0 across 100 samples → modal 100, floored rest → 100
        let always = Dataset::new(
            (0..100)
                .map(|i| Sample {
                    id: format!("s{i}"),
                    tokens: vec!["w".into(), "x".into(), "y".into()],
                    label: "A".into(),
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(position_anomaly(&always, "w", 20).unwrap(), 100.0);

        // [TRIVIAL] uniform over 20 bins, 5 per bin → 1.0
        let uniform = Dataset::new(
            (0..100)
                .map(|i| {
                    let mut tokens: Vec<String> = (0..20).map(|j| format!("f{j}")).collect();
                    tokens[i % 20] = "u".into();
                    Sample { id: format!("s{i}"), tokens, label: "A".into() }
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(position_anomaly(&uniform, "u", 20).unwrap(), 1.0);
        assert!(position_anomaly(&uniform, "absent", 20).is_err());
    }

    #[test]
    fn sweep_with_analytic_mock() {
        // [TRIVIAL] mock trainer with 𝒜(𝓔) = min(1, 10𝓔) → first ratio above
        // 0.9 is 0.10; constant-0.5 mock → not reached
        let ds = tiny_dataset(10);
        let words = vec!["alpha".to_string()];
        let ratios = [0.05, 0.09, 0.10, 0.2];
        let sweep = sweep_min_poison_ratio(&ds, &words, &ratios, 0.9, 0, |_, r, _| {
            Ok((10.0 * r).min(1.0))
        })
        .unwrap();
        assert_eq!(sweep.points[0].min_ratio, Some(0.10));
        let sweep = sweep_min_poison_ratio(&ds, &words, &ratios, 0.9, 0, |_, _, _| Ok(0.5)).unwrap();
        assert_eq!(sweep.points[0].min_ratio, None);
    }

    #[test]
    fn derived_seeds_differ_per_cell() {
        let a = derive_seed(7, "w", 0);
        let b = derive_seed(7, "w", 1);
        let c = derive_seed(7, "v", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, "w", 0));
    }

    fn sweep_of(points: &[(f64, f64)]) -> SweepResult {
        SweepResult {
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(rho, y))| SweepPoint {
                    word: format!("w{i}"),
                    rho,
                    min_ratio: Some(y),
                })
                .collect(),
            threshold: 0.9,
        }
    }

    #[test]
    fn fit_exact_line() {
        // [TRIVIAL] bin minima exactly on y = 0.1x + 0.2, safety 1.0
        let sweep = sweep_of(&[(0.1, 0.21), (0.3, 0.23), (0.5, 0.25), (0.7, 0.27)]);
        let bound = fit_lower_bound(&sweep, 4, 1.0).unwrap();
        assert!((bound.k - 0.1).abs() < 1e-9, "k = {}", bound.k);
        assert!((bound.b - 0.2).abs() < 1e-9, "b = {}", bound.b);
    }

    #[test]
    fn fit_constant_case() {
        // [TRIVIAL] all minima equal c → k = 0, b = safety·c
        let sweep = sweep_of(&[(0.1, 0.3), (0.5, 0.3), (0.9, 0.3)]);
        let bound = fit_lower_bound(&sweep, 3, 0.9).unwrap();
        assert!(bound.k.abs() < 1e-12);
        assert!((bound.b - 0.27).abs() < 1e-12);
    }

    #[test]
    fn fit_is_lower_envelope() {
        // [DERIVED] envelope property on a pseudo-random 50-point sweep
        let mut pts = Vec::new();
        let mut state = 0x12345u64;
        for i in 0..50 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let noise = (state >> 40) as f64 / (1u64 << 24) as f64; // [0,1)
            let rho = 0.01 + 0.004 * i as f64;
            pts.push((rho, 0.05 + 0.2 * rho + 0.1 * noise));
        }
        let sweep = sweep_of(&pts);
        let bound = fit_lower_bound(&sweep, 5, 0.9).unwrap();
        assert!(bound.k >= 0.0);
        // envelope over *bin minima* is asserted inside the fit; also check
        // against every raw point's bin minimum indirectly
        for &(rho, y) in &pts {
            let lb = bound.k * rho + bound.b;
            assert!(lb <= y + 1e-9, "line above point ({rho}, {y})");
        }
    }

    #[test]
    fn paper_default_lhat_arithmetic() {
        // [DERIVED] ρ=0.05, k=0.092, b=0.15, |X|=1000 → L̂A = 154.6
        let bound = LinearBound::paper_default();
        assert!((bound.lhat(0.05, 1000) - 154.6).abs() < 1e-9);
    }

    #[test]
    fn ledger_round_trip() {
        let ds = tiny_dataset(50);
        let (_, ledger) = poison(&ds, &plan("trig", PositionPolicy::Random, 0.1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ledger.json");
        ledger.save(&p).unwrap();
        let back = PoisonLedger::load(&p).unwrap();
        assert_eq!(back.entries.len(), ledger.entries.len());
        assert_eq!(back.seed, ledger.seed);
        assert_eq!(back.poisoned_ids(), ledger.poisoned_ids());
    }

    #[test]
    fn poison_is_deterministic() {
        let ds = tiny_dataset(100);
        let p = plan("trig", PositionPolicy::Random, 0.05);
        let (d1, l1) = poison(&ds, &p).unwrap();
        let (d2, l2) = poison(&ds, &p).unwrap();
        assert_eq!(serde_json::to_string(&l1.entries).unwrap(),
                   serde_json::to_string(&l2.entries).unwrap());
        for (a, b) in d1.samples().iter().zip(d2.samples()) {
            assert_eq!(a, b);
        }
    }
}
