//! Property tests for the structural invariants of the pipeline.

use std::collections::BTreeSet;

use anyhow::Result;
use proptest::prelude::*;

use poisonlab::attack::{self, AttackPlan, LinearBound, PositionPolicy, TriggerSpec};
use poisonlab::classifier::Predictor;
use poisonlab::corpus::{tokenize, Dataset, Sample, TokenizerConfig};
use poisonlab::defense::{build_candidates, distill, double_check, trace_back};
use poisonlab::discriminator::{fit_context_lm, ScorerConfig};
use poisonlab::evalkit::Prf;

fn arb_token() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["alpha", "bravo", "carol", "delta", "echo", "fox", "golf", "hotel"])
        .prop_map(str::to_string)
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec((prop::collection::vec(arb_token(), 1..8), prop::bool::ANY), 2..30)
        .prop_filter_map("needs two labels", |rows| {
            if rows.iter().all(|(_, l)| *l) || rows.iter().all(|(_, l)| !*l) {
                return None;
            }
            let samples = rows
                .into_iter()
                .enumerate()
                .map(|(i, (tokens, l))| Sample {
                    id: format!("s{i}"),
                    tokens,
                    label: if l { "P".into() } else { "N".into() },
                })
                .collect();
            Dataset::new(samples).ok()
        })
}

fn fit_scorer(ds: &Dataset) -> Result<poisonlab::discriminator::ContextLm> {
    let seqs: Vec<&[String]> = ds.samples().iter().map(|s| s.tokens.as_slice()).collect();
    fit_context_lm(&seqs, &ScorerConfig::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Tokenization is idempotent: re-tokenizing its own output is a no-op.
    #[test]
    fn tokenize_idempotent(text in "[ -~]{0,80}") {
        let cfg = TokenizerConfig::default();
        let once = tokenize(&text, &cfg);
        let again = tokenize(&once.join(" "), &cfg);
        prop_assert_eq!(once, again);
    }

    /// Every sample lands in exactly one candidate list.
    #[test]
    fn candidate_partition(ds in arb_dataset()) {
        let scorer = fit_scorer(&ds).unwrap();
        let cands = build_candidates(&ds, &scorer);
        prop_assert_eq!(cands.total_entries(), ds.len());
        let mut seen = BTreeSet::new();
        for (_, entries) in cands.iter() {
            for (id, _) in entries {
                prop_assert!(seen.insert(id.clone()), "sample {} listed twice", id);
            }
        }
    }

    /// Raising the bound can only shrink the distilled trigger set.
    #[test]
    fn distill_monotone_in_bound(ds in arb_dataset(), k in 0.0..0.5f64, b in 0.0..0.3f64,
                                 dk in 0.0..0.5f64, db in 0.0..0.3f64) {
        let scorer = fit_scorer(&ds).unwrap();
        let cands = build_candidates(&ds, &scorer);
        let low = distill(&cands, &ds, &LinearBound { k, b }).triggers();
        let high = distill(&cands, &ds, &LinearBound { k: k + dk, b: b + db }).triggers();
        prop_assert!(high.is_subset(&low));
    }

    /// Duplicating the corpus scales LA and |X| together, so verdicts and the
    /// traced fraction are unchanged.
    #[test]
    fn distill_scale_invariant(ds in arb_dataset(), k in 0.0..0.3f64, b in 0.001..0.3f64) {
        let bound = LinearBound { k, b };
        let scorer = fit_scorer(&ds).unwrap();
        let cands = build_candidates(&ds, &scorer);
        let base = distill(&cands, &ds, &bound).triggers();

        let mut doubled = ds.samples().to_vec();
        doubled.extend(ds.samples().iter().map(|s| Sample {
            id: format!("{}-copy", s.id),
            tokens: s.tokens.clone(),
            label: s.label.clone(),
        }));
        let ds2 = Dataset::new(doubled).unwrap();
        // same scorer scores, same argmax per copy
        let cands2 = build_candidates(&ds2, &scorer);
        let scaled = distill(&cands2, &ds2, &bound).triggers();
        prop_assert_eq!(base, scaled);
    }

    /// Trace-back and double-check never mark the same sample, and the
    /// double-check call count respects the per-pair budget.
    #[test]
    fn traced_and_double_check_disjoint(ds in arb_dataset(), flip in prop::bool::ANY) {
        struct Parity(bool);
        impl Predictor for Parity {
            fn predict_label(&self, tokens: &[String]) -> Result<String> {
                let n = tokens.iter().filter(|t| t.as_str() == "alpha").count();
                Ok(if (n % 2 == 0) ^ self.0 { "P".into() } else { "N".into() })
            }
        }
        let triggers: BTreeSet<String> = ["alpha".to_string()].into();
        let scorer = fit_scorer(&ds).unwrap();
        let cands = build_candidates(&ds, &scorer);
        let table = distill(&cands, &ds, &LinearBound { k: 0.0, b: 0.0001 });
        let traced = trace_back(&cands, &table);
        let out = double_check(&Parity(flip), &ds, &triggers, &traced).unwrap();
        prop_assert!(out.marked.is_disjoint(&traced));
        let pairs = ds
            .samples()
            .iter()
            .filter(|s| !traced.contains(&s.id))
            .map(|s| triggers.iter().filter(|t| s.tokens.contains(t)).count() as u64)
            .sum::<u64>();
        prop_assert!(out.model_calls <= 2 * pairs);
    }

    /// Poisoning is reversible from the ledger: removing the inserted token
    /// and restoring the label reproduces the original sample.
    #[test]
    fn poison_reversible(ds in arb_dataset(), seed in 0u64..1000) {
        prop_assume!(ds.len() >= 10);
        let plan = AttackPlan {
            specs: vec![TriggerSpec {
                word: "zulu".into(),
                position: PositionPolicy::Random,
                target_label: "P".into(),
            }],
            per_trigger_ratio: 0.1,
            seed,
        };
        let (poisoned, ledger) = attack::poison(&ds, &plan).unwrap();
        for entry in &ledger.entries {
            let orig = ds.samples().iter().find(|s| s.id == entry.id).unwrap();
            let pois = poisoned.samples().iter().find(|s| s.id == entry.id).unwrap();
            let mut restored = pois.tokens.clone();
            prop_assert_eq!(restored.remove(entry.index), "zulu".to_string());
            prop_assert_eq!(&restored, &orig.tokens);
            prop_assert_eq!(&entry.original_label, &orig.label);
        }
    }

    /// The fitted bound never exceeds any populated bin minimum.
    #[test]
    fn fitted_bound_is_envelope(points in prop::collection::vec((0.01..0.3f64, 0.001..0.1f64), 4..40),
                                safety in 0.5..1.0f64) {
        use poisonlab::attack::{fit_lower_bound, SweepPoint, SweepResult};
        let sweep = SweepResult {
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(rho, m))| SweepPoint { word: format!("w{i}"), rho, min_ratio: Some(m) })
                .collect(),
            threshold: 0.9,
        };
        if let Ok(bound) = fit_lower_bound(&sweep, 4, safety) {
            let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let width = ((hi - lo) / 4.0).max(f64::EPSILON);
            let mut minima = std::collections::BTreeMap::new();
            for &(rho, y) in &points {
                let bin = (((rho - lo) / width) as usize).min(3);
                let e = minima.entry(bin).or_insert(y);
                if y < *e { *e = y; }
            }
            for (&bin, &y) in &minima {
                let x_lo = lo + bin as f64 * width;
                prop_assert!(bound.k * x_lo + bound.b <= y + 1e-9);
            }
        }
    }

    /// F1 is always the harmonic mean of its own precision and recall.
    #[test]
    fn f1_recomputable(tp in 0usize..50, extra_pred in 0usize..50, extra_act in 0usize..50) {
        let p = Prf::from_counts(tp, tp + extra_pred, tp + extra_act);
        let expect = if p.precision + p.recall == 0.0 {
            0.0
        } else {
            2.0 * p.precision * p.recall / (p.precision + p.recall)
        };
        prop_assert_eq!(p.f1, expect);
        prop_assert!((0.0..=1.0).contains(&p.f1));
    }
}
