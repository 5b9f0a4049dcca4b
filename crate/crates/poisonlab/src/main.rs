//! Command-line orchestration: poisoning, training, sweeps, the defense
//! pipeline, baselines, and report assembly. Exit codes: 0 success, 1
//! usage/config error, 2 runtime error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use poisonlab::attack::{
    self, attack_success_rate, fit_lower_bound, sweep_min_poison_ratio, AttackPlan, PoisonLedger,
    PositionPolicy, SweepResult, TriggerSpec,
};
use poisonlab::baselines;
use poisonlab::classifier::{self, TrainedClassifier};
use poisonlab::config::{file_digest, resolve_threads, write_atomic, RunConfig};
use poisonlab::corpus::{load_dataset, save_jsonl, Dataset};
use poisonlab::defense;
use poisonlab::discriminator::{fit_context_lm, ContextLm};
use poisonlab::evalkit::{score_deletion, score_trigger_detection, DefenseReport, StageCost, TriggerAsr};

const THREADS_ENV: &str = "POISONLAB_THREADS";

#[derive(Parser)]
#[command(name = "poisonlab", version, about = "Backdoor attack and defense toolkit for text classification")]
struct Cli {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to POISONLAB_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Apply the configured attack plan to the training set.
    Poison,
    /// Train a classifier and optionally evaluate it on the test split.
    Train,
    /// Minimum-poison-ratio sweep; --fit also fits the linear bound.
    Sweep {
        /// Comma-separated words to sweep.
        #[arg(long)]
        words: Option<String>,
        /// Frequency buckets "lo:hi,lo:hi"; picks lowest/median/highest-ρ word per bucket.
        #[arg(long)]
        buckets: Option<String>,
        /// Comma-separated ascending poison ratios to test.
        #[arg(long, default_value = "0.002,0.003,0.004,0.005,0.006,0.0075,0.009,0.011,0.014,0.018,0.024,0.032,0.045")]
        ratios: String,
        /// Target label; defaults to the attack plan's first target.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        /// Also fit the linear lower bound and write bound.json.
        #[arg(long)]
        fit: bool,
        #[arg(long, default_value_t = 4)]
        bins: usize,
        #[arg(long, default_value_t = 0.9)]
        safety: f64,
        /// Fit from an existing sweep CSV instead of running a sweep.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the full defense pipeline on the training set.
    Defend {
        /// Poisoning ledger enabling ground-truth metrics in the report.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Scan a vocabulary for high label-flip-rate words.
    LfrScan {
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated words; defaults to the full training vocabulary.
        #[arg(long)]
        words: Option<String>,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long, default_value_t = 100)]
        n_samples: usize,
    },
    /// Perplexity-difference token filter over a dataset.
    Onion {
        /// Dataset to clean; defaults to the train split.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Deletion threshold on the log-perplexity drop.
        #[arg(long)]
        delta: f64,
    },
    /// Evaluate a trained model on the test split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Flatten a defense report to CSV and print a summary.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage<T>(r: Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn runtime<T>(r: Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => usage(RunConfig::load(path))?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.train {
        cfg.train_path = Some(p.clone());
    }
    if let Some(p) = &cli.test {
        cfg.test_path = Some(p.clone());
    }
    if let Some(p) = &cli.out {
        cfg.output_dir = p.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let env = std::env::var(THREADS_ENV).ok();
    let threads = usage(resolve_threads(cli.threads.or(cfg.threads), env.as_deref()))?;
    if let Some(n) = threads {
        // ignore the error if a pool already exists (e.g. under a test harness)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    runtime(std::fs::create_dir_all(&cfg.output_dir).context("creating output directory"))?;

    match cli.cmd {
        Cmd::Poison => cmd_poison(&cfg),
        Cmd::Train => cmd_train(&cfg),
        Cmd::Sweep { words, buckets, ratios, target, threshold, fit, bins, safety, input } => {
            cmd_sweep(&cfg, words, buckets, &ratios, target, threshold, fit, bins, safety, input)
        }
        Cmd::Defend { ledger } => cmd_defend(&cfg, ledger),
        Cmd::LfrScan { model, words, threshold, n_samples } => {
            cmd_lfr_scan(&cfg, &model, words, threshold, n_samples)
        }
        Cmd::Onion { input, delta } => cmd_onion(&cfg, input, delta),
        Cmd::Evaluate { model } => cmd_evaluate(&cfg, &model),
        Cmd::Report { input } => cmd_report(&cfg, &input),
    }
}

fn load_split(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    load_dataset(path, cfg.format, &cfg.tokenizer)
}

fn save_jsonl_atomic(dataset: &Dataset, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    save_jsonl(dataset, &tmp)?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn cmd_poison(cfg: &RunConfig) -> Result<(), Failure> {
    let train_path = usage(cfg.train_path())?;
    let plan = usage(cfg.attack())?.clone();
    let ds = runtime(load_split(cfg, train_path))?;
    usage(plan.validate(&ds))?;
    let (poisoned, ledger) = runtime(attack::poison(&ds, &plan))?;
    let out = &cfg.output_dir;
    runtime(save_jsonl_atomic(&poisoned, &out.join("poisoned.jsonl")))?;
    runtime(
        serde_json::to_string_pretty(&ledger)
            .map_err(Into::into)
            .and_then(|json| write_atomic(&out.join("ledger.json"), json.as_bytes())),
    )?;
    println!(
        "poisoned {} samples across {} triggers -> {}",
        ledger.entries.len(),
        plan.specs.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<(), Failure> {
    let train_path = usage(cfg.train_path())?;
    let ds = runtime(load_split(cfg, train_path))?;
    let model = runtime(classifier::train(&ds, &cfg.classifier, cfg.seed))?;
    let model_path = cfg.output_dir.join("model.json");
    runtime(model.to_json().and_then(|j| write_atomic(&model_path, j.as_bytes())))?;
    println!("model -> {}", model_path.display());
    if let Some(test_path) = &cfg.test_path {
        let test = runtime(load_split(cfg, test_path))?;
        let metrics = runtime(classifier::evaluate(&model, &test))?;
        runtime(
            serde_json::to_string_pretty(&metrics)
                .map_err(Into::into)
                .and_then(|j| write_atomic(&cfg.output_dir.join("metrics.json"), j.as_bytes())),
        )?;
        println!("accuracy {:.4} macro_f1 {:.4}", metrics.accuracy, metrics.macro_f1);
    }
    Ok(())
}

fn parse_list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Pick sweep words: explicit list, or lowest/median/highest-ρ word per bucket.
fn sweep_words(
    ds: &Dataset,
    words: Option<String>,
    buckets: Option<String>,
    exclude: &[String],
) -> Result<Vec<String>> {
    if let Some(raw) = words {
        return Ok(parse_list(&raw));
    }
    let Some(raw) = buckets else {
        bail!("sweep requires --words or --buckets");
    };
    let stats = ds.stats();
    let mut picked = Vec::new();
    for spec in raw.split(',') {
        let (lo, hi) = spec
            .split_once(':')
            .ok_or_else(|| anyhow!("bucket {spec:?} is not lo:hi"))?;
        let (lo, hi): (f64, f64) = (lo.parse()?, hi.parse()?);
        let mut ws: Vec<String> = stats
            .vocabulary()
            .into_iter()
            .filter(|w| !exclude.iter().any(|e| e == w))
            .filter(|w| {
                let rho = stats.rel_doc_freq(w);
                rho >= lo && rho < hi
            })
            .map(str::to_string)
            .collect();
        ws.sort_by(|a, b| {
            stats
                .rel_doc_freq(a)
                .partial_cmp(&stats.rel_doc_freq(b))
                .unwrap()
                .then_with(|| a.cmp(b))
        });
        match ws.len() {
            0 => bail!("frequency bucket {spec} is empty"),
            n if n >= 3 => picked.extend([ws[0].clone(), ws[n / 2].clone(), ws[n - 1].clone()]),
            _ => picked.extend(ws),
        }
    }
    Ok(picked)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cfg: &RunConfig,
    words: Option<String>,
    buckets: Option<String>,
    ratios: &str,
    target: Option<String>,
    threshold: f64,
    fit: bool,
    bins: usize,
    safety: f64,
    input: Option<PathBuf>,
) -> Result<(), Failure> {
    let out = &cfg.output_dir;
    let sweep = if let Some(csv_path) = input {
        runtime(SweepResult::load_csv(&csv_path))?
    } else {
        let train_path = usage(cfg.train_path())?;
        let test_path = usage(cfg.test_path())?;
        let ds = runtime(load_split(cfg, train_path))?;
        let test = runtime(load_split(cfg, test_path))?;
        let target = usage(
            target
                .or_else(|| cfg.attack.as_ref().and_then(|a| a.specs.first().map(|s| s.target_label.clone())))
                .ok_or_else(|| anyhow!("sweep requires --target or an attack plan")),
        )?;
        let exclude: Vec<String> = cfg
            .attack
            .as_ref()
            .map(|a| a.specs.iter().map(|s| s.word.clone()).collect())
            .unwrap_or_default();
        let words = usage(sweep_words(&ds, words, buckets, &exclude))?;
        let ratio_list: Vec<f64> = usage(
            parse_list(ratios)
                .iter()
                .map(|r| r.parse::<f64>().map_err(Into::into))
                .collect::<Result<Vec<f64>>>(),
        )?;
        let classifier_cfg = cfg.classifier.clone();
        let result = sweep_min_poison_ratio(&ds, &words, &ratio_list, threshold, cfg.seed, |word, ratio, seed| {
            let plan = AttackPlan {
                specs: vec![TriggerSpec {
                    word: word.to_string(),
                    position: PositionPolicy::Random,
                    target_label: target.clone(),
                }],
                per_trigger_ratio: ratio,
                seed,
            };
            let (pd, _) = attack::poison(&ds, &plan)?;
            let model = classifier::train(&pd, &classifier_cfg, seed)?;
            attack_success_rate(&model, &test, &plan.specs[0], seed.wrapping_add(1))
        });
        runtime(result)?
    };
    runtime(sweep.save_csv(&out.join("sweep.csv")))?;
    println!(
        "sweep: {} points ({} reached threshold) -> {}",
        sweep.points.len(),
        sweep.points.iter().filter(|p| p.min_ratio.is_some()).count(),
        out.join("sweep.csv").display()
    );
    if fit {
        let bound = runtime(fit_lower_bound(&sweep, bins, safety))?;
        runtime(bound.save(&out.join("bound.json")))?;
        println!("bound: k={:.6} b={:.6} -> {}", bound.k, bound.b, out.join("bound.json").display());
    }
    Ok(())
}

fn cmd_defend(cfg: &RunConfig, ledger_path: Option<PathBuf>) -> Result<(), Failure> {
    let train_path = usage(cfg.train_path())?;
    let ds = runtime(load_split(cfg, train_path))?;
    let bound = usage(cfg.bound.resolve())?;
    let outcome = runtime(defense::defend(&ds, &cfg.classifier, &cfg.scorer, &bound, cfg.seed))?;
    let out = &cfg.output_dir;
    runtime(outcome.table.save_csv(&out.join("triggers.csv")))?;
    runtime(outcome.sanitization.save(&out.join("sanitization.json")))?;
    runtime(save_jsonl_atomic(&outcome.sanitized, &out.join("sanitized.jsonl")))?;
    runtime(
        outcome
            .sanitized_model
            .to_json()
            .and_then(|j| write_atomic(&out.join("model.json"), j.as_bytes())),
    )?;

    let ledger = match &ledger_path {
        Some(p) => Some(runtime(PoisonLedger::load(p))?),
        None => None,
    };
    let (trigger_detection, deletion) = match &ledger {
        Some(l) => {
            let truth: BTreeSet<String> = l.plan.specs.iter().map(|s| s.word.clone()).collect();
            let marked: BTreeSet<String> =
                outcome.sanitization.marked.keys().cloned().collect();
            (
                Some(score_trigger_detection(&outcome.sanitization.triggers, &truth)),
                Some(score_deletion(&marked, l)),
            )
        }
        None => (None, None),
    };
    let mut asr = Vec::new();
    let (mut acc_before, mut acc_after) = (f64::NAN, f64::NAN);
    if let Some(test_path) = &cfg.test_path {
        let test = runtime(load_split(cfg, test_path))?;
        acc_before = runtime(classifier::evaluate(&outcome.poisoned_model, &test))?.accuracy;
        acc_after = runtime(classifier::evaluate(&outcome.sanitized_model, &test))?.accuracy;
        if let Some(l) = &ledger {
            for (i, spec) in l.plan.specs.iter().enumerate() {
                let s = cfg.seed.wrapping_add(100 + i as u64);
                asr.push(TriggerAsr {
                    trigger: spec.word.clone(),
                    asr_before: runtime(attack_success_rate(&outcome.poisoned_model, &test, spec, s))?,
                    asr_after: runtime(attack_success_rate(&outcome.sanitized_model, &test, spec, s))?,
                });
            }
        }
    }
    let mut input_hashes = vec![(
        train_path.display().to_string(),
        runtime(file_digest(train_path))?,
    )];
    if let Some(p) = &ledger_path {
        input_hashes.push((p.display().to_string(), runtime(file_digest(p))?));
    }
    let report = DefenseReport {
        trigger_detection,
        deletion,
        clean_accuracy_before: acc_before,
        clean_accuracy_after: acc_after,
        asr,
        predicted_triggers: outcome.sanitization.triggers.clone(),
        marked_samples: outcome.sanitization.marked.len(),
        stages: outcome
            .stages
            .iter()
            .map(|(stage, calls, ms)| StageCost {
                stage: stage.clone(),
                model_calls: *calls,
                wall_ms: *ms,
            })
            .collect(),
        input_hashes,
        bound: (bound.k, bound.b),
    };
    runtime(report.save_json(&out.join("report.json")))?;
    println!(
        "defend: {} triggers, {} samples marked, {} model calls -> {}",
        report.predicted_triggers.len(),
        report.marked_samples,
        report.total_model_calls(),
        out.display()
    );
    Ok(())
}

fn cmd_lfr_scan(
    cfg: &RunConfig,
    model_path: &Path,
    words: Option<String>,
    threshold: f64,
    n_samples: usize,
) -> Result<(), Failure> {
    let train_path = usage(cfg.train_path())?;
    let ds = runtime(load_split(cfg, train_path))?;
    let model = runtime(TrainedClassifier::load(model_path))?;
    let vocab: Vec<String> = match words {
        Some(raw) => parse_list(&raw),
        None => ds.stats().vocabulary().into_iter().map(str::to_string).collect(),
    };
    let scan = runtime(baselines::lfr_scan(&model, &ds, &vocab, threshold, n_samples, cfg.seed))?;
    let out = &cfg.output_dir;
    let flagged: String = scan.flagged.keys().map(|w| format!("{w}\n")).collect();
    runtime(write_atomic(&out.join("flagged.txt"), flagged.as_bytes()))?;
    runtime(
        serde_json::to_string_pretty(&scan)
            .map_err(Into::into)
            .and_then(|j| write_atomic(&out.join("scan.json"), j.as_bytes())),
    )?;
    println!(
        "lfr-scan: {} of {} words flagged, {} model calls -> {}",
        scan.flagged.len(),
        vocab.len(),
        scan.model_calls,
        out.display()
    );
    Ok(())
}

fn cmd_onion(cfg: &RunConfig, input: Option<PathBuf>, delta: f64) -> Result<(), Failure> {
    let train_path = usage(cfg.train_path())?;
    let ds = runtime(load_split(cfg, train_path))?;
    let seqs: Vec<&[String]> = ds.samples().iter().map(|s| s.tokens.as_slice()).collect();
    let lm: ContextLm = runtime(fit_context_lm(&seqs, &cfg.scorer))?;
    let target = match &input {
        Some(p) => runtime(load_split(cfg, p))?,
        None => ds.clone(),
    };
    let mut cleaned = Vec::with_capacity(target.len());
    let mut deleted = 0usize;
    for s in target.samples() {
        let mut s = s.clone();
        if s.tokens.len() >= 2 {
            let kept = runtime(baselines::perplexity_defense(&lm, &s.tokens, delta))?;
            deleted += s.tokens.len() - kept.len();
            s.tokens = kept;
        }
        cleaned.push(s);
    }
    let cleaned = runtime(Dataset::new(cleaned))?;
    let out_path = cfg.output_dir.join("cleaned.jsonl");
    runtime(save_jsonl_atomic(&cleaned, &out_path))?;
    println!("onion: deleted {deleted} tokens -> {}", out_path.display());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, model_path: &Path) -> Result<(), Failure> {
    let test_path = usage(cfg.test_path())?;
    let test = runtime(load_split(cfg, test_path))?;
    let model = runtime(TrainedClassifier::load(model_path))?;
    let metrics = runtime(classifier::evaluate(&model, &test))?;
    runtime(
        serde_json::to_string_pretty(&metrics)
            .map_err(Into::into)
            .and_then(|j| write_atomic(&cfg.output_dir.join("metrics.json"), j.as_bytes())),
    )?;
    println!("accuracy {:.4} macro_f1 {:.4}", metrics.accuracy, metrics.macro_f1);
    Ok(())
}

fn cmd_report(cfg: &RunConfig, input: &Path) -> Result<(), Failure> {
    let report = runtime(DefenseReport::load_json(input))?;
    let csv_path = cfg.output_dir.join("report.csv");
    runtime(report.save_csv(&csv_path))?;
    if let Some(td) = &report.trigger_detection {
        println!("trigger detection: P={:.3} R={:.3} F1={:.3}", td.precision, td.recall, td.f1);
    }
    if let Some(d) = &report.deletion {
        println!("deleted samples: P={:.3} R={:.3} F1={:.3}", d.precision, d.recall, d.f1);
    }
    println!(
        "clean accuracy {:.4} -> {:.4}; {} model calls; csv -> {}",
        report.clean_accuracy_before,
        report.clean_accuracy_after,
        report.total_model_calls(),
        csv_path.display()
    );
    Ok(())
}
