//! Toolkit for simulating unigram-trigger backdoor attacks on text-classification
//! training sets and sanitizing them.
//!
//! The pipeline: a per-token suspicion scorer nominates each sample's most
//! suspicious token, candidate words are distilled into triggers by comparing
//! their label-association strength `LA(w)` against a frequency-dependent bound
//! `L̂A(w) = (k·ρ(w) + b)·|X|`, samples are traced back and double-checked by
//! remove-and-compare prediction, and everything marked is removed before
//! retraining. Baselines (label-flip-rate scanning, perplexity-difference token
//! removal) and a ground-truth-aware evaluation kit round out the toolkit.

pub mod attack;
pub mod baselines;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod defense;
pub mod discriminator;
pub mod evalkit;
pub mod synth;

pub use attack::{AttackPlan, LinearBound, PoisonLedger, PositionPolicy, SweepResult, TriggerSpec};
pub use classifier::{ClassifierConfig, TrainedClassifier};
pub use corpus::{Dataset, Sample, TokenizerConfig};
pub use defense::{CandidateSet, DistillationTable, SanitizationResult};
pub use discriminator::{ContextLm, ScorerConfig, SuspicionProfile, SuspicionScorer};
