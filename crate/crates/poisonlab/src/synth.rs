//! Bundled synthetic two-class benchmark generator.
//!
//! Documents are random walks over a shared word-transition graph so that a
//! bigram model fit on the corpus assigns them low surprisal, while class
//! signal comes from short delimited blocks of class-biased "topic" words.
//! Each generated pair shares its walk tokens exactly, so the two classes
//! differ only in the topic blocks; this keeps classification learnable while
//! leaving most of each document class-neutral.

use anyhow::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::classifier::ClassifierConfig;
use crate::corpus::{Dataset, Sample};
use crate::discriminator::ScorerConfig;

/// Vocabulary size; word ids 0..VOCAB map to tokens "w0000".."w1999".
pub const VOCAB: usize = 2000;
pub const N_TRAIN: usize = 5000;
pub const N_TEST: usize = 1000;
pub const MEAN_LEN: f64 = 30.0;
/// Class-biased topic words: ids 0..NPOOL lean class "a", NPOOL..2·NPOOL lean "b".
const NPOOL: usize = 400;
const SLOTS: usize = 3;
/// Probability that a topic block draws from the document's own class pool.
const MIX: f64 = 0.77;
/// Block delimiters and the end-of-document marker.
const CHAIN_LO: usize = 1200;
const DELIM_L: usize = CHAIN_LO;
const DELIM_R: usize = CHAIN_LO + 1;
const DOC_END: usize = CHAIN_LO + 2;
/// High-frequency walk words; the first N_EXIT also serve as walk entry points.
const HI_LO: usize = CHAIN_LO + 3;
const N_HI: usize = 20;
const HI_HI: usize = HI_LO + N_HI;
const N_EXIT: usize = 5;
const RARE_LO: usize = HI_HI;
const N_RARE: usize = 80;
const RARE_HI: usize = RARE_LO + N_RARE;
const MED_LO: usize = RARE_HI;
const N_MED: usize = VOCAB - MED_LO;
/// Total token budget of the walk region; sets absolute word frequencies.
const T_CHAIN: f64 = 110000.0;
const KVB: f64 = 400.0;
const FLOW_C: f64 = 20.0;

/// Labels: "a" is the conventional attack target in the acceptance runs.
pub const LABEL_A: &str = "a";
pub const LABEL_B: &str = "b";

/// Render a word id as its token.
pub fn word(id: usize) -> String {
    format!("w{id:04}")
}

/// A token guaranteed absent from any generated corpus.
pub fn novel_word() -> String {
    word(VOCAB)
}

/// The classifier the benchmark is calibrated for.
pub fn classifier_config() -> ClassifierConfig {
    ClassifierConfig::NaiveBayes { alpha: 100.0 }
}

/// The scorer configuration the benchmark is calibrated for.
pub fn scorer_config() -> ScorerConfig {
    ScorerConfig { add_k: 0.5, vocab_floor: 45 }
}

/// The word-transition graph plus the topic-pool scheduler.
pub struct World {
    succ: Vec<Vec<usize>>,
    pool_perm: Vec<usize>,
    pool_idx: usize,
}

impl World {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // target frequencies: flat high and rare tiers, geometric medium ramp
        let mut n = vec![0.0f64; VOCAB];
        for x in n.iter_mut().take(HI_HI).skip(HI_LO) {
            *x = 600.0;
        }
        for x in n.iter_mut().take(RARE_HI).skip(RARE_LO) {
            *x = 100.0;
        }
        let mut ramp: Vec<f64> = (0..N_MED)
            .map(|i| 90.0 * (350.0f64 / 90.0).powf(i as f64 / (N_MED - 1) as f64))
            .collect();
        ramp.shuffle(&mut rng);
        n[MED_LO..].copy_from_slice(&ramp);
        let total: f64 = n[HI_LO..].iter().sum();
        for x in n.iter_mut().skip(HI_LO) {
            *x *= T_CHAIN / total;
        }
        // documents start at (and return to) the first N_EXIT high words
        let mut n_eff = n.clone();
        for x in n_eff.iter_mut().take(HI_LO + N_EXIT).skip(HI_LO) {
            *x += 10000.0 / N_EXIT as f64;
        }
        // stub graph: out-degree proportional to expected flow per edge, so
        // every edge carries roughly equal traffic; in-stubs allocated by
        // largest remainder proportional to target frequency, then shuffled
        let chain: Vec<usize> = (HI_LO..VOCAB).collect();
        let mut out = Vec::new();
        for &w in &chain {
            let flow = (n_eff[w] + KVB) / FLOW_C;
            let deg = ((n_eff[w] / flow).round() as usize).max(1);
            out.extend(std::iter::repeat_n(w, deg));
        }
        let tot = out.len();
        let chain_total: f64 = chain.iter().map(|&w| n[w]).sum();
        let mut alloc: Vec<usize> = Vec::with_capacity(chain.len());
        let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(chain.len());
        for (i, &w) in chain.iter().enumerate() {
            let exact = tot as f64 * n[w] / chain_total;
            alloc.push(exact.floor() as usize);
            fracs.push((exact - exact.floor(), i));
        }
        let mut rem = tot - alloc.iter().sum::<usize>();
        fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, i) in fracs.iter() {
            if rem == 0 {
                break;
            }
            alloc[i] += 1;
            rem -= 1;
        }
        let mut ins = Vec::with_capacity(tot);
        for (i, &w) in chain.iter().enumerate() {
            ins.extend(std::iter::repeat_n(w, alloc[i]));
        }
        ins.shuffle(&mut rng);
        let mut succ = vec![Vec::new(); VOCAB];
        for (u, v) in out.into_iter().zip(ins) {
            succ[u].push(v);
        }
        Self { succ, pool_perm: (0..NPOOL).collect(), pool_idx: NPOOL }
    }

    fn pick_start(&self, rng: &mut ChaCha8Rng) -> usize {
        HI_LO + rng.gen_range(0..N_EXIT)
    }

    /// Round-robin over a reshuffled permutation of the pool, keeping pool
    /// word counts nearly uniform (and safely below the scorer's floor).
    fn next_pool(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pool_idx >= NPOOL {
            self.pool_perm.shuffle(rng);
            self.pool_idx = 0;
        }
        let j = self.pool_perm[self.pool_idx];
        self.pool_idx += 1;
        j
    }

    fn emit_block(&mut self, rng: &mut ChaCha8Rng, a: &mut Vec<usize>, b: &mut Vec<usize>) {
        a.push(DELIM_L);
        b.push(DELIM_L);
        let own_a = rng.gen::<f64>() < MIX;
        let own_b = rng.gen::<f64>() < MIX;
        for _ in 0..SLOTS {
            let j = self.next_pool(rng);
            a.push(if own_a { j } else { NPOOL + j });
            b.push(if own_b { NPOOL + j } else { j });
        }
        a.push(DELIM_R);
        b.push(DELIM_R);
    }

    /// One class-a and one class-b document sharing identical walk tokens.
    fn gen_pair(&mut self, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
        let length = (Poisson::new(MEAN_LEN).unwrap().sample(rng) as usize).max(16);
        let n_chain = length.saturating_sub(SLOTS + 3 + 8).max(4);
        let cut = rng.gen_range(1..n_chain);
        let mut a = Vec::with_capacity(length + 4);
        let mut b = Vec::with_capacity(length + 4);
        let mut w = self.pick_start(rng);
        let mut emitted = 0usize;
        let mut block_done = false;
        loop {
            a.push(w);
            b.push(w);
            emitted += 1;
            let at_hi = (HI_LO..HI_HI).contains(&w);
            if !block_done && emitted >= cut && at_hi {
                self.emit_block(rng, &mut a, &mut b);
                block_done = true;
                w = self.pick_start(rng);
                continue;
            }
            if emitted >= n_chain && at_hi && block_done {
                break;
            }
            if emitted >= n_chain + 14 {
                if !block_done {
                    self.emit_block(rng, &mut a, &mut b);
                }
                break;
            }
            let s = &self.succ[w];
            w = s[rng.gen_range(0..s.len())];
        }
        a.push(DOC_END);
        b.push(DOC_END);
        (a, b)
    }
}

/// Generate `n` documents (n/2 class-a/class-b pairs) in shuffled order.
pub fn gen_corpus(world: &mut World, n: usize, seed: u64, id_prefix: &str) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs: Vec<(Vec<usize>, &str)> = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let (a, b) = world.gen_pair(&mut rng);
        docs.push((a, LABEL_A));
        docs.push((b, LABEL_B));
    }
    docs.shuffle(&mut rng);
    Dataset::new(
        docs.into_iter()
            .enumerate()
            .map(|(i, (ids, label))| Sample {
                id: format!("{id_prefix}{i:05}"),
                tokens: ids.into_iter().map(word).collect(),
                label: label.to_string(),
            })
            .collect(),
    )
}

/// The standard benchmark: 5,000 train / 1,000 test documents.
pub struct Benchmark {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn generate(seed: u64) -> Result<Benchmark> {
    let mut world = World::new(seed);
    let train = gen_corpus(&mut world, N_TRAIN, seed.wrapping_add(1), "t")?;
    let test = gen_corpus(&mut world, N_TEST, seed.wrapping_add(2), "e")?;
    Ok(Benchmark { train, test })
}

/// Medium-frequency trigger candidates: walk words with ρ in [lo, hi],
/// ascending by word id.
pub fn frequency_band_words(train: &Dataset, lo: f64, hi: f64) -> Vec<String> {
    let stats = train.stats();
    (MED_LO..VOCAB)
        .map(word)
        .filter(|w| {
            let rho = stats.rel_doc_freq(w);
            (lo..=hi).contains(&rho)
        })
        .collect()
}

/// Rare topic-pool words (class-a pool) that occur at least once, ascending.
pub fn rare_pool_words(train: &Dataset, count: usize) -> Vec<String> {
    let stats = train.stats();
    (0..NPOOL)
        .map(word)
        .filter(|w| stats.rel_doc_freq(w) > 0.0)
        .take(count)
        .collect()
}

/// Walk words eligible for sweeps: everything from the high tier up,
/// excluding delimiters, within the given ρ band and not in `exclude`.
pub fn sweep_band_words(train: &Dataset, lo: f64, hi: f64, exclude: &[String]) -> Vec<String> {
    let stats = train.stats();
    (HI_LO..VOCAB)
        .map(word)
        .filter(|w| !exclude.contains(w))
        .filter(|w| {
            let rho = stats.rel_doc_freq(w);
            rho >= lo && rho < hi
        })
        .collect()
}
