use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cluster::kmeans;
use super::{ModelError, PerceptionModel, SequenceScorer, TrainConfig, MAX_MAPPING_SYMBOLS};
use crate::reason::{CompleteKb, KbVerdict, KnowledgeBase};
use crate::symbols::{ProbSeq, RevisionMask, SymbolSeq};

/// Probability mass spread over the other symbols when encoding clean
/// pretraining sequences.
pub const PRETRAIN_SMOOTHING: f64 = 0.02;

/// Replaces a random subset of strictly fewer than half of the positions (and
/// at most `max_frac * len`) with different symbols. Returns the corrupted
/// sequence and the mask of replaced positions.
pub fn corrupt_sequence<R: Rng>(
    seq: &SymbolSeq,
    n_symbols: usize,
    max_frac: f64,
    rng: &mut R,
) -> (SymbolSeq, RevisionMask) {
    let l = seq.len();
    let cap = ((max_frac * l as f64).floor() as usize).min(l.saturating_sub(1) / 2);
    let n = if cap == 0 { 0 } else { rng.random_range(0..=cap) };
    let mut positions: Vec<usize> = (0..l).collect();
    positions.shuffle(rng);
    let mut out = seq.clone();
    let mut mask = RevisionMask::all_false(l);
    for &pos in &positions[..n] {
        let orig = out.0[pos];
        let mut sym = rng.random_range(0..n_symbols - 1);
        if sym >= orig {
            sym += 1;
        }
        out.0[pos] = sym;
        mask.0[pos] = true;
    }
    (out, mask)
}

/// Trains the scorer to flag corrupted positions in otherwise true equations
/// drawn from the complete knowledge base. Lengths are drawn uniformly from
/// `min_len..=kb.max_len()`, then members uniformly within a length.
///
/// Returns the mean loss after training (0 when `n_samples` is 0).
pub fn pretrain_scorer(
    scorer: &mut SequenceScorer,
    kb: &CompleteKb,
    min_len: usize,
    n_samples: usize,
    max_corrupt_frac: f64,
    cfg: &TrainConfig,
) -> Result<f64, ModelError> {
    if !(0.0..0.5).contains(&max_corrupt_frac) {
        return Err(ModelError::Config(format!("max_corrupt_frac must lie in [0, 0.5), got {max_corrupt_frac}")));
    }
    if n_samples == 0 {
        return Ok(0.0);
    }
    let k = kb.alphabet().size();
    if scorer.input_dim() != k {
        return Err(ModelError::Dimension { got: k, expected: scorer.input_dim() });
    }
    let mut by_len: BTreeMap<usize, Vec<SymbolSeq>> = BTreeMap::new();
    for s in kb.sorted_members() {
        if s.len() >= min_len {
            by_len.entry(s.len()).or_default().push(s);
        }
    }
    let pools: Vec<Vec<SymbolSeq>> = by_len.into_values().collect();
    if pools.is_empty() {
        return Err(ModelError::Config(format!("complete knowledge base has no equation of length >= {min_len}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);
    let examples: Vec<(ProbSeq, RevisionMask)> = (0..n_samples)
        .map(|_| {
            let pool = pools.choose(&mut rng).expect("nonempty");
            let clean = pool.choose(&mut rng).expect("nonempty");
            let (noisy, mask) = corrupt_sequence(clean, k, max_corrupt_frac, &mut rng);
            let p = ProbSeq::smoothed_one_hot(&noisy, k, PRETRAIN_SMOOTHING).expect("indices in range");
            (p, mask)
        })
        .collect();
    scorer.train_batch(&examples, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    /// `mapping[cluster] = symbol`.
    pub mapping: Vec<usize>,
    pub mappings_evaluated: usize,
    /// Probe sequences judged `Valid` under the winning mapping.
    pub valid_probes: usize,
    pub train_loss: f64,
}

/// Clusters every feature vector into one cluster per symbol, picks the
/// cluster-to-symbol bijection under which the most probe sequences check
/// `Valid` (ties to the lexicographically smallest permutation), and fits the
/// classifier to the resulting labels.
///
/// Each probe costs one knowledge-base access per permutation.
pub fn unsupervised_init<K: KnowledgeBase + ?Sized>(
    model: &mut PerceptionModel,
    sequences: &[Vec<Vec<f64>>],
    kb: &K,
    n_probe: usize,
    cfg: &TrainConfig,
) -> Result<InitReport, ModelError> {
    let k = kb.alphabet().size();
    if k > MAX_MAPPING_SYMBOLS {
        return Err(ModelError::Config(format!(
            "exhaustive mapping search supports at most {MAX_MAPPING_SYMBOLS} symbols, got {k}; use a greedy mapping instead"
        )));
    }
    if model.classes() != k {
        return Err(ModelError::Dimension { got: k, expected: model.classes() });
    }
    let points: Vec<Vec<f64>> = sequences.iter().flatten().cloned().collect();
    if let Some(p) = points.iter().find(|p| p.len() != model.input_dim()) {
        return Err(ModelError::Dimension { got: p.len(), expected: model.input_dim() });
    }
    let km = kmeans(&points, k, cfg.seed);

    let mut probes: Vec<Vec<usize>> = Vec::new();
    let mut offset = 0;
    for (i, s) in sequences.iter().enumerate() {
        if i < n_probe {
            probes.push(km.assignments[offset..offset + s.len()].to_vec());
        }
        offset += s.len();
    }

    let mut perm: Vec<usize> = (0..k).collect();
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut evaluated = 0;
    loop {
        evaluated += 1;
        let valid = probes
            .iter()
            .filter(|c| {
                let decoded = SymbolSeq(c.iter().map(|&x| perm[x]).collect());
                kb.check(&decoded) == KbVerdict::Valid
            })
            .count();
        if best.as_ref().is_none_or(|(b, _)| valid > *b) {
            best = Some((valid, perm.clone()));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (valid_probes, mapping) = best.expect("at least one permutation");
    let labels = SymbolSeq(km.assignments.iter().map(|&c| mapping[c]).collect());
    let train_loss = model.train(&points, &labels, cfg)?;
    Ok(InitReport { mapping, mappings_evaluated: evaluated, valid_probes, train_loss })
}

/// Advances to the next permutation in lexicographic order; false when done.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}
