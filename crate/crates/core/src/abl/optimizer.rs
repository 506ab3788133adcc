//! Mask-proposal strategies. Each strategy spends at most `k` abductions per
//! inconsistent sequence through a [`MaskBudget`].

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::enumerate::{initial_mask, seq_log_prob, FlipProbSeq, MaskEnumerator};
use crate::reason::{AbductionResult, KnowledgeBase, MAX_HOLES};
use crate::symbols::{ProbSeq, RevisionMask, SymbolSeq};

/// What an optimizer sees for one sequence.
pub struct MaskContext<'a> {
    pub probs: &'a ProbSeq,
    pub decoded: &'a SymbolSeq,
    /// Scorer output for `probs`.
    pub flip_probs: &'a FlipProbSeq,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Consistent(AbductionResult),
    Inconsistent,
    /// The knowledge base refused the mask (too many holes).
    Refused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub mask: RevisionMask,
    /// Log-probability of the mask under the context's flip probabilities.
    pub mask_log_prob: f64,
    pub outcome: TrialOutcome,
}

/// Abduction access limited to `k` distinct masks.
pub struct MaskBudget<'a> {
    kb: &'a dyn KnowledgeBase,
    ctx: &'a MaskContext<'a>,
    limit: usize,
    trials: Vec<Trial>,
}

impl<'a> MaskBudget<'a> {
    pub fn new(kb: &'a dyn KnowledgeBase, ctx: &'a MaskContext<'a>, limit: usize) -> Self {
        Self { kb, ctx, limit, trials: Vec::new() }
    }

    pub fn remaining(&self) -> usize {
        self.limit - self.trials.len()
    }

    pub fn is_exhausted(&self) -> bool {
        self.trials.len() >= self.limit
    }

    pub fn tried(&self, mask: &RevisionMask) -> bool {
        self.trials.iter().any(|t| &t.mask == mask)
    }

    /// Abduces with `mask`. A repeated mask returns its earlier outcome without
    /// spending budget; `None` once the budget is exhausted.
    pub fn try_mask(&mut self, mask: &RevisionMask) -> Option<&Trial> {
        if let Some(i) = self.trials.iter().position(|t| &t.mask == mask) {
            return Some(&self.trials[i]);
        }
        if self.is_exhausted() {
            return None;
        }
        let outcome = match self.kb.abduce(self.ctx.decoded, mask, self.ctx.label, self.ctx.probs) {
            Ok(Some(r)) => TrialOutcome::Consistent(r),
            Ok(None) => TrialOutcome::Inconsistent,
            Err(_) => TrialOutcome::Refused,
        };
        let mask_log_prob = seq_log_prob(self.ctx.flip_probs, mask).expect("mask length matches sequence");
        self.trials.push(Trial { mask: mask.clone(), mask_log_prob, outcome });
        self.trials.last()
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    /// Consistent trial with the highest mask probability; ties by trial order.
    pub fn best(&self) -> Option<&Trial> {
        let mut best: Option<&Trial> = None;
        for t in &self.trials {
            if matches!(t.outcome, TrialOutcome::Consistent(_))
                && best.is_none_or(|b| t.mask_log_prob > b.mask_log_prob)
            {
                best = Some(t);
            }
        }
        best
    }

    pub fn into_trials(self) -> Vec<Trial> {
        self.trials
    }
}

pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// Spends up to the budget's limit on masks for one inconsistent sequence.
    fn search(&mut self, ctx: &MaskContext<'_>, budget: &mut MaskBudget<'_>);

    /// Called with the winning mask after a successful revision.
    fn observe_feedback(&mut self, _ctx: &MaskContext<'_>, _winner: &RevisionMask) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Psp,
    Random,
    Refl,
    Local,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [OptimizerKind::Psp, OptimizerKind::Random, OptimizerKind::Refl, OptimizerKind::Local];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Psp => "psp",
            OptimizerKind::Random => "random",
            OptimizerKind::Refl => "refl",
            OptimizerKind::Local => "local",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn build(self, seed: u64) -> Box<dyn Optimizer> {
        match self {
            OptimizerKind::Psp => Box::new(PspOptimizer),
            OptimizerKind::Random => Box::new(RandomOptimizer::new(seed)),
            OptimizerKind::Refl => Box::new(ReflOptimizer),
            OptimizerKind::Local => Box::new(LocalSearchOptimizer::new(seed)),
        }
    }
}

/// The `k` most probable masks under the scorer's flip probabilities, tried
/// in order; the first consistent one is final because later masks are less
/// probable.
#[derive(Debug, Default)]
pub struct PspOptimizer;

pub fn psp_masks(flip_probs: &FlipProbSeq, k: usize) -> Vec<RevisionMask> {
    MaskEnumerator::new(flip_probs).take(k).map(|m| m.mask).collect()
}

impl Optimizer for PspOptimizer {
    fn name(&self) -> &'static str {
        "psp"
    }

    fn search(&mut self, ctx: &MaskContext<'_>, budget: &mut MaskBudget<'_>) {
        for mask in MaskEnumerator::new(ctx.flip_probs).take(budget.remaining()) {
            match budget.try_mask(&mask.mask) {
                Some(t) if matches!(t.outcome, TrialOutcome::Consistent(_)) => break,
                Some(_) => {}
                None => break,
            }
        }
    }
}

/// `min(k, 2^l)` distinct masks drawn uniformly at random.
pub fn random_masks<R: Rng>(len: usize, k: usize, rng: &mut R) -> Vec<RevisionMask> {
    let exhaustive = len < 20 && k as u64 >= 1u64 << len;
    if exhaustive {
        let mut all: Vec<RevisionMask> = (0..1u64 << len)
            .map(|code| RevisionMask((0..len).map(|j| (code >> j) & 1 == 1).collect()))
            .collect();
        all.shuffle(rng);
        return all;
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let m = RevisionMask((0..len).map(|_| rng.random::<bool>()).collect());
        if seen.insert(m.clone()) {
            out.push(m);
        }
    }
    out
}

/// Uniform random masks; every one is tried and the most probable consistent
/// revision wins.
#[derive(Debug)]
pub struct RandomOptimizer {
    rng: ChaCha8Rng,
}

impl RandomOptimizer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Optimizer for RandomOptimizer {
    fn name(&self) -> &'static str {
        "random"
    }

    fn search(&mut self, ctx: &MaskContext<'_>, budget: &mut MaskBudget<'_>) {
        for mask in random_masks(ctx.decoded.len(), budget.remaining(), &mut self.rng) {
            if budget.try_mask(&mask).is_none() {
                break;
            }
        }
    }
}

/// Reflex-style: the scorer's thresholded prediction first, then the most
/// probable masks under the perception model's own confidence
/// (`1 - max_k p_j[k]` as the flip probability of position `j`).
#[derive(Debug, Default)]
pub struct ReflOptimizer;

pub fn refl_masks(ctx: &MaskContext<'_>, k: usize) -> Vec<RevisionMask> {
    if k == 0 {
        return Vec::new();
    }
    let first = initial_mask(ctx.flip_probs).mask;
    let confidence = FlipProbSeq::new(
        ctx.probs
            .rows()
            .iter()
            .map(|r| (1.0 - r.iter().copied().fold(0.0, f64::max)).clamp(0.0, 1.0))
            .collect(),
    )
    .expect("confidence complements lie in [0, 1]");
    let mut out = vec![first];
    for m in MaskEnumerator::new(&confidence) {
        if out.len() >= k {
            break;
        }
        if !out.contains(&m.mask) {
            out.push(m.mask);
        }
    }
    out
}

impl Optimizer for ReflOptimizer {
    fn name(&self) -> &'static str {
        "refl"
    }

    fn search(&mut self, ctx: &MaskContext<'_>, budget: &mut MaskBudget<'_>) {
        for mask in refl_masks(ctx, budget.remaining()) {
            if budget.try_mask(&mask).is_none() {
                break;
            }
        }
    }
}

/// Single-flip hill climbing from the scorer's thresholded mask. Neighbors of
/// the best mask so far are tried in random order; a neighbor becomes the new
/// best when it is consistent and either the incumbent is not or it is more
/// probable.
#[derive(Debug)]
pub struct LocalSearchOptimizer {
    rng: ChaCha8Rng,
}

impl LocalSearchOptimizer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

fn fitness(t: &Trial) -> (bool, f64) {
    (matches!(t.outcome, TrialOutcome::Consistent(_)), t.mask_log_prob)
}

fn better(a: (bool, f64), b: (bool, f64)) -> bool {
    a.0 && (!b.0 || a.1 > b.1)
}

impl Optimizer for LocalSearchOptimizer {
    fn name(&self) -> &'static str {
        "local"
    }

    fn search(&mut self, ctx: &MaskContext<'_>, budget: &mut MaskBudget<'_>) {
        let l = ctx.decoded.len();
        let mut best = initial_mask(ctx.flip_probs).mask;
        let Some(t) = budget.try_mask(&best) else { return };
        let mut best_fit = fitness(t);
        'outer: while !budget.is_exhausted() {
            let mut flips: Vec<usize> = (0..l).collect();
            flips.shuffle(&mut self.rng);
            for u in flips {
                let mut cand = best.clone();
                cand.0[u] = !cand.0[u];
                if budget.tried(&cand) || cand.hole_count() > MAX_HOLES {
                    continue;
                }
                let Some(t) = budget.try_mask(&cand) else { break 'outer };
                let fit = fitness(t);
                if better(fit, best_fit) {
                    best = cand;
                    best_fit = fit;
                    continue 'outer;
                }
            }
            // neighborhood exhausted without improvement
            break;
        }
    }
}
