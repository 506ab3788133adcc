//! Top-K enumeration of Boolean revision masks under a product of independent
//! Bernoulli flip probabilities.
//!
//! The most probable mask sets position `u` to `true` iff `pb[u] > 0.5`.
//! Every other mask is reached from it by *flipping* a set of positions, and
//! flipping `u` multiplies the probability by `V_u = min(pb, 1-pb) / max(pb, 1-pb)`.
//! Positions are ranked once by descending `V_u`; a mask is then a set of ranks
//! and its log-probability is the base log-probability plus the sum of the
//! flipped ranks' log-costs.
//!
//! Masks come out in a fixed total order: higher probability first, then fewer
//! flips, then the lexicographically smallest sorted set of flipped positions.
//! Every successor a node generates is strictly later in that order than the
//! node itself, so best-first expansion over a max-heap emits masks in order.
//!
//! Two successor schemes are provided:
//!
//! * [`SuccessorScheme::Frontier`]: a node with ranks `S` (largest rank `m`)
//!   spawns `S + {m+1}` and `S - {m} + {m+1}`. Every rank set has exactly one
//!   parent, so no duplicate detection is needed.
//! * [`SuccessorScheme::ConflictSkip`]: every emitted mask keeps a cursor to its
//!   cheapest single-flip successor that has not been seen yet; when the cheapest
//!   one is already emitted or pending elsewhere the cursor moves to the next
//!   rank instead.
//!
//! Both perform at most two heap operations per emitted mask.

use std::cmp::Ordering;
use std::collections::binary_heap::PeekMut;
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::symbols::RevisionMask;

/// Flip probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const FLIP_PROB_EPS: f64 = 1e-12;

/// Log-probabilities closer than this count as equal when ordering masks.
pub const LOG_PROB_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnumerateError {
    #[error("flip probability at position {index} is {value}, expected a value in [0, 1]")]
    InvalidProbability { index: usize, value: f64 },
    #[error("mask has length {mask}, flip probabilities have length {probs}")]
    LengthMismatch { mask: usize, probs: usize },
}

/// Per-position probability that the predicted symbol is wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipProbSeq {
    probs: Vec<f64>,
}

impl FlipProbSeq {
    /// Validates entries lie in `[0, 1]` and clamps them to `[EPS, 1 - EPS]`.
    pub fn new(probs: Vec<f64>) -> Result<Self, EnumerateError> {
        let mut probs = probs;
        for (index, p) in probs.iter_mut().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(EnumerateError::InvalidProbability { index, value: *p });
            }
            *p = p.clamp(FLIP_PROB_EPS, 1.0 - FLIP_PROB_EPS);
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Positions sorted by descending flip ratio, with `ln V_u` aligned to the order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRanking {
    pub order: Vec<usize>,
    pub log_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMask {
    pub mask: RevisionMask,
    pub log_prob: f64,
}

impl ScoredMask {
    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }
}

/// Ties at exactly 0.5 stay `false`.
pub fn initial_mask(pb: &FlipProbSeq) -> ScoredMask {
    let bits: Vec<bool> = pb.probs().iter().map(|&p| p > 0.5).collect();
    ScoredMask { log_prob: base_log_prob(pb), mask: RevisionMask(bits) }
}

fn base_log_prob(pb: &FlipProbSeq) -> f64 {
    pb.probs().iter().map(|&p| p.max(1.0 - p).ln()).sum()
}

/// Sorts positions by descending `V_u`, ties by ascending position.
///
/// Costs within [`LOG_PROB_TIE_TOL`] of the first cost of their run are
/// snapped to it, so `0.9` and `0.1` rank as an exact tie.
pub fn flip_ranking(pb: &FlipProbSeq) -> FlipRanking {
    let log_v: Vec<f64> = pb
        .probs()
        .iter()
        .map(|&p| p.min(1.0 - p).ln() - p.max(1.0 - p).ln())
        .collect();
    let mut order: Vec<usize> = (0..pb.len()).collect();
    order.sort_by(|&a, &b| log_v[b].total_cmp(&log_v[a]).then(a.cmp(&b)));
    let mut log_costs: Vec<f64> = order.iter().map(|&u| log_v[u]).collect();
    let mut start = 0;
    while start < order.len() {
        let lead = log_costs[start];
        let mut end = start + 1;
        while end < order.len() && lead - log_costs[end] <= LOG_PROB_TIE_TOL {
            log_costs[end] = lead;
            end += 1;
        }
        order[start..end].sort_unstable();
        start = end;
    }
    FlipRanking { order, log_costs }
}

/// `sum_u ln(pb_u if mask[u] else 1 - pb_u)` over clamped probabilities.
pub fn seq_log_prob(pb: &FlipProbSeq, mask: &RevisionMask) -> Result<f64, EnumerateError> {
    if mask.len() != pb.len() {
        return Err(EnumerateError::LengthMismatch { mask: mask.len(), probs: pb.len() });
    }
    Ok(pb
        .probs()
        .iter()
        .zip(mask.bits())
        .map(|(&p, &b)| if b { p.ln() } else { (1.0 - p).ln() })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SuccessorScheme {
    #[default]
    Frontier,
    ConflictSkip,
}

/// Instrumentation counters for one enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnumerationStats {
    /// Pushes, pops and in-place top replacements.
    pub heap_ops: usize,
    /// Membership tests against the set of already generated masks.
    pub duplicate_checks: usize,
    /// Candidate rank sets materialized.
    pub nodes_created: usize,
    pub emitted: usize,
}

/// The `k` most probable masks in the documented total order (at most `2^l`).
pub fn top_k_masks(pb: &FlipProbSeq, k: usize) -> Vec<ScoredMask> {
    top_k_masks_with(pb, k, SuccessorScheme::Frontier).0
}

pub fn top_k_masks_with(
    pb: &FlipProbSeq,
    k: usize,
    scheme: SuccessorScheme,
) -> (Vec<ScoredMask>, EnumerationStats) {
    let mut it = MaskEnumerator::with_scheme(pb, scheme);
    let masks: Vec<ScoredMask> = it.by_ref().take(k).collect();
    (masks, it.stats())
}

/// A heap entry: a set of flipped ranks with its score.
#[derive(Debug, Clone)]
struct Candidate {
    ranks: Vec<u32>,
    positions: Vec<u32>,
    log_prob: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Greater means earlier in the output order.
    fn cmp(&self, other: &Self) -> Ordering {
        let by_prob = if (self.log_prob - other.log_prob).abs() > LOG_PROB_TIE_TOL {
            self.log_prob.total_cmp(&other.log_prob)
        } else {
            Ordering::Equal
        };
        by_prob
            .then_with(|| other.positions.len().cmp(&self.positions.len()))
            .then_with(|| other.positions.cmp(&self.positions))
    }
}

/// Emitted mask with a cursor to its next unseen single-flip successor.
#[derive(Debug)]
struct PendingNode {
    ranks: Vec<u32>,
    cursor: usize,
    pending: Candidate,
}

impl PartialEq for PendingNode {
    fn eq(&self, other: &Self) -> bool {
        self.pending == other.pending
    }
}

impl Eq for PendingNode {}

impl PartialOrd for PendingNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PendingNode {
    fn cmp(&self, other: &Self) -> Ordering {
        self.pending.cmp(&other.pending)
    }
}

enum State {
    Initial,
    Frontier(BinaryHeap<Candidate>),
    Conflict { heap: BinaryHeap<PendingNode>, seen: HashSet<Vec<u32>> },
    Done,
}

/// Lazy best-first iterator over revision masks.
pub struct MaskEnumerator {
    ranking: FlipRanking,
    base_bits: Vec<bool>,
    base_log_prob: f64,
    scheme: SuccessorScheme,
    state: State,
    // the heap top was emitted by the previous call and still needs expanding
    top_emitted: bool,
    stats: EnumerationStats,
}

impl MaskEnumerator {
    pub fn new(pb: &FlipProbSeq) -> Self {
        Self::with_scheme(pb, SuccessorScheme::Frontier)
    }

    pub fn with_scheme(pb: &FlipProbSeq, scheme: SuccessorScheme) -> Self {
        let init = initial_mask(pb);
        Self {
            ranking: flip_ranking(pb),
            base_bits: init.mask.0,
            base_log_prob: init.log_prob,
            scheme,
            state: State::Initial,
            top_emitted: false,
            stats: EnumerationStats::default(),
        }
    }

    pub fn ranking(&self) -> &FlipRanking {
        &self.ranking
    }

    pub fn stats(&self) -> EnumerationStats {
        self.stats
    }

    fn len(&self) -> usize {
        self.ranking.order.len()
    }

    fn candidate(&mut self, ranks: Vec<u32>) -> Candidate {
        self.stats.nodes_created += 1;
        let mut log_prob = self.base_log_prob;
        for &r in &ranks {
            log_prob += self.ranking.log_costs[r as usize];
        }
        let mut positions: Vec<u32> = ranks.iter().map(|&r| self.ranking.order[r as usize] as u32).collect();
        positions.sort_unstable();
        Candidate { ranks, positions, log_prob }
    }

    fn materialize(&self, c: &Candidate) -> ScoredMask {
        let mut bits = self.base_bits.clone();
        for &p in &c.positions {
            bits[p as usize] = !bits[p as usize];
        }
        ScoredMask { mask: RevisionMask(bits), log_prob: c.log_prob }
    }

    /// Moves `cursor` to the next rank whose single flip on top of `ranks`
    /// yields an unseen rank set, marks it seen and returns it.
    fn advance(
        &mut self,
        ranks: &[u32],
        cursor: &mut usize,
        seen: &mut HashSet<Vec<u32>>,
    ) -> Option<Candidate> {
        let l = self.len();
        while *cursor < l {
            let r = *cursor as u32;
            *cursor += 1;
            let at = match ranks.binary_search(&r) {
                Ok(_) => continue,
                Err(at) => at,
            };
            let mut next = Vec::with_capacity(ranks.len() + 1);
            next.extend_from_slice(&ranks[..at]);
            next.push(r);
            next.extend_from_slice(&ranks[at..]);
            self.stats.duplicate_checks += 1;
            if seen.contains(&next) {
                continue;
            }
            seen.insert(next.clone());
            return Some(self.candidate(next));
        }
        None
    }

    fn start_heap(&mut self) {
        match self.scheme {
            SuccessorScheme::Frontier => {
                let mut heap = BinaryHeap::new();
                if self.len() > 0 {
                    heap.push(self.candidate(vec![0]));
                    self.stats.heap_ops += 1;
                }
                self.state = State::Frontier(heap);
            }
            SuccessorScheme::ConflictSkip => {
                let mut seen = HashSet::new();
                seen.insert(Vec::new());
                let mut heap = BinaryHeap::new();
                let mut cursor = 0;
                if let Some(pending) = self.advance(&[], &mut cursor, &mut seen) {
                    heap.push(PendingNode { ranks: Vec::new(), cursor, pending });
                    self.stats.heap_ops += 1;
                }
                self.state = State::Conflict { heap, seen };
            }
        }
    }

    /// Expands the previously emitted heap top.
    fn expand_top(&mut self) {
        let l = self.len() as u32;
        let mut state = std::mem::replace(&mut self.state, State::Done);
        match &mut state {
            State::Frontier(heap) => {
                let top = heap.peek_mut().expect("emitted top is still on the heap");
                let last = *top.ranks.last().expect("heap nodes flip at least one rank");
                if last + 1 < l {
                    let mut extended = top.ranks.clone();
                    extended.push(last + 1);
                    let mut shifted = top.ranks.clone();
                    *shifted.last_mut().unwrap() = last + 1;
                    let shifted = self.candidate(shifted);
                    let extended = self.candidate(extended);
                    let mut top = top;
                    *top = shifted;
                    drop(top);
                    heap.push(extended);
                    self.stats.heap_ops += 2;
                } else {
                    PeekMut::pop(top);
                    self.stats.heap_ops += 1;
                }
            }
            State::Conflict { heap, seen } => {
                let mut top = heap.peek_mut().expect("emitted top is still on the heap");
                let emitted = top.pending.ranks.clone();
                let mut cursor = top.cursor;
                let parent = std::mem::take(&mut top.ranks);
                match self.advance(&parent, &mut cursor, seen) {
                    Some(next) => {
                        top.ranks = parent;
                        top.cursor = cursor;
                        top.pending = next;
                        drop(top);
                    }
                    None => {
                        PeekMut::pop(top);
                    }
                }
                self.stats.heap_ops += 1;
                let mut cursor = 0;
                if let Some(pending) = self.advance(&emitted, &mut cursor, seen) {
                    heap.push(PendingNode { ranks: emitted, cursor, pending });
                    self.stats.heap_ops += 1;
                }
            }
            State::Initial | State::Done => {}
        }
        self.state = state;
    }
}

impl Iterator for MaskEnumerator {
    type Item = ScoredMask;

    fn next(&mut self) -> Option<ScoredMask> {
        if let State::Initial = self.state {
            self.stats.nodes_created += 1;
            self.stats.emitted += 1;
            self.start_heap();
            return Some(ScoredMask {
                mask: RevisionMask(self.base_bits.clone()),
                log_prob: self.base_log_prob,
            });
        }
        if self.top_emitted {
            self.expand_top();
            self.top_emitted = false;
        }
        let next = match &self.state {
            State::Frontier(heap) => heap.peek().map(|c| self.materialize(c)),
            State::Conflict { heap, .. } => heap.peek().map(|n| self.materialize(&n.pending)),
            State::Initial | State::Done => None,
        };
        match next {
            Some(m) => {
                self.top_emitted = true;
                self.stats.emitted += 1;
                Some(m)
            }
            None => {
                self.state = State::Done;
                None
            }
        }
    }
}
