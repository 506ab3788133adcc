use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{convergence_rate, BudgetLedger, MetricsRecord, MetricsTimeline};
use super::optimizer::{MaskBudget, MaskContext, Optimizer, TrialOutcome};
use super::{derive_seed, AblError};
use crate::dataset::{Dataset, Instance};
use crate::models::{PerceptionModel, SequenceScorer, TrainConfig};
use crate::reason::{generate_rules, KnowledgeBase};
use crate::symbols::{argmax_decode, ProbSeq, RevisionMask, SymbolSeq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblConfig {
    pub t_ac: usize,
    pub iterations: usize,
    pub group_size: usize,
    pub eval_interval: usize,
    pub perception_train: TrainConfig,
    pub scorer_train: TrainConfig,
    /// Unit cost of one model update in the ledger.
    pub t_ml_unit: f64,
    /// Unit cost of one knowledge-base access in the ledger.
    pub t_lr_unit: f64,
    /// Train perception on the latest accepted revision of every training
    /// instance seen so far instead of the current group alone.
    pub perception_memory: bool,
    /// Same for the scorer and winning masks.
    pub scorer_memory: bool,
    pub seed: u64,
}

impl Default for AblConfig {
    fn default() -> Self {
        Self {
            t_ac: 5,
            iterations: 150,
            group_size: 3,
            eval_interval: 10,
            perception_train: TrainConfig::default(),
            scorer_train: TrainConfig::default(),
            t_ml_unit: 1.0,
            t_lr_unit: 1.0,
            perception_memory: false,
            scorer_memory: false,
            seed: 0,
        }
    }
}

impl AblConfig {
    pub fn validate(&self) -> Result<(), AblError> {
        if self.t_ac == 0 {
            return Err(AblError::Config("t_ac must be at least 1".into()));
        }
        if self.group_size == 0 {
            return Err(AblError::Config("group_size must be at least 1".into()));
        }
        if self.eval_interval == 0 || self.iterations % self.eval_interval != 0 {
            return Err(AblError::Config(format!(
                "eval_interval ({}) must be positive and divide iterations ({})",
                self.eval_interval, self.iterations
            )));
        }
        self.perception_train.validate()?;
        self.scorer_train.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub probs: ProbSeq,
    pub decoded: SymbolSeq,
    /// Consistent revision, if any was found.
    pub revision: Option<SymbolSeq>,
    /// Mask behind `revision`; all-False when the decoded sequence already passed.
    pub winning_mask: Option<RevisionMask>,
    pub abductions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcome {
    pub sequences: Vec<SequenceOutcome>,
    pub consistency: usize,
    pub kb_accesses: u64,
}

/// Perceives, checks and, where needed, revises every sequence of a group with
/// at most `t_ac` abductions each.
pub fn abduce_group(
    group: &[&Instance],
    perception: &PerceptionModel,
    scorer: &SequenceScorer,
    optimizer: &mut dyn Optimizer,
    kb: &dyn KnowledgeBase,
    t_ac: usize,
) -> Result<GroupOutcome, AblError> {
    if group.is_empty() {
        return Err(AblError::Config("group must not be empty".into()));
    }
    if t_ac == 0 {
        return Err(AblError::Config("t_ac must be at least 1".into()));
    }
    let before = kb.accesses();
    let mut sequences = Vec::with_capacity(group.len());
    for inst in group {
        let probs = perception.predict_probs(&inst.features)?;
        let decoded = argmax_decode(&probs);
        if kb.check(&decoded).satisfies(inst.label) {
            let l = decoded.len();
            sequences.push(SequenceOutcome {
                probs,
                revision: Some(decoded.clone()),
                decoded,
                winning_mask: Some(RevisionMask::all_false(l)),
                abductions: 0,
            });
            continue;
        }
        let flip_probs = scorer.score_flip_probs(&probs)?;
        let ctx = MaskContext { probs: &probs, decoded: &decoded, flip_probs: &flip_probs, label: inst.label };
        let mut budget = MaskBudget::new(kb, &ctx, t_ac);
        optimizer.search(&ctx, &mut budget);
        let winner = budget.best().map(|t| match &t.outcome {
            TrialOutcome::Consistent(r) => (r.revised.clone(), t.mask.clone()),
            _ => unreachable!("best only returns consistent trials"),
        });
        let abductions = budget.trials().len();
        if let Some((_, mask)) = &winner {
            optimizer.observe_feedback(&ctx, mask);
        }
        let (revision, winning_mask) = winner.unzip();
        sequences.push(SequenceOutcome { probs, decoded, revision, winning_mask, abductions });
    }
    let consistency = sequences.iter().filter(|s| s.revision.is_some()).count();
    Ok(GroupOutcome { sequences, consistency, kb_accesses: kb.accesses() - before })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub symbol_acc: f64,
    pub label_acc: f64,
    pub rules_generated: usize,
}

/// Scores the perception model on held-out data. Label predictions are
/// `check == Valid` on the decoded sequence; rules come from consecutive
/// groups of `group_size` decoded sequences (a trailing partial group is
/// dropped).
pub fn evaluate(
    test: &Dataset,
    perception: &PerceptionModel,
    kb: &dyn KnowledgeBase,
    group_size: usize,
) -> Result<Evaluation, AblError> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut label_hits = 0usize;
    let mut decoded_all = Vec::with_capacity(test.len());
    for inst in &test.instances {
        let decoded = argmax_decode(&perception.predict_probs(&inst.features)?);
        correct += decoded.iter().zip(inst.true_symbols.iter()).filter(|(a, b)| a == b).count();
        total += decoded.len();
        let predicted = kb.check(&decoded) == crate::reason::KbVerdict::Valid;
        label_hits += usize::from(predicted == inst.label);
        decoded_all.push(decoded);
    }
    let groups: Vec<Vec<SymbolSeq>> = decoded_all.chunks_exact(group_size.max(1)).map(|c| c.to_vec()).collect();
    let rules = generate_rules(kb, &groups);
    Ok(Evaluation {
        symbol_acc: percent(correct, total),
        label_acc: percent(label_hits, test.len()),
        rules_generated: rules.count(),
    })
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// The abductive learning loop. Knowledge-base accesses made while evaluating
/// are excluded from the ledger and from `kb_accesses`.
pub fn run_abl(
    train: &Dataset,
    test: &Dataset,
    kb: &dyn KnowledgeBase,
    perception: &mut PerceptionModel,
    scorer: &mut SequenceScorer,
    optimizer: &mut dyn Optimizer,
    cfg: &AblConfig,
) -> Result<MetricsTimeline, AblError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(AblError::Config("training set is empty".into()));
    }
    let s = cfg.group_size.min(train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = train.len();
    let mut ledger = BudgetLedger::new(cfg.t_ml_unit, cfg.t_lr_unit);
    let mut records: Vec<MetricsRecord> = Vec::new();
    // training index -> latest accepted (revision, probs, mask)
    let mut memory: BTreeMap<usize, (SymbolSeq, ProbSeq, RevisionMask)> = BTreeMap::new();
    let mut scorer_memory: BTreeMap<usize, (ProbSeq, RevisionMask)> = BTreeMap::new();

    for it in 1..=cfg.iterations {
        if cursor + s > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let ids = &order[cursor..cursor + s];
        let group: Vec<&Instance> = ids.iter().map(|&i| &train.instances[i]).collect();
        cursor += s;

        let outcome = abduce_group(&group, perception, scorer, optimizer, kb, cfg.t_ac)?;
        ledger.t_lr_count += outcome.kb_accesses;

        let mut current = Vec::new();
        for (&id, seq) in ids.iter().zip(outcome.sequences) {
            if let (Some(rev), Some(mask)) = (seq.revision, seq.winning_mask) {
                memory.insert(id, (rev.clone(), seq.probs.clone(), mask.clone()));
                current.push((id, rev, seq.probs, mask, seq.abductions > 0));
            }
        }

        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut push = |id: usize, rev: &SymbolSeq| {
            features.extend(train.instances[id].features.iter().cloned());
            labels.extend(rev.iter().copied());
        };
        if cfg.perception_memory {
            memory.iter().for_each(|(&id, (rev, _, _))| push(id, rev));
        } else {
            current.iter().for_each(|(id, rev, _, _, _)| push(*id, rev));
        }
        if !features.is_empty() {
            let tc = TrainConfig { seed: derive_seed(cfg.perception_train.seed, 2, it as u64), ..cfg.perception_train };
            perception.train(&features, &SymbolSeq(labels), &tc)?;
            ledger.t_ml_count += 1;
        }

        // only sequences that went through abduction give the scorer a target
        let masks: Vec<(ProbSeq, RevisionMask)> = if cfg.scorer_memory {
            scorer_memory.extend(current.iter().filter(|c| c.4).map(|c| (c.0, (c.2.clone(), c.3.clone()))));
            scorer_memory.values().cloned().collect()
        } else {
            current.into_iter().filter(|c| c.4).map(|(_, _, p, m, _)| (p, m)).collect()
        };
        if !masks.is_empty() {
            let tc = TrainConfig { seed: derive_seed(cfg.scorer_train.seed, 3, it as u64), ..cfg.scorer_train };
            scorer.train_batch(&masks, &tc)?;
            ledger.t_ml_count += 1;
        }

        if it % cfg.eval_interval == 0 {
            let ev = evaluate(test, perception, kb, cfg.group_size)?;
            let mut rec = MetricsRecord {
                iteration: it,
                symbol_acc: ev.symbol_acc,
                label_acc: ev.label_acc,
                cr: None,
                kb_accesses: ledger.t_lr_count,
                rules_generated: ev.rules_generated,
            };
            rec.cr = records.last().map(|prev| convergence_rate(prev, &rec));
            records.push(rec);
        }
    }
    Ok(MetricsTimeline { records, ledger })
}
