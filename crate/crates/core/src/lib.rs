//! Abductive learning with probabilistic symbol perception.
//!
//! A perception model turns per-symbol features into probability rows, a
//! bidirectional sequence scorer estimates which predicted symbols are wrong,
//! and [`enumerate`] lists the most probable revision masks so that only a
//! handful of knowledge-base queries are spent per sequence.

pub mod abl;
pub mod dataset;
pub mod enumerate;
pub mod equation;
pub mod experiment;
pub mod models;
pub mod reason;
pub mod symbols;

pub use dataset::{generate_dba_dataset, Dataset, DatasetConfig, Instance};
pub use enumerate::{flip_ranking, initial_mask, seq_log_prob, top_k_masks, FlipProbSeq, ScoredMask};
pub use reason::{BinaryAdditionKb, CompleteKb, KbVerdict, KnowledgeBase};
pub use symbols::{argmax_decode, Alphabet, ProbSeq, RevisionMask, SymbolSeq};
