//! The abductive learning loop, its mask optimizers and its metrics.

mod metrics;
mod optimizer;
mod run;

pub use metrics::{
    compute_cr, convergence_rate, threshold_stats, BudgetLedger, MetricsRecord, MetricsTimeline, ThresholdStats,
};
pub use optimizer::{
    psp_masks, random_masks, refl_masks, LocalSearchOptimizer, MaskBudget, MaskContext, Optimizer, OptimizerKind,
    PspOptimizer, RandomOptimizer, ReflOptimizer, Trial, TrialOutcome,
};
pub use run::{abduce_group, evaluate, run_abl, AblConfig, Evaluation, GroupOutcome, SequenceOutcome};

use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum AblError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mixes a base seed with a tag and an index into an independent seed.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
