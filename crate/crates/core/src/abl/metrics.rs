use std::io::Write;

use serde::{Deserialize, Serialize};

use super::AblError;

/// One evaluation checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    /// Percent of test symbols decoded correctly.
    pub symbol_acc: f64,
    /// Percent of test sequences whose predicted label matches.
    pub label_acc: f64,
    /// Convergence rate since the previous checkpoint; absent for the first.
    pub cr: Option<f64>,
    /// Cumulative knowledge-base accesses spent in training.
    pub kb_accesses: u64,
    pub rules_generated: usize,
}

/// Cost ledger in counted operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub t_ml_count: u64,
    pub t_lr_count: u64,
    pub t_ml_unit: f64,
    pub t_lr_unit: f64,
}

impl BudgetLedger {
    pub fn new(t_ml_unit: f64, t_lr_unit: f64) -> Self {
        Self { t_ml_count: 0, t_lr_count: 0, t_ml_unit, t_lr_unit }
    }

    pub fn total(&self) -> f64 {
        self.t_ml_count as f64 * self.t_ml_unit + self.t_lr_count as f64 * self.t_lr_unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdStats {
    /// Training KB accesses once accuracy reaches the threshold for good.
    pub t_ac_a: Option<u64>,
    /// Training KB accesses once the convergence rate stays within its threshold.
    pub t_ac_c: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTimeline {
    pub records: Vec<MetricsRecord>,
    pub ledger: BudgetLedger,
}

impl MetricsTimeline {
    pub fn acc_best(&self) -> Option<f64> {
        self.records.iter().map(|r| r.symbol_acc).reduce(f64::max)
    }

    pub fn final_record(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,symbol_acc,label_acc,cr,kb_accesses,rules_generated")?;
        for r in &self.records {
            let cr = r.cr.map(|c| format!("{c:.6}")).unwrap_or_default();
            writeln!(
                out,
                "{},{:.6},{:.6},{},{},{}",
                r.iteration, r.symbol_acc, r.label_acc, cr, r.kb_accesses, r.rules_generated
            )?;
        }
        Ok(())
    }
}

/// Accuracy points gained or lost per iteration between two checkpoints.
pub fn convergence_rate(prev: &MetricsRecord, cur: &MetricsRecord) -> f64 {
    let d = cur.iteration.saturating_sub(prev.iteration).max(1) as f64;
    (cur.symbol_acc - prev.symbol_acc).abs() / d
}

/// Convergence rate between the last two checkpoints.
pub fn compute_cr(records: &[MetricsRecord]) -> Result<f64, AblError> {
    match records {
        [.., prev, cur] => Ok(convergence_rate(prev, cur)),
        _ => Err(AblError::Config(format!("convergence rate needs at least two checkpoints, got {}", records.len()))),
    }
}

/// Accesses at the earliest checkpoint from which accuracy stays at or above
/// `accuracy_threshold`, and from which the convergence rate stays at or below
/// `cr_threshold`.
pub fn threshold_stats(records: &[MetricsRecord], accuracy_threshold: f64, cr_threshold: f64) -> ThresholdStats {
    let t_ac_a = stable_suffix(records.iter().map(|r| r.symbol_acc >= accuracy_threshold)).map(|i| records[i].kb_accesses);
    let t_ac_c = stable_suffix(records.windows(2).map(|w| convergence_rate(&w[0], &w[1]) <= cr_threshold))
        .map(|i| records[i + 1].kb_accesses);
    ThresholdStats { t_ac_a, t_ac_c }
}

// start of the trailing run of `true`, if the last element is `true`
fn stable_suffix(ok: impl DoubleEndedIterator<Item = bool> + ExactSizeIterator) -> Option<usize> {
    let n = ok.len();
    let tail = ok.rev().take_while(|&b| b).count();
    (tail > 0).then(|| n - tail)
}
