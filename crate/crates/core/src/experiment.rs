//! Declarative experiment configuration and the per-seed pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abl::{derive_seed, evaluate, run_abl, threshold_stats, AblConfig, AblError, MetricsTimeline, OptimizerKind, ThresholdStats};
use crate::dataset::{generate_dba_dataset, Dataset, DatasetConfig, DatasetError};
use crate::models::{
    pretrain_scorer, unsupervised_init, InitReport, ModelError, PerceptionModel, SequenceScorer, TrainConfig,
};
use crate::reason::{build_complete_kb, BinaryAdditionKb, CompleteKb, KnowledgeBase, ReasonError};
use crate::symbols::Alphabet;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Reason(#[from] ReasonError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Abl(#[from] AblError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_train: usize,
    pub n_test: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub noise_sigma: f64,
    pub frac_negative: f64,
    pub feature_dim: usize,
    pub prototype_scale: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            n_train: 60,
            n_test: 60,
            len_min: d.len_min,
            len_max: d.len_max,
            noise_sigma: d.noise_sigma,
            frac_negative: d.frac_negative,
            feature_dim: d.feature_dim,
            prototype_scale: d.prototype_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KbKind {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KbSection {
    pub kind: KbKind,
    /// Operand width limit of the incomplete knowledge base.
    pub max_verifiable_operand_bits: usize,
    /// Longest equation in the complete enumeration used for pretraining.
    pub complete_max_len: usize,
}

impl Default for KbSection {
    fn default() -> Self {
        Self { kind: KbKind::Complete, max_verifiable_operand_bits: 3, complete_max_len: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub perception_hidden: usize,
    pub scorer_hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub scorer_learning_rate: f64,
    pub scorer_epochs: usize,
    /// Sequences whose decodings vote on the cluster-to-symbol mapping.
    pub init_probes: usize,
    pub init_learning_rate: f64,
    pub init_epochs: usize,
    pub pretrain_samples: usize,
    pub pretrain_epochs: usize,
    pub pretrain_max_corrupt_frac: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            perception_hidden: crate::models::DEFAULT_PERCEPTION_HIDDEN,
            scorer_hidden: crate::models::DEFAULT_SCORER_HIDDEN,
            learning_rate: 0.002,
            epochs: crate::models::DEFAULT_EPOCHS,
            scorer_learning_rate: crate::models::DEFAULT_LEARNING_RATE,
            scorer_epochs: crate::models::DEFAULT_EPOCHS,
            init_probes: 60,
            init_learning_rate: crate::models::DEFAULT_LEARNING_RATE,
            init_epochs: 3,
            pretrain_samples: 2000,
            pretrain_epochs: 10,
            pretrain_max_corrupt_frac: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblSection {
    pub t_ac: usize,
    pub iterations: usize,
    pub group_size: usize,
    pub eval_interval: usize,
    pub t_ml_unit: f64,
    pub t_lr_unit: f64,
    pub accuracy_threshold: f64,
    pub cr_threshold: f64,
    pub perception_memory: bool,
    pub scorer_memory: bool,
}

impl Default for AblSection {
    fn default() -> Self {
        let a = AblConfig::default();
        Self {
            t_ac: a.t_ac,
            iterations: a.iterations,
            group_size: a.group_size,
            eval_interval: a.eval_interval,
            t_ml_unit: a.t_ml_unit,
            t_lr_unit: a.t_lr_unit,
            accuracy_threshold: 65.0,
            cr_threshold: 3.0,
            perception_memory: a.perception_memory,
            scorer_memory: a.scorer_memory,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub optimizer: OptimizerKind,
    pub seeds: Vec<u64>,
    pub data: DataSection,
    pub kb: KbSection,
    pub model: ModelSection,
    pub abl: AblSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Psp,
            seeds: vec![0, 1, 2, 3, 4],
            data: DataSection::default(),
            kb: KbSection::default(),
            model: ModelSection::default(),
            abl: AblSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.data.n_train == 0 {
            return Err(ExperimentError::Config("data.n_train must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::Config("seeds must not be empty".into()));
        }
        if self.kb.complete_max_len < self.data.len_max {
            return Err(ExperimentError::Config(format!(
                "kb.complete_max_len ({}) must cover data.len_max ({})",
                self.kb.complete_max_len, self.data.len_max
            )));
        }
        self.dataset_config(0).validate()?;
        self.abl_config(0).validate()?;
        self.pretrain_config(0).validate()?;
        self.init_config(0).validate()?;
        Ok(())
    }

    pub fn dataset_config(&self, seed: u64) -> DatasetConfig {
        DatasetConfig {
            n: self.data.n_train + self.data.n_test,
            len_min: self.data.len_min,
            len_max: self.data.len_max,
            noise_sigma: self.data.noise_sigma,
            frac_negative: self.data.frac_negative,
            feature_dim: self.data.feature_dim,
            prototype_scale: self.data.prototype_scale,
            seed,
        }
    }

    pub fn abl_config(&self, seed: u64) -> AblConfig {
        AblConfig {
            t_ac: self.abl.t_ac,
            iterations: self.abl.iterations,
            group_size: self.abl.group_size,
            eval_interval: self.abl.eval_interval,
            perception_train: TrainConfig {
                learning_rate: self.model.learning_rate,
                epochs: self.model.epochs,
                seed: derive_seed(seed, 20, 0),
            },
            scorer_train: TrainConfig {
                learning_rate: self.model.scorer_learning_rate,
                epochs: self.model.scorer_epochs,
                seed: derive_seed(seed, 21, 0),
            },
            t_ml_unit: self.abl.t_ml_unit,
            t_lr_unit: self.abl.t_lr_unit,
            perception_memory: self.abl.perception_memory,
            scorer_memory: self.abl.scorer_memory,
            seed: derive_seed(seed, 22, 0),
        }
    }

    fn pretrain_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.model.scorer_learning_rate,
            epochs: self.model.pretrain_epochs,
            seed: derive_seed(seed, 23, 0),
        }
    }

    fn init_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { learning_rate: self.model.init_learning_rate, epochs: self.model.init_epochs, seed: derive_seed(seed, 24, 0) }
    }

    pub fn build_kb(&self) -> Result<Box<dyn KnowledgeBase>, ExperimentError> {
        let limit = match self.kb.kind {
            KbKind::Complete => None,
            KbKind::Incomplete => Some(self.kb.max_verifiable_operand_bits),
        };
        Ok(Box::new(BinaryAdditionKb::new(Alphabet::binary_addition(), limit)?))
    }

    pub fn build_complete_kb(&self) -> Result<CompleteKb, ExperimentError> {
        Ok(build_complete_kb(&Alphabet::binary_addition(), self.kb.complete_max_len)?)
    }
}

/// Data and initialized models for one seed, shared by every optimizer.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub perception: PerceptionModel,
    pub scorer: SequenceScorer,
    pub init: InitReport,
    /// Test symbol accuracy right after initialization.
    pub init_acc: f64,
    pub pretrain_loss: f64,
}

pub fn generate_split(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset), ExperimentError> {
    let data = generate_dba_dataset(&cfg.dataset_config(seed))?;
    Ok(data.split_at(cfg.data.n_train))
}

/// Generates data, clusters and maps the perception model, and pretrains the
/// scorer on corrupted equations. Initialization accesses hit a private
/// knowledge base of the configured kind, so they never reach a run's ledger.
pub fn prepare(cfg: &ExperimentConfig, seed: u64, complete: &CompleteKb) -> Result<Prepared, ExperimentError> {
    let (train, test) = generate_split(cfg, seed)?;
    let kb = cfg.build_kb()?;
    let k = kb.alphabet().size();
    let mut perception = PerceptionModel::random(train.feature_dim, cfg.model.perception_hidden, k, derive_seed(seed, 10, 0));
    let sequences: Vec<Vec<Vec<f64>>> = train.instances.iter().map(|i| i.features.clone()).collect();
    let init = unsupervised_init(&mut perception, &sequences, kb.as_ref(), cfg.model.init_probes, &cfg.init_config(seed))?;
    let mut scorer = SequenceScorer::random(k, cfg.model.scorer_hidden, derive_seed(seed, 11, 0));
    let pretrain_loss = pretrain_scorer(
        &mut scorer,
        complete,
        cfg.data.len_min,
        cfg.model.pretrain_samples,
        cfg.model.pretrain_max_corrupt_frac,
        &cfg.pretrain_config(seed),
    )?;
    let init_acc = evaluate(&test, &perception, kb.as_ref(), cfg.abl.group_size)?.symbol_acc;
    Ok(Prepared { train, test, perception, scorer, init, init_acc, pretrain_loss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub acc_best: f64,
    pub acc_final: f64,
    pub label_acc_final: f64,
    pub cr_final: Option<f64>,
    pub rules_final: usize,
    pub thresholds: ThresholdStats,
    pub kb_accesses: u64,
    pub t_ml_count: u64,
    pub t_lr_count: u64,
    pub t_total: f64,
    pub init_mapping: Vec<usize>,
    pub init_valid_probes: usize,
    pub init_acc: f64,
    pub pretrain_loss: f64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub timeline: MetricsTimeline,
    pub summary: RunSummary,
}

pub fn run_prepared(
    cfg: &ExperimentConfig,
    seed: u64,
    optimizer: OptimizerKind,
    prepared: &Prepared,
) -> Result<SeedRun, ExperimentError> {
    let kb = cfg.build_kb()?;
    let mut perception = prepared.perception.clone();
    let mut scorer = prepared.scorer.clone();
    let mut opt = optimizer.build(derive_seed(seed, 30, 0));
    let abl_cfg = cfg.abl_config(seed);
    let timeline =
        run_abl(&prepared.train, &prepared.test, kb.as_ref(), &mut perception, &mut scorer, opt.as_mut(), &abl_cfg)?;
    let last = timeline.final_record().ok_or_else(|| ExperimentError::Config("run produced no checkpoint".into()))?;
    let summary = RunSummary {
        seed,
        optimizer,
        acc_best: timeline.acc_best().unwrap_or(0.0),
        acc_final: last.symbol_acc,
        label_acc_final: last.label_acc,
        cr_final: last.cr,
        rules_final: last.rules_generated,
        thresholds: threshold_stats(&timeline.records, cfg.abl.accuracy_threshold, cfg.abl.cr_threshold),
        kb_accesses: last.kb_accesses,
        t_ml_count: timeline.ledger.t_ml_count,
        t_lr_count: timeline.ledger.t_lr_count,
        t_total: timeline.ledger.total(),
        init_mapping: prepared.init.mapping.clone(),
        init_valid_probes: prepared.init.valid_probes,
        init_acc: prepared.init_acc,
        pretrain_loss: prepared.pretrain_loss,
        config: cfg.clone(),
    };
    Ok(SeedRun { timeline, summary })
}

/// Runs every optimizer on every seed. Seeds run on separate threads; results
/// are ordered by seed, then by the order of `optimizers`.
pub fn run_grid(cfg: &ExperimentConfig, optimizers: &[OptimizerKind]) -> Result<Vec<Vec<SeedRun>>, ExperimentError> {
    let complete = cfg.build_complete_kb()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let complete = &complete;
                scope.spawn(move || -> Result<Vec<SeedRun>, ExperimentError> {
                    let prepared = prepare(cfg, seed, complete)?;
                    optimizers.iter().map(|&o| run_prepared(cfg, seed, o, &prepared)).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
    })
}

pub fn write_outputs(run: &SeedRun, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}_seed{}", run.summary.optimizer.as_str(), run.summary.seed);
    let mut csv = Vec::new();
    run.timeline.write_csv(&mut csv)?;
    std::fs::write(dir.join(format!("{stem}.csv")), csv)?;
    let json = serde_json::to_string_pretty(&run.summary).expect("summary serializes");
    std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
    Ok(())
}
