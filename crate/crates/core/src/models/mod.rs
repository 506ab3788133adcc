//! Trainable numeric models: a symbol classifier over feature vectors and a
//! bidirectional recurrent scorer over probability sequences.

mod cluster;
mod params;
mod perception;
mod pretrain;
mod scorer;

pub use cluster::{kmeans, KMeans};
pub use params::{read_params, write_params, ParamFile};
pub use perception::PerceptionModel;
pub use pretrain::{corrupt_sequence, pretrain_scorer, unsupervised_init, InitReport, PRETRAIN_SMOOTHING};
pub use scorer::SequenceScorer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PERCEPTION_HIDDEN: usize = 16;
pub const DEFAULT_SCORER_HIDDEN: usize = 10;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_EPOCHS: usize = 10;

/// Symbols beyond this make the exhaustive cluster-to-symbol search impractical.
pub const MAX_MAPPING_SYMBOLS: usize = 8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has dimension {got}, model expects {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("{what}: lengths differ ({left} vs {right})")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("model configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parameter file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: DEFAULT_LEARNING_RATE, epochs: DEFAULT_EPOCHS, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ModelError::Config(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Scales `g` so that its Euclidean norm is at most `max_norm`.
pub(crate) fn clip_norm(g: &mut [f64], max_norm: f64) {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

/// Uniform Glorot-style initialization.
pub(crate) fn glorot<R: rand::Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> f64 {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    rng.random_range(-a..a)
}
