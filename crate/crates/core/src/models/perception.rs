use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamFile;
use super::{glorot, ModelError, TrainConfig};
use crate::symbols::{ProbSeq, SymbolSeq};

pub const PERCEPTION_KIND: &str = "perception";

/// One-hidden-layer classifier: `d -> tanh(h) -> softmax(k)`.
///
/// Parameters live in one flat vector laid out as `w1 (h x d) | b1 | w2 (k x h) | b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionModel {
    input_dim: usize,
    hidden: usize,
    classes: usize,
    theta: Vec<f64>,
}

struct Forward {
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl PerceptionModel {
    pub fn zeros(input_dim: usize, hidden: usize, classes: usize) -> Self {
        let n = hidden * input_dim + hidden + classes * hidden + classes;
        Self { input_dim, hidden, classes, theta: vec![0.0; n] }
    }

    pub fn random(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut m = Self::zeros(input_dim, hidden, classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w1, rest) = m.theta.split_at_mut(hidden * input_dim);
        w1.iter_mut().for_each(|w| *w = glorot(&mut rng, input_dim, hidden));
        let w2 = &mut rest[hidden..hidden + classes * hidden];
        w2.iter_mut().for_each(|w| *w = glorot(&mut rng, hidden, classes));
        m
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.theta.len() {
            return Err(ModelError::LengthMismatch { what: "parameters", left: theta.len(), right: self.theta.len() });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input_dim;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.input_dim {
            return Err(ModelError::Dimension { got: x.len(), expected: self.input_dim });
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let (ob1, ow2, ob2) = self.offsets();
        let t = &self.theta;
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|i| {
                let row = &t[i * self.input_dim..(i + 1) * self.input_dim];
                let a = t[ob1 + i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                a.tanh()
            })
            .collect();
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let row = &t[ow2 + c * self.hidden..ow2 + (c + 1) * self.hidden];
                t[ob2 + c] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Forward { hidden, probs: softmax(&logits) }
    }

    /// One probability row per feature vector.
    pub fn predict_probs(&self, features: &[Vec<f64>]) -> Result<ProbSeq, ModelError> {
        let rows = features
            .iter()
            .map(|x| {
                self.check_dim(x)?;
                Ok(self.forward(x).probs)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(ProbSeq::from_rows_unchecked(rows, self.classes))
    }

    /// Mean cross-entropy over the samples.
    pub fn loss(&self, features: &[Vec<f64>], labels: &SymbolSeq) -> Result<f64, ModelError> {
        self.check_batch(features, labels)?;
        if features.is_empty() {
            return Ok(0.0);
        }
        let total: f64 = features
            .iter()
            .zip(labels.iter())
            .map(|(x, &y)| -self.forward(x).probs[y].max(1e-300).ln())
            .sum();
        Ok(total / features.len() as f64)
    }

    /// Mean cross-entropy and its gradient with respect to [`Self::params`].
    pub fn loss_and_grad(&self, features: &[Vec<f64>], labels: &SymbolSeq) -> Result<(f64, Vec<f64>), ModelError> {
        self.check_batch(features, labels)?;
        let mut grad = vec![0.0; self.theta.len()];
        if features.is_empty() {
            return Ok((0.0, grad));
        }
        let mut total = 0.0;
        for (x, &y) in features.iter().zip(labels.iter()) {
            total += self.accumulate_grad(x, y, &mut grad);
        }
        let n = features.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    fn check_batch(&self, features: &[Vec<f64>], labels: &SymbolSeq) -> Result<(), ModelError> {
        if features.len() != labels.len() {
            return Err(ModelError::LengthMismatch { what: "features vs labels", left: features.len(), right: labels.len() });
        }
        for x in features {
            self.check_dim(x)?;
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.classes) {
            return Err(ModelError::Dimension { got: y, expected: self.classes });
        }
        Ok(())
    }

    // Adds the single-sample gradient into `grad`, returns the sample loss.
    fn accumulate_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        let (ob1, ow2, ob2) = self.offsets();
        let f = self.forward(x);
        let t = &self.theta;
        // d loss / d logit
        let mut dlogit = f.probs.clone();
        dlogit[y] -= 1.0;
        let mut dhidden = vec![0.0; self.hidden];
        for c in 0..self.classes {
            grad[ob2 + c] += dlogit[c];
            for i in 0..self.hidden {
                grad[ow2 + c * self.hidden + i] += dlogit[c] * f.hidden[i];
                dhidden[i] += dlogit[c] * t[ow2 + c * self.hidden + i];
            }
        }
        for i in 0..self.hidden {
            let da = dhidden[i] * (1.0 - f.hidden[i] * f.hidden[i]);
            grad[ob1 + i] += da;
            for (j, &xj) in x.iter().enumerate() {
                grad[i * self.input_dim + j] += da * xj;
            }
        }
        -f.probs[y].max(1e-300).ln()
    }

    /// Per-sample SGD on cross-entropy for `cfg.epochs` shuffled passes.
    /// Returns the mean loss over the data after training.
    pub fn train(&mut self, features: &[Vec<f64>], labels: &SymbolSeq, cfg: &TrainConfig) -> Result<f64, ModelError> {
        cfg.validate()?;
        self.check_batch(features, labels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut grad = vec![0.0; self.theta.len()];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                grad.iter_mut().for_each(|g| *g = 0.0);
                self.accumulate_grad(&features[i], labels.0[i], &mut grad);
                for (w, g) in self.theta.iter_mut().zip(&grad) {
                    *w -= cfg.learning_rate * g;
                }
            }
        }
        self.loss(features, labels)
    }

    pub fn to_param_file(&self) -> ParamFile {
        ParamFile {
            kind: PERCEPTION_KIND.into(),
            dims: vec![self.input_dim, self.hidden, self.classes],
            values: self.theta.clone(),
        }
    }

    pub fn from_param_file(file: &ParamFile) -> Result<Self, ModelError> {
        if file.kind != PERCEPTION_KIND || file.dims.len() != 3 {
            return Err(ModelError::Config(format!("not a perception parameter file (kind {:?})", file.kind)));
        }
        let mut m = Self::zeros(file.dims[0], file.dims[1], file.dims[2]);
        m.set_params(&file.values)?;
        Ok(m)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
