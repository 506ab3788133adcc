use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamFile;
use super::{clip_norm, glorot, sigmoid, ModelError, TrainConfig};
use crate::enumerate::FlipProbSeq;
use crate::symbols::{ProbSeq, RevisionMask};

pub const SCORER_KIND: &str = "scorer";

/// Gradients are clipped to this global norm per update.
const MAX_GRAD_NORM: f64 = 5.0;

/// Single-layer bidirectional Elman network with a logistic output per position.
///
/// ```text
/// f_t = tanh(Wf x_t + Uf f_{t-1} + bf)      forward, f_{-1} = 0
/// g_t = tanh(Wb x_t + Ub g_{t+1} + bb)      backward, g_l = 0
/// o_t = sigmoid(vf . f_t + vb . g_t + c)
/// ```
///
/// Flat layout: `Wf | Uf | bf | Wb | Ub | bb | vf | vb | c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScorer {
    input_dim: usize,
    hidden: usize,
    theta: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Layout {
    wf: usize,
    uf: usize,
    bf: usize,
    wb: usize,
    ub: usize,
    bb: usize,
    vf: usize,
    vb: usize,
    c: usize,
    len: usize,
}

struct Trace {
    fwd: Vec<Vec<f64>>,
    bwd: Vec<Vec<f64>>,
    out: Vec<f64>,
}

impl SequenceScorer {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let len = layout(input_dim, hidden).len;
        Self { input_dim, hidden, theta: vec![0.0; len] }
    }

    pub fn random(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut s = Self::zeros(input_dim, hidden);
        let lay = layout(input_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, h) = (input_dim, hidden);
        for (start, n, fan_in, fan_out) in [
            (lay.wf, h * k, k, h),
            (lay.uf, h * h, h, h),
            (lay.wb, h * k, k, h),
            (lay.ub, h * h, h, h),
            (lay.vf, h, 2 * h, 1),
            (lay.vb, h, 2 * h, 1),
        ] {
            for w in &mut s.theta[start..start + n] {
                *w = glorot(&mut rng, fan_in, fan_out);
            }
        }
        s
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
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

    /// The same network with forward and backward weights exchanged.
    pub fn swapped_directions(&self) -> Self {
        let lay = layout(self.input_dim, self.hidden);
        let (k, h) = (self.input_dim, self.hidden);
        let mut out = self.clone();
        for (a, b, n) in [(lay.wf, lay.wb, h * k), (lay.uf, lay.ub, h * h), (lay.bf, lay.bb, h), (lay.vf, lay.vb, h)] {
            out.theta[a..a + n].copy_from_slice(&self.theta[b..b + n]);
            out.theta[b..b + n].copy_from_slice(&self.theta[a..a + n]);
        }
        out
    }

    fn check(&self, p: &ProbSeq) -> Result<(), ModelError> {
        if !p.is_empty() && p.dim() != self.input_dim {
            return Err(ModelError::Dimension { got: p.dim(), expected: self.input_dim });
        }
        Ok(())
    }

    fn run(&self, p: &ProbSeq) -> Trace {
        let lay = layout(self.input_dim, self.hidden);
        let (k, h) = (self.input_dim, self.hidden);
        let t = &self.theta;
        let l = p.len();
        let step = |w: usize, u: usize, b: usize, x: &[f64], prev: &[f64]| -> Vec<f64> {
            (0..h)
                .map(|i| {
                    let mut a = t[b + i];
                    for j in 0..k {
                        a += t[w + i * k + j] * x[j];
                    }
                    for j in 0..h {
                        a += t[u + i * h + j] * prev[j];
                    }
                    a.tanh()
                })
                .collect()
        };
        let zero = vec![0.0; h];
        let mut fwd: Vec<Vec<f64>> = Vec::with_capacity(l);
        for s in 0..l {
            let prev = if s == 0 { &zero } else { &fwd[s - 1] };
            let next = step(lay.wf, lay.uf, lay.bf, p.row(s), prev);
            fwd.push(next);
        }
        let mut bwd: Vec<Vec<f64>> = vec![Vec::new(); l];
        for s in (0..l).rev() {
            let prev = if s + 1 == l { &zero } else { &bwd[s + 1] };
            bwd[s] = step(lay.wb, lay.ub, lay.bb, p.row(s), prev);
        }
        let out = (0..l)
            .map(|s| {
                let mut z = t[lay.c];
                for i in 0..h {
                    z += t[lay.vf + i] * fwd[s][i] + t[lay.vb + i] * bwd[s][i];
                }
                sigmoid(z)
            })
            .collect();
        Trace { fwd, bwd, out }
    }

    /// Per-position flip probabilities, each strictly inside (0, 1).
    pub fn score_flip_probs(&self, p: &ProbSeq) -> Result<FlipProbSeq, ModelError> {
        self.check(p)?;
        let out = self.run(p).out;
        Ok(FlipProbSeq::new(out).expect("logistic outputs lie in [0, 1]"))
    }

    /// Raw logistic outputs, without the clamping applied by [`FlipProbSeq`].
    pub fn raw_outputs(&self, p: &ProbSeq) -> Result<Vec<f64>, ModelError> {
        self.check(p)?;
        Ok(self.run(p).out)
    }

    /// Binary cross-entropy, averaged over positions.
    pub fn loss(&self, p: &ProbSeq, target: &RevisionMask) -> Result<f64, ModelError> {
        self.check_pair(p, target)?;
        Ok(bce(&self.run(p).out, target))
    }

    /// Loss and gradient by backpropagation through time in both directions.
    pub fn loss_and_grad(&self, p: &ProbSeq, target: &RevisionMask) -> Result<(f64, Vec<f64>), ModelError> {
        self.check_pair(p, target)?;
        let mut grad = vec![0.0; self.theta.len()];
        let loss = self.accumulate_grad(p, target, &mut grad);
        Ok((loss, grad))
    }

    fn check_pair(&self, p: &ProbSeq, target: &RevisionMask) -> Result<(), ModelError> {
        self.check(p)?;
        if p.len() != target.len() {
            return Err(ModelError::LengthMismatch { what: "probability rows vs target mask", left: p.len(), right: target.len() });
        }
        Ok(())
    }

    fn accumulate_grad(&self, p: &ProbSeq, target: &RevisionMask, grad: &mut [f64]) -> f64 {
        let l = p.len();
        if l == 0 {
            return 0.0;
        }
        let lay = layout(self.input_dim, self.hidden);
        let (k, h) = (self.input_dim, self.hidden);
        let t = &self.theta;
        let tr = self.run(p);
        let dz: Vec<f64> = (0..l)
            .map(|s| (tr.out[s] - f64::from(u8::from(target.0[s]))) / l as f64)
            .collect();
        for s in 0..l {
            grad[lay.c] += dz[s];
            for i in 0..h {
                grad[lay.vf + i] += dz[s] * tr.fwd[s][i];
                grad[lay.vb + i] += dz[s] * tr.bwd[s][i];
            }
        }

        // forward direction, unrolled from the last step
        let mut carry = vec![0.0; h];
        for s in (0..l).rev() {
            let delta: Vec<f64> = (0..h)
                .map(|i| (dz[s] * t[lay.vf + i] + carry[i]) * (1.0 - tr.fwd[s][i] * tr.fwd[s][i]))
                .collect();
            let x = p.row(s);
            for i in 0..h {
                grad[lay.bf + i] += delta[i];
                for j in 0..k {
                    grad[lay.wf + i * k + j] += delta[i] * x[j];
                }
                if s > 0 {
                    for j in 0..h {
                        grad[lay.uf + i * h + j] += delta[i] * tr.fwd[s - 1][j];
                    }
                }
            }
            carry = (0..h).map(|j| (0..h).map(|i| t[lay.uf + i * h + j] * delta[i]).sum()).collect();
        }

        // backward direction, unrolled from the first step
        let mut carry = vec![0.0; h];
        for s in 0..l {
            let delta: Vec<f64> = (0..h)
                .map(|i| (dz[s] * t[lay.vb + i] + carry[i]) * (1.0 - tr.bwd[s][i] * tr.bwd[s][i]))
                .collect();
            let x = p.row(s);
            for i in 0..h {
                grad[lay.bb + i] += delta[i];
                for j in 0..k {
                    grad[lay.wb + i * k + j] += delta[i] * x[j];
                }
                if s + 1 < l {
                    for j in 0..h {
                        grad[lay.ub + i * h + j] += delta[i] * tr.bwd[s + 1][j];
                    }
                }
            }
            carry = (0..h).map(|j| (0..h).map(|i| t[lay.ub + i * h + j] * delta[i]).sum()).collect();
        }
        bce(&tr.out, target)
    }

    /// `cfg.epochs` gradient steps on a single sequence. Returns the loss after training.
    pub fn train(&mut self, p: &ProbSeq, target: &RevisionMask, cfg: &TrainConfig) -> Result<f64, ModelError> {
        self.train_batch(&[(p.clone(), target.clone())], cfg)
    }

    /// Per-sequence SGD over shuffled passes. Returns the mean loss after training.
    pub fn train_batch(&mut self, examples: &[(ProbSeq, RevisionMask)], cfg: &TrainConfig) -> Result<f64, ModelError> {
        cfg.validate()?;
        for (p, m) in examples {
            self.check_pair(p, m)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut grad = vec![0.0; self.theta.len()];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let (p, m) = &examples[i];
                self.accumulate_grad(p, m, &mut grad);
                clip_norm(&mut grad, MAX_GRAD_NORM);
                for (w, g) in self.theta.iter_mut().zip(&grad) {
                    *w -= cfg.learning_rate * g;
                }
            }
        }
        self.mean_loss(examples)
    }

    pub fn mean_loss(&self, examples: &[(ProbSeq, RevisionMask)]) -> Result<f64, ModelError> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (p, m) in examples {
            total += self.loss(p, m)?;
        }
        Ok(total / examples.len() as f64)
    }

    pub fn to_param_file(&self) -> ParamFile {
        ParamFile { kind: SCORER_KIND.into(), dims: vec![self.input_dim, self.hidden], values: self.theta.clone() }
    }

    pub fn from_param_file(file: &ParamFile) -> Result<Self, ModelError> {
        if file.kind != SCORER_KIND || file.dims.len() != 2 {
            return Err(ModelError::Config(format!("not a scorer parameter file (kind {:?})", file.kind)));
        }
        let mut s = Self::zeros(file.dims[0], file.dims[1]);
        s.set_params(&file.values)?;
        Ok(s)
    }
}

fn layout(k: usize, h: usize) -> Layout {
    let wf = 0;
    let uf = wf + h * k;
    let bf = uf + h * h;
    let wb = bf + h;
    let ub = wb + h * k;
    let bb = ub + h * h;
    let vf = bb + h;
    let vb = vf + h;
    let c = vb + h;
    Layout { wf, uf, bf, wb, ub, bb, vf, vb, c, len: c + 1 }
}

fn bce(out: &[f64], target: &RevisionMask) -> f64 {
    if out.is_empty() {
        return 0.0;
    }
    let total: f64 = out
        .iter()
        .zip(target.bits())
        .map(|(&o, &y)| {
            let o = o.clamp(1e-15, 1.0 - 1e-15);
            if y {
                -o.ln()
            } else {
                -(1.0 - o).ln()
            }
        })
        .sum();
    total / out.len() as f64
}
