//! Synthetic binary-addition dataset: equations rendered as noisy feature
//! vectors, one vector per symbol.

use std::io::{BufRead, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equation::{operand_values, Equation, EquationSyntax};
use crate::symbols::{Alphabet, SymbolSeq};

pub const DATASET_FORMAT: &str = "abl-psp-dataset/1";

/// Minimum pairwise Euclidean distance between symbol prototypes.
pub const MIN_PROTOTYPE_DISTANCE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("no equation of length {min}..={max} can be generated")]
    ImpossibleLengths { min: usize, max: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One example: per-symbol features, held-out ground truth and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<Vec<f64>>,
    pub true_symbols: SymbolSeq,
    pub label: bool,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub alphabet: Alphabet,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Splits off everything from `at` onwards into a second dataset.
    pub fn split_at(mut self, at: usize) -> (Dataset, Dataset) {
        let tail = self.instances.split_off(at.min(self.instances.len()));
        let rest = Dataset { instances: tail, ..self.clone() };
        (self, rest)
    }

    /// Every feature vector in instance order.
    pub fn all_features(&self) -> Vec<Vec<f64>> {
        self.instances.iter().flat_map(|i| i.features.iter().cloned()).collect()
    }

    /// Writes the line-delimited JSON format: a header line followed by one
    /// record per instance.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), DatasetError> {
        let header = Header {
            format: DATASET_FORMAT.to_string(),
            alphabet: self.alphabet.as_string(),
            dim: self.feature_dim,
            seed: self.seed,
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for inst in &self.instances {
            let rec = Record {
                label: u8::from(inst.label),
                symbols: self.alphabet.render(&inst.true_symbols),
                features: inst.features.iter().flatten().copied().collect(),
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Dataset, DatasetError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map_or(true, |s| !s.trim().is_empty())
        });
        let parse_err = |line: usize, e: &dyn std::fmt::Display| DatasetError::Parse {
            line: line + 1,
            msg: e.to_string(),
        };
        let (hl, header_line) = lines
            .next()
            .ok_or(DatasetError::Parse { line: 1, msg: "missing header".into() })?;
        let header: Header = serde_json::from_str(&header_line?).map_err(|e| parse_err(hl, &e))?;
        if header.format != DATASET_FORMAT {
            return Err(parse_err(hl, &format!("unsupported format {:?}", header.format)));
        }
        let alphabet = Alphabet::new(header.alphabet.chars()).map_err(|e| parse_err(hl, &e))?;
        let mut instances = Vec::new();
        for (ln, line) in lines {
            let rec: Record = serde_json::from_str(&line?).map_err(|e| parse_err(ln, &e))?;
            let true_symbols = alphabet.encode(&rec.symbols).map_err(|e| parse_err(ln, &e))?;
            if rec.features.len() != true_symbols.len() * header.dim {
                return Err(parse_err(
                    ln,
                    &format!(
                        "expected {}x{} features, got {}",
                        true_symbols.len(),
                        header.dim,
                        rec.features.len()
                    ),
                ));
            }
            let label = match rec.label {
                0 => false,
                1 => true,
                v => return Err(parse_err(ln, &format!("label must be 0 or 1, got {v}"))),
            };
            let features = if header.dim == 0 {
                vec![Vec::new(); true_symbols.len()]
            } else {
                rec.features.chunks(header.dim).map(<[f64]>::to_vec).collect()
            };
            instances.push(Instance { features, true_symbols, label });
        }
        Ok(Dataset { instances, alphabet, feature_dim: header.dim, seed: header.seed })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    alphabet: String,
    dim: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    label: u8,
    symbols: String,
    features: Vec<f64>,
}

/// Fixed per-symbol prototype vectors; rendering adds isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Renderer {
    prototypes: Vec<Vec<f64>>,
}

impl Renderer {
    /// Draws `n_symbols` prototypes as `scale * N(0, I_d)` vectors, rejecting any
    /// closer than [`MIN_PROTOTYPE_DISTANCE`] to an earlier one.
    pub fn new(n_symbols: usize, dim: usize, scale: f64, seed: u64) -> Result<Self, DatasetError> {
        if dim < n_symbols {
            return Err(DatasetError::Config(format!(
                "feature dimension {dim} is smaller than the alphabet size {n_symbols}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DatasetError::Config(format!("prototype scale must be positive, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(n_symbols);
        let mut attempts = 0usize;
        while prototypes.len() < n_symbols {
            attempts += 1;
            if attempts > 100_000 {
                return Err(DatasetError::Config(format!(
                    "could not place {n_symbols} prototypes at distance >= {MIN_PROTOTYPE_DISTANCE} with scale {scale}"
                )));
            }
            let cand: Vec<f64> =
                (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            if prototypes.iter().all(|p| euclidean(p, &cand) >= MIN_PROTOTYPE_DISTANCE) {
                prototypes.push(cand);
            }
        }
        Ok(Self { prototypes })
    }

    pub fn prototype(&self, index: usize) -> &[f64] {
        &self.prototypes[index]
    }

    pub fn dim(&self) -> usize {
        self.prototypes.first().map_or(0, Vec::len)
    }

    pub fn n_symbols(&self) -> usize {
        self.prototypes.len()
    }

    /// `prototype(index) + sigma * z` with `z` drawn from `rng` one coordinate at a time.
    pub fn render<R: Rng + ?Sized>(&self, index: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
        self.prototypes[index]
            .iter()
            .map(|&x| {
                let z: f64 = rng.sample(StandardNormal);
                x + sigma * z
            })
            .collect()
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub noise_sigma: f64,
    pub frac_negative: f64,
    pub feature_dim: usize,
    pub prototype_scale: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 60,
            len_min: 5,
            len_max: 10,
            noise_sigma: 0.3,
            frac_negative: 0.0,
            feature_dim: 8,
            prototype_scale: 0.2,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.len_min > self.len_max {
            return Err(DatasetError::ImpossibleLengths { min: self.len_min, max: self.len_max });
        }
        if !(0.0..1.0).contains(&self.frac_negative) {
            return Err(DatasetError::Config(format!("frac_negative must lie in [0, 1), got {}", self.frac_negative)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(DatasetError::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.prototype_scale.is_finite() && self.prototype_scale > 0.0) {
            return Err(DatasetError::Config(format!("prototype_scale must be > 0, got {}", self.prototype_scale)));
        }
        if self.feature_dim < 4 {
            return Err(DatasetError::Config(format!("feature_dim must be at least 4, got {}", self.feature_dim)));
        }
        Ok(())
    }
}

/// Generates `cfg.n` instances over the `0 1 + =` alphabet. Positives are true
/// equations, negatives parse but are false. Lengths are drawn uniformly from
/// the lengths in the window that admit a true equation.
pub fn generate_dba_dataset(cfg: &DatasetConfig) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let alphabet = Alphabet::binary_addition();
    let syntax = EquationSyntax::for_alphabet(&alphabet).expect("default alphabet has all grammar symbols");
    let renderer = Renderer::new(alphabet.size(), cfg.feature_dim, cfg.prototype_scale, cfg.seed)?;

    let pools: Vec<(usize, Vec<SymbolSeq>)> = (cfg.len_min..=cfg.len_max)
        .map(|l| (l, syntax.valid_equations(l)))
        .filter(|(_, eqs)| !eqs.is_empty())
        .collect();
    if pools.is_empty() {
        return Err(DatasetError::ImpossibleLengths { min: cfg.len_min, max: cfg.len_max });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let negative = rng.random::<f64>() < cfg.frac_negative;
        let (len, pool) = pools.choose(&mut rng).expect("pools nonempty");
        let symbols = if negative {
            false_equation(&syntax, *len, &mut rng)?
        } else {
            pool.choose(&mut rng).expect("pool nonempty").clone()
        };
        let features = symbols.iter().map(|&s| renderer.render(s, cfg.noise_sigma, &mut rng)).collect();
        instances.push(Instance { features, true_symbols: symbols, label: !negative });
    }
    Ok(Dataset { instances, alphabet, feature_dim: cfg.feature_dim, seed: cfg.seed })
}

fn false_equation(syntax: &EquationSyntax, len: usize, rng: &mut ChaCha8Rng) -> Result<SymbolSeq, DatasetError> {
    let digits = len - 2;
    let splits: Vec<(usize, usize, usize)> = (1..digits - 1)
        .flat_map(|la| (1..digits - la).map(move |lb| (la, lb, digits - la - lb)))
        .collect();
    for _ in 0..10_000 {
        let &(la, lb, lc) = splits.choose(rng).expect("len >= 5 has a split");
        let eq = Equation {
            a: random_operand(la, rng),
            b: random_operand(lb, rng),
            c: random_operand(lc, rng),
        };
        if !eq.holds() {
            return Ok(syntax.encode(&eq));
        }
    }
    Err(DatasetError::Config(format!("failed to sample a false equation of length {len}")))
}

fn random_operand(len: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    if len <= 20 {
        operand_values(len).choose(rng).expect("nonempty").clone()
    } else {
        let mut bits = vec![1u8];
        bits.extend((1..len).map(|_| rng.random_range(0..2u8)));
        bits
    }
}
