//! Symbol-level domain types: alphabets, decoded sequences, per-position
//! probability rows and Boolean revision masks.

use std::fmt;

use thiserror::Error;

/// Tolerance for row-stochastic checks.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("alphabet needs at least two symbols, got {0}")]
    AlphabetTooSmall(usize),
    #[error("duplicate symbol {0:?} in alphabet")]
    DuplicateSymbol(char),
    #[error("symbol {0:?} is not in the alphabet")]
    UnknownSymbol(char),
    #[error("symbol index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("row {row} has dimension {got}, expected {expected}")]
    RowDimension { row: usize, got: usize, expected: usize },
    #[error("row {row} is not a probability vector (sum {sum}, or negative/non-finite entry)")]
    NotStochastic { row: usize, sum: f64 },
}

/// Ordered set of distinct symbols. Index `i` names `symbols[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self, SymbolError> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        if symbols.len() < 2 {
            return Err(SymbolError::AlphabetTooSmall(symbols.len()));
        }
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(SymbolError::DuplicateSymbol(*c));
            }
        }
        Ok(Self { symbols })
    }

    /// `0`, `1`, `+`, `=` in that index order.
    pub fn binary_addition() -> Self {
        Self { symbols: vec!['0', '1', '+', '='] }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> Option<char> {
        self.symbols.get(index).copied()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    /// Parses a string of alphabet characters into indices.
    pub fn encode(&self, s: &str) -> Result<SymbolSeq, SymbolError> {
        s.chars()
            .map(|c| self.index_of(c).ok_or(SymbolError::UnknownSymbol(c)))
            .collect::<Result<Vec<_>, _>>()
            .map(SymbolSeq)
    }

    pub fn decode(&self, seq: &SymbolSeq) -> Result<String, SymbolError> {
        seq.iter()
            .map(|&i| {
                self.symbol(i)
                    .ok_or(SymbolError::IndexOutOfRange { index: i, size: self.size() })
            })
            .collect()
    }

    /// Like [`Alphabet::decode`] but renders out-of-range indices as `?`.
    pub fn render(&self, seq: &SymbolSeq) -> String {
        seq.iter().map(|&i| self.symbol(i).unwrap_or('?')).collect()
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }
}

/// A sequence of alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SymbolSeq(pub Vec<usize>);

impl SymbolSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for SymbolSeq {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Row-stochastic matrix: one probability vector over the alphabet per position.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSeq {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl ProbSeq {
    /// Validates that every row has dimension `dim`, non-negative finite entries
    /// and sums to one within [`ROW_SUM_TOL`].
    pub fn new(rows: Vec<Vec<f64>>, dim: usize) -> Result<Self, SymbolError> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(SymbolError::RowDimension { row: r, got: row.len(), expected: dim });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&x| !x.is_finite() || x < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(SymbolError::NotStochastic { row: r, sum });
            }
        }
        Ok(Self { rows, dim })
    }

    /// One-hot rows for `seq`.
    pub fn one_hot(seq: &SymbolSeq, dim: usize) -> Result<Self, SymbolError> {
        let rows = seq
            .iter()
            .map(|&i| {
                if i >= dim {
                    return Err(SymbolError::IndexOutOfRange { index: i, size: dim });
                }
                let mut row = vec![0.0; dim];
                row[i] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows, dim })
    }

    /// One-hot rows where `smoothing` mass is spread evenly over the other symbols.
    pub fn smoothed_one_hot(seq: &SymbolSeq, dim: usize, smoothing: f64) -> Result<Self, SymbolError> {
        let off = if dim > 1 { smoothing / (dim - 1) as f64 } else { 0.0 };
        let rows = seq
            .iter()
            .map(|&i| {
                if i >= dim {
                    return Err(SymbolError::IndexOutOfRange { index: i, size: dim });
                }
                let mut row = vec![off; dim];
                row[i] = 1.0 - smoothing;
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rows, dim)
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>, dim: usize) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == dim));
        Self { rows, dim }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }
}

/// Per-row argmax; ties go to the smallest index.
pub fn argmax_decode(p: &ProbSeq) -> SymbolSeq {
    SymbolSeq(p.rows().iter().map(|row| argmax(row)).collect())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Boolean revision sequence: `true` turns the position into a hole for abduction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RevisionMask(pub Vec<bool>);

impl RevisionMask {
    pub fn all_false(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn holes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn hole_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Parses a `T`/`F` string.
    pub fn from_tf(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                'T' => Some(true),
                'F' => Some(false),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for RevisionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "T" } else { "F" })?;
        }
        Ok(())
    }
}
