//! Grammar of binary-addition equations `A+B=C`.
//!
//! Operands are nonempty bitstrings with no leading zeros except the single
//! digit `0`. Bitstrings are stored most significant bit first.

use crate::symbols::{Alphabet, SymbolSeq};

/// Indices of the four grammar symbols inside some alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquationSyntax {
    pub zero: usize,
    pub one: usize,
    pub plus: usize,
    pub equals: usize,
}

impl EquationSyntax {
    /// Looks up `0`, `1`, `+`, `=` in the alphabet.
    pub fn for_alphabet(alphabet: &Alphabet) -> Option<Self> {
        Some(Self {
            zero: alphabet.index_of('0')?,
            one: alphabet.index_of('1')?,
            plus: alphabet.index_of('+')?,
            equals: alphabet.index_of('=')?,
        })
    }

    fn bit(&self, sym: usize) -> Option<u8> {
        if sym == self.zero {
            Some(0)
        } else if sym == self.one {
            Some(1)
        } else {
            None
        }
    }

    /// Splits `s` into its three operands, or `None` if it is not of the form `A+B=C`.
    pub fn parse(&self, s: &SymbolSeq) -> Option<Equation> {
        let syms = s.as_slice();
        let plus = syms.iter().position(|&x| x == self.plus)?;
        let eq = syms.iter().position(|&x| x == self.equals)?;
        if eq < plus {
            return None;
        }
        let a = self.operand(&syms[..plus])?;
        let b = self.operand(&syms[plus + 1..eq])?;
        let c = self.operand(&syms[eq + 1..])?;
        Some(Equation { a, b, c })
    }

    fn operand(&self, syms: &[usize]) -> Option<Vec<u8>> {
        if syms.is_empty() {
            return None;
        }
        let bits = syms.iter().map(|&x| self.bit(x)).collect::<Option<Vec<u8>>>()?;
        if bits.len() > 1 && bits[0] == 0 {
            return None;
        }
        Some(bits)
    }

    pub fn encode(&self, eq: &Equation) -> SymbolSeq {
        let digit = |b: &u8| if *b == 0 { self.zero } else { self.one };
        let mut out = Vec::with_capacity(eq.len());
        out.extend(eq.a.iter().map(digit));
        out.push(self.plus);
        out.extend(eq.b.iter().map(digit));
        out.push(self.equals);
        out.extend(eq.c.iter().map(digit));
        SymbolSeq(out)
    }

    /// Every arithmetically true equation of exactly `len` symbols, in a fixed
    /// order (operand lengths ascending, then operand values ascending).
    pub fn valid_equations(&self, len: usize) -> Vec<SymbolSeq> {
        let mut out = Vec::new();
        if len < 5 {
            return out;
        }
        let digits = len - 2;
        for la in 1..digits - 1 {
            for lb in 1..digits - la {
                let lc = digits - la - lb;
                for a in operand_values(la) {
                    for b in operand_values(lb) {
                        let c = add_bits(&a, &b);
                        if c.len() == lc {
                            out.push(self.encode(&Equation { a: a.clone(), b, c }));
                        }
                    }
                }
            }
        }
        out
    }
}

/// A parsed equation. Truth is decided by [`Equation::holds`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equation {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    pub c: Vec<u8>,
}

impl Equation {
    pub fn holds(&self) -> bool {
        add_bits(&self.a, &self.b) == self.c
    }

    /// Total symbol count including `+` and `=`.
    pub fn len(&self) -> usize {
        self.a.len() + self.b.len() + self.c.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// All canonical bitstrings with exactly `len` digits.
pub(crate) fn operand_values(len: usize) -> Vec<Vec<u8>> {
    if len == 1 {
        return vec![vec![0], vec![1]];
    }
    (0..1u64 << (len - 1))
        .map(|tail| {
            let mut bits = vec![1u8];
            bits.extend((0..len - 1).rev().map(|k| ((tail >> k) & 1) as u8));
            bits
        })
        .collect()
}

/// Binary addition of canonical MSB-first bitstrings, canonical result.
pub fn add_bits(a: &[u8], b: &[u8]) -> Vec<u8> {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n + 1);
    let mut carry = 0u8;
    for k in 0..n {
        let x = if k < a.len() { a[a.len() - 1 - k] } else { 0 };
        let y = if k < b.len() { b[b.len() - 1 - k] } else { 0 };
        let s = x + y + carry;
        out.push(s & 1);
        carry = s >> 1;
    }
    if carry == 1 {
        out.push(1);
    }
    while out.len() > 1 && *out.last().unwrap() == 0 {
        out.pop();
    }
    out.reverse();
    out
}
