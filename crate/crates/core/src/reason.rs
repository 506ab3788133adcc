//! Knowledge bases over binary-addition equations: validity checks,
//! hole-filling abduction and column-level rule extraction.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::equation::{Equation, EquationSyntax};
use crate::symbols::{Alphabet, ProbSeq, RevisionMask, SymbolSeq};

/// Abduction refuses masks with more holes than this.
pub const MAX_HOLES: usize = 8;

/// Longest equation a [`CompleteKb`] may enumerate for the default alphabet.
pub const MAX_COMPLETE_LEN: usize = 14;

/// Probabilities are floored here before taking logs during abduction.
pub const ABDUCTION_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("mask has {holes} holes, abduction allows at most {max}")]
    TooManyHoles { holes: usize, max: usize },
    #[error("length mismatch: sequence {seq}, mask {mask}, probability rows {rows}")]
    LengthMismatch { seq: usize, mask: usize, rows: usize },
    #[error("probability rows have dimension {got}, alphabet has {expected} symbols")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("knowledge base configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KbVerdict {
    Valid,
    Invalid,
    Unknown,
}

impl KbVerdict {
    /// Whether this verdict entails label `y` (`Valid` for true, `Invalid` for false).
    pub fn satisfies(self, y: bool) -> bool {
        matches!((self, y), (KbVerdict::Valid, true) | (KbVerdict::Invalid, false))
    }
}

/// Thread-safe tally of knowledge-base calls.
#[derive(Debug, Default)]
pub struct AccessCounter(AtomicU64);

impl AccessCounter {
    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbductionResult {
    pub revised: SymbolSeq,
    /// `(position, symbol)` for every hole, in position order.
    pub filled: Vec<(usize, usize)>,
    pub joint_log_prob: f64,
}

/// A symbol-level knowledge base. `check` and `abduce` each count as exactly
/// one access.
pub trait KnowledgeBase: Send + Sync {
    fn alphabet(&self) -> &Alphabet;

    /// Verdict without touching the access counter.
    fn judge(&self, s: &SymbolSeq) -> KbVerdict;

    fn counter(&self) -> &AccessCounter;

    fn check(&self, s: &SymbolSeq) -> KbVerdict {
        self.counter().record();
        self.judge(s)
    }

    /// Fills the holes of `b` so that the revised sequence entails `y`,
    /// maximizing the joint probability of the filled symbols under `p`.
    fn abduce(
        &self,
        o: &SymbolSeq,
        b: &RevisionMask,
        y: bool,
        p: &ProbSeq,
    ) -> Result<Option<AbductionResult>, ReasonError> {
        self.counter().record();
        abduce_by_search(self, o, b, y, p)
    }

    fn accesses(&self) -> u64 {
        self.counter().get()
    }
}

/// Depth-first search over hole assignments in lexicographic symbol order with
/// a probability upper bound. Ties keep the lexicographically first fill.
pub fn abduce_by_search<K: KnowledgeBase + ?Sized>(
    kb: &K,
    o: &SymbolSeq,
    b: &RevisionMask,
    y: bool,
    p: &ProbSeq,
) -> Result<Option<AbductionResult>, ReasonError> {
    if o.len() != b.len() || o.len() != p.len() {
        return Err(ReasonError::LengthMismatch { seq: o.len(), mask: b.len(), rows: p.len() });
    }
    let n_sym = kb.alphabet().size();
    if p.dim() != n_sym {
        return Err(ReasonError::DimensionMismatch { got: p.dim(), expected: n_sym });
    }
    let holes: Vec<usize> = b.holes().collect();
    if holes.len() > MAX_HOLES {
        return Err(ReasonError::TooManyHoles { holes: holes.len(), max: MAX_HOLES });
    }
    let scores: Vec<Vec<f64>> = holes
        .iter()
        .map(|&h| p.row(h).iter().map(|&x| x.max(ABDUCTION_PROB_FLOOR).ln()).collect())
        .collect();
    // best achievable score from hole i onwards
    let mut suffix_best = vec![0.0; holes.len() + 1];
    for i in (0..holes.len()).rev() {
        let m = scores[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        suffix_best[i] = suffix_best[i + 1] + m;
    }

    let mut search = Search {
        kb,
        y,
        holes: &holes,
        scores: &scores,
        suffix_best: &suffix_best,
        work: o.clone(),
        fill: vec![0; holes.len()],
        best: None,
    };
    search.descend(0, 0.0);
    Ok(search.best.map(|(joint_log_prob, fill)| {
        let mut revised = o.clone();
        for (&h, &s) in holes.iter().zip(&fill) {
            revised.0[h] = s;
        }
        AbductionResult {
            revised,
            filled: holes.iter().copied().zip(fill).collect(),
            joint_log_prob,
        }
    }))
}

struct Search<'a, K: ?Sized> {
    kb: &'a K,
    y: bool,
    holes: &'a [usize],
    scores: &'a [Vec<f64>],
    suffix_best: &'a [f64],
    work: SymbolSeq,
    fill: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl<K: KnowledgeBase + ?Sized> Search<'_, K> {
    fn descend(&mut self, depth: usize, partial: f64) {
        if let Some((best, _)) = &self.best {
            if partial + self.suffix_best[depth] < *best - 1e-12 {
                return;
            }
        }
        if depth == self.holes.len() {
            if self.best.as_ref().is_some_and(|(b, _)| partial <= *b) {
                return;
            }
            if self.kb.judge(&self.work).satisfies(self.y) {
                self.best = Some((partial, self.fill.clone()));
            }
            return;
        }
        let h = self.holes[depth];
        for s in 0..self.scores[depth].len() {
            self.work.0[h] = s;
            self.fill[depth] = s;
            self.descend(depth + 1, partial + self.scores[depth][s]);
        }
    }
}

/// Arithmetic checker whose verification horizon is capped by operand width.
#[derive(Debug)]
pub struct BinaryAdditionKb {
    alphabet: Alphabet,
    syntax: EquationSyntax,
    max_verifiable_operand_bits: Option<usize>,
    counter: AccessCounter,
}

impl BinaryAdditionKb {
    /// `None` verifies every operand width.
    pub fn new(alphabet: Alphabet, max_verifiable_operand_bits: Option<usize>) -> Result<Self, ReasonError> {
        let syntax = EquationSyntax::for_alphabet(&alphabet)
            .ok_or_else(|| ReasonError::Config("alphabet lacks one of 0 1 + =".into()))?;
        Ok(Self { alphabet, syntax, max_verifiable_operand_bits, counter: AccessCounter::default() })
    }

    pub fn max_verifiable_operand_bits(&self) -> Option<usize> {
        self.max_verifiable_operand_bits
    }

    pub fn syntax(&self) -> &EquationSyntax {
        &self.syntax
    }
}

impl KnowledgeBase for BinaryAdditionKb {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn judge(&self, s: &SymbolSeq) -> KbVerdict {
        let Some(eq) = self.syntax.parse(s) else {
            return KbVerdict::Invalid;
        };
        if let Some(max) = self.max_verifiable_operand_bits {
            if eq.a.len() > max || eq.b.len() > max {
                return KbVerdict::Unknown;
            }
        }
        if eq.holds() {
            KbVerdict::Valid
        } else {
            KbVerdict::Invalid
        }
    }

    fn counter(&self) -> &AccessCounter {
        &self.counter
    }
}

/// Explicit set of every true equation up to `max_len` symbols. Checking is
/// membership, so the verdict is never `Unknown`.
#[derive(Debug)]
pub struct CompleteKb {
    alphabet: Alphabet,
    max_len: usize,
    members: HashSet<SymbolSeq>,
    counter: AccessCounter,
}

pub fn build_complete_kb(alphabet: &Alphabet, max_len: usize) -> Result<CompleteKb, ReasonError> {
    if max_len > MAX_COMPLETE_LEN {
        return Err(ReasonError::Config(format!(
            "complete knowledge base length {max_len} exceeds the supported maximum {MAX_COMPLETE_LEN}"
        )));
    }
    let syntax = EquationSyntax::for_alphabet(alphabet)
        .ok_or_else(|| ReasonError::Config("alphabet lacks one of 0 1 + =".into()))?;
    let members = (0..=max_len).flat_map(|l| syntax.valid_equations(l)).collect();
    Ok(CompleteKb { alphabet: alphabet.clone(), max_len, members, counter: AccessCounter::default() })
}

impl CompleteKb {
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: &SymbolSeq) -> bool {
        self.members.contains(s)
    }

    /// Members sorted by their string form.
    pub fn sorted_strings(&self) -> Vec<String> {
        let mut v: Vec<String> = self.members.iter().map(|s| self.alphabet.render(s)).collect();
        v.sort();
        v
    }

    /// Members sorted by their string form, as symbol sequences.
    pub fn sorted_members(&self) -> Vec<SymbolSeq> {
        let mut v: Vec<SymbolSeq> = self.members.iter().cloned().collect();
        v.sort_by_cached_key(|s| self.alphabet.render(s));
        v
    }

    /// One equation per line, sorted.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), ReasonError> {
        for line in self.sorted_strings() {
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Loads a member list written by [`CompleteKb::write_text`]. Every line must be
    /// a true equation.
    pub fn read_text<R: BufRead>(alphabet: &Alphabet, input: R) -> Result<CompleteKb, ReasonError> {
        let syntax = EquationSyntax::for_alphabet(alphabet)
            .ok_or_else(|| ReasonError::Config("alphabet lacks one of 0 1 + =".into()))?;
        let mut members = HashSet::new();
        let mut max_len = 0;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let seq = alphabet
                .encode(line)
                .map_err(|e| ReasonError::Parse { line: i + 1, msg: e.to_string() })?;
            if !syntax.parse(&seq).is_some_and(|e| e.holds()) {
                return Err(ReasonError::Parse { line: i + 1, msg: format!("{line:?} is not a true equation") });
            }
            max_len = max_len.max(seq.len());
            members.insert(seq);
        }
        Ok(CompleteKb { alphabet: alphabet.clone(), max_len, members, counter: AccessCounter::default() })
    }
}

impl KnowledgeBase for CompleteKb {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn judge(&self, s: &SymbolSeq) -> KbVerdict {
        if self.members.contains(s) {
            KbVerdict::Valid
        } else {
            KbVerdict::Invalid
        }
    }

    fn counter(&self) -> &AccessCounter {
        &self.counter
    }
}

/// One column of long addition: `a + b + carry_in = sum + 2 * carry_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    pub a: u8,
    pub b: u8,
    pub carry_in: u8,
    pub sum: u8,
    pub carry_out: u8,
}

impl Rule {
    pub fn from_column(a: u8, b: u8, carry_in: u8) -> Self {
        let t = a + b + carry_in;
        Self { a, b, carry_in, sum: t & 1, carry_out: t >> 1 }
    }

    pub fn is_sound(&self) -> bool {
        self.a + self.b + self.carry_in == self.sum + 2 * self.carry_out
    }
}

/// Column facts of a true equation, operands zero-padded to the result width.
pub fn column_rules(eq: &Equation) -> Vec<Rule> {
    let width = eq.c.len().max(eq.a.len()).max(eq.b.len());
    let digit = |v: &[u8], k: usize| if k < v.len() { v[v.len() - 1 - k] } else { 0 };
    let mut carry = 0;
    let mut rules = Vec::with_capacity(width);
    for k in 0..width {
        let r = Rule::from_column(digit(&eq.a, k), digit(&eq.b, k), carry);
        carry = r.carry_out;
        rules.push(r);
    }
    rules
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: BTreeSet<Rule>,
}

impl RuleSet {
    pub fn count(&self) -> usize {
        self.rules.len()
    }
}

/// Union of the column rules of every group whose members all check `Valid`.
/// Each sequence costs one knowledge-base access.
pub fn generate_rules<K: KnowledgeBase + ?Sized>(kb: &K, groups: &[Vec<SymbolSeq>]) -> RuleSet {
    let syntax = EquationSyntax::for_alphabet(kb.alphabet());
    let mut out = RuleSet::default();
    for group in groups {
        // every member is checked, even after a failure, so the access count
        // depends only on the group sizes
        let verdicts: Vec<KbVerdict> = group.iter().map(|s| kb.check(s)).collect();
        if verdicts.iter().any(|v| *v != KbVerdict::Valid) {
            continue;
        }
        let Some(syntax) = syntax else { continue };
        for s in group {
            if let Some(eq) = syntax.parse(s) {
                out.rules.extend(column_rules(&eq));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha() -> Alphabet {
        Alphabet::binary_addition()
    }

    fn seq(s: &str) -> SymbolSeq {
        alpha().encode(s).unwrap()
    }

    fn uniform(l: usize) -> ProbSeq {
        ProbSeq::new(vec![vec![0.25; 4]; l], 4).unwrap()
    }

    fn mask(l: usize, holes: &[usize]) -> RevisionMask {
        let mut m = RevisionMask::all_false(l);
        for &h in holes {
            m.0[h] = true;
        }
        m
    }

    #[test]
    fn check_examples() {
        let kb = BinaryAdditionKb::new(alpha(), None).unwrap();
        assert_eq!(kb.check(&seq("1+1=10")), KbVerdict::Valid);
        assert_eq!(kb.check(&seq("1+0=10")), KbVerdict::Invalid);
        assert_eq!(kb.check(&seq("1+=10")), KbVerdict::Invalid);
        let small = BinaryAdditionKb::new(alpha(), Some(3)).unwrap();
        assert_eq!(small.check(&seq("1011+1=1100")), KbVerdict::Unknown);
        assert_eq!(small.check(&seq("101+1=110")), KbVerdict::Valid);
        assert_eq!(kb.accesses(), 3);
        assert_eq!(small.accesses(), 2);
    }

    #[test]
    fn abduce_examples() {
        let kb = BinaryAdditionKb::new(alpha(), None).unwrap();
        let o = seq("1+0=10");
        let r = kb.abduce(&o, &mask(6, &[2]), true, &uniform(6)).unwrap().unwrap();
        assert_eq!(r.revised, seq("1+1=10"));
        assert_eq!(r.filled, vec![(2, 1)]);

        let o = seq("1+1=10");
        let r = kb.abduce(&o, &mask(6, &[]), true, &uniform(6)).unwrap().unwrap();
        assert_eq!(r.revised, o);
        assert!(r.filled.is_empty());
        assert_eq!(r.joint_log_prob, 0.0);

        let o = seq("01+1=100");
        let r = kb.abduce(&o, &mask(8, &[0]), true, &uniform(8)).unwrap().unwrap();
        assert_eq!(r.revised, seq("11+1=100"));

        assert!(kb.abduce(&seq("1+1=11"), &mask(6, &[]), true, &uniform(6)).unwrap().is_none());
        assert_eq!(kb.accesses(), 4);
    }

    #[test]
    fn abduce_false_label_accepts_unparseable_and_false() {
        let kb = BinaryAdditionKb::new(alpha(), None).unwrap();
        // '1' would make it true; '+' outscores '0' and leaves it unparseable
        let mut rows = vec![vec![0.97, 0.01, 0.01, 0.01]; 6];
        rows[2] = vec![0.1, 0.6, 0.2, 0.1];
        let p = ProbSeq::new(rows, 4).unwrap();
        let r = kb.abduce(&seq("1+1=10"), &mask(6, &[2]), false, &p).unwrap().unwrap();
        assert_eq!(r.revised, seq("1++=10"));
    }

    #[test]
    fn abduce_prefers_probable_fill_and_breaks_ties_lexicographically() {
        let kb = BinaryAdditionKb::new(alpha(), None).unwrap();
        // `?+?=1` has two true fills, 0+1 and 1+0; uniform rows tie → 0+1
        let o = seq("0+0=1");
        let r = kb.abduce(&o, &mask(5, &[0, 2]), true, &uniform(5)).unwrap().unwrap();
        assert_eq!(r.revised, seq("0+1=1"));
        let mut rows = vec![vec![0.25; 4]; 5];
        rows[0] = vec![0.1, 0.7, 0.1, 0.1];
        let p = ProbSeq::new(rows, 4).unwrap();
        let r = kb.abduce(&o, &mask(5, &[0, 2]), true, &p).unwrap().unwrap();
        assert_eq!(r.revised, seq("1+0=1"));
    }

    #[test]
    fn abduce_contract_errors() {
        let kb = BinaryAdditionKb::new(alpha(), None).unwrap();
        let o = seq("10+10=100");
        let all = RevisionMask(vec![true; 9]);
        assert!(matches!(
            kb.abduce(&o, &all, true, &uniform(9)),
            Err(ReasonError::TooManyHoles { holes: 9, max: 8 })
        ));
        assert!(matches!(
            kb.abduce(&o, &mask(8, &[]), true, &uniform(9)),
            Err(ReasonError::LengthMismatch { .. })
        ));
        let p3 = ProbSeq::new(vec![vec![0.5, 0.25, 0.25]; 9], 3).unwrap();
        assert!(matches!(
            kb.abduce(&o, &mask(9, &[]), true, &p3),
            Err(ReasonError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn generate_rules_examples() {
        let kb = BinaryAdditionKb::new(alpha(), None).unwrap();
        let g = vec![seq("1+1=10"), seq("10+1=11"), seq("0+1=1")];
        let r = generate_rules(&kb, &[g.clone()]);
        let expect: BTreeSet<Rule> = [
            Rule::from_column(1, 1, 0),
            Rule::from_column(0, 0, 1),
            Rule::from_column(0, 1, 0),
            Rule::from_column(1, 0, 0),
        ]
        .into_iter()
        .collect();
        assert_eq!(r.rules, expect);
        assert_eq!(r.count(), 4);
        assert_eq!(Rule::from_column(1, 1, 0), Rule { a: 1, b: 1, carry_in: 0, sum: 0, carry_out: 1 });

        let bad = vec![seq("1+1=10"), seq("1+1=11"), seq("0+1=1")];
        assert_eq!(generate_rules(&kb, &[bad]).count(), 0);
        assert_eq!(generate_rules(&kb, &[g.clone(), g]).count(), 4);
    }

    #[test]
    fn complete_kb_examples() {
        let kb = build_complete_kb(&alpha(), 5).unwrap();
        assert_eq!(kb.sorted_strings(), vec!["0+0=0", "0+1=1", "1+0=1"]);
        assert_eq!(kb.check(&seq("1+1=10")), KbVerdict::Invalid);
        let kb6 = build_complete_kb(&alpha(), 6).unwrap();
        assert_eq!(kb6.check(&seq("1+1=10")), KbVerdict::Valid);
        assert_eq!(kb6.check(&seq("++")), KbVerdict::Invalid);
        assert!(build_complete_kb(&alpha(), MAX_COMPLETE_LEN + 1).is_err());
    }

    #[test]
    fn complete_kb_text_round_trip() {
        let kb = build_complete_kb(&alpha(), 8).unwrap();
        let mut buf = Vec::new();
        kb.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        let back = CompleteKb::read_text(&alpha(), &buf[..]).unwrap();
        assert_eq!(back.sorted_strings(), kb.sorted_strings());
        assert!(CompleteKb::read_text(&alpha(), &b"1+1=11\n"[..]).is_err());
    }

    #[test]
    fn incomplete_agrees_with_complete_when_decided() {
        let complete = build_complete_kb(&alpha(), 9).unwrap();
        let partial = BinaryAdditionKb::new(alpha(), Some(2)).unwrap();
        // every string over the alphabet up to length 7
        for len in 0..=7u32 {
            for code in 0..4usize.pow(len) {
                let mut c = code;
                let s = SymbolSeq((0..len).map(|_| { let d = c % 4; c /= 4; d }).collect());
                let v = partial.judge(&s);
                assert_ne!(complete.judge(&s), KbVerdict::Unknown);
                if v != KbVerdict::Unknown {
                    assert_eq!(v, complete.judge(&s), "{}", alpha().render(&s));
                }
            }
        }
    }

    #[test]
    fn counter_is_exact_under_concurrency() {
        let kb = BinaryAdditionKb::new(alpha(), None).unwrap();
        let s = seq("1+1=10");
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    for _ in 0..500 {
                        kb.check(&s);
                    }
                });
            }
        });
        assert_eq!(kb.accesses(), 4000);
    }
}
