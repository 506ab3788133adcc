#![allow(dead_code)]

use abl_psp::{Alphabet, KbVerdict, ProbSeq, RevisionMask, SymbolSeq};

pub const SYMBOLS: [char; 4] = ['0', '1', '+', '='];

pub fn render(s: &SymbolSeq) -> String {
    s.iter().map(|&i| SYMBOLS[i]).collect()
}

pub fn encode(s: &str) -> SymbolSeq {
    Alphabet::binary_addition().encode(s).unwrap()
}

fn operand(s: &str) -> Option<u64> {
    if s.is_empty() || s.len() > 40 || !s.chars().all(|c| c == '0' || c == '1') {
        return None;
    }
    if s.len() > 1 && s.starts_with('0') {
        return None;
    }
    u64::from_str_radix(s, 2).ok()
}

/// `A+B=C` over binary numerals without leading zeros, with `A + B == C`.
pub fn is_true_equation(s: &str) -> bool {
    let Some((lhs, c)) = s.split_once('=') else { return false };
    let Some((a, b)) = lhs.split_once('+') else { return false };
    if c.contains('=') || c.contains('+') || b.contains('+') {
        return false;
    }
    match (operand(a), operand(b), operand(c)) {
        (Some(a), Some(b), Some(c)) => a + b == c,
        _ => false,
    }
}

/// Whether `s` entails label `y` under a complete knowledge base.
pub fn entails(s: &str, y: bool) -> bool {
    is_true_equation(s) == y
}

pub fn verdict_of(s: &str) -> KbVerdict {
    if is_true_equation(s) {
        KbVerdict::Valid
    } else {
        KbVerdict::Invalid
    }
}

/// Every string over the alphabet of length `len`.
pub fn all_strings(len: usize) -> impl Iterator<Item = String> {
    (0..4usize.pow(len as u32)).map(move |mut code| {
        let mut s = String::with_capacity(len);
        for _ in 0..len {
            s.push(SYMBOLS[code % 4]);
            code /= 4;
        }
        s
    })
}

pub fn true_equations(max_len: usize) -> Vec<String> {
    (1..=max_len).flat_map(all_strings).filter(|s| is_true_equation(s)).collect()
}

/// Brute-force ranking of all `2^l` masks: probability descending (ties within
/// 1e-12), then fewer flips from the thresholded mask, then lexicographically
/// smallest sorted flipped-position set.
pub fn brute_force_masks(pb: &[f64]) -> Vec<(Vec<bool>, f64)> {
    let eps = 1e-12;
    let clamped: Vec<f64> = pb.iter().map(|&x| x.clamp(eps, 1.0 - eps)).collect();
    let init: Vec<bool> = pb.iter().map(|&x| x > 0.5).collect();
    let l = pb.len();
    let mut all: Vec<(Vec<bool>, f64, Vec<usize>)> = (0..1u64 << l)
        .map(|code| {
            let bits: Vec<bool> = (0..l).map(|j| (code >> j) & 1 == 1).collect();
            let lp: f64 = bits.iter().zip(&clamped).map(|(&b, &q)| if b { q.ln() } else { (1.0 - q).ln() }).sum();
            let flips: Vec<usize> = (0..l).filter(|&j| bits[j] != init[j]).collect();
            (bits, lp, flips)
        })
        .collect();
    all.sort_by(|a, b| {
        if (a.1 - b.1).abs() > 1e-12 {
            b.1.total_cmp(&a.1)
        } else {
            a.2.len().cmp(&b.2.len()).then_with(|| a.2.cmp(&b.2))
        }
    });
    all.into_iter().map(|(b, lp, _)| (b, lp)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleFill {
    pub revised: String,
    pub log_prob: f64,
}

/// Exhaustive abduction: every assignment of the holes, kept if it entails
/// `y`; the most probable wins and ties go to the lexicographically first
/// assignment (symbol indices in hole order).
pub fn brute_force_abduce(o: &SymbolSeq, mask: &RevisionMask, y: bool, p: &ProbSeq) -> Option<OracleFill> {
    let holes: Vec<usize> = (0..mask.len()).filter(|&j| mask.0[j]).collect();
    let mut best: Option<OracleFill> = None;
    for code in 0..4usize.pow(holes.len() as u32) {
        let mut fill = Vec::with_capacity(holes.len());
        let mut c = code;
        for _ in &holes {
            fill.push(c % 4);
            c /= 4;
        }
        // first hole is the most significant digit so codes run lexicographically
        fill.reverse();
        let mut s = o.clone();
        let mut lp = 0.0;
        for (&h, &sym) in holes.iter().zip(&fill) {
            s.0[h] = sym;
            lp += p.row(h)[sym].max(1e-12).ln();
        }
        let text = render(&s);
        if entails(&text, y) && best.as_ref().is_none_or(|b| lp > b.log_prob) {
            best = Some(OracleFill { revised: text, log_prob: lp });
        }
    }
    best
}

/// Central finite-difference gradient of `f` at `theta`.
pub fn numeric_grad(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = t[i];
            t[i] = orig + h;
            let up = f(&t);
            t[i] = orig - h;
            let down = f(&t);
            t[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Elementwise relative error with a small denominator floor so that
/// vanishing gradients compare by absolute error.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// A random probability row of width `k`, entries bounded away from 0.
pub fn random_row<R: rand::Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Worst elementwise relative error between the analytic and numeric
/// gradients of a randomly drawn small perception model and batch.
pub fn perception_grad_error(seed: u64) -> f64 {
    use abl_psp::models::PerceptionModel;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=5);
    let h = rng.random_range(1..=6);
    let k = rng.random_range(2..=5);
    let n = rng.random_range(1..=6);
    let mut model = PerceptionModel::random(d, h, k, seed);
    let theta: Vec<f64> = model.params().iter().map(|w| w + rng.random_range(-0.3..0.3)).collect();
    model.set_params(&theta).unwrap();
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ys = SymbolSeq((0..n).map(|_| rng.random_range(0..k)).collect());
    let (_, analytic) = model.loss_and_grad(&xs, &ys).unwrap();
    let mut probe = model.clone();
    let numeric = numeric_grad(&theta, 1e-5, |t| {
        probe.set_params(t).unwrap();
        probe.loss(&xs, &ys).unwrap()
    });
    max_rel_error(&analytic, &numeric)
}

/// Same as [`perception_grad_error`] for the sequence scorer.
pub fn scorer_grad_error(seed: u64) -> f64 {
    use abl_psp::models::SequenceScorer;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let k = rng.random_range(2..=5);
    let h = rng.random_range(1..=5);
    let l = rng.random_range(1..=7);
    let mut model = SequenceScorer::random(k, h, seed);
    let theta: Vec<f64> = model.params().iter().map(|w| w + rng.random_range(-0.3..0.3)).collect();
    model.set_params(&theta).unwrap();
    let rows: Vec<Vec<f64>> = (0..l).map(|_| random_row(&mut rng, k)).collect();
    let p = ProbSeq::new(rows, k).unwrap();
    let target = RevisionMask((0..l).map(|_| rng.random_bool(0.3)).collect());
    let (_, analytic) = model.loss_and_grad(&p, &target).unwrap();
    let mut probe = model.clone();
    let numeric = numeric_grad(&theta, 1e-5, |t| {
        probe.set_params(t).unwrap();
        probe.loss(&p, &target).unwrap()
    });
    max_rel_error(&analytic, &numeric)
}

/// Every string of the form `A+B=C` over well-formed numerals, true or not,
/// of length at most `max_len`.
pub fn well_formed_equations(max_len: usize) -> Vec<String> {
    fn numerals(len: usize) -> Vec<String> {
        if len == 1 {
            return vec!["0".into(), "1".into()];
        }
        (0..1u32 << (len - 1)).map(|v| format!("1{:0w$b}", v, w = len - 1)).collect()
    }
    let mut out = Vec::new();
    for la in 1..=max_len.saturating_sub(4) {
        for lb in 1..=max_len.saturating_sub(3 + la) {
            for lc in 1..=max_len - 2 - la - lb {
                for a in numerals(la) {
                    for b in numerals(lb) {
                        for c in numerals(lc) {
                            out.push(format!("{a}+{b}={c}"));
                        }
                    }
                }
            }
        }
    }
    out
}
