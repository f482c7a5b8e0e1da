//! Candidate-versus-reference text overlap scores in `[0, 1]`, computed over
//! [`tokenize`]d words.

use std::collections::HashMap;

use crate::lang::tokenize;

pub const ROUGE_L_BETA2: f64 = 8.0;
/// Stand-in precision for BLEU n-gram levels with no clipped match.
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_matches(cand: &HashMap<&[String], usize>, refs: &HashMap<&[String], usize>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Clipped n-gram recall; 0 when the reference has no n-grams.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let rg = ngrams(&r, n);
    let total: usize = rg.values().sum();
    if total == 0 {
        return 0.0;
    }
    clipped_matches(&ngrams(&c, n), &rg) as f64 / total as f64
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with `β² = 8`.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let l = lcs_len(&c, &r);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / c.len() as f64;
    let rec = l as f64 / r.len() as f64;
    (1.0 + ROUGE_L_BETA2) * p * rec / (rec + ROUGE_L_BETA2 * p)
}

/// Fewest chunks over all maximum one-to-one exact alignments.
struct ChunkSearch<'a> {
    c: &'a [String],
    r: &'a [String],
    memo: HashMap<(usize, Vec<bool>, Option<usize>), Option<usize>>,
}

impl ChunkSearch<'_> {
    /// Minimal chunks for candidate suffix `i..` producing exactly `need`
    /// more matches, given used reference slots and the reference index the
    /// previous candidate word was aligned to.
    fn best(&mut self, i: usize, used: &mut Vec<bool>, prev: Option<usize>, need: usize) -> Option<usize> {
        if need == 0 {
            return Some(0);
        }
        if self.c.len() - i < need {
            return None;
        }
        let key = (i, used.clone(), prev);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = self.best(i + 1, used, None, need);
        for j in 0..self.r.len() {
            if !used[j] && self.r[j] == self.c[i] {
                used[j] = true;
                let extends = prev.is_some_and(|p| p + 1 == j);
                if let Some(rest) = self.best(i + 1, used, Some(j), need - 1) {
                    let total = rest + usize::from(!extends);
                    best = Some(best.map_or(total, |b: usize| b.min(total)));
                }
                used[j] = false;
            }
        }
        self.memo.insert(key, best);
        best
    }
}

/// Exact-match METEOR: `F_mean = 10PR/(R + 9P)`, penalty
/// `0.5·(chunks/matches)³`.
pub fn meteor_simplified(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let matches = clipped_matches(&ngrams(&c, 1), &ngrams(&r, 1));
    if matches == 0 {
        return 0.0;
    }
    let mut search = ChunkSearch {
        c: &c,
        r: &r,
        memo: HashMap::new(),
    };
    let chunks = search
        .best(0, &mut vec![false; r.len()], None, matches)
        .expect("a maximum alignment exists");
    let m = matches as f64;
    let p = m / c.len() as f64;
    let rec = m / r.len() as f64;
    let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
    f_mean * (1.0 - 0.5 * (chunks as f64 / m).powi(3))
}

/// Geometric mean of clipped n-gram precisions times the brevity penalty.
/// Orders longer than the candidate are left out; orders with no clipped
/// match contribute [`BLEU_EPSILON`].
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> f64 {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let orders = max_n.min(c.len());
    if orders == 0 || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cg = ngrams(&c, n);
        let total: usize = cg.values().sum();
        let m = clipped_matches(&cg, &ngrams(&r, n));
        let p = if m == 0 { BLEU_EPSILON } else { m as f64 / total as f64 };
        log_sum += p.ln();
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}
