use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lexicon::{PosLexicon, WordClass};
use super::record::{CaptionRecord, CorruptionKind, Degree};
use crate::lang::tokenize;

pub const PREPOSITIONS: [&str; 10] = [
    "in", "on", "at", "under", "over", "beside", "near", "behind", "between", "through",
];

/// The first `count` entries of a seeded permutation of `candidates`, so a
/// larger count always covers a smaller one under the same seed.
fn pick(mut candidates: Vec<usize>, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    candidates.shuffle(rng);
    candidates.truncate(count);
    candidates.sort_unstable();
    candidates
}

/// Word-level rule: replaces `ceil(fraction · k)` of the `k` replaceable
/// words by their class placeholder.
pub fn replace_words(text: &str, fraction: f64, lexicon: &PosLexicon, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = tokenize(text);
    let replaceable: Vec<usize> = (0..tokens.len())
        .filter(|&i| lexicon.class_of(&tokens[i]).is_replaceable())
        .collect();
    let count = ((fraction * replaceable.len() as f64).ceil() as usize).min(replaceable.len());
    for i in pick(replaceable, count, &mut rng) {
        tokens[i] = match lexicon.class_of(&tokens[i]) {
            WordClass::Noun => "error".into(),
            WordClass::Verb => "misdo".into(),
            WordClass::Adjective => "incorrect".into(),
            WordClass::Adverb => "incorrectly".into(),
            WordClass::Preposition => PREPOSITIONS.choose(&mut rng).expect("nonempty").to_string(),
            WordClass::Numeral => rng.gen_range(0..100).to_string(),
            WordClass::Other => unreachable!("only replaceable words are picked"),
        };
    }
    tokens.join(" ")
}

pub fn corrupt_incorrect(record: &CaptionRecord, degree: Degree, lexicon: &PosLexicon, seed: u64) -> CaptionRecord {
    let text = match degree {
        Degree::Full => "incorrect sentence".to_string(),
        d => replace_words(&record.text, d.fraction(), lexicon, seed),
    };
    record.corrupted(text, CorruptionKind::Incorrect, degree)
}

/// Removes `ceil(degree · n)` seeded words, keeping the rest in order.
pub fn corrupt_incomplete(record: &CaptionRecord, degree: Degree, seed: u64) -> CaptionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = tokenize(&record.text);
    let removed = pick((0..tokens.len()).collect(), degree.count_of(tokens.len()), &mut rng);
    let text = tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| removed.binary_search(i).is_err())
        .map(|(_, t)| t.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    record.corrupted(text, CorruptionKind::Incomplete, degree)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfusedPair {
    pub t: CaptionRecord,
    pub r: CaptionRecord,
    /// Set when either caption was empty and nothing was exchanged.
    pub skipped: bool,
}

/// Swaps `ceil(degree · min(n_T, n_R))` seeded word positions between the
/// two captions; the full degree exchanges the captions outright.
pub fn corrupt_confused(record_t: &CaptionRecord, record_r: &CaptionRecord, degree: Degree, seed: u64) -> ConfusedPair {
    let mut tt = tokenize(&record_t.text);
    let mut tr = tokenize(&record_r.text);
    if tt.is_empty() || tr.is_empty() {
        log::warn!(
            "caption of {} is empty; confused corruption skipped",
            if tt.is_empty() {
                &record_t.image_id
            } else {
                &record_r.image_id
            }
        );
        return ConfusedPair {
            t: record_t.clone(),
            r: record_r.clone(),
            skipped: true,
        };
    }
    let (text_t, text_r) = match degree {
        Degree::Full => (record_r.text.clone(), record_t.text.clone()),
        d => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = tt.len().min(tr.len());
            for i in pick((0..n).collect(), d.count_of(n), &mut rng) {
                std::mem::swap(&mut tt[i], &mut tr[i]);
            }
            (tt.join(" "), tr.join(" "))
        }
    };
    ConfusedPair {
        t: record_t.corrupted(text_t, CorruptionKind::Confused, degree),
        r: record_r.corrupted(text_r, CorruptionKind::Confused, degree),
        skipped: false,
    }
}
