use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lexicon::{PosLexicon, WordClass};
use super::record::{CaptionRecord, Layer};

const DETERMINERS: [&str; 3] = ["a", "the", "one"];

/// `n` seeded transmission/reflection caption pairs built from lexicon words,
/// 6 to 10 words each.
pub fn synthetic_corpus(n: usize, seed: u64, lexicon: &PosLexicon) -> Vec<(CaptionRecord, CaptionRecord)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = |rng: &mut ChaCha8Rng, class: WordClass| -> String {
        lexicon
            .words_of(class)
            .choose(rng)
            .cloned()
            .unwrap_or_else(|| "thing".to_string())
    };
    let caption = |rng: &mut ChaCha8Rng| -> String {
        let det = |rng: &mut ChaCha8Rng| DETERMINERS.choose(rng).expect("nonempty").to_string();
        let mut w = vec![det(rng), word(rng, WordClass::Adjective), word(rng, WordClass::Noun)];
        w.push(word(rng, WordClass::Verb));
        w.push(word(rng, WordClass::Preposition));
        if rng.gen_bool(0.5) {
            w.push(word(rng, WordClass::Numeral));
        } else {
            w.push(det(rng));
        }
        if rng.gen_bool(0.5) {
            w.push(word(rng, WordClass::Adjective));
        }
        w.push(word(rng, WordClass::Noun));
        if rng.gen_bool(0.5) {
            w.push(word(rng, WordClass::Adverb));
        }
        if rng.gen_bool(0.3) {
            w.push("nearby".to_string());
        }
        w.join(" ")
    };
    (0..n)
        .map(|k| {
            let id = format!("img{k:03}");
            let t = caption(&mut rng);
            let r = caption(&mut rng);
            (
                CaptionRecord::accurate(id.clone(), Layer::T, t),
                CaptionRecord::accurate(id, Layer::R, r),
            )
        })
        .collect()
}
