//! Graded caption corruption and text-overlap metrics.

mod corpus;
mod corrupt;
mod lexicon;
mod metrics;
mod record;
mod report;

pub use corpus::synthetic_corpus;
pub use corrupt::{corrupt_confused, corrupt_incomplete, corrupt_incorrect, replace_words, ConfusedPair, PREPOSITIONS};
pub use lexicon::{PosLexicon, WordClass};
pub use metrics::{bleu, lcs_len, meteor_simplified, rouge_l, rouge_n, BLEU_EPSILON, ROUGE_L_BETA2};
pub use record::{read_records, write_records, CaptionRecord, CorruptionKind, Degree, Layer};
pub use report::{record_seed, score_corruptions, MetricRow};
