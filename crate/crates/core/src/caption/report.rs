use std::path::Path;

use serde::{Serialize, Serializer};

use super::corrupt::{corrupt_confused, corrupt_incomplete, corrupt_incorrect};
use super::lexicon::PosLexicon;
use super::metrics::{bleu, meteor_simplified, rouge_l, rouge_n};
use super::record::{CaptionRecord, CorruptionKind, Degree, Layer};
use crate::csv_out::write_csv;
use crate::error::Result;
use crate::lang::fnv1a;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub kind: CorruptionKind,
    #[serde(serialize_with = "degree_or_none")]
    pub degree: Option<Degree>,
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn degree_or_none<S: Serializer>(d: &Option<Degree>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match d {
        Some(d) => s.serialize_f64(d.fraction()),
        None => s.serialize_str("none"),
    }
}

impl MetricRow {
    pub fn write_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
        write_csv(path, rows)
    }
}

/// Per-record corruption seed so that records differ while a run stays
/// reproducible.
pub fn record_seed(seed: u64, image_id: &str, layer: Layer) -> u64 {
    let tag = match layer {
        Layer::T => "T",
        Layer::R => "R",
    };
    seed ^ fnv1a(&format!("{image_id}/{tag}"))
}

const METRICS: [&str; 4] = ["rouge1", "rougeL", "meteor", "bleu"];

fn score(metric: &str, cand: &str, reference: &str) -> f64 {
    match metric {
        "rouge1" => rouge_n(cand, reference, 1),
        "rougeL" => rouge_l(cand, reference),
        "meteor" => meteor_simplified(cand, reference),
        _ => bleu(cand, reference, 4),
    }
}

fn row(kind: CorruptionKind, degree: Option<Degree>, metric: &'static str, values: &[f64]) -> MetricRow {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
    MetricRow {
        kind,
        degree,
        metric,
        mean,
        std: var.sqrt(),
        n,
    }
}

/// Scores every corruption kind and degree against the original captions.
/// Both layers of each pair contribute one value per metric.
pub fn score_corruptions(pairs: &[(CaptionRecord, CaptionRecord)], lexicon: &PosLexicon, seed: u64) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    let originals: Vec<&CaptionRecord> = pairs.iter().flat_map(|(t, r)| [t, r]).collect();
    for metric in METRICS {
        let vals: Vec<f64> = originals.iter().map(|o| score(metric, &o.text, &o.text)).collect();
        rows.push(row(CorruptionKind::Accurate, None, metric, &vals));
    }
    for kind in [
        CorruptionKind::Incorrect,
        CorruptionKind::Confused,
        CorruptionKind::Incomplete,
    ] {
        for degree in Degree::ALL {
            let corrupted: Vec<CaptionRecord> = pairs
                .iter()
                .flat_map(|(t, r)| {
                    let st = record_seed(seed, &t.image_id, t.layer);
                    let sr = record_seed(seed, &r.image_id, r.layer);
                    match kind {
                        CorruptionKind::Incorrect => vec![
                            corrupt_incorrect(t, degree, lexicon, st),
                            corrupt_incorrect(r, degree, lexicon, sr),
                        ],
                        CorruptionKind::Incomplete => {
                            vec![corrupt_incomplete(t, degree, st), corrupt_incomplete(r, degree, sr)]
                        }
                        _ => {
                            let p = corrupt_confused(t, r, degree, st);
                            vec![p.t, p.r]
                        }
                    }
                })
                .collect();
            for metric in METRICS {
                let vals: Vec<f64> = corrupted
                    .iter()
                    .zip(&originals)
                    .map(|(c, o)| score(metric, &c.text, &o.text))
                    .collect();
                rows.push(row(kind, Some(degree), metric, &vals));
            }
        }
    }
    rows
}
