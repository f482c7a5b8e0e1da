use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    T,
    R,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    Accurate,
    Incorrect,
    Confused,
    Incomplete,
}

impl CorruptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accurate => "accurate",
            Self::Incorrect => "incorrect",
            Self::Confused => "confused",
            Self::Incomplete => "incomplete",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accurate" => Ok(Self::Accurate),
            "incorrect" => Ok(Self::Incorrect),
            "confused" => Ok(Self::Confused),
            "incomplete" => Ok(Self::Incomplete),
            _ => Err(Error::Config(format!("unknown corruption kind {s:?}"))),
        }
    }
}

/// Fraction of a caption that is corrupted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Degree {
    Quarter,
    Half,
    ThreeQuarters,
    Full,
}

impl Degree {
    pub const ALL: [Degree; 4] = [Degree::Quarter, Degree::Half, Degree::ThreeQuarters, Degree::Full];

    pub fn fraction(self) -> f64 {
        match self {
            Self::Quarter => 0.25,
            Self::Half => 0.5,
            Self::ThreeQuarters => 0.75,
            Self::Full => 1.0,
        }
    }

    /// `ceil(fraction · count)`.
    pub fn count_of(self, count: usize) -> usize {
        (self.fraction() * count as f64).ceil() as usize
    }
}

impl TryFrom<f64> for Degree {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Degree::ALL
            .into_iter()
            .find(|d| d.fraction() == v)
            .ok_or_else(|| Error::Config(format!("degree must be one of 0.25, 0.5, 0.75, 1.0; got {v}")))
    }
}

impl From<Degree> for f64 {
    fn from(d: Degree) -> f64 {
        d.fraction()
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.fraction())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub layer: Layer,
    pub text: String,
    pub kind: CorruptionKind,
    pub degree: Option<Degree>,
}

impl CaptionRecord {
    pub fn accurate(image_id: impl Into<String>, layer: Layer, text: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            layer,
            text: text.into(),
            kind: CorruptionKind::Accurate,
            degree: None,
        }
    }

    pub(crate) fn corrupted(&self, text: String, kind: CorruptionKind, degree: Degree) -> Self {
        Self {
            image_id: self.image_id.clone(),
            layer: self.layer,
            text,
            kind,
            degree: Some(degree),
        }
    }

    /// Accurate captions carry no degree and every corrupted one does.
    pub fn validate(&self) -> Result<()> {
        if (self.kind == CorruptionKind::Accurate) != self.degree.is_none() {
            return Err(Error::Config(format!(
                "caption {}/{:?}: kind {} with degree {:?}",
                self.image_id, self.layer, self.kind, self.degree
            )));
        }
        Ok(())
    }
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            let rec: CaptionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                offset,
                message: e.to_string(),
            })?;
            rec.validate()?;
            out.push(rec);
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn write_records(path: impl AsRef<Path>, records: &[CaptionRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    fs::write(path, out)?;
    Ok(())
}
