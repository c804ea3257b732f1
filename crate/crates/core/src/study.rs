//! Stimulus conditions and manifest records shared by the exporter and the
//! study service.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Codebook sizes shown to subjects.
pub const STUDY_CODEBOOK_SIZES: [usize; 4] = [32, 128, 512, 2048];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StudyCondition {
    Original,
    InvertedNoQuant,
    InvertedQuant(usize),
}

impl StudyCondition {
    /// All six conditions, coarsest quantization first.
    pub fn all() -> Vec<StudyCondition> {
        let mut v: Vec<_> = STUDY_CODEBOOK_SIZES.iter().map(|&k| StudyCondition::InvertedQuant(k)).collect();
        v.push(StudyCondition::InvertedNoQuant);
        v.push(StudyCondition::Original);
        v
    }

    pub fn quant(k: usize) -> Result<Self> {
        if STUDY_CODEBOOK_SIZES.contains(&k) {
            Ok(StudyCondition::InvertedQuant(k))
        } else {
            Err(Error::Argument(format!("codebook size {k} is not a study condition")))
        }
    }
}

impl fmt::Display for StudyCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyCondition::Original => f.write_str("original"),
            StudyCondition::InvertedNoQuant => f.write_str("noquant"),
            StudyCondition::InvertedQuant(k) => write!(f, "k{k}"),
        }
    }
}

impl FromStr for StudyCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(StudyCondition::Original),
            "noquant" => Ok(StudyCondition::InvertedNoQuant),
            _ => s
                .strip_prefix('k')
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::Argument(format!("unknown study condition '{s}'")))
                .and_then(StudyCondition::quant),
        }
    }
}

impl Serialize for StudyCondition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StudyCondition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One rendered stimulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusEntry {
    /// File name inside the stimulus directory; reveals nothing.
    pub file: String,
    pub image_id: String,
    pub condition: StudyCondition,
    pub true_class: String,
}

/// A category example shown to subjects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleEntry {
    pub class: String,
    pub file: String,
}

pub const STIMULUS_MANIFEST: &str = "manifest.jsonl";
pub const EXAMPLE_MANIFEST: &str = "examples.jsonl";

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::Data(e.to_string()))?;
        buf.write_all(b"\n").expect("writing to a Vec");
    }
    crate::formats::write_bytes(path, &buf)
}

/// Reads newline-delimited JSON; blank lines are skipped.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::malformed(path, format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
