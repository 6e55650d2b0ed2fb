use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Baseline,
    Proposed,
}

impl System {
    pub fn as_str(self) -> &'static str {
        match self {
            System::Baseline => "baseline",
            System::Proposed => "proposed",
        }
    }

    /// Row label in the results table.
    pub fn display_name(self) -> &'static str {
        match self {
            System::Baseline => "WaveGAN",
            System::Proposed => "Proposed Approach",
        }
    }
}

impl std::fmt::Display for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for System {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "baseline" => Ok(System::Baseline),
            "proposed" => Ok(System::Proposed),
            _ => Err(EvalError::Param(format!("unknown system `{s}`"))),
        }
    }
}

/// One 7-point human-likeness judgment, stored as a JSON line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub participant: String,
    pub sample: String,
    pub system: System,
    pub score: u8,
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(1..=7).contains(&self.score) {
            return Err(EvalError::Score(self.score as i64));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Deserialize)]
struct RawRecord {
    participant: String,
    sample: String,
    system: System,
    score: i64,
    ts: u64,
}

/// Parses and range-checks one JSON line; `line` is 1-based for messages.
pub fn parse_rating_line(text: &str, line: usize) -> Result<RatingRecord, EvalError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| EvalError::Parse {
        line,
        detail: e.to_string(),
    })?;
    if !(1..=7).contains(&raw.score) {
        return Err(EvalError::Parse {
            line,
            detail: EvalError::Score(raw.score).to_string(),
        });
    }
    Ok(RatingRecord {
        participant: raw.participant,
        sample: raw.sample,
        system: raw.system,
        score: raw.score as u8,
        ts: raw.ts,
    })
}

/// Valid records plus every rejected line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedRatings {
    pub records: Vec<RatingRecord>,
    pub skipped: Vec<EvalError>,
}

/// Reads a JSON-lines ratings file. Blank lines are ignored; malformed
/// ones are collected in `skipped` and reading continues.
pub fn parse_ratings(text: &str) -> ParsedRatings {
    let mut out = ParsedRatings::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_rating_line(line, i + 1) {
            Ok(r) => out.records.push(r),
            Err(e) => out.skipped.push(e),
        }
    }
    out
}
