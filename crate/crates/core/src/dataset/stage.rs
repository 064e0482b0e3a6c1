use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of scored sleep stages.
pub const NUM_STAGES: usize = 5;

/// AASM sleep stage, coded 0..4 in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageLabel {
    W,
    N1,
    N2,
    N3,
    #[serde(rename = "REM")]
    Rem,
}

impl StageLabel {
    pub const ALL: [StageLabel; NUM_STAGES] = [
        StageLabel::W,
        StageLabel::N1,
        StageLabel::N2,
        StageLabel::N3,
        StageLabel::Rem,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or(Error::InvalidLabel(code))
    }

    pub fn token(self) -> &'static str {
        match self {
            StageLabel::W => "W",
            StageLabel::N1 => "N1",
            StageLabel::N2 => "N2",
            StageLabel::N3 => "N3",
            StageLabel::Rem => "REM",
        }
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for StageLabel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Self::ALL.into_iter().find(|l| l.token() == s).ok_or(())
    }
}

/// Parses one stage token per line; line numbers in errors are 1-based.
pub fn parse_hypnogram(text: &str) -> Result<Vec<StageLabel>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.trim()
                .parse()
                .map_err(|_| Error::InvalidStageToken(i + 1))
        })
        .collect()
}

pub fn load_hypnogram(path: &Path) -> Result<Vec<StageLabel>> {
    parse_hypnogram(&std::fs::read_to_string(path)?)
}

pub fn format_hypnogram(labels: &[StageLabel]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn write_hypnogram(path: &Path, labels: &[StageLabel]) -> Result<()> {
    std::fs::write(path, format_hypnogram(labels))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tokens() {
        let codes: Vec<usize> = parse_hypnogram("W\nN1\nN2\nN3\nREM")
            .unwrap()
            .into_iter()
            .map(StageLabel::code)
            .collect();
        assert_eq!(codes, vec![0, 1, 2, 3, 4]);
        assert_eq!(
            parse_hypnogram("N2\nN2\n").unwrap(),
            vec![StageLabel::N2, StageLabel::N2]
        );
        assert!(matches!(
            parse_hypnogram("W\nN2\nS1\n"),
            Err(Error::InvalidStageToken(3))
        ));
    }

    #[test]
    fn codes_round_trip() {
        for l in StageLabel::ALL {
            assert_eq!(StageLabel::from_code(l.code()).unwrap(), l);
        }
        assert!(StageLabel::from_code(5).is_err());
        let text = format_hypnogram(&StageLabel::ALL);
        assert_eq!(parse_hypnogram(&text).unwrap(), StageLabel::ALL.to_vec());
    }
}
