use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::StoneError;

const NOTE_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    /// Column of the 12x2 key/mode matrix: 0 for major, 1 for minor.
    pub fn index(self) -> usize {
        match self {
            Mode::Major => 0,
            Mode::Minor => 1,
        }
    }

    pub fn from_index(index: usize) -> Mode {
        if index == 0 {
            Mode::Major
        } else {
            Mode::Minor
        }
    }

    pub fn other(self) -> Mode {
        match self {
            Mode::Major => Mode::Minor,
            Mode::Minor => Mode::Major,
        }
    }
}

/// A musical key: tonic pitch class (0 = C) and mode.
///
/// The key signature chroma of a minor key is the tonic of its relative
/// major, so `C:maj` and `A:min` both map to signature 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyLabel {
    tonic: u8,
    mode: Mode,
}

impl KeyLabel {
    pub fn new(tonic: usize, mode: Mode) -> Self {
        KeyLabel {
            tonic: (tonic % 12) as u8,
            mode,
        }
    }

    /// Key with the given signature chroma and mode.
    pub fn from_signature(signature: usize, mode: Mode) -> Self {
        match mode {
            Mode::Major => KeyLabel::new(signature, mode),
            Mode::Minor => KeyLabel::new(signature + 9, mode),
        }
    }

    /// Key from its index in `0..24` (`mode * 12 + tonic`).
    pub fn from_index(index: usize) -> Self {
        KeyLabel::new(index % 12, Mode::from_index(index / 12))
    }

    pub fn index(&self) -> usize {
        self.mode.index() * 12 + self.tonic as usize
    }

    pub fn tonic(&self) -> usize {
        self.tonic as usize
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn key_signature(&self) -> usize {
        match self.mode {
            Mode::Major => self.tonic as usize,
            Mode::Minor => (self.tonic as usize + 3) % 12,
        }
    }

    /// The relative key sharing this key's signature.
    pub fn relative(&self) -> KeyLabel {
        KeyLabel::from_signature(self.key_signature(), self.mode.other())
    }

    pub fn parallel(&self) -> KeyLabel {
        KeyLabel::new(self.tonic as usize, self.mode.other())
    }

    pub fn transpose(&self, semitones: i64) -> KeyLabel {
        KeyLabel::new(
            (self.tonic as i64 + semitones).rem_euclid(12) as usize,
            self.mode,
        )
    }

    pub fn all() -> impl Iterator<Item = KeyLabel> {
        (0..24).map(KeyLabel::from_index)
    }
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Major => "maj",
            Mode::Minor => "min",
        };
        write!(f, "{}:{}", NOTE_NAMES[self.tonic as usize], mode)
    }
}

impl FromStr for KeyLabel {
    type Err = StoneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StoneError::InvalidKey(s.to_string());
        let (note, mode) = s.trim().split_once(':').ok_or_else(bad)?;
        let mut chars = note.chars();
        let natural = match chars.next().ok_or_else(bad)? {
            'C' => 0,
            'D' => 2,
            'E' => 4,
            'F' => 5,
            'G' => 7,
            'A' => 9,
            'B' => 11,
            _ => return Err(bad()),
        };
        let accidental: i64 = match chars.as_str() {
            "" => 0,
            "#" => 1,
            "b" => -1,
            _ => return Err(bad()),
        };
        let mode = match mode {
            "maj" | "major" => Mode::Major,
            "min" | "minor" => Mode::Minor,
            _ => return Err(bad()),
        };
        Ok(KeyLabel::new(
            (natural + accidental).rem_euclid(12) as usize,
            mode,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_manifest_examples() {
        let c: KeyLabel = "C:maj".parse().unwrap();
        assert_eq!(
            (c.tonic(), c.mode(), c.key_signature()),
            (0, Mode::Major, 0)
        );
        let a: KeyLabel = "A:min".parse().unwrap();
        assert_eq!(
            (a.tonic(), a.mode(), a.key_signature()),
            (9, Mode::Minor, 0)
        );
        let fs: KeyLabel = "F#:min".parse().unwrap();
        assert_eq!(fs.tonic(), 6);
        let bb: KeyLabel = "Bb:maj".parse().unwrap();
        assert_eq!(bb.tonic(), 10);
        assert!("H:maj".parse::<KeyLabel>().is_err());
        assert!("C:dorian".parse::<KeyLabel>().is_err());
        assert!("C".parse::<KeyLabel>().is_err());
    }

    #[test]
    fn string_round_trip_and_relative_involution() {
        for key in KeyLabel::all() {
            assert_eq!(key.to_string().parse::<KeyLabel>().unwrap(), key);
            assert_eq!(key.relative().relative(), key);
            assert_eq!(key.relative().key_signature(), key.key_signature());
            assert_eq!(KeyLabel::from_index(key.index()), key);
            assert_eq!(
                KeyLabel::from_signature(key.key_signature(), key.mode()),
                key
            );
        }
    }
}
