//! Data patterns written across the whole array.
//!
//! Addresses are laid out as rows of [`ROW_WORDS`] words; striped and
//! checkerboard patterns alternate the base word with its complement.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::Word;
use crate::error::{Error, Result};

/// Words per logical array row.
pub const ROW_WORDS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Pattern {
    Solid(Word),
    RowStriped(Word),
    ColStriped(Word),
    Checkerboard(Word),
    Random(u64),
}

impl Pattern {
    pub const SOLID_ZEROS: Pattern = Pattern::Solid(0x0000);
    pub const SOLID_ONES: Pattern = Pattern::Solid(0xFFFF);

    /// Word written at `addr`. Random patterns are only defined through
    /// [`Pattern::materialize`].
    fn word_at(&self, addr: usize) -> Word {
        let (row, col) = (addr / ROW_WORDS, addr % ROW_WORDS);
        let pick = |base: Word, flip: bool| if flip { !base } else { base };
        match *self {
            Pattern::Solid(w) => w,
            Pattern::RowStriped(w) => pick(w, row % 2 == 1),
            Pattern::ColStriped(w) => pick(w, col % 2 == 1),
            Pattern::Checkerboard(w) => pick(w, (row + col) % 2 == 1),
            Pattern::Random(_) => unreachable!("random patterns are generated in bulk"),
        }
    }

    /// Intended contents of a `capacity`-word array.
    pub fn materialize(&self, capacity: usize) -> Vec<Word> {
        match *self {
            Pattern::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..capacity).map(|_| rng.next_u32() as Word).collect()
            }
            _ => (0..capacity).map(|a| self.word_at(a)).collect(),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Solid(w) => write!(f, "solid:{w:04X}"),
            Pattern::RowStriped(w) => write!(f, "row-striped:{w:04X}"),
            Pattern::ColStriped(w) => write!(f, "col-striped:{w:04X}"),
            Pattern::Checkerboard(w) => write!(f, "checkerboard:{w:04X}"),
            Pattern::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("pattern '{s}' is not of the form kind:value")))?;
        let word = || {
            let hex = arg.trim_start_matches("0x").trim_start_matches("0X");
            if hex.is_empty() || hex.len() > 4 {
                return Err(Error::Parse(format!(
                    "pattern word '{arg}' is not 1-4 hex digits"
                )));
            }
            Word::from_str_radix(hex, 16)
                .map_err(|e| Error::Parse(format!("pattern word '{arg}': {e}")))
        };
        match kind.to_ascii_lowercase().as_str() {
            "solid" => Ok(Pattern::Solid(word()?)),
            "row-striped" => Ok(Pattern::RowStriped(word()?)),
            "col-striped" => Ok(Pattern::ColStriped(word()?)),
            "checkerboard" => Ok(Pattern::Checkerboard(word()?)),
            "random" => arg
                .parse()
                .map(Pattern::Random)
                .map_err(|e| Error::Parse(format!("random seed '{arg}': {e}"))),
            other => Err(Error::Parse(format!("unknown pattern kind '{other}'"))),
        }
    }
}

impl TryFrom<String> for Pattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Pattern> for String {
    fn from(p: Pattern) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in [
            "solid:0000",
            "row-striped:FFFF",
            "col-striped:5555",
            "checkerboard:AAAA",
            "random:7",
        ] {
            assert_eq!(s.parse::<Pattern>().unwrap().to_string(), s);
        }
        assert_eq!(
            "solid:ff".parse::<Pattern>().unwrap(),
            Pattern::Solid(0x00FF)
        );
        assert!("solid".parse::<Pattern>().is_err());
        assert!("solid:12345".parse::<Pattern>().is_err());
        assert!("zigzag:0000".parse::<Pattern>().is_err());
        assert!("random:x".parse::<Pattern>().is_err());
    }

    #[test]
    fn layouts_alternate_with_complement() {
        let n = 2 * ROW_WORDS;
        let row = Pattern::RowStriped(0xFFFF).materialize(n);
        assert_eq!(row[0], 0xFFFF);
        assert_eq!(row[ROW_WORDS - 1], 0xFFFF);
        assert_eq!(row[ROW_WORDS], 0x0000);
        let col = Pattern::ColStriped(0x5555).materialize(n);
        assert_eq!(&col[..3], &[0x5555, 0xAAAA, 0x5555]);
        let cb = Pattern::Checkerboard(0x0000).materialize(n);
        assert_eq!(cb[0], 0x0000);
        assert_eq!(cb[1], 0xFFFF);
        assert_eq!(cb[ROW_WORDS], 0xFFFF);
        assert_eq!(cb[ROW_WORDS + 1], 0x0000);
    }

    #[test]
    fn random_is_seeded() {
        let a = Pattern::Random(3).materialize(1000);
        assert_eq!(a, Pattern::Random(3).materialize(1000));
        assert_ne!(a, Pattern::Random(4).materialize(1000));
    }
}
