use serde::{Deserialize, Serialize};

use super::Section;

/// A token with its character range in the text it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

/// Splits text into word and punctuation tokens: maximal alphanumeric runs
/// (with inner apostrophes) and single other non-space characters. Offsets
/// are character positions.
pub fn word_offsets(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < chars.len()
                && (chars[i].is_alphanumeric()
                    || (chars[i] == '\'' && i + 1 < chars.len() && chars[i + 1].is_alphanumeric()))
            {
                i += 1;
            }
            out.push((start, i));
        } else {
            out.push((i, i + 1));
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Number of hash buckets for ordinary words.
    pub buckets: u32,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { buckets: 16_384 }
    }
}

/// Word-level tokenizer that maps lowercased words into a fixed number of
/// hash buckets. Markers, the summary token, padding and the generation
/// delimiters have reserved ids, so they are atomic vocabulary items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashTokenizer {
    config: TokenizerConfig,
}

impl HashTokenizer {
    pub const PAD: u32 = 0;
    pub const SUMMARY: u32 = 1;
    pub const BOS: u32 = 2;
    pub const EOS: u32 = 3;
    const MARKER_BASE: u32 = 4;
    const WORD_BASE: u32 = Self::MARKER_BASE + Section::ALL.len() as u32;

    pub fn new(config: TokenizerConfig) -> Self {
        HashTokenizer { config }
    }

    pub fn config(&self) -> TokenizerConfig {
        self.config
    }

    pub fn vocab_size(&self) -> usize {
        (Self::WORD_BASE + self.config.buckets) as usize
    }

    pub fn marker_id(&self, s: Section) -> u32 {
        Self::MARKER_BASE + s.index() as u32
    }

    /// Marker section for a reserved id.
    pub fn section_of(&self, id: u32) -> Option<Section> {
        id.checked_sub(Self::MARKER_BASE)
            .and_then(|i| Section::ALL.get(i as usize).copied())
            .filter(|_| id < Self::WORD_BASE)
    }

    pub fn word_id(&self, word: &str) -> u32 {
        // FNV-1a over the lowercased word; stable across platforms and runs.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in word.to_lowercase().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self::WORD_BASE + (h % self.config.buckets as u64) as u32
    }

    pub fn pieces(&self, text: &str) -> Vec<Piece> {
        let chars: Vec<char> = text.chars().collect();
        word_offsets(text)
            .into_iter()
            .map(|(start, end)| {
                let w: String = chars[start..end].iter().collect();
                Piece {
                    id: self.word_id(&w),
                    start,
                    end,
                }
            })
            .collect()
    }
}

impl Default for HashTokenizer {
    fn default() -> Self {
        HashTokenizer::new(TokenizerConfig::default())
    }
}
