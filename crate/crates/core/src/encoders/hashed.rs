use crate::embedding::Embedding;
use crate::encoders::TextEncoder;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_continue(FNV_OFFSET, bytes)
}

fn fnv1a64_continue(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Deterministic bag-of-character-trigrams text encoder.
///
/// Each trigram is hashed with FNV-1a 64 (seed bytes first, little-endian,
/// then the trigram's UTF-8 bytes). The hash picks bucket `hash % d` and
/// bit 63 picks the sign. Texts shorter than three characters count as a
/// single gram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedTextEncoder {
    dim: usize,
    seed: u64,
}

impl HashedTextEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 8 {
            return Err(Error::invalid(format!("hashed encoder needs d >= 8, got {dim}")));
        }
        Ok(Self { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl TextEncoder for HashedTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::Empty("cannot encode empty text"));
        }
        let seeded = fnv1a64_continue(FNV_OFFSET, &self.seed.to_le_bytes());
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let grams: Vec<&str> = if chars.len() < 3 {
            vec![text]
        } else {
            (0..=chars.len() - 3)
                .map(|i| {
                    let start = chars[i].0;
                    let end = chars.get(i + 3).map_or(text.len(), |c| c.0);
                    &text[start..end]
                })
                .collect()
        };
        let mut values = vec![0.0; self.dim];
        for gram in grams {
            let h = fnv1a64_continue(seeded, gram.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            values[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        Embedding::new(values)?
            .normalize()
            .map_err(|_| Error::ZeroNorm("trigram counts cancelled out"))
    }
}
