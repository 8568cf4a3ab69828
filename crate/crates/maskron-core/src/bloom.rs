//! Bloom filter sized for a target false-positive rate, with a stable
//! on-disk format for cross-run reuse.
//!
//! Sizing follows the standard formulas: `m = ceil(-n ln p / (ln 2)^2)`
//! bits and `k = max(1, round((m / n) ln 2))` hash functions. The k probe
//! positions are derived from two base hashes by double hashing,
//! `index_i = (h1 + i * h2) mod m`.
//!
//! The base hash is fixed and part of the file format contract: seeded
//! 64-bit FNV-1a followed by the splitmix64 finalizer, with `h2` derived
//! from a constant-offset seed and forced odd. Changing it would silently
//! invalidate every persisted filter.
//!
//! File format `BLM1`: the 4 magic bytes `BLM` + version `1`, then four
//! little-endian u64 fields (m, k, n_inserted, hash_seed), then the bit
//! array packed LSB-first into `ceil(m / 8)` bytes.

use std::io::{self, BufRead};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const SEED_GAP: u64 = 0x9e37_79b9_7f4a_7c15;
const MAGIC: &[u8; 3] = b"BLM";
const VERSION: u8 = b'1';
const HEADER_LEN: usize = 4 + 4 * 8;

pub const MIN_BITS: u64 = 8;
pub const MAX_HASHES: u64 = 32;

fn hash64(data: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for &b in data {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer for diffusion of the high bits
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Probabilistic set membership: a negative answer is definite, a positive
/// answer may be a false positive at roughly the configured rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    m: u64,
    k: u64,
    n_inserted: u64,
    hash_seed: u64,
}

impl BloomFilter {
    /// Sizes an empty filter for `n_expected` items at `target_fpr`.
    pub fn new(n_expected: u64, target_fpr: f64) -> Result<Self, BloomError> {
        Self::with_seed(n_expected, target_fpr, 0)
    }

    pub fn with_seed(n_expected: u64, target_fpr: f64, hash_seed: u64) -> Result<Self, BloomError> {
        if n_expected == 0 {
            return Err(BloomError::BadParameter("n_expected must be >= 1".into()));
        }
        if !(target_fpr > 0.0 && target_fpr < 1.0) {
            return Err(BloomError::BadParameter(format!(
                "target_fpr must be in the open interval (0, 1), got {target_fpr}"
            )));
        }
        let ln2 = std::f64::consts::LN_2;
        let m = (-(n_expected as f64) * target_fpr.ln() / (ln2 * ln2)).ceil() as u64;
        let m = m.max(MIN_BITS);
        let k = ((m as f64 / n_expected as f64) * ln2).round() as u64;
        let k = k.clamp(1, MAX_HASHES);
        Ok(BloomFilter {
            bits: vec![0u8; m.div_ceil(8) as usize],
            m,
            k,
            n_inserted: 0,
            hash_seed,
        })
    }

    pub fn num_bits(&self) -> u64 {
        self.m
    }

    pub fn num_hashes(&self) -> u64 {
        self.k
    }

    pub fn n_inserted(&self) -> u64 {
        self.n_inserted
    }

    /// The analytic false-positive rate at the current fill level,
    /// `(1 - e^(-k n / m))^k`.
    pub fn analytic_fpr(&self) -> f64 {
        let exponent = -(self.k as f64) * (self.n_inserted as f64) / (self.m as f64);
        (1.0 - exponent.exp()).powf(self.k as f64)
    }

    fn probe_indexes(&self, item: &[u8]) -> impl Iterator<Item = usize> + '_ {
        let h1 = hash64(item, self.hash_seed);
        let h2 = hash64(item, self.hash_seed.wrapping_add(SEED_GAP)) | 1;
        let m = self.m;
        (0..self.k).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    /// Sets the k probe bits for `item`. Idempotent; inserting past the
    /// sized capacity still succeeds, the false-positive rate just degrades.
    pub fn insert(&mut self, item: &[u8]) {
        let indexes: Vec<usize> = self.probe_indexes(item).collect();
        for idx in indexes {
            self.bits[idx / 8] |= 1 << (idx % 8);
        }
        self.n_inserted += 1;
    }

    /// `false` means definitely not inserted; `true` means possibly inserted.
    pub fn query(&self, item: &[u8]) -> bool {
        self.probe_indexes(item)
            .all(|idx| self.bits[idx / 8] & (1 << (idx % 8)) != 0)
    }

    /// Builds a filter from a line-oriented dictionary: one entry per
    /// non-empty line, normalized per `normalization`, sized for the line
    /// count at `target_fpr`.
    pub fn load_dictionary(
        source: impl BufRead,
        normalization: Normalization,
        target_fpr: f64,
    ) -> Result<Self, BloomError> {
        let mut entries = Vec::new();
        for line in source.lines() {
            let line = line?;
            let entry = line.trim();
            if entry.is_empty() {
                continue;
            }
            entries.push(normalization.apply(entry));
        }
        if entries.is_empty() {
            return Err(BloomError::EmptyDictionary);
        }
        let mut filter = BloomFilter::new(entries.len() as u64, target_fpr)?;
        for entry in &entries {
            filter.insert(entry.as_bytes());
        }
        Ok(filter)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.bits.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.k.to_le_bytes());
        out.extend_from_slice(&self.n_inserted.to_le_bytes());
        out.extend_from_slice(&self.hash_seed.to_le_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, BloomError> {
        if bytes.len() < HEADER_LEN {
            return Err(BloomError::CorruptFormat(format!(
                "truncated header: {} bytes, need {HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[..3] != MAGIC {
            return Err(BloomError::CorruptFormat("bad magic, expected \"BLM\"".into()));
        }
        if bytes[3] != VERSION {
            return Err(BloomError::CorruptFormat(format!(
                "unsupported version byte {:?}",
                bytes[3] as char
            )));
        }
        let word = |i: usize| {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&bytes[4 + i * 8..4 + (i + 1) * 8]);
            u64::from_le_bytes(buf)
        };
        let (m, k, n_inserted, hash_seed) = (word(0), word(1), word(2), word(3));
        if m < MIN_BITS || k == 0 || k > MAX_HASHES {
            return Err(BloomError::CorruptFormat(format!(
                "implausible parameters m={m} k={k}"
            )));
        }
        let expected = m.div_ceil(8) as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(BloomError::CorruptFormat(format!(
                "bit array length {} does not match m={m} (expected {expected} bytes)",
                body.len()
            )));
        }
        Ok(BloomFilter {
            bits: body.to_vec(),
            m,
            k,
            n_inserted,
            hash_seed,
        })
    }
}

/// Dictionary entry / token normalization applied before insert and query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    Lowercase,
    None,
}

impl Normalization {
    pub fn apply(&self, s: &str) -> String {
        match self {
            Normalization::Lowercase => s.to_lowercase(),
            Normalization::None => s.to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BloomError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("dictionary has no entries")]
    EmptyDictionary,
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt filter file: {0}")]
    CorruptFormat(String),
}
