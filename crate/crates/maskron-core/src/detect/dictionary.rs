//! Dictionary-backed detector for enumerable PII (person names, customer
//! ids) using a Bloom filter as the membership oracle.
//!
//! Matching is token-exact after normalization: candidate tokens are pulled
//! from the text by a configurable pattern, normalized the same way the
//! dictionary was, and looked up. A hit is a detection at the dictionary's
//! configured confidence; misspellings and absent names are misses by
//! design. Multi-word names only match token by token.

use regex::Regex;

use crate::bloom::{BloomFilter, Normalization};
use crate::detect::{DetectError, Detector, ScanOutput};
use crate::model::{Detection, PiiType, Span};

/// Default candidate-token pattern: runs of letters, length >= 2.
pub const DEFAULT_TOKEN_PATTERN: &str = r"\p{L}{2,}";

#[derive(Debug, Clone)]
pub struct DictionaryConfig {
    /// Name used in detection provenance: `bloom:<name>`.
    pub name: String,
    pub pii_type: PiiType,
    pub normalization: Normalization,
    /// Regex for candidate tokens.
    pub token_pattern: String,
    /// Confidence assigned to every hit, in [0, 1].
    pub confidence: f64,
}

impl DictionaryConfig {
    pub fn new(name: impl Into<String>, pii_type: PiiType, confidence: f64) -> Self {
        DictionaryConfig {
            name: name.into(),
            pii_type,
            normalization: Normalization::Lowercase,
            token_pattern: DEFAULT_TOKEN_PATTERN.to_string(),
            confidence,
        }
    }
}

fn scan_with(text: &str, filter: &BloomFilter, cfg: &DictionaryConfig, token_re: &Regex) -> Vec<Detection> {
    let mut out = Vec::new();
    for m in token_re.find_iter(text) {
        let normalized = cfg.normalization.apply(m.as_str());
        if !filter.query(normalized.as_bytes()) {
            continue;
        }
        let span = Span::new(m.start(), m.end()).expect("token matches are non-empty");
        let detection = Detection::new(
            text,
            span,
            cfg.pii_type.clone(),
            cfg.confidence,
            format!("bloom:{}", cfg.name),
        )
        .expect("token match offsets are valid char boundaries");
        out.push(detection);
    }
    out
}

/// Tokenizes `text`, normalizes each candidate, and reports filter hits.
/// The filter must have been built with the same normalization as `cfg`.
pub fn scan_dictionary(text: &str, filter: &BloomFilter, cfg: &DictionaryConfig) -> Vec<Detection> {
    let token_re = Regex::new(&cfg.token_pattern).expect("token pattern validated at build time");
    scan_with(text, filter, cfg, &token_re)
}

pub struct DictionaryDetector {
    filter: BloomFilter,
    cfg: DictionaryConfig,
    token_re: Regex,
}

impl DictionaryDetector {
    /// Validates the token pattern and confidence up front so scanning
    /// cannot fail later.
    pub fn new(filter: BloomFilter, cfg: DictionaryConfig) -> Result<Self, DictionaryError> {
        let token_re = Regex::new(&cfg.token_pattern)
            .map_err(|e| DictionaryError::BadTokenPattern(e.to_string()))?;
        if !(0.0..=1.0).contains(&cfg.confidence) {
            return Err(DictionaryError::BadConfidence(cfg.confidence));
        }
        Ok(DictionaryDetector { filter, cfg, token_re })
    }

    pub fn filter(&self) -> &BloomFilter {
        &self.filter
    }
}

impl Detector for DictionaryDetector {
    fn id(&self) -> String {
        format!("bloom:{}", self.cfg.name)
    }

    fn scan(&self, text: &str) -> Result<ScanOutput, DetectError> {
        Ok(ScanOutput::from_detections(scan_with(
            text,
            &self.filter,
            &self.cfg,
            &self.token_re,
        )))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DictionaryError {
    #[error("token pattern does not compile: {0}")]
    BadTokenPattern(String),
    #[error("confidence {0} is outside [0, 1]")]
    BadConfidence(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloom::BloomFilter;
    use std::io::Cursor;

    fn names_filter() -> BloomFilter {
        BloomFilter::load_dictionary(Cursor::new("alice\nbob\n"), Normalization::Lowercase, 0.001)
            .unwrap()
    }

    fn cfg() -> DictionaryConfig {
        DictionaryConfig::new("names", PiiType::PersonName, 0.60)
    }

    #[test]
    fn member_token_is_detected() {
        let hits = scan_dictionary("contact Alice about the invoice", &names_filter(), &cfg());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].matched_text, "Alice");
        assert_eq!(hits[0].pii_type, PiiType::PersonName);
        assert_eq!(hits[0].detector_id, "bloom:names");
        assert_eq!(hits[0].confidence, 0.60);
    }

    #[test]
    fn near_miss_never_errors() {
        // "Alicia" is not in the dictionary; a rare false positive from the
        // filter would be acceptable, an error never is.
        let hits = scan_dictionary("contact Alicia", &names_filter(), &cfg());
        assert!(hits.len() <= 1);
    }

    #[test]
    fn no_alphabetic_tokens_no_detections() {
        let hits = scan_dictionary("12345 --- 678 !!", &names_filter(), &cfg());
        assert!(hits.is_empty());
    }

    #[test]
    fn detector_rejects_bad_token_pattern() {
        let mut c = cfg();
        c.token_pattern = "(".into();
        assert!(matches!(
            DictionaryDetector::new(names_filter(), c),
            Err(DictionaryError::BadTokenPattern(_))
        ));
    }
}
