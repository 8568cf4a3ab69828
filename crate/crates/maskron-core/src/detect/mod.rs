//! Detectors: each inspects text and reports PII candidates, never
//! modifying the input. Cross-detector conflicts are settled later by the
//! resolver.

pub mod dictionary;
pub mod external;
pub mod fixture;
pub mod rules;

use std::collections::BTreeMap;

use crate::model::Detection;

/// Detections plus any non-fatal warnings (counted by kind).
#[derive(Debug, Default)]
pub struct ScanOutput {
    pub detections: Vec<Detection>,
    pub warnings: BTreeMap<String, u64>,
}

impl ScanOutput {
    pub fn from_detections(detections: Vec<Detection>) -> Self {
        ScanOutput { detections, warnings: BTreeMap::new() }
    }
}

/// A read-only PII detector. Implementations must be safe to call from
/// many worker threads concurrently.
pub trait Detector: Send + Sync {
    /// Stable identifier prefix, e.g. `regex`, `bloom:names`, `external:ner`.
    fn id(&self) -> String;

    fn scan(&self, text: &str) -> Result<ScanOutput, DetectError>;
}

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error(transparent)]
    External(#[from] external::ExternalError),
}

/// Regex detector wrapper around a compiled [`rules::RuleSet`].
pub struct RegexDetector {
    rules: rules::RuleSet,
}

impl RegexDetector {
    pub fn new(rules: rules::RuleSet) -> Self {
        RegexDetector { rules }
    }

    pub fn with_defaults() -> Self {
        RegexDetector { rules: rules::RuleSet::defaults() }
    }

    pub fn rules(&self) -> &rules::RuleSet {
        &self.rules
    }
}

impl Detector for RegexDetector {
    fn id(&self) -> String {
        "regex".to_string()
    }

    fn scan(&self, text: &str) -> Result<ScanOutput, DetectError> {
        Ok(ScanOutput::from_detections(rules::scan_regex(text, &self.rules)))
    }
}
