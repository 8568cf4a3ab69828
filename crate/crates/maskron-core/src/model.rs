//! Shared data model: PII types, spans, detections, and masked output.
//!
//! Everything here is an immutable value object once constructed, safe to
//! share and send between worker threads without coordination.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The built-in PII type names. This set is closed; anything else must use
/// the `CUSTOM:` prefix.
pub const BUILTIN_PII_TYPES: &[&str] = &[
    "PHONE_NUMBER",
    "EMAIL",
    "SSN",
    "CREDIT_CARD",
    "PERSON_NAME",
    "IP_ADDRESS",
    "CUSTOMER_ID",
];

/// A category of personally identifiable information.
///
/// Rendered as an uppercase identifier (`PHONE_NUMBER`, `CUSTOM:BADGE`).
/// Unknown plain names are rejected; extensions must carry the `CUSTOM:`
/// prefix so the built-in vocabulary stays closed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PiiType {
    PhoneNumber,
    Email,
    Ssn,
    CreditCard,
    PersonName,
    IpAddress,
    CustomerId,
    /// User-defined type; holds the suffix after `CUSTOM:`.
    Custom(String),
}

impl PiiType {
    /// The canonical uppercase name, e.g. `SSN` or `CUSTOM:BADGE`.
    pub fn name(&self) -> String {
        match self {
            PiiType::PhoneNumber => "PHONE_NUMBER".to_string(),
            PiiType::Email => "EMAIL".to_string(),
            PiiType::Ssn => "SSN".to_string(),
            PiiType::CreditCard => "CREDIT_CARD".to_string(),
            PiiType::PersonName => "PERSON_NAME".to_string(),
            PiiType::IpAddress => "IP_ADDRESS".to_string(),
            PiiType::CustomerId => "CUSTOMER_ID".to_string(),
            PiiType::Custom(suffix) => format!("CUSTOM:{suffix}"),
        }
    }
}

impl fmt::Display for PiiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn is_plain_type_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

fn is_custom_suffix(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

impl FromStr for PiiType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(suffix) = s.strip_prefix("CUSTOM:") {
            if is_custom_suffix(suffix) {
                return Ok(PiiType::Custom(suffix.to_string()));
            }
            return Err(ModelError::BadTypeName(s.to_string()));
        }
        match s {
            "PHONE_NUMBER" => Ok(PiiType::PhoneNumber),
            "EMAIL" => Ok(PiiType::Email),
            "SSN" => Ok(PiiType::Ssn),
            "CREDIT_CARD" => Ok(PiiType::CreditCard),
            "PERSON_NAME" => Ok(PiiType::PersonName),
            "IP_ADDRESS" => Ok(PiiType::IpAddress),
            "CUSTOMER_ID" => Ok(PiiType::CustomerId),
            _ => Err(ModelError::BadTypeName(s.to_string())),
        }
    }
}

impl Serialize for PiiType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for PiiType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// A half-open byte range `[start, end)` into UTF-8 source text.
///
/// Offsets are bytes, not characters; producers must only emit spans that
/// fall on character boundaries of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self, ModelError> {
        if start >= end {
            return Err(ModelError::InvalidSpan { start, end });
        }
        Ok(Span { start, end })
    }

    /// Byte length; always >= 1 since `start < end` is a construction invariant.
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    /// Both endpoints fall on char boundaries of `text` and `end <= text.len()`.
    pub fn is_valid_in(&self, text: &str) -> bool {
        self.end <= text.len() && text.is_char_boundary(self.start) && text.is_char_boundary(self.end)
    }
}

/// True iff the two half-open spans share at least one byte.
///
/// Adjacent spans (`a.end == b.start`) do not overlap. Symmetric in its
/// arguments.
pub fn spans_overlap(a: Span, b: Span) -> bool {
    a.start < b.end && b.start < a.end
}

/// A located PII candidate produced by a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub span: Span,
    pub pii_type: PiiType,
    /// Detector confidence in `[0, 1]`.
    pub confidence: f64,
    /// Provenance, e.g. `regex:phone_us_v1`, `bloom:names`, `external:ner-svc`.
    pub detector_id: String,
    /// Copy of the source text sliced at `span`.
    pub matched_text: String,
}

impl Detection {
    /// Builds a detection against `text`, enforcing the slice invariant:
    /// `matched_text` is exactly `text[span]`.
    pub fn new(
        text: &str,
        span: Span,
        pii_type: PiiType,
        confidence: f64,
        detector_id: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ModelError::BadConfidence(confidence));
        }
        if !span.is_valid_in(text) {
            return Err(ModelError::SpanOutOfText {
                start: span.start,
                end: span.end,
                len: text.len(),
            });
        }
        Ok(Detection {
            span,
            pii_type,
            confidence,
            detector_id: detector_id.into(),
            matched_text: text[span.start..span.end].to_string(),
        })
    }
}

/// Which masking technique was applied; the parameter-free label used in
/// audit records and counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyKind {
    Redact,
    Pseudonymize,
    Hash,
    Encrypt,
    CustomEmail,
    Passthrough,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Redact => "REDACT",
            StrategyKind::Pseudonymize => "PSEUDONYMIZE",
            StrategyKind::Hash => "HASH",
            StrategyKind::Encrypt => "ENCRYPT",
            StrategyKind::CustomEmail => "CUSTOM_EMAIL",
            StrategyKind::Passthrough => "PASSTHROUGH",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One applied mask: where it was in the input, where it landed in the
/// output, and what was done.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub original_span: Span,
    pub new_span: Span,
    pub pii_type: PiiType,
    pub strategy: StrategyKind,
    pub detector_id: String,
}

/// Rewritten text plus the audit trail of every applied mask.
///
/// Audit entries are sorted by `original_span.start` and non-overlapping;
/// the per-type counts sum to the audit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedDocument {
    pub text: String,
    pub audit: Vec<AuditRecord>,
    pub counts: BTreeMap<PiiType, u64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid span: start {start} must be < end {end}")]
    InvalidSpan { start: usize, end: usize },
    #[error("span [{start}, {end}) is not a char-boundary range of a {len}-byte text")]
    SpanOutOfText { start: usize, end: usize, len: usize },
    #[error("confidence {0} is outside [0, 1]")]
    BadConfidence(f64),
    #[error("bad PII type name {0:?}: expected a built-in name or CUSTOM:[A-Z0-9_]+")]
    BadTypeName(String),
}
