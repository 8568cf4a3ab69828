//! Tiered regular-expression detector.
//!
//! Each rule carries a pattern, a PII type, and a base confidence tier; a
//! rule may also name a checksum validator (currently Luhn) that promotes a
//! match to a higher confidence tier when it passes.
//!
//! Patterns are written for running text, so instead of `^...$` anchors a
//! match must not be preceded or followed by a word character (letter,
//! digit, or `_`). This check happens after the regex engine reports a
//! match, which keeps the patterns themselves simple and lookaround-free.

use regex::Regex;
use serde::Deserialize;

use crate::model::{Detection, PiiType, Span};

/// Checksum validators a rule may name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Validator {
    #[default]
    None,
    Luhn,
}

/// An uncompiled rule definition, as embedded in the defaults or supplied
/// through the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegexRule {
    pub id: String,
    pub pii_type: PiiType,
    pub pattern: String,
    pub base_confidence: f64,
    #[serde(default)]
    pub validator: Validator,
    pub validated_confidence: Option<f64>,
}

#[derive(Debug)]
struct CompiledRule {
    id: String,
    pii_type: PiiType,
    regex: Regex,
    base_confidence: f64,
    validator: Validator,
    validated_confidence: Option<f64>,
}

/// An ordered, compiled set of rules with unique ids. Immutable after
/// compilation and safe to share across scanning workers.
#[derive(Debug)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
}

/// The default rule tiers. The bare 16-digit credit-card rule is the
/// low-confidence tier; a passing Luhn checksum promotes it. All values are
/// overridable through the config file.
pub fn default_rules() -> Vec<RegexRule> {
    let rule = |id: &str, pii_type: PiiType, pattern: &str, base: f64| RegexRule {
        id: id.to_string(),
        pii_type,
        pattern: pattern.to_string(),
        base_confidence: base,
        validator: Validator::None,
        validated_confidence: None,
    };
    vec![
        RegexRule {
            id: "cc_16digit_v1".to_string(),
            pii_type: PiiType::CreditCard,
            pattern: r"[0-9]{16}".to_string(),
            base_confidence: 0.30,
            validator: Validator::Luhn,
            validated_confidence: Some(0.85),
        },
        rule(
            "phone_us_v1",
            PiiType::PhoneNumber,
            r"\([0-9]{3}\) [0-9]{3}-[0-9]{4}",
            0.90,
        ),
        // space-separated variant of the same format; shipped as its own rule
        rule(
            "phone_us_space_v1",
            PiiType::PhoneNumber,
            r"\([0-9]{3}\) [0-9]{3} [0-9]{4}",
            0.90,
        ),
        rule(
            "phone_us_dashed_v1",
            PiiType::PhoneNumber,
            r"[0-9]{3}-[0-9]{3}-[0-9]{4}",
            0.90,
        ),
        rule("ssn_v1", PiiType::Ssn, r"[0-9]{3}-[0-9]{2}-[0-9]{4}", 0.90),
        rule(
            "email_v1",
            PiiType::Email,
            r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}",
            0.95,
        ),
        rule(
            "ipv4_v1",
            PiiType::IpAddress,
            r"(?:25[0-5]|2[0-4][0-9]|1[0-9]{2}|[1-9]?[0-9])(?:\.(?:25[0-5]|2[0-4][0-9]|1[0-9]{2}|[1-9]?[0-9])){3}",
            0.90,
        ),
    ]
}

/// Compiles rule sources into a [`RuleSet`], rejecting bad patterns,
/// duplicate ids, and malformed confidence tiers.
pub fn compile_ruleset(rules: &[RegexRule]) -> Result<RuleSet, RuleError> {
    let mut compiled = Vec::with_capacity(rules.len());
    let mut seen = std::collections::HashSet::new();
    for rule in rules {
        if !seen.insert(rule.id.clone()) {
            return Err(RuleError::DuplicateRuleId(rule.id.clone()));
        }
        if !(0.0..=1.0).contains(&rule.base_confidence) {
            return Err(RuleError::BadConfidence {
                id: rule.id.clone(),
                value: rule.base_confidence,
            });
        }
        if let Some(vc) = rule.validated_confidence {
            if !(0.0..=1.0).contains(&vc) || vc <= rule.base_confidence {
                return Err(RuleError::BadConfidence { id: rule.id.clone(), value: vc });
            }
        }
        let regex = Regex::new(&rule.pattern).map_err(|e| RuleError::BadPattern {
            id: rule.id.clone(),
            reason: e.to_string(),
        })?;
        compiled.push(CompiledRule {
            id: rule.id.clone(),
            pii_type: rule.pii_type.clone(),
            regex,
            base_confidence: rule.base_confidence,
            validator: rule.validator,
            validated_confidence: rule.validated_confidence,
        });
    }
    Ok(RuleSet { rules: compiled })
}

impl RuleSet {
    pub fn defaults() -> Self {
        compile_ruleset(&default_rules()).expect("built-in default rules compile")
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule_ids(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.id.as_str())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// The match must not butt up against a word character on either side.
fn delimited(text: &str, start: usize, end: usize) -> bool {
    let before_ok = text[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
    let after_ok = text[end..].chars().next().is_none_or(|c| !is_word_char(c));
    before_ok && after_ok
}

/// Scans `text` with every rule. Within one rule, matches are leftmost and
/// non-overlapping; matches from different rules may overlap and are left
/// for the resolver to arbitrate.
///
/// Pure function of its inputs: identical `(text, rules)` always produce
/// the identical detection list.
pub fn scan_regex(text: &str, rules: &RuleSet) -> Vec<Detection> {
    let mut out = Vec::new();
    for rule in &rules.rules {
        for m in rule.regex.find_iter(text) {
            if !delimited(text, m.start(), m.end()) {
                continue;
            }
            let confidence = match rule.validator {
                Validator::None => rule.base_confidence,
                Validator::Luhn => match luhn_check(m.as_str()) {
                    Ok(true) => rule.validated_confidence.unwrap_or(rule.base_confidence),
                    _ => rule.base_confidence,
                },
            };
            let span = Span::new(m.start(), m.end()).expect("regex matches are non-empty");
            let detection = Detection::new(
                text,
                span,
                rule.pii_type.clone(),
                confidence,
                format!("regex:{}", rule.id),
            )
            .expect("regex match offsets are valid char boundaries");
            out.push(detection);
        }
    }
    out
}

/// Luhn checksum over a string of ASCII digits (credit-card style inputs,
/// 12-19 digits). Returns whether the check digit is consistent.
pub fn luhn_check(digits: &str) -> Result<bool, LuhnError> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LuhnError::NotDigits);
    }
    let mut sum = 0u32;
    for (i, b) in digits.bytes().rev().enumerate() {
        let mut d = u32::from(b - b'0');
        if i % 2 == 1 {
            d *= 2;
            if d > 9 {
                d -= 9;
            }
        }
        sum += d;
    }
    Ok(sum % 10 == 0)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RuleError {
    #[error("rule {id}: pattern does not compile: {reason}")]
    BadPattern { id: String, reason: String },
    #[error("duplicate rule id {0:?}")]
    DuplicateRuleId(String),
    #[error("rule {id}: confidence {value} invalid (must be in [0,1]; validated tier must exceed base)")]
    BadConfidence { id: String, value: f64 },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LuhnError {
    #[error("input must be a non-empty string of ASCII digits")]
    NotDigits,
}
