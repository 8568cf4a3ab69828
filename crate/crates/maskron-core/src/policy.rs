//! Per-type masking policy: which strategy handles each PII type, with what
//! parameters, and above what confidence threshold.
//!
//! A type absent from the table falls back to the configured default
//! strategy, which itself defaults to REDACT — unlisted types never pass
//! through silently. PASSTHROUGH must be spelled out.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::keyring::Keyring;
use crate::model::{PiiType, StrategyKind};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How the local part of an email is sized when masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthMode {
    /// Fill matches the original local-part character count.
    Match,
    /// Fixed number of fill characters regardless of input.
    Fixed(usize),
}

/// Pseudonym derivation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoMode {
    /// Fresh draw from a CSPRNG per call.
    Random,
    /// Keyed derivation: equal inputs map to equal surrogates under one key.
    Deterministic,
}

/// A fully validated strategy with its required parameters resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    Redact,
    Pseudonymize { mode: PseudoMode, key_id: Option<String> },
    Hash { salt_id: String, full_digest: bool },
    Encrypt { key_id: String },
    CustomEmail { fill_char: char, length: LengthMode },
    Passthrough,
}

impl StrategySpec {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategySpec::Redact => StrategyKind::Redact,
            StrategySpec::Pseudonymize { .. } => StrategyKind::Pseudonymize,
            StrategySpec::Hash { .. } => StrategyKind::Hash,
            StrategySpec::Encrypt { .. } => StrategyKind::Encrypt,
            StrategySpec::CustomEmail { .. } => StrategyKind::CustomEmail,
            StrategySpec::Passthrough => StrategyKind::Passthrough,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub strategy: StrategySpec,
    pub threshold_override: Option<f64>,
}

/// The per-type masking policy table.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub default_threshold: f64,
    /// Strategy applied to types without an entry. Fail-closed: REDACT
    /// unless the operator chose otherwise.
    pub default_strategy: StrategySpec,
    pub entries: BTreeMap<PiiType, PolicyEntry>,
}

impl Default for PolicyTable {
    fn default() -> Self {
        PolicyTable {
            default_threshold: DEFAULT_THRESHOLD,
            default_strategy: StrategySpec::Redact,
            entries: BTreeMap::new(),
        }
    }
}

impl PolicyTable {
    /// The confidence a detection of `t` must reach to be masked.
    pub fn effective_threshold(&self, t: &PiiType) -> f64 {
        self.entries
            .get(t)
            .and_then(|e| e.threshold_override)
            .unwrap_or(self.default_threshold)
    }

    /// The strategy for `t`, falling back to the default strategy.
    pub fn strategy_for(&self, t: &PiiType) -> &StrategySpec {
        self.entries
            .get(t)
            .map(|e| &e.strategy)
            .unwrap_or(&self.default_strategy)
    }
}

/// Raw policy section as parsed from the config file, prior to validation.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPolicy {
    pub default_threshold: Option<f64>,
    /// Name of the fallback strategy for unlisted types; parameterless
    /// strategies only (REDACT or PASSTHROUGH).
    pub default_strategy: Option<String>,
    #[serde(default)]
    pub types: BTreeMap<String, RawPolicyEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPolicyEntry {
    pub strategy: String,
    pub threshold: Option<f64>,
    pub key_id: Option<String>,
    pub salt_id: Option<String>,
    pub mode: Option<String>,
    pub fill_char: Option<char>,
    pub length: Option<String>,
    pub full_digest: Option<bool>,
}

fn check_threshold(value: f64) -> Result<f64, PolicyError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(PolicyError::BadThreshold(value));
    }
    Ok(value)
}

fn build_strategy(
    raw: &RawPolicyEntry,
    keyring: &Keyring,
) -> Result<StrategySpec, PolicyError> {
    let name = raw.strategy.to_ascii_uppercase();
    match name.as_str() {
        "REDACT" => Ok(StrategySpec::Redact),
        "PASSTHROUGH" => Ok(StrategySpec::Passthrough),
        "PSEUDONYMIZE" => {
            let mode = match raw.mode.as_deref().unwrap_or("random").to_ascii_lowercase().as_str() {
                "random" => PseudoMode::Random,
                "deterministic" => PseudoMode::Deterministic,
                other => return Err(PolicyError::BadParam {
                    strategy: "PSEUDONYMIZE".into(),
                    param: "mode".into(),
                    reason: format!("unknown mode {other:?}"),
                }),
            };
            let key_id = resolve_key_ref(raw.key_id.as_deref(), keyring)?;
            if mode == PseudoMode::Deterministic {
                let key_id = key_id.ok_or(PolicyError::MissingParam {
                    strategy: "PSEUDONYMIZE".into(),
                    param: "key_id".into(),
                })?;
                Ok(StrategySpec::Pseudonymize { mode, key_id: Some(key_id) })
            } else {
                Ok(StrategySpec::Pseudonymize { mode, key_id })
            }
        }
        "HASH" => {
            let salt_id = raw.salt_id.clone().ok_or(PolicyError::MissingParam {
                strategy: "HASH".into(),
                param: "salt_id".into(),
            })?;
            let salt_id = resolve_salt_ref(&salt_id, keyring)?;
            Ok(StrategySpec::Hash {
                salt_id,
                full_digest: raw.full_digest.unwrap_or(false),
            })
        }
        "ENCRYPT" => {
            let key_id = raw.key_id.clone().ok_or(PolicyError::MissingParam {
                strategy: "ENCRYPT".into(),
                param: "key_id".into(),
            })?;
            let key_id = resolve_key_ref(Some(&key_id), keyring)?.expect("some input gives some output");
            Ok(StrategySpec::Encrypt { key_id })
        }
        "CUSTOM_EMAIL" => {
            let length = match raw.length.as_deref() {
                None | Some("match") => LengthMode::Match,
                Some(s) => match s.parse::<usize>() {
                    Ok(n) if n > 0 => LengthMode::Fixed(n),
                    _ => return Err(PolicyError::BadParam {
                        strategy: "CUSTOM_EMAIL".into(),
                        param: "length".into(),
                        reason: format!("{s:?} is neither \"match\" nor a positive integer"),
                    }),
                },
            };
            Ok(StrategySpec::CustomEmail {
                fill_char: raw.fill_char.unwrap_or('x'),
                length,
            })
        }
        other => Err(PolicyError::UnknownStrategy(other.to_string())),
    }
}

/// Resolves a key id against the keyring; the sentinel `"active"` picks the
/// keyring's active key.
fn resolve_key_ref(id: Option<&str>, keyring: &Keyring) -> Result<Option<String>, PolicyError> {
    let Some(id) = id else { return Ok(None) };
    let resolved = if id == "active" {
        keyring
            .active_key_id()
            .ok_or_else(|| PolicyError::DanglingKeyRef("active (no keys in keyring)".into()))?
            .to_string()
    } else {
        id.to_string()
    };
    if !keyring.has_key(&resolved) {
        return Err(PolicyError::DanglingKeyRef(resolved));
    }
    Ok(Some(resolved))
}

fn resolve_salt_ref(id: &str, keyring: &Keyring) -> Result<String, PolicyError> {
    let resolved = if id == "active" {
        keyring
            .active_salt_id()
            .ok_or_else(|| PolicyError::DanglingKeyRef("active (no salts in keyring)".into()))?
            .to_string()
    } else {
        id.to_string()
    };
    if !keyring.has_salt(&resolved) {
        return Err(PolicyError::DanglingKeyRef(resolved));
    }
    Ok(resolved)
}

/// Validates a raw policy tree into a fully resolved [`PolicyTable`]: every
/// strategy's required parameters are present, thresholds are in range, and
/// every key/salt reference resolves against `keyring`.
pub fn validate_policy(raw: &RawPolicy, keyring: &Keyring) -> Result<PolicyTable, PolicyError> {
    let default_threshold = check_threshold(raw.default_threshold.unwrap_or(DEFAULT_THRESHOLD))?;
    let default_strategy = match raw.default_strategy.as_deref() {
        None => StrategySpec::Redact,
        Some(s) => match s.to_ascii_uppercase().as_str() {
            "REDACT" => StrategySpec::Redact,
            "PASSTHROUGH" => StrategySpec::Passthrough,
            other => return Err(PolicyError::BadParam {
                strategy: other.to_string(),
                param: "default_strategy".into(),
                reason: "only parameterless strategies (REDACT, PASSTHROUGH) may be the default".into(),
            }),
        },
    };

    let mut entries = BTreeMap::new();
    for (type_name, raw_entry) in &raw.types {
        let pii_type: PiiType = type_name
            .parse()
            .map_err(|_| PolicyError::BadType(type_name.clone()))?;
        let strategy = build_strategy(raw_entry, keyring)?;
        let threshold_override = raw_entry.threshold.map(check_threshold).transpose()?;
        entries.insert(pii_type, PolicyEntry { strategy, threshold_override });
    }

    Ok(PolicyTable {
        default_threshold,
        default_strategy,
        entries,
    })
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("strategy {strategy} requires parameter {param}")]
    MissingParam { strategy: String, param: String },
    #[error("bad parameter {param} for strategy {strategy}: {reason}")]
    BadParam { strategy: String, param: String, reason: String },
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("key/salt id {0:?} does not resolve in the keyring")]
    DanglingKeyRef(String),
    #[error("bad PII type name {0:?}")]
    BadType(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_entry(strategy: &str) -> RawPolicyEntry {
        RawPolicyEntry {
            strategy: strategy.to_string(),
            threshold: None,
            key_id: None,
            salt_id: None,
            mode: None,
            fill_char: None,
            length: None,
            full_digest: None,
        }
    }

    #[test]
    fn ssn_redact_is_valid() {
        let mut raw = RawPolicy::default();
        raw.types.insert("SSN".into(), raw_entry("REDACT"));
        let table = validate_policy(&raw, &Keyring::new()).unwrap();
        assert_eq!(
            table.strategy_for(&PiiType::Ssn),
            &StrategySpec::Redact
        );
    }

    #[test]
    fn hash_without_salt_is_missing_param() {
        let mut raw = RawPolicy::default();
        raw.types.insert("EMAIL".into(), raw_entry("HASH"));
        let err = validate_policy(&raw, &Keyring::new()).unwrap_err();
        assert_eq!(
            err,
            PolicyError::MissingParam { strategy: "HASH".into(), param: "salt_id".into() }
        );
    }

    #[test]
    fn threshold_out_of_range_is_rejected() {
        let mut raw = RawPolicy::default();
        let mut entry = raw_entry("REDACT");
        entry.threshold = Some(1.5);
        raw.types.insert("EMAIL".into(), entry);
        assert_eq!(
            validate_policy(&raw, &Keyring::new()).unwrap_err(),
            PolicyError::BadThreshold(1.5)
        );
    }

    #[test]
    fn unknown_strategy_is_rejected() {
        let mut raw = RawPolicy::default();
        raw.types.insert("EMAIL".into(), raw_entry("ROT13"));
        assert_eq!(
            validate_policy(&raw, &Keyring::new()).unwrap_err(),
            PolicyError::UnknownStrategy("ROT13".into())
        );
    }

    #[test]
    fn dangling_key_ref_is_rejected() {
        let mut raw = RawPolicy::default();
        let mut entry = raw_entry("ENCRYPT");
        entry.key_id = Some("no-such-key".into());
        raw.types.insert("SSN".into(), entry);
        assert_eq!(
            validate_policy(&raw, &Keyring::new()).unwrap_err(),
            PolicyError::DanglingKeyRef("no-such-key".into())
        );
    }

    #[test]
    fn active_sentinel_resolves_against_keyring() {
        let mut ring = Keyring::new();
        let (kid, _) = ring.keygen().unwrap();
        let mut raw = RawPolicy::default();
        let mut entry = raw_entry("ENCRYPT");
        entry.key_id = Some("active".into());
        raw.types.insert("SSN".into(), entry);
        let table = validate_policy(&raw, &ring).unwrap();
        assert_eq!(
            table.strategy_for(&PiiType::Ssn),
            &StrategySpec::Encrypt { key_id: kid }
        );
    }

    #[test]
    fn unlisted_type_falls_back_to_redact() {
        let table = validate_policy(&RawPolicy::default(), &Keyring::new()).unwrap();
        assert_eq!(table.strategy_for(&PiiType::CreditCard), &StrategySpec::Redact);
        assert_eq!(table.effective_threshold(&PiiType::CreditCard), DEFAULT_THRESHOLD);
    }

    #[test]
    fn deterministic_pseudonymize_requires_key() {
        let mut raw = RawPolicy::default();
        let mut entry = raw_entry("PSEUDONYMIZE");
        entry.mode = Some("deterministic".into());
        raw.types.insert("PHONE_NUMBER".into(), entry);
        assert_eq!(
            validate_policy(&raw, &Keyring::new()).unwrap_err(),
            PolicyError::MissingParam { strategy: "PSEUDONYMIZE".into(), param: "key_id".into() }
        );
    }
}
