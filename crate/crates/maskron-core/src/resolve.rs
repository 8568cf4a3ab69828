//! Arbitration between detectors: merges raw detections into one sorted,
//! non-overlapping, threshold-filtered set.
//!
//! Threshold filtering happens before overlap resolution so a low-confidence
//! detection can never suppress a qualifying one. Overlap conflicts are
//! settled by a greedy sweep over a total order:
//!
//! 1. higher confidence wins,
//! 2. then the longer span,
//! 3. then the earlier detector prefix in the precedence list,
//! 4. then the lexicographically smaller `detector_id`,
//! 5. then span position and type name, so the order is total over
//!    distinct detections and the result is independent of input order.
//!
//! Detections of different types over the same bytes are settled by the
//! same order; such type conflicts are additionally counted so operators
//! can review them.

use std::cmp::Ordering;

use crate::model::{spans_overlap, Detection};
use crate::policy::PolicyTable;

/// Default detector precedence: model-backed detectors outrank pattern
/// detectors, which outrank dictionary lookups.
pub fn default_precedence() -> Vec<String> {
    vec!["external".to_string(), "regex".to_string(), "bloom".to_string()]
}

fn precedence_rank(detector_id: &str, precedence: &[String]) -> usize {
    precedence
        .iter()
        .position(|prefix| detector_id.starts_with(prefix.as_str()))
        .unwrap_or(precedence.len())
}

/// The resolver's total order; `Ordering::Less` means "preferred".
pub fn preference(a: &Detection, b: &Detection, precedence: &[String]) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| b.span.len().cmp(&a.span.len()))
        .then_with(|| {
            precedence_rank(&a.detector_id, precedence)
                .cmp(&precedence_rank(&b.detector_id, precedence))
        })
        .then_with(|| a.detector_id.cmp(&b.detector_id))
        .then_with(|| a.span.cmp(&b.span))
        .then_with(|| a.pii_type.cmp(&b.pii_type))
}

/// Resolution result: the surviving detections plus arbitration statistics.
#[derive(Debug, Clone, Default)]
pub struct Resolution {
    /// Sorted by span start, pairwise non-overlapping, all above threshold.
    pub detections: Vec<Detection>,
    /// Detections filtered out for falling below the effective threshold.
    pub below_threshold: u64,
    /// Detections dropped in overlap arbitration.
    pub overlap_dropped: u64,
    /// Overlap conflicts where the competing detections disagreed on type.
    pub type_conflicts: u64,
}

/// Merges detections from all detectors over one source text.
///
/// Output is sorted by span start and pairwise non-overlapping; every
/// surviving detection's confidence meets its type's effective threshold.
/// Pure and deterministic: permuting the input never changes the output.
pub fn resolve(
    detections: &[Detection],
    policy: &PolicyTable,
    precedence: &[String],
) -> Result<Resolution, ResolveError> {
    check_consistency(detections)?;

    let mut resolution = Resolution::default();
    let mut candidates: Vec<&Detection> = Vec::with_capacity(detections.len());
    for d in detections {
        if d.confidence >= policy.effective_threshold(&d.pii_type) {
            candidates.push(d);
        } else {
            resolution.below_threshold += 1;
        }
    }

    candidates.sort_by(|a, b| preference(a, b, precedence));

    let mut kept: Vec<&Detection> = Vec::new();
    for candidate in candidates {
        let conflict = kept.iter().find(|k| spans_overlap(k.span, candidate.span));
        match conflict {
            None => kept.push(candidate),
            Some(winner) => {
                resolution.overlap_dropped += 1;
                if winner.pii_type != candidate.pii_type {
                    resolution.type_conflicts += 1;
                }
            }
        }
    }

    kept.sort_by_key(|d| d.span);
    resolution.detections = kept.into_iter().cloned().collect();
    Ok(resolution)
}

/// Overlapping detections must agree on the bytes they share; a mismatch
/// means they were produced against different source texts.
fn check_consistency(detections: &[Detection]) -> Result<(), ResolveError> {
    for (i, a) in detections.iter().enumerate() {
        for b in &detections[i + 1..] {
            if !spans_overlap(a.span, b.span) {
                continue;
            }
            let start = a.span.start.max(b.span.start);
            let end = a.span.end.min(b.span.end);
            let slice_a = &a.matched_text.as_bytes()[start - a.span.start..end - a.span.start];
            let slice_b = &b.matched_text.as_bytes()[start - b.span.start..end - b.span.start];
            if slice_a != slice_b {
                return Err(ResolveError::MixedSources {
                    first: a.detector_id.clone(),
                    second: b.detector_id.clone(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ResolveError {
    #[error(
        "detections from {first} and {second} carry inconsistent text for overlapping spans; \
         they do not reference the same source"
    )]
    MixedSources { first: String, second: String },
}
