//! Adapter for a remote model-backed detector (fine-tuned NER model or an
//! LLM service wrapper) speaking a fixed wire protocol.
//!
//! Request: `POST <url>` with UTF-8 JSON body `{"text": "<document>"}` and,
//! when configured, `Authorization: Bearer <credential>` where the
//! credential is read from an environment variable — config files never
//! hold the secret itself.
//!
//! Response: `{"entities": [{"start": int, "end": int, "type": string,
//! "confidence": number}]}` with byte offsets into the submitted text.
//!
//! Nothing from the wire is trusted: spans are checked against the local
//! text (boundaries and slice) and invalid entities are dropped with a
//! warning count, never silently accepted.
//!
//! Sending text to an external service moves data across the deployment
//! boundary, and the service may retain it. No request is ever issued
//! unless the operator has set `external_data_leaves_boundary = true` in
//! the endpoint configuration.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{DetectError, Detector, ScanOutput};
use crate::model::{Detection, PiiType, Span};

pub const DEFAULT_IN_FLIGHT_CAP: usize = 8;
pub const MAX_RETRIES_CAP: u32 = 5;
const BACKOFF_BASE_MS: u64 = 100;

/// A remote detector endpoint. The bearer credential is named by
/// environment variable, never stored.
#[derive(Debug, Clone)]
pub struct ExternalEndpoint {
    pub name: String,
    pub url: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub confidence_floor: f64,
    pub api_key_env: Option<String>,
    /// Operator acknowledgment that scanned text leaves the deployment
    /// boundary. Requests are refused while this is false.
    pub data_boundary_acknowledged: bool,
}

impl ExternalEndpoint {
    pub fn validate(&self) -> Result<(), ExternalError> {
        if self.timeout_ms < 1 {
            return Err(ExternalError::BadEndpoint("timeout_ms must be >= 1".into()));
        }
        if self.max_retries > MAX_RETRIES_CAP {
            return Err(ExternalError::BadEndpoint(format!(
                "max_retries must be <= {MAX_RETRIES_CAP}"
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(ExternalError::BadEndpoint("confidence_floor must be in [0, 1]".into()));
        }
        if !(self.url.starts_with("http://") || self.url.starts_with("https://")) {
            return Err(ExternalError::BadEndpoint(format!("url {:?} is not HTTP(S)", self.url)));
        }
        Ok(())
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct DetectResponse {
    entities: Vec<WireEntity>,
}

#[derive(Deserialize)]
struct WireEntity {
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    entity_type: String,
    confidence: f64,
}

/// Result of one remote scan: accepted detections plus counts of entities
/// rejected by local validation.
#[derive(Debug, Default)]
pub struct RemoteScan {
    pub detections: Vec<Detection>,
    /// Entities whose span failed the boundary or slice check.
    pub span_out_of_range: u64,
    /// Entities below the configured confidence floor.
    pub below_floor: u64,
    /// Entities with an unparseable type name or confidence outside [0, 1].
    pub invalid_entity: u64,
}

fn agent_for(endpoint: &ExternalEndpoint) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout()))
        .http_status_as_error(false)
        .build()
        .into()
}

fn bearer_credential(endpoint: &ExternalEndpoint) -> Result<Option<String>, ExternalError> {
    match &endpoint.api_key_env {
        None => Ok(None),
        Some(var) => match std::env::var(var) {
            Ok(v) => Ok(Some(v)),
            Err(_) => Err(ExternalError::AuthFailed(format!(
                "credential environment variable {var} is not set"
            ))),
        },
    }
}

fn classify_transport(err: ureq::Error) -> ExternalError {
    match err {
        ureq::Error::Timeout(_) => ExternalError::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => ExternalError::Timeout,
        other => ExternalError::Unreachable(other.to_string()),
    }
}

fn backoff(attempt: u32) {
    // exponential backoff with full jitter
    let ceiling = BACKOFF_BASE_MS.saturating_mul(1 << attempt.min(10));
    let wait = rand::rng().random_range(0..=ceiling);
    std::thread::sleep(Duration::from_millis(wait));
}

/// Sends `text` to the endpoint and converts the response into validated
/// detections. With `max_retries = r`, at most `r + 1` requests are issued;
/// timeouts, transport failures, and 5xx responses are retried, auth and
/// protocol errors are not.
pub fn detect_remote(text: &str, endpoint: &ExternalEndpoint) -> Result<RemoteScan, ExternalError> {
    endpoint.validate()?;
    if !endpoint.data_boundary_acknowledged {
        return Err(ExternalError::NotAcknowledged(endpoint.name.clone()));
    }
    let credential = bearer_credential(endpoint)?;
    let agent = agent_for(endpoint);
    let body = serde_json::to_string(&DetectRequest { text }).expect("request serializes");

    let mut last_err = None;
    for attempt in 0..=endpoint.max_retries {
        if attempt > 0 {
            backoff(attempt - 1);
        }
        let mut req = agent.post(&endpoint.url).header("Content-Type", "application/json");
        if let Some(cred) = &credential {
            req = req.header("Authorization", format!("Bearer {cred}"));
        }
        match req.send(body.as_str()) {
            Err(e) => last_err = Some(classify_transport(e)),
            Ok(mut response) => {
                let status = response.status().as_u16();
                match status {
                    200..=299 => {
                        let parsed: DetectResponse = response
                            .body_mut()
                            .read_json()
                            .map_err(|e| ExternalError::BadResponse(e.to_string()))?;
                        return Ok(convert_entities(text, endpoint, parsed.entities));
                    }
                    401 | 403 => {
                        return Err(ExternalError::AuthFailed(format!(
                            "endpoint returned status {status}"
                        )))
                    }
                    500..=599 => {
                        last_err = Some(ExternalError::BadResponse(format!("server error {status}")))
                    }
                    other => {
                        return Err(ExternalError::BadResponse(format!(
                            "unexpected status {other}"
                        )))
                    }
                }
            }
        }
    }
    Err(last_err.expect("at least one attempt was made"))
}

fn convert_entities(
    text: &str,
    endpoint: &ExternalEndpoint,
    entities: Vec<WireEntity>,
) -> RemoteScan {
    let mut scan = RemoteScan::default();
    for entity in entities {
        if !(0.0..=1.0).contains(&entity.confidence) {
            scan.invalid_entity += 1;
            continue;
        }
        if entity.confidence < endpoint.confidence_floor {
            scan.below_floor += 1;
            continue;
        }
        let Ok(pii_type) = entity.entity_type.parse::<PiiType>() else {
            scan.invalid_entity += 1;
            continue;
        };
        let Ok(span) = Span::new(entity.start, entity.end) else {
            scan.span_out_of_range += 1;
            continue;
        };
        match Detection::new(
            text,
            span,
            pii_type,
            entity.confidence,
            format!("external:{}", endpoint.name),
        ) {
            Ok(d) => scan.detections.push(d),
            Err(_) => scan.span_out_of_range += 1,
        }
    }
    scan
}

/// Endpoint liveness as seen from this process.
#[derive(Debug, Clone, PartialEq)]
pub enum HealthStatus {
    Ok,
    /// Responding 200 but slower than half the configured timeout.
    Degraded { latency_ms: u64 },
    Down { reason: String },
}

/// Issues `GET <url>/health`. OK iff the endpoint answers 200 within the
/// timeout; errors never propagate, they map to `Down`.
pub fn health_check(endpoint: &ExternalEndpoint) -> HealthStatus {
    if let Err(e) = endpoint.validate() {
        return HealthStatus::Down { reason: e.to_string() };
    }
    let agent = agent_for(endpoint);
    let health_url = format!("{}/health", endpoint.url.trim_end_matches('/'));
    let started = Instant::now();
    match agent.get(&health_url).call() {
        Err(e) => HealthStatus::Down { reason: classify_transport(e).to_string() },
        Ok(response) => {
            let latency = started.elapsed();
            let status = response.status().as_u16();
            match status {
                200 if latency > endpoint.timeout() / 2 => HealthStatus::Degraded {
                    latency_ms: latency.as_millis() as u64,
                },
                200 => HealthStatus::Ok,
                401 | 403 => HealthStatus::Down { reason: format!("auth failed ({status})") },
                other => HealthStatus::Down { reason: format!("status {other}") },
            }
        }
    }
}

/// Counting semaphore bounding concurrent in-flight requests.
struct InFlightGate {
    available: Mutex<usize>,
    freed: Condvar,
}

impl InFlightGate {
    fn new(cap: usize) -> Self {
        InFlightGate { available: Mutex::new(cap.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) {
        let mut slots = self.available.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
    }

    fn release(&self) {
        *self.available.lock().unwrap() += 1;
        self.freed.notify_one();
    }
}

/// [`Detector`] wrapper: stateless per call, with a configurable cap on
/// concurrent requests so workers cannot overwhelm the remote service.
pub struct ExternalDetector {
    endpoint: ExternalEndpoint,
    gate: InFlightGate,
}

impl ExternalDetector {
    pub fn new(endpoint: ExternalEndpoint) -> Result<Self, ExternalError> {
        Self::with_in_flight_cap(endpoint, DEFAULT_IN_FLIGHT_CAP)
    }

    pub fn with_in_flight_cap(endpoint: ExternalEndpoint, cap: usize) -> Result<Self, ExternalError> {
        endpoint.validate()?;
        if !endpoint.data_boundary_acknowledged {
            return Err(ExternalError::NotAcknowledged(endpoint.name.clone()));
        }
        Ok(ExternalDetector { endpoint, gate: InFlightGate::new(cap) })
    }

    pub fn endpoint(&self) -> &ExternalEndpoint {
        &self.endpoint
    }
}

impl Detector for ExternalDetector {
    fn id(&self) -> String {
        format!("external:{}", self.endpoint.name)
    }

    fn scan(&self, text: &str) -> Result<ScanOutput, DetectError> {
        self.gate.acquire();
        let result = detect_remote(text, &self.endpoint);
        self.gate.release();
        let scan = result?;
        let mut out = ScanOutput::from_detections(scan.detections);
        if scan.span_out_of_range > 0 {
            out.warnings.insert("external_span_out_of_range".into(), scan.span_out_of_range);
        }
        if scan.below_floor > 0 {
            out.warnings.insert("external_below_floor".into(), scan.below_floor);
        }
        if scan.invalid_entity > 0 {
            out.warnings.insert("external_invalid_entity".into(), scan.invalid_entity);
        }
        Ok(out)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("invalid endpoint configuration: {0}")]
    BadEndpoint(String),
    #[error(
        "external endpoint {0:?} refused: set external_data_leaves_boundary = true to \
         acknowledge that scanned text is sent outside the deployment boundary"
    )]
    NotAcknowledged(String),
}
