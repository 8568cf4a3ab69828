//! Minimal in-process HTTP test double for the external-detector protocol.
//!
//! Replays a scripted sequence of canned responses (then a fallback),
//! counting every request and capturing Authorization headers so tests can
//! assert on retry counts and credential propagation. Std-only; serves one
//! connection at a time, which is all the adapter tests need.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

/// One scripted HTTP response.
#[derive(Debug, Clone)]
pub struct CannedResponse {
    pub status: u16,
    pub body: String,
    /// Sleep before responding; lets tests trip the client timeout.
    pub delay: Option<Duration>,
}

impl CannedResponse {
    pub fn json(body: impl Into<String>) -> Self {
        CannedResponse { status: 200, body: body.into(), delay: None }
    }

    pub fn status(status: u16) -> Self {
        CannedResponse { status, body: String::new(), delay: None }
    }

    pub fn delayed(delay: Duration, status: u16, body: impl Into<String>) -> Self {
        CannedResponse { status, body: body.into(), delay: Some(delay) }
    }

    /// An entity-list response in the wire format.
    pub fn entities(entities: &str) -> Self {
        CannedResponse::json(format!("{{\"entities\": {entities}}}"))
    }
}

/// A recorded request line + selected headers.
#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

pub struct FixtureServer {
    addr: SocketAddr,
    hits: Arc<AtomicU64>,
    seen: Arc<Mutex<Vec<SeenRequest>>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// Starts the server on an ephemeral localhost port. Responses are
    /// consumed from `script` in order; once exhausted, `fallback` answers
    /// every further request.
    pub fn start(script: Vec<CannedResponse>, fallback: CannedResponse) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let hits = Arc::new(AtomicU64::new(0));
        let seen = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));

        let handle = {
            let hits = Arc::clone(&hits);
            let seen = Arc::clone(&seen);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                let mut script = script.into_iter();
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let response = script.next().unwrap_or_else(|| fallback.clone());
                    if let Some(request) = serve_one(stream, &response) {
                        hits.fetch_add(1, Ordering::SeqCst);
                        seen.lock().unwrap().push(request);
                    }
                }
            })
        };

        Ok(FixtureServer { addr, hits, seen, shutdown, handle: Some(handle) })
    }

    /// Convenience: a server that always answers with `response`.
    pub fn always(response: CannedResponse) -> std::io::Result<Self> {
        Self::start(Vec::new(), response)
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Total requests served.
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<SeenRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // unblock the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_one(stream: TcpStream, response: &CannedResponse) -> Option<SeenRequest> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut reader = BufReader::new(stream);

    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => authorization = Some(value.to_string()),
                _ => {}
            }
        }
    }

    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body).ok()?;
    }

    if let Some(delay) = response.delay {
        std::thread::sleep(delay);
    }

    let reason = match response.status {
        200 => "OK",
        401 => "Unauthorized",
        403 => "Forbidden",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Response",
    };
    let payload = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        reason,
        response.body.len(),
        response.body
    );
    // the client may have hung up (timeout tests); ignore write failures
    let _ = reader.into_inner().write_all(payload.as_bytes());

    Some(SeenRequest {
        method,
        path,
        authorization,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::external::{
        detect_remote, health_check, ExternalEndpoint, ExternalError, HealthStatus,
    };
    use crate::model::PiiType;

    fn endpoint(url: String) -> ExternalEndpoint {
        ExternalEndpoint {
            name: "test".into(),
            url,
            timeout_ms: 2_000,
            max_retries: 0,
            confidence_floor: 0.5,
            api_key_env: None,
            data_boundary_acknowledged: true,
        }
    }

    #[test]
    fn protocol_echo_against_double() {
        let server = FixtureServer::always(CannedResponse::entities(
            r#"[{"start": 3, "end": 8, "type": "PERSON_NAME", "confidence": 0.97}]"#,
        ))
        .unwrap();
        let scan = detect_remote("hi Alice", &endpoint(server.url())).unwrap();
        assert_eq!(scan.detections.len(), 1);
        let d = &scan.detections[0];
        assert_eq!(d.matched_text, "Alice");
        assert_eq!(d.pii_type, PiiType::PersonName);
        assert_eq!(d.detector_id, "external:test");
        let reqs = server.requests();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].method, "POST");
        assert_eq!(reqs[0].body, r#"{"text":"hi Alice"}"#);
    }

    #[test]
    fn confidence_floor_filters() {
        let server = FixtureServer::always(CannedResponse::entities(
            r#"[{"start": 3, "end": 8, "type": "PERSON_NAME", "confidence": 0.2}]"#,
        ))
        .unwrap();
        let scan = detect_remote("hi Alice", &endpoint(server.url())).unwrap();
        assert!(scan.detections.is_empty());
        assert_eq!(scan.below_floor, 1);
    }

    #[test]
    fn out_of_range_span_is_dropped_with_warning() {
        let server = FixtureServer::always(CannedResponse::entities(
            r#"[{"start": 3, "end": 999, "type": "PERSON_NAME", "confidence": 0.9}]"#,
        ))
        .unwrap();
        let scan = detect_remote("hi Alice", &endpoint(server.url())).unwrap();
        assert!(scan.detections.is_empty());
        assert_eq!(scan.span_out_of_range, 1);
    }

    #[test]
    fn retries_are_bounded_by_max_retries_plus_one() {
        let server = FixtureServer::always(CannedResponse::status(500)).unwrap();
        let mut ep = endpoint(server.url());
        ep.max_retries = 2;
        let err = detect_remote("hello", &ep).unwrap_err();
        assert!(matches!(err, ExternalError::BadResponse(_)));
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn retry_succeeds_after_transient_failures() {
        let server = FixtureServer::start(
            vec![CannedResponse::status(503), CannedResponse::status(500)],
            CannedResponse::entities(r#"[]"#),
        )
        .unwrap();
        let mut ep = endpoint(server.url());
        ep.max_retries = 3;
        let scan = detect_remote("hello", &ep).unwrap();
        assert!(scan.detections.is_empty());
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn unacknowledged_boundary_issues_no_request() {
        let server = FixtureServer::always(CannedResponse::entities("[]")).unwrap();
        let mut ep = endpoint(server.url());
        ep.data_boundary_acknowledged = false;
        let err = detect_remote("hello", &ep).unwrap_err();
        assert!(matches!(err, ExternalError::NotAcknowledged(_)));
        assert_eq!(server.hits(), 0);
    }

    #[test]
    fn bearer_credential_comes_from_environment() {
        let server = FixtureServer::always(CannedResponse::entities("[]")).unwrap();
        let mut ep = endpoint(server.url());
        ep.api_key_env = Some("MASKRON_FIXTURE_TOKEN".into());
        std::env::set_var("MASKRON_FIXTURE_TOKEN", "sekrit");
        detect_remote("hello", &ep).unwrap();
        let reqs = server.requests();
        assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer sekrit"));
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let server = FixtureServer::always(CannedResponse::status(401)).unwrap();
        let mut ep = endpoint(server.url());
        ep.max_retries = 3;
        let err = detect_remote("hello", &ep).unwrap_err();
        assert!(matches!(err, ExternalError::AuthFailed(_)));
        assert_eq!(server.hits(), 1);
    }

    #[test]
    fn health_statuses() {
        let up = FixtureServer::always(CannedResponse::json("{}")).unwrap();
        assert_eq!(health_check(&endpoint(up.url())), HealthStatus::Ok);
        let reqs = up.requests();
        assert_eq!(reqs[0].method, "GET");
        assert_eq!(reqs[0].path, "/health");

        let unauthorized = FixtureServer::always(CannedResponse::status(401)).unwrap();
        assert!(matches!(
            health_check(&endpoint(unauthorized.url())),
            HealthStatus::Down { reason } if reason.contains("auth")
        ));

        let slow = FixtureServer::always(CannedResponse::delayed(
            Duration::from_millis(300),
            200,
            "{}",
        ))
        .unwrap();
        let mut ep = endpoint(slow.url());
        ep.timeout_ms = 150;
        assert!(matches!(health_check(&ep), HealthStatus::Down { .. }));

        let sluggish = FixtureServer::always(CannedResponse::delayed(
            Duration::from_millis(120),
            200,
            "{}",
        ))
        .unwrap();
        let mut ep = endpoint(sluggish.url());
        ep.timeout_ms = 200;
        assert!(matches!(health_check(&ep), HealthStatus::Degraded { .. }));
    }
}
