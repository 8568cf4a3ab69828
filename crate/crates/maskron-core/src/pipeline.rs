//! The streaming write path: detect, resolve, mask, record by record.
//!
//! Fan-out/fan-in engine: a reader assigns monotonically increasing
//! sequence numbers, a bounded pool of stateless workers processes records,
//! and a reorder buffer emits output in input order. Bounded channels give
//! backpressure, so memory stays proportional to queue depth times record
//! size at any parallelism.
//!
//! Records that fail (bad UTF-8, malformed JSON/CSV, strategy errors,
//! detector failures) are quarantined to a dead-letter sink with a reason;
//! the stream itself never aborts over a data error.
//!
//! Text already carrying this engine's own mask tokens or `<TYPE>`
//! placeholders is treated as opaque: detections overlapping those regions
//! are suppressed, so re-ingesting masked output is harmless.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;
use std::time::Instant;

use crossbeam_channel::{bounded, Receiver, Sender};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::detect::Detector;
use crate::keyring::Keyring;
use crate::mask::{apply_policy, opaque_spans};
use crate::model::{spans_overlap, Detection, Span};
use crate::policy::PolicyTable;
use crate::record::{
    csv_cells, csv_render, json_literal, ndjson_units, splice, ColumnSelector, FieldPath, Framing,
    RawRecord, RecordReader,
};
use crate::resolve::resolve;

/// How input bytes are framed and which parts are scanned.
#[derive(Debug, Clone, PartialEq)]
pub enum InputFormat {
    TextLines,
    Ndjson { fields: Vec<FieldPath> },
    Csv { columns: Vec<ColumnSelector>, has_header: bool },
}

impl InputFormat {
    fn framing(&self) -> Framing {
        match self {
            InputFormat::Csv { .. } => Framing::Csv,
            _ => Framing::Lines,
        }
    }
}

/// Run counters. Every count is a plain sum over records, so reports from
/// parallel workers merge associatively and commutatively; `elapsed_ms`
/// merges as a maximum and throughput is derived from the merged totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records_in: u64,
    /// Records written to the main output. Together with the dead-lettered
    /// count this accounts for every input record: nothing is dropped.
    pub records_out: u64,
    pub records_dead_lettered: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub detections_by_type: BTreeMap<String, u64>,
    pub masks_by_strategy: BTreeMap<String, u64>,
    pub warnings: BTreeMap<String, u64>,
    pub elapsed_ms: u64,
    pub throughput_mb_s: f64,
}

impl MetricsReport {
    fn recompute_throughput(&mut self) {
        self.throughput_mb_s = if self.elapsed_ms == 0 {
            0.0
        } else {
            (self.bytes_in as f64 / 1e6) / (self.elapsed_ms as f64 / 1e3)
        };
    }
}

fn merge_counts(into: &mut BTreeMap<String, u64>, from: &BTreeMap<String, u64>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_insert(0) += v;
    }
}

/// Field-wise sum of two reports; `elapsed_ms` takes the maximum and the
/// throughput is recomputed from the merged totals. Associative and
/// commutative, with the default report as identity.
pub fn merge_metrics(a: &MetricsReport, b: &MetricsReport) -> MetricsReport {
    let mut out = a.clone();
    out.records_in += b.records_in;
    out.records_out += b.records_out;
    out.records_dead_lettered += b.records_dead_lettered;
    out.bytes_in += b.bytes_in;
    out.bytes_out += b.bytes_out;
    merge_counts(&mut out.detections_by_type, &b.detections_by_type);
    merge_counts(&mut out.masks_by_strategy, &b.masks_by_strategy);
    merge_counts(&mut out.warnings, &b.warnings);
    out.elapsed_ms = out.elapsed_ms.max(b.elapsed_ms);
    out.recompute_throughput();
    out
}

/// One line of the `detect` report stream.
#[derive(Debug, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub record_index: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub pii_type: String,
    pub confidence: f64,
    pub detector_id: String,
}

/// One line of the dead-letter stream. The raw record is carried base64
/// encoded so arbitrary bytes survive the NDJSON envelope.
#[derive(Debug, Serialize, Deserialize)]
pub struct DeadLetterRecord {
    pub record_index: u64,
    pub reason: String,
    pub record_base64: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Mask,
    Detect,
}

/// The assembled engine: detectors, policy, keyring, and run parameters.
pub struct Pipeline {
    pub detectors: Vec<Box<dyn Detector>>,
    pub policy: PolicyTable,
    pub keyring: Keyring,
    pub precedence: Vec<String>,
    pub input_format: InputFormat,
    pub parallelism: usize,
}

enum WorkerMsg {
    Done { seq: u64, out: Vec<u8> },
    Dead { seq: u64, reason: String, raw: Vec<u8> },
    Finished(Delta),
}

/// Per-record counter increments, accumulated worker-side.
#[derive(Debug, Default, Clone)]
struct Delta {
    detections_by_type: BTreeMap<String, u64>,
    masks_by_strategy: BTreeMap<String, u64>,
    warnings: BTreeMap<String, u64>,
}

impl Delta {
    fn absorb(&mut self, other: Delta) {
        merge_counts(&mut self.detections_by_type, &other.detections_by_type);
        merge_counts(&mut self.masks_by_strategy, &other.masks_by_strategy);
        merge_counts(&mut self.warnings, &other.warnings);
    }
}

impl Pipeline {
    /// Masks a byte stream: each record's scannable text runs
    /// detect -> resolve -> apply_policy, everything else passes through
    /// byte-identically, and record order is preserved at any parallelism.
    pub fn run_mask(
        &self,
        input: impl BufRead,
        output: impl Write,
        dead_letter: Option<&mut dyn Write>,
    ) -> Result<MetricsReport, PipelineError> {
        self.run(input, output, dead_letter, Mode::Mask)
    }

    /// Same scanning as `run_mask`, but emits NDJSON detection records and
    /// leaves the input untouched.
    pub fn run_detect(
        &self,
        input: impl BufRead,
        output: impl Write,
        dead_letter: Option<&mut dyn Write>,
    ) -> Result<MetricsReport, PipelineError> {
        self.run(input, output, dead_letter, Mode::Detect)
    }

    fn run(
        &self,
        input: impl BufRead,
        mut output: impl Write,
        mut dead_letter: Option<&mut dyn Write>,
        mode: Mode,
    ) -> Result<MetricsReport, PipelineError> {
        let started = Instant::now();
        let workers = self.parallelism.max(1);
        let queue_depth = workers * 4;

        let mut metrics = MetricsReport::default();
        let mut reader = RecordReader::new(input, self.input_format.framing());

        // resolve CSV header names to indexes before the engine starts; the
        // header row passes through verbatim and is not a record
        let column_indexes = match &self.input_format {
            InputFormat::Csv { columns, has_header } => {
                let header = if *has_header {
                    let record = reader
                        .next_record()
                        .map_err(PipelineError::Io)?
                        .ok_or(PipelineError::MissingHeader)?;
                    if mode == Mode::Mask {
                        output.write_all(&record.bytes).map_err(PipelineError::Io)?;
                        output.write_all(&record.terminator).map_err(PipelineError::Io)?;
                        metrics.bytes_out += (record.bytes.len() + record.terminator.len()) as u64;
                    }
                    metrics.bytes_in += (record.bytes.len() + record.terminator.len()) as u64;
                    Some(String::from_utf8(record.bytes).map_err(|_| PipelineError::HeaderNotUtf8)?)
                } else {
                    None
                };
                Some(resolve_columns(columns, header.as_deref())?)
            }
            _ => None,
        };

        let ctx = Arc::new(WorkContext {
            pipeline: self,
            mode,
            column_indexes,
        });

        let (work_tx, work_rx) = bounded::<(u64, RawRecord)>(queue_depth);
        let (result_tx, result_rx) = bounded::<WorkerMsg>(queue_depth);

        let io_error: Result<(), PipelineError> = std::thread::scope(|scope| {
            for _ in 0..workers {
                let work_rx: Receiver<(u64, RawRecord)> = work_rx.clone();
                let result_tx: Sender<WorkerMsg> = result_tx.clone();
                let ctx = Arc::clone(&ctx);
                scope.spawn(move || {
                    let mut rng = ChaCha20Rng::from_os_rng();
                    let mut delta = Delta::default();
                    while let Ok((seq, record)) = work_rx.recv() {
                        let msg = ctx.process(seq, record, &mut rng, &mut delta);
                        if result_tx.send(msg).is_err() {
                            break;
                        }
                    }
                    let _ = result_tx.send(WorkerMsg::Finished(delta));
                });
            }
            drop(result_tx);

            // reader: frame records and hand them out
            let reader_handle = scope.spawn(move || -> Result<(u64, u64), std::io::Error> {
                let mut seq = 0u64;
                let mut bytes_in = 0u64;
                while let Some(record) = reader.next_record()? {
                    bytes_in += (record.bytes.len() + record.terminator.len()) as u64;
                    if work_tx.send((seq, record)).is_err() {
                        break;
                    }
                    seq += 1;
                }
                Ok((seq, bytes_in))
            });

            // writer: reorder buffer emitting in sequence order
            let mut pending: BTreeMap<u64, WorkerMsg> = BTreeMap::new();
            let mut next_seq = 0u64;
            let mut finished = Delta::default();
            for msg in result_rx.iter() {
                match msg {
                    WorkerMsg::Finished(delta) => finished.absorb(delta),
                    keyed @ (WorkerMsg::Done { .. } | WorkerMsg::Dead { .. }) => {
                        let seq = match &keyed {
                            WorkerMsg::Done { seq, .. } | WorkerMsg::Dead { seq, .. } => *seq,
                            WorkerMsg::Finished(_) => unreachable!(),
                        };
                        pending.insert(seq, keyed);
                        while let Some(ready) = pending.remove(&next_seq) {
                            match ready {
                                WorkerMsg::Done { out, .. } => {
                                    output.write_all(&out).map_err(PipelineError::Io)?;
                                    metrics.records_out += 1;
                                    metrics.bytes_out += out.len() as u64;
                                }
                                WorkerMsg::Dead { seq, reason, raw } => {
                                    metrics.records_dead_lettered += 1;
                                    *metrics.warnings.entry("dead_lettered".into()).or_insert(0) += 1;
                                    if let Some(sink) = dead_letter.as_deref_mut() {
                                        let line = DeadLetterRecord {
                                            record_index: seq,
                                            reason,
                                            record_base64: base64_encode(&raw),
                                        };
                                        serde_json::to_writer(&mut *sink, &line)
                                            .map_err(|e| PipelineError::Io(e.into()))?;
                                        sink.write_all(b"\n").map_err(PipelineError::Io)?;
                                    }
                                }
                                WorkerMsg::Finished(_) => unreachable!(),
                            }
                            next_seq += 1;
                        }
                    }
                }
            }

            let (records_in, bytes_in) = reader_handle
                .join()
                .expect("reader thread does not panic")
                .map_err(PipelineError::Io)?;
            metrics.records_in = records_in;
            metrics.bytes_in += bytes_in;
            merge_counts(&mut metrics.detections_by_type, &finished.detections_by_type);
            merge_counts(&mut metrics.masks_by_strategy, &finished.masks_by_strategy);
            merge_counts(&mut metrics.warnings, &finished.warnings);
            Ok(())
        });
        io_error?;

        output.flush().map_err(PipelineError::Io)?;
        metrics.elapsed_ms = started.elapsed().as_millis() as u64;
        metrics.recompute_throughput();
        Ok(metrics)
    }
}

fn base64_encode(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn resolve_columns(
    columns: &[ColumnSelector],
    header: Option<&str>,
) -> Result<Vec<usize>, PipelineError> {
    let header_cells: Option<Vec<String>> = match header {
        Some(h) => Some(
            csv_cells(h)
                .map_err(|e| PipelineError::BadHeader(e.to_string()))?
                .into_iter()
                .map(|c| c.text)
                .collect(),
        ),
        None => None,
    };
    let mut out = Vec::with_capacity(columns.len());
    for selector in columns {
        match selector {
            ColumnSelector::Index(i) => out.push(i - 1),
            ColumnSelector::Name(name) => {
                let cells = header_cells
                    .as_ref()
                    .ok_or_else(|| PipelineError::BadHeader(format!(
                        "column {name:?} is named but the input has no header row"
                    )))?;
                let idx = cells.iter().position(|c| c == name).ok_or_else(|| {
                    PipelineError::BadHeader(format!("column {name:?} not found in header"))
                })?;
                out.push(idx);
            }
        }
    }
    Ok(out)
}

struct WorkContext<'a> {
    pipeline: &'a Pipeline,
    mode: Mode,
    column_indexes: Option<Vec<usize>>,
}

impl WorkContext<'_> {
    fn process(
        &self,
        seq: u64,
        record: RawRecord,
        rng: &mut ChaCha20Rng,
        worker_delta: &mut Delta,
    ) -> WorkerMsg {
        // counters from a failing record are discarded with it
        let mut record_delta = Delta::default();
        match self.try_process(seq, &record, rng, &mut record_delta) {
            Ok(out) => {
                worker_delta.absorb(record_delta);
                WorkerMsg::Done { seq, out }
            }
            Err(reason) => WorkerMsg::Dead { seq, reason, raw: record.bytes },
        }
    }

    /// Scans one decoded text unit and either masks it or reports it.
    fn scan_unit(
        &self,
        seq: u64,
        field: Option<&str>,
        text: &str,
        rng: &mut ChaCha20Rng,
        delta: &mut Delta,
        report: &mut Vec<u8>,
    ) -> Result<Option<String>, String> {
        let p = self.pipeline;
        let opaque = opaque_spans(text);
        let mut detections: Vec<Detection> = Vec::new();
        for detector in &p.detectors {
            let scan = detector.scan(text).map_err(|e| e.to_string())?;
            merge_counts(&mut delta.warnings, &scan.warnings);
            detections.extend(
                scan.detections
                    .into_iter()
                    .filter(|d| !opaque.iter().any(|o| spans_overlap(*o, d.span))),
            );
        }

        let resolution = resolve(&detections, &p.policy, &p.precedence).map_err(|e| e.to_string())?;
        for d in &resolution.detections {
            *delta.detections_by_type.entry(d.pii_type.name()).or_insert(0) += 1;
        }
        if resolution.type_conflicts > 0 {
            *delta.warnings.entry("type_conflicts".into()).or_insert(0) += resolution.type_conflicts;
        }

        match self.mode {
            Mode::Detect => {
                for d in &resolution.detections {
                    let line = DetectionRecord {
                        record_index: seq,
                        field: field.map(str::to_string),
                        start: d.span.start,
                        end: d.span.end,
                        pii_type: d.pii_type.name(),
                        confidence: d.confidence,
                        detector_id: d.detector_id.clone(),
                    };
                    report.extend_from_slice(
                        serde_json::to_string(&line).map_err(|e| e.to_string())?.as_bytes(),
                    );
                    report.push(b'\n');
                }
                Ok(None)
            }
            Mode::Mask => {
                let doc = apply_policy(text, &resolution.detections, &p.policy, &p.keyring, rng)
                    .map_err(|e| e.to_string())?;
                for rec in &doc.audit {
                    *delta
                        .masks_by_strategy
                        .entry(rec.strategy.name().to_string())
                        .or_insert(0) += 1;
                }
                Ok(Some(doc.text))
            }
        }
    }

    fn try_process(
        &self,
        seq: u64,
        record: &RawRecord,
        rng: &mut ChaCha20Rng,
        delta: &mut Delta,
    ) -> Result<Vec<u8>, String> {
        let text = std::str::from_utf8(&record.bytes).map_err(|_| "record is not valid UTF-8".to_string())?;
        let mut report = Vec::new();

        let rewritten: String = match &self.pipeline.input_format {
            InputFormat::TextLines => {
                match self.scan_unit(seq, None, text, rng, delta, &mut report)? {
                    Some(masked) => masked,
                    None => String::new(),
                }
            }
            InputFormat::Ndjson { fields } => {
                let scan = ndjson_units(text, fields).map_err(|e| e.to_string())?;
                if scan.non_string_hits > 0 {
                    *delta.warnings.entry("non_string_field".into()).or_insert(0) +=
                        scan.non_string_hits;
                }
                let mut replacements = Vec::new();
                for unit in &scan.units {
                    if let Some(masked) =
                        self.scan_unit(seq, Some(&unit.path), &unit.text, rng, delta, &mut report)?
                    {
                        if masked != unit.text {
                            replacements.push((
                                unit.literal_start,
                                unit.literal_end,
                                json_literal(&masked),
                            ));
                        }
                    }
                }
                splice(text, &replacements)
            }
            InputFormat::Csv { .. } => {
                let cells = csv_cells(text).map_err(|e| e.to_string())?;
                let indexes = self.column_indexes.as_ref().expect("resolved before start");
                let mut replacements = Vec::new();
                for &idx in indexes {
                    let Some(cell) = cells.get(idx) else {
                        *delta.warnings.entry("missing_column".into()).or_insert(0) += 1;
                        continue;
                    };
                    let label = format!("col:{}", idx + 1);
                    if let Some(masked) =
                        self.scan_unit(seq, Some(&label), &cell.text, rng, delta, &mut report)?
                    {
                        if masked != cell.text {
                            replacements.push((
                                cell.raw_start,
                                cell.raw_end,
                                csv_render(&masked, cell.quoted),
                            ));
                        }
                    }
                }
                replacements.sort_by_key(|r| r.0);
                splice(text, &replacements)
            }
        };

        match self.mode {
            Mode::Detect => Ok(report),
            Mode::Mask => {
                let mut out = rewritten.into_bytes();
                out.extend_from_slice(&record.terminator);
                Ok(out)
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV input configured with a header but the stream is empty")]
    MissingHeader,
    #[error("CSV header row is not valid UTF-8")]
    HeaderNotUtf8,
    #[error("bad CSV header: {0}")]
    BadHeader(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::RegexDetector;
    use crate::resolve::default_precedence;

    fn text_pipeline(parallelism: usize) -> Pipeline {
        Pipeline {
            detectors: vec![Box::new(RegexDetector::with_defaults())],
            policy: PolicyTable::default(),
            keyring: Keyring::new(),
            precedence: default_precedence(),
            input_format: InputFormat::TextLines,
            parallelism,
        }
    }

    fn run_mask_to_string(p: &Pipeline, input: &str) -> (String, MetricsReport) {
        let mut out = Vec::new();
        let metrics = p.run_mask(input.as_bytes(), &mut out, None).unwrap();
        (String::from_utf8(out).unwrap(), metrics)
    }

    #[test]
    fn masks_the_phone_line_end_to_end() {
        let p = text_pipeline(1);
        let (out, metrics) = run_mask_to_string(&p, "My phone number is 111-111-1111\n");
        assert_eq!(out, "My phone number is <PHONE_NUMBER>\n");
        assert_eq!(metrics.records_in, 1);
        assert_eq!(metrics.records_out, 1);
        assert_eq!(metrics.detections_by_type["PHONE_NUMBER"], 1);
        assert_eq!(metrics.masks_by_strategy["REDACT"], 1);
    }

    #[test]
    fn empty_input_zeroed_metrics() {
        let p = text_pipeline(2);
        let (out, metrics) = run_mask_to_string(&p, "");
        assert!(out.is_empty());
        assert_eq!(metrics.records_in, 0);
        assert_eq!(metrics.records_out, 0);
        assert_eq!(metrics.bytes_in, 0);
    }

    #[test]
    fn order_is_preserved_under_parallelism() {
        let lines: Vec<String> = (0..200)
            .map(|i| format!("line {i} mail user{i}@example.com end"))
            .collect();
        let input = lines.join("\n") + "\n";
        let (serial, _) = run_mask_to_string(&text_pipeline(1), &input);
        let (parallel, _) = run_mask_to_string(&text_pipeline(8), &input);
        assert_eq!(serial, parallel);
        for (i, line) in parallel.lines().enumerate() {
            assert!(line.starts_with(&format!("line {i} ")), "line {i} out of order: {line}");
            assert!(line.contains("<EMAIL>"));
        }
    }

    #[test]
    fn invalid_utf8_goes_to_dead_letter() {
        let p = text_pipeline(1);
        let mut out = Vec::new();
        let mut dead = Vec::new();
        let input: &[u8] = b"good line\n\xff\xfe broken\nanother good\n";
        let metrics = p.run_mask(input, &mut out, Some(&mut dead)).unwrap();
        assert_eq!(metrics.records_in, 3);
        assert_eq!(metrics.records_out, 2);
        assert_eq!(metrics.records_dead_lettered, 1);
        let dead_line: DeadLetterRecord =
            serde_json::from_slice(dead.split(|b| *b == b'\n').next().unwrap()).unwrap();
        assert_eq!(dead_line.record_index, 1);
        assert!(dead_line.reason.contains("UTF-8"));
        assert_eq!(String::from_utf8(out).unwrap(), "good line\nanother good\n");
    }

    #[test]
    fn detect_reports_without_rewriting() {
        let p = text_pipeline(1);
        let mut out = Vec::new();
        p.run_detect("call 111-111-1111 now\nno pii here\n".as_bytes(), &mut out, None)
            .unwrap();
        let lines: Vec<DetectionRecord> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].record_index, 0);
        assert_eq!(lines[0].pii_type, "PHONE_NUMBER");
        assert_eq!(lines[0].start, 5);
        assert_eq!(lines[0].end, 17);
    }

    #[test]
    fn ndjson_masking_preserves_structure() {
        let mut p = text_pipeline(1);
        p.input_format = InputFormat::Ndjson {
            fields: vec![FieldPath::parse("msg").unwrap(), FieldPath::parse("user.email").unwrap()],
        };
        let input = concat!(
            r#"{ "seq" : 1.50, "msg": "call 111-111-1111", "user": {"email": "a@b.co"}, "keep": "111-111-1111" }"#,
            "\n"
        );
        let (out, metrics) = run_mask_to_string(&p, input);
        assert_eq!(
            out,
            concat!(
                r#"{ "seq" : 1.50, "msg": "call <PHONE_NUMBER>", "user": {"email": "<EMAIL>"}, "keep": "111-111-1111" }"#,
                "\n"
            )
        );
        assert_eq!(metrics.detections_by_type["PHONE_NUMBER"], 1);
        assert_eq!(metrics.detections_by_type["EMAIL"], 1);
    }

    #[test]
    fn csv_masking_scans_only_configured_columns() {
        let mut p = text_pipeline(1);
        p.input_format = InputFormat::Csv {
            columns: vec![ColumnSelector::Name("contact".into())],
            has_header: true,
        };
        let input = "id,contact,notes\n7,111-111-1111,keep 222-222-2222\n";
        let (out, _) = run_mask_to_string(&p, input);
        assert_eq!(out, "id,contact,notes\n7,<PHONE_NUMBER>,keep 222-222-2222\n");
    }

    #[test]
    fn already_masked_output_is_opaque() {
        let p = text_pipeline(1);
        let first = "call 111-111-1111\n";
        let (once, _) = run_mask_to_string(&p, first);
        let (twice, metrics) = run_mask_to_string(&p, &once);
        assert_eq!(once, twice);
        assert!(metrics.detections_by_type.is_empty());
    }

    #[test]
    fn merge_metrics_algebra() {
        let mut a = MetricsReport::default();
        a.records_in = 3;
        a.bytes_in = 100;
        a.elapsed_ms = 10;
        a.detections_by_type.insert("SSN".into(), 2);
        let mut b = MetricsReport::default();
        b.records_in = 4;
        b.bytes_in = 50;
        b.elapsed_ms = 20;
        b.detections_by_type.insert("SSN".into(), 1);
        b.detections_by_type.insert("EMAIL".into(), 5);
        let mut c = MetricsReport::default();
        c.records_in = 1;
        c.elapsed_ms = 5;

        let zero = MetricsReport::default();
        assert_eq!(merge_metrics(&a, &zero), {
            let mut expect = a.clone();
            expect.recompute_throughput();
            expect
        });
        assert_eq!(merge_metrics(&a, &b), merge_metrics(&b, &a));
        assert_eq!(
            merge_metrics(&merge_metrics(&a, &b), &c),
            merge_metrics(&a, &merge_metrics(&b, &c))
        );
        let merged = merge_metrics(&a, &b);
        assert_eq!(merged.records_in, 7);
        assert_eq!(merged.detections_by_type["SSN"], 3);
        assert_eq!(merged.elapsed_ms, 20);
    }
}
