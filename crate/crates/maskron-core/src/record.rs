//! Record framing and in-place field splicing for the stream formats.
//!
//! Rewrites are surgical: the engine locates the byte spans of the values
//! it must scan and splices replacements back into the raw record, so
//! every byte outside a masked field passes through untouched — no
//! reparse-and-reserialize, no incidental reformatting.
//!
//! * `TEXT_LINES`: one record per line; the whole line is scanned.
//! * `NDJSON`: one JSON document per line; configured field paths select
//!   string values (dotted object keys; array elements under an addressed
//!   key are included).
//! * `CSV`: RFC-4180 quoting honored, including quoted separators and
//!   newlines; only configured columns are scanned.

use std::io::{self, BufRead};

/// A dotted path of object keys, e.g. `user.email`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldPath(pub Vec<String>);

impl FieldPath {
    pub fn parse(s: &str) -> Result<Self, RecordError> {
        if s.is_empty() || s.split('.').any(str::is_empty) {
            return Err(RecordError::BadFieldPath(s.to_string()));
        }
        Ok(FieldPath(s.split('.').map(str::to_string).collect()))
    }
}

impl std::fmt::Display for FieldPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

/// CSV column selection: 1-based position or header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl ColumnSelector {
    pub fn parse(s: &str) -> Result<Self, RecordError> {
        if s.is_empty() {
            return Err(RecordError::BadColumn(s.to_string()));
        }
        match s.parse::<usize>() {
            Ok(0) => Err(RecordError::BadColumn("column indexes are 1-based".into())),
            Ok(n) => Ok(ColumnSelector::Index(n)),
            Err(_) => Ok(ColumnSelector::Name(s.to_string())),
        }
    }
}

/// One framed input record, terminator kept separate so it can be emitted
/// verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub bytes: Vec<u8>,
    pub terminator: Vec<u8>,
}

/// Framing mode for the reader: CSV records may span lines via quoted
/// newlines, everything else is line-per-record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framing {
    Lines,
    Csv,
}

pub struct RecordReader<R: BufRead> {
    inner: R,
    framing: Framing,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(inner: R, framing: Framing) -> Self {
        RecordReader { inner, framing }
    }

    pub fn next_record(&mut self) -> io::Result<Option<RawRecord>> {
        match self.framing {
            Framing::Lines => self.next_line(),
            Framing::Csv => self.next_csv_record(),
        }
    }

    fn next_line(&mut self) -> io::Result<Option<RawRecord>> {
        let mut buf = Vec::new();
        let n = self.inner.read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok(None);
        }
        Ok(Some(split_terminator(buf)))
    }

    fn next_csv_record(&mut self) -> io::Result<Option<RawRecord>> {
        let mut buf = Vec::new();
        let mut in_quotes = false;
        loop {
            let before = buf.len();
            let n = self.inner.read_until(b'\n', &mut buf)?;
            if n == 0 {
                if buf.is_empty() {
                    return Ok(None);
                }
                // EOF inside a record; hand it over as-is
                return Ok(Some(split_terminator(buf)));
            }
            for &b in &buf[before..] {
                if b == b'"' {
                    in_quotes = !in_quotes;
                }
            }
            if !in_quotes {
                return Ok(Some(split_terminator(buf)));
            }
        }
    }
}

fn split_terminator(mut buf: Vec<u8>) -> RawRecord {
    let mut terminator = Vec::new();
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
            terminator = b"\r\n".to_vec();
        } else {
            terminator = b"\n".to_vec();
        }
    }
    RawRecord { bytes: buf, terminator }
}

/// Splices sorted, non-overlapping `(start, end, replacement)` triples into
/// `raw`, copying everything else byte for byte.
pub fn splice(raw: &str, replacements: &[(usize, usize, String)]) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pos = 0;
    for (start, end, replacement) in replacements {
        out.push_str(&raw[pos..*start]);
        out.push_str(replacement);
        pos = *end;
    }
    out.push_str(&raw[pos..]);
    out
}

// ---------------------------------------------------------------------------
// NDJSON
// ---------------------------------------------------------------------------

/// A string value selected for scanning: where its literal sits in the raw
/// line (quotes included) and its decoded content.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonUnit {
    pub path: String,
    /// Byte span of the string literal in the raw line, including quotes.
    pub literal_start: usize,
    pub literal_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Seg<'a> {
    Key(std::borrow::Cow<'a, str>),
    Index,
}

struct JsonScanner<'a> {
    bytes: &'a [u8],
    raw: &'a str,
    pos: usize,
    fields: &'a [FieldPath],
    path: Vec<Seg<'a>>,
    units: Vec<JsonUnit>,
    non_string_hits: u64,
}

impl<'a> JsonScanner<'a> {
    fn error(&self, what: &str) -> RecordError {
        RecordError::BadJson(format!("{what} at byte {}", self.pos))
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), RecordError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {:?}", b as char)))
        }
    }

    /// Lexes a string literal starting at the opening quote; returns the
    /// span including both quotes.
    fn lex_string(&mut self) -> Result<(usize, usize), RecordError> {
        let start = self.pos;
        self.expect(b'"')?;
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated string")),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok((start, self.pos));
                }
                Some(b'\\') => {
                    self.pos += 2; // skip the escape introducer and its target
                    if self.pos > self.bytes.len() {
                        return Err(self.error("truncated escape"));
                    }
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    /// Does the current path (object keys only; array hops ignored) match a
    /// configured field?
    fn path_matches(&self) -> bool {
        let keys: Vec<&str> = self
            .path
            .iter()
            .filter_map(|seg| match seg {
                Seg::Key(k) => Some(k.as_ref()),
                Seg::Index => None,
            })
            .collect();
        self.fields.iter().any(|f| {
            f.0.len() == keys.len() && f.0.iter().zip(&keys).all(|(a, b)| a == *b)
        })
    }

    fn value(&mut self) -> Result<(), RecordError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'{') => self.object(),
            Some(b'[') => self.array(),
            Some(b'"') => {
                let selected = self.path_matches();
                let (start, end) = self.lex_string()?;
                if selected {
                    let literal = &self.raw[start..end];
                    let text: String = serde_json::from_str(literal)
                        .map_err(|e| RecordError::BadJson(format!("bad string literal: {e}")))?;
                    let path = self
                        .path
                        .iter()
                        .filter_map(|seg| match seg {
                            Seg::Key(k) => Some(k.as_ref()),
                            Seg::Index => None,
                        })
                        .collect::<Vec<_>>()
                        .join(".");
                    self.units.push(JsonUnit {
                        path,
                        literal_start: start,
                        literal_end: end,
                        text,
                    });
                }
                Ok(())
            }
            Some(_) => {
                if self.path_matches() {
                    self.non_string_hits += 1;
                }
                self.scalar()
            }
        }
    }

    fn object(&mut self) -> Result<(), RecordError> {
        self.expect(b'{')?;
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(());
        }
        loop {
            self.skip_ws();
            let (kstart, kend) = self.lex_string()?;
            let key: String = serde_json::from_str(&self.raw[kstart..kend])
                .map_err(|e| RecordError::BadJson(format!("bad object key: {e}")))?;
            self.skip_ws();
            self.expect(b':')?;
            // borrow the key from the raw line on the escape-free fast path
            let raw_key = &self.raw[kstart + 1..kend - 1];
            let seg = if raw_key == key {
                Seg::Key(std::borrow::Cow::Borrowed(raw_key))
            } else {
                Seg::Key(std::borrow::Cow::Owned(key))
            };
            self.path.push(seg);
            let result = self.value();
            self.path.pop();
            result?;
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => return Err(self.error("expected ',' or '}' in object")),
            }
        }
    }

    fn array(&mut self) -> Result<(), RecordError> {
        self.expect(b'[')?;
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(());
        }
        loop {
            self.path.push(Seg::Index);
            let result = self.value();
            self.path.pop();
            result?;
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => return Err(self.error("expected ',' or ']' in array")),
            }
        }
    }

    /// Numbers, booleans, null. Lexing is permissive — this is a locator,
    /// not a validator; anything it cannot splice it passes through.
    fn scalar(&mut self) -> Result<(), RecordError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            match b {
                b',' | b'}' | b']' | b' ' | b'\t' | b'\n' | b'\r' => break,
                _ => self.pos += 1,
            }
        }
        if self.pos == start {
            return Err(self.error("expected a value"));
        }
        Ok(())
    }
}

pub struct NdjsonScan {
    pub units: Vec<JsonUnit>,
    /// Configured paths that addressed a non-string value.
    pub non_string_hits: u64,
}

/// Locates the string values addressed by `fields` in one NDJSON line.
pub fn ndjson_units(line: &str, fields: &[FieldPath]) -> Result<NdjsonScan, RecordError> {
    let mut scanner = JsonScanner {
        bytes: line.as_bytes(),
        raw: line,
        pos: 0,
        fields,
        path: Vec::new(),
        units: Vec::new(),
        non_string_hits: 0,
    };
    scanner.value()?;
    scanner.skip_ws();
    if scanner.pos != line.len() {
        return Err(RecordError::BadJson(format!(
            "trailing content at byte {}",
            scanner.pos
        )));
    }
    Ok(NdjsonScan { units: scanner.units, non_string_hits: scanner.non_string_hits })
}

/// Re-encodes masked text as a JSON string literal (quotes included).
pub fn json_literal(text: &str) -> String {
    serde_json::to_string(text).expect("strings always serialize")
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// One parsed CSV cell: its byte span in the raw record (quotes included
/// when present) and its unescaped content.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvCell {
    pub raw_start: usize,
    pub raw_end: usize,
    pub quoted: bool,
    pub text: String,
}

/// Splits one CSV record (terminator already stripped) into cells per
/// RFC 4180. Quoted cells may contain separators, doubled quotes, and
/// newlines.
pub fn csv_cells(record: &str) -> Result<Vec<CsvCell>, RecordError> {
    let bytes = record.as_bytes();
    let mut cells = Vec::new();
    let mut pos = 0;

    loop {
        let start = pos;
        if bytes.get(pos) == Some(&b'"') {
            // quoted cell; "" inside is an escaped quote
            pos += 1;
            let mut text = String::new();
            let mut run_start = pos;
            loop {
                match bytes.get(pos) {
                    None => return Err(RecordError::BadCsv("unterminated quoted cell".into())),
                    Some(b'"') if bytes.get(pos + 1) == Some(&b'"') => {
                        text.push_str(&record[run_start..pos]);
                        text.push('"');
                        pos += 2;
                        run_start = pos;
                    }
                    Some(b'"') => {
                        text.push_str(&record[run_start..pos]);
                        pos += 1;
                        break;
                    }
                    Some(_) => pos += 1,
                }
            }
            cells.push(CsvCell { raw_start: start, raw_end: pos, quoted: true, text });
        } else {
            // bare cell: runs to the next comma or end
            while pos < bytes.len() && bytes[pos] != b',' {
                if bytes[pos] == b'"' {
                    return Err(RecordError::BadCsv(format!(
                        "stray quote at byte {pos} in unquoted cell"
                    )));
                }
                pos += 1;
            }
            cells.push(CsvCell {
                raw_start: start,
                raw_end: pos,
                quoted: false,
                text: record[start..pos].to_string(),
            });
        }

        match bytes.get(pos) {
            None => return Ok(cells),
            Some(b',') => pos += 1,
            Some(_) => {
                return Err(RecordError::BadCsv(format!(
                    "unexpected content after quoted cell at byte {pos}"
                )))
            }
        }
    }
}

/// Renders masked cell content, quoting when the content requires it or the
/// original cell was quoted.
pub fn csv_render(text: &str, originally_quoted: bool) -> String {
    let needs_quotes =
        originally_quoted || text.contains(',') || text.contains('"') || text.contains('\n') || text.contains('\r');
    if needs_quotes {
        let mut out = String::with_capacity(text.len() + 2);
        out.push('"');
        for c in text.chars() {
            if c == '"' {
                out.push('"');
            }
            out.push(c);
        }
        out.push('"');
        out
    } else {
        text.to_string()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RecordError {
    #[error("bad field path {0:?}")]
    BadFieldPath(String),
    #[error("bad column selector: {0}")]
    BadColumn(String),
    #[error("malformed JSON: {0}")]
    BadJson(String),
    #[error("malformed CSV: {0}")]
    BadCsv(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn line_reader_preserves_terminators() {
        let mut r = RecordReader::new(Cursor::new("a\r\nb\nlast"), Framing::Lines);
        let first = r.next_record().unwrap().unwrap();
        assert_eq!((first.bytes.as_slice(), first.terminator.as_slice()), (b"a".as_ref(), b"\r\n".as_ref()));
        let second = r.next_record().unwrap().unwrap();
        assert_eq!((second.bytes.as_slice(), second.terminator.as_slice()), (b"b".as_ref(), b"\n".as_ref()));
        let third = r.next_record().unwrap().unwrap();
        assert_eq!((third.bytes.as_slice(), third.terminator.as_slice()), (b"last".as_ref(), b"".as_ref()));
        assert!(r.next_record().unwrap().is_none());
    }

    #[test]
    fn csv_reader_joins_quoted_newlines() {
        let data = "a,\"multi\nline\",c\nplain,row,here\n";
        let mut r = RecordReader::new(Cursor::new(data), Framing::Csv);
        let first = r.next_record().unwrap().unwrap();
        assert_eq!(first.bytes, b"a,\"multi\nline\",c");
        let second = r.next_record().unwrap().unwrap();
        assert_eq!(second.bytes, b"plain,row,here");
        assert!(r.next_record().unwrap().is_none());
    }

    #[test]
    fn ndjson_locates_nested_and_array_fields() {
        let line = r#"{"user": {"email": "a@b.co", "age": 7}, "tags": ["x", "y"], "msg": "hi"}"#;
        let fields = vec![FieldPath::parse("user.email").unwrap(), FieldPath::parse("tags").unwrap()];
        let scan = ndjson_units(line, &fields).unwrap();
        let texts: Vec<&str> = scan.units.iter().map(|u| u.text.as_str()).collect();
        assert_eq!(texts, vec!["a@b.co", "x", "y"]);
        let u = &scan.units[0];
        assert_eq!(&line[u.literal_start..u.literal_end], "\"a@b.co\"");
    }

    #[test]
    fn ndjson_counts_non_string_hits() {
        let line = r#"{"n": 42}"#;
        let fields = vec![FieldPath::parse("n").unwrap()];
        let scan = ndjson_units(line, &fields).unwrap();
        assert!(scan.units.is_empty());
        assert_eq!(scan.non_string_hits, 1);
    }

    #[test]
    fn ndjson_decodes_escapes_and_splices_back() {
        let line = r#"{"msg": "line\nwith \"quotes\" and é"}"#;
        let fields = vec![FieldPath::parse("msg").unwrap()];
        let scan = ndjson_units(line, &fields).unwrap();
        assert_eq!(scan.units[0].text, "line\nwith \"quotes\" and é");

        let u = &scan.units[0];
        let masked = json_literal("<REDACTED>");
        let out = splice(line, &[(u.literal_start, u.literal_end, masked)]);
        assert_eq!(out, r#"{"msg": "<REDACTED>"}"#);
    }

    #[test]
    fn ndjson_rejects_malformed_lines() {
        assert!(ndjson_units("{\"a\": ", &[]).is_err());
        assert!(ndjson_units("{\"a\" 1}", &[]).is_err());
        assert!(ndjson_units("{} trailing", &[]).is_err());
    }

    #[test]
    fn ndjson_untouched_bytes_are_identical() {
        // unusual spacing and number formatting must survive
        let line = r#"{ "a" : 1.50 ,"b":"x" , "c" : [ 1 , 2 ] }"#;
        let fields = vec![FieldPath::parse("b").unwrap()];
        let scan = ndjson_units(line, &fields).unwrap();
        let u = &scan.units[0];
        let out = splice(line, &[(u.literal_start, u.literal_end, json_literal("Y"))]);
        assert_eq!(out, r#"{ "a" : 1.50 ,"b":"Y" , "c" : [ 1 , 2 ] }"#);
    }

    #[test]
    fn csv_cells_handle_quotes_and_escapes() {
        let record = r#"plain,"with,comma","say ""hi""",tail"#;
        let cells = csv_cells(record).unwrap();
        let texts: Vec<&str> = cells.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["plain", "with,comma", "say \"hi\"", "tail"]);
        assert_eq!(&record[cells[1].raw_start..cells[1].raw_end], "\"with,comma\"");
    }

    #[test]
    fn csv_empty_cells_and_trailing_comma() {
        let cells = csv_cells("a,,c,").unwrap();
        let texts: Vec<&str> = cells.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["a", "", "c", ""]);
    }

    #[test]
    fn csv_splice_preserves_other_cells() {
        let record = "a,185-11-2222,\"x,y\"";
        let cells = csv_cells(record).unwrap();
        let target = &cells[1];
        let out = splice(
            record,
            &[(target.raw_start, target.raw_end, csv_render("<SSN>", target.quoted))],
        );
        assert_eq!(out, "a,<SSN>,\"x,y\"");
    }

    #[test]
    fn csv_render_quotes_when_needed() {
        assert_eq!(csv_render("plain", false), "plain");
        assert_eq!(csv_render("a,b", false), "\"a,b\"");
        assert_eq!(csv_render("say \"hi\"", false), "\"say \"\"hi\"\"\"");
        assert_eq!(csv_render("kept", true), "\"kept\"");
    }

    #[test]
    fn csv_rejects_malformed_records() {
        assert!(csv_cells("\"unterminated").is_err());
        assert!(csv_cells("bad\"quote,b").is_err());
        assert!(csv_cells("\"a\"junk,b").is_err());
    }

    #[test]
    fn column_selector_parses() {
        assert_eq!(ColumnSelector::parse("3").unwrap(), ColumnSelector::Index(3));
        assert_eq!(ColumnSelector::parse("email").unwrap(), ColumnSelector::Name("email".into()));
        assert!(ColumnSelector::parse("0").is_err());
        assert!(ColumnSelector::parse("").is_err());
    }
}
