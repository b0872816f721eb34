use std::io::{self, BufRead};

use super::{Event, Polarity, SensorGeometry};

/// Field of a `t,x,y,p` line.
const FIELDS: [&str; 4] = ["t", "x", "y", "p"];

/// A line that could not be turned into an [`Event`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: expected 4 comma-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: field `{field}` is not a valid integer: {token:?}")]
    NotANumber {
        line: usize,
        field: &'static str,
        token: String,
    },
    #[error("line {line}: field `p` must be one of 0, 1, -1, +1, got {token:?}")]
    Polarity { line: usize, token: String },
    #[error("line {line}: {field} out of range ({value} >= {limit})")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: u64,
        limit: u16,
    },
}

impl ParseError {
    fn at_line(mut self, n: usize) -> Self {
        match &mut self {
            ParseError::FieldCount { line, .. }
            | ParseError::NotANumber { line, .. }
            | ParseError::Polarity { line, .. }
            | ParseError::OutOfRange { line, .. } => *line = n,
        }
        self
    }
}

/// Error while reading a whole stream.
#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: timestamp decreases from {prev} to {next}")]
    Order { line: usize, prev: u64, next: u64 },
}

/// What to do with events whose timestamp is lower than their predecessor's.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OrderPolicy {
    /// Fail on the first decrease.
    #[default]
    Strict,
    /// Stable-sort the whole stream by timestamp.
    Sort,
    /// Pass events through unchanged and count the decreases.
    Warn,
}

/// Parses one `t,x,y,p` line. Polarity `0` is read as negative.
///
/// Line numbers in the returned error are 0; [`EventReader`] fills them in.
pub fn parse_event_line(line: &str, geometry: SensorGeometry) -> Result<Event, ParseError> {
    parse_bytes(line.as_bytes(), geometry)
}

/// Inverse of [`parse_event_line`].
pub fn format_event_line(event: &Event) -> String {
    event.to_string()
}

fn parse_uint(tok: &[u8], field: &'static str) -> Result<u64, ParseError> {
    let bad = || ParseError::NotANumber {
        line: 0,
        field,
        token: String::from_utf8_lossy(tok).into_owned(),
    };
    let digits = tok.strip_prefix(b"+").unwrap_or(tok);
    if digits.is_empty() || digits.len() > 20 {
        return Err(bad());
    }
    let mut v: u64 = 0;
    for &b in digits {
        if !b.is_ascii_digit() {
            return Err(bad());
        }
        v = v
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as u64))
            .ok_or_else(bad)?;
    }
    Ok(v)
}

fn trim(mut s: &[u8]) -> &[u8] {
    while let [first, rest @ ..] = s {
        if first.is_ascii_whitespace() {
            s = rest;
        } else {
            break;
        }
    }
    while let [rest @ .., last] = s {
        if last.is_ascii_whitespace() {
            s = rest;
        } else {
            break;
        }
    }
    s
}

/// Reads 1 to `max_digits` decimal digits followed by `stop`, advancing
/// `pos` past the separator.
#[inline(always)]
fn canonical_uint(data: &[u8], pos: &mut usize, max_digits: usize, stop: u8) -> Option<u64> {
    let begin = *pos;
    let mut i = begin;
    let mut v = 0u64;
    while let Some(&b) = data.get(i) {
        let d = b.wrapping_sub(b'0');
        if d > 9 || i - begin == max_digits {
            break;
        }
        v = v * 10 + d as u64;
        i += 1;
    }
    let digits = i - begin;
    if digits == 0 || data.get(i) != Some(&stop) {
        return None;
    }
    *pos = i + 1;
    Some(v)
}

/// One-pass parse of the common case starting at `pos`: bare digits, no
/// spaces, polarity `0`, `1`, `-1` or `+1`, coordinates in range, then a line
/// end. On success `pos` is past the line terminator. Anything else yields
/// `None` (with `pos` unspecified) and the line goes through [`parse_bytes`]
/// for a proper diagnosis.
#[inline(always)]
fn parse_canonical_at(data: &[u8], pos: &mut usize, geometry: SensorGeometry) -> Option<Event> {
    // 19 digits always fit in a u64
    let t = canonical_uint(data, pos, 19, b',')?;
    let x = canonical_uint(data, pos, 5, b',')?;
    let y = canonical_uint(data, pos, 5, b',')?;
    let (p, len) = match data.get(*pos..).unwrap_or(&[]) {
        [b'1', ..] => (Polarity::Positive, 1),
        [b'0', ..] => (Polarity::Negative, 1),
        [b'+', b'1', ..] => (Polarity::Positive, 2),
        [b'-', b'1', ..] => (Polarity::Negative, 2),
        _ => return None,
    };
    *pos += len;
    match data.get(*pos..).unwrap_or(&[]) {
        [] => {}
        [b'\n', ..] => *pos += 1,
        [b'\r', b'\n', ..] => *pos += 2,
        [b'\r'] => *pos += 1,
        _ => return None,
    }
    if x >= geometry.width() as u64 || y >= geometry.height() as u64 {
        return None;
    }
    Some(Event {
        t,
        x: x as u16,
        y: y as u16,
        p,
    })
}

fn parse_canonical(line: &[u8], geometry: SensorGeometry) -> Option<Event> {
    let mut pos = 0;
    parse_canonical_at(line, &mut pos, geometry).filter(|_| pos == line.len())
}

fn parse_bytes(line: &[u8], geometry: SensorGeometry) -> Result<Event, ParseError> {
    let mut toks: [&[u8]; 4] = [&[]; 4];
    let mut found = 0;
    for tok in line.split(|&b| b == b',') {
        if found < 4 {
            toks[found] = trim(tok);
        }
        found += 1;
    }
    if found != 4 {
        return Err(ParseError::FieldCount { line: 0, found });
    }
    let t = parse_uint(toks[0], FIELDS[0])?;
    let x = parse_uint(toks[1], FIELDS[1])?;
    let y = parse_uint(toks[2], FIELDS[2])?;
    let p = match toks[3] {
        b"1" | b"+1" => Polarity::Positive,
        b"0" | b"-1" => Polarity::Negative,
        other => {
            return Err(ParseError::Polarity {
                line: 0,
                token: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    if x >= geometry.width() as u64 {
        return Err(ParseError::OutOfRange {
            line: 0,
            field: "x",
            value: x,
            limit: geometry.width(),
        });
    }
    if y >= geometry.height() as u64 {
        return Err(ParseError::OutOfRange {
            line: 0,
            field: "y",
            value: y,
            limit: geometry.height(),
        });
    }
    Ok(Event {
        t,
        x: x as u16,
        y: y as u16,
        p,
    })
}

/// Streaming CSV reader. Blank lines and lines starting with `#` are skipped.
///
/// Order checking is left to the caller; see [`read_event_stream`].
pub struct EventReader<R> {
    inner: R,
    geometry: SensorGeometry,
    buf: Vec<u8>,
    line: usize,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(inner: R, geometry: SensorGeometry) -> Self {
        EventReader {
            inner,
            geometry,
            buf: Vec::with_capacity(64),
            line: 0,
        }
    }

    /// 1-based number of the line most recently read.
    pub fn line(&self) -> usize {
        self.line
    }
}

/// Parses one raw line; `None` for blank and comment lines.
#[inline]
fn parse_raw(raw: &[u8], geometry: SensorGeometry, line: usize) -> Option<Result<Event, ReadError>> {
    if let Some(e) = parse_canonical(raw, geometry) {
        return Some(Ok(e));
    }
    let body = trim(raw);
    if body.is_empty() || body[0] == b'#' {
        return None;
    }
    Some(parse_bytes(body, geometry).map_err(|e| ReadError::Parse(e.at_line(line))))
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<Event, ReadError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let avail = match self.inner.fill_buf() {
                Ok(a) => a,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Some(Err(e.into())),
            };
            if avail.is_empty() {
                // last line without a trailing newline
                if self.buf.is_empty() {
                    return None;
                }
                self.line += 1;
                let parsed = parse_raw(&self.buf, self.geometry, self.line);
                self.buf.clear();
                match parsed {
                    Some(r) => return Some(r),
                    None => continue,
                }
            }
            let Some(pos) = avail.iter().position(|&b| b == b'\n') else {
                let n = avail.len();
                self.buf.extend_from_slice(avail);
                self.inner.consume(n);
                continue;
            };
            self.line += 1;
            let parsed = if self.buf.is_empty() {
                parse_raw(&avail[..pos], self.geometry, self.line)
            } else {
                self.buf.extend_from_slice(&avail[..pos]);
                let r = parse_raw(&self.buf, self.geometry, self.line);
                self.buf.clear();
                r
            };
            self.inner.consume(pos + 1);
            if let Some(r) = parsed {
                return Some(r);
            }
        }
    }
}

/// Block-oriented reader for bulk conversion. Reads large blocks, parses
/// them in one pass and hands out events in batches.
///
/// [`OrderPolicy::Strict`] fails on the first timestamp decrease; the other
/// policies pass events through unchanged and count decreases in
/// [`out_of_order`](Self::out_of_order). Sorting is left to the caller.
pub struct EventBatchReader<R> {
    inner: R,
    geometry: SensorGeometry,
    policy: OrderPolicy,
    buf: Vec<u8>,
    /// Unparsed bytes are `buf[start..end]`.
    start: usize,
    end: usize,
    line: usize,
    last_t: u64,
    out_of_order: usize,
    eof: bool,
}

impl<R: io::Read> EventBatchReader<R> {
    pub const BLOCK: usize = 1 << 20;

    pub fn new(inner: R, geometry: SensorGeometry, policy: OrderPolicy) -> Self {
        EventBatchReader {
            inner,
            geometry,
            policy,
            buf: vec![0; Self::BLOCK],
            start: 0,
            end: 0,
            line: 0,
            last_t: 0,
            out_of_order: 0,
            eof: false,
        }
    }

    pub fn out_of_order(&self) -> usize {
        self.out_of_order
    }

    /// Appends the events of the next block to `out`. Returns `false` once
    /// the input is exhausted.
    pub fn next_batch(&mut self, out: &mut Vec<Event>) -> Result<bool, ReadError> {
        loop {
            if self.eof {
                if self.start == self.end {
                    return Ok(false);
                }
                // final line without a newline
                let (s, e) = (self.start, self.end);
                self.start = e;
                self.parse_region(s, e, out)?;
                return Ok(true);
            }
            self.fill()?;
            let filled = &self.buf[self.start..self.end];
            if let Some(last_nl) = filled.iter().rposition(|&b| b == b'\n') {
                let (s, e) = (self.start, self.start + last_nl + 1);
                self.start = e;
                self.parse_region(s, e, out)?;
                return Ok(true);
            }
            if !self.eof && self.end - self.start == self.buf.len() {
                // a single line longer than the buffer
                self.buf.resize(self.buf.len() * 2, 0);
            }
        }
    }

    /// Moves leftovers to the front and reads until the buffer is full or
    /// the input ends.
    fn fill(&mut self) -> Result<(), ReadError> {
        self.buf.copy_within(self.start..self.end, 0);
        self.end -= self.start;
        self.start = 0;
        while self.end < self.buf.len() {
            match self.inner.read(&mut self.buf[self.end..]) {
                Ok(0) => {
                    self.eof = true;
                    break;
                }
                Ok(n) => self.end += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    fn parse_region(&mut self, from: usize, to: usize, out: &mut Vec<Event>) -> Result<(), ReadError> {
        let data = &self.buf[from..to];
        let geometry = self.geometry;
        let mut pos = 0;
        while pos < data.len() {
            let line_start = pos;
            self.line += 1;
            let event = match parse_canonical_at(data, &mut pos, geometry) {
                Some(e) => e,
                None => {
                    let rest = &data[line_start..];
                    let len = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
                    pos = line_start + len + 1;
                    match parse_raw(&rest[..len], geometry, self.line) {
                        Some(r) => r?,
                        None => continue,
                    }
                }
            };
            if event.t < self.last_t {
                if self.policy == OrderPolicy::Strict {
                    return Err(ReadError::Order {
                        line: self.line,
                        prev: self.last_t,
                        next: event.t,
                    });
                }
                self.out_of_order += 1;
            }
            self.last_t = event.t;
            out.push(event);
        }
        Ok(())
    }
}

/// Fully materialised stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventStream {
    pub events: Vec<Event>,
    /// Timestamp decreases seen in the input (before any sorting).
    pub out_of_order: usize,
}

/// Reads every event from `source`, applying `policy` to timestamp order.
pub fn read_event_stream<R: BufRead>(
    source: R,
    geometry: SensorGeometry,
    policy: OrderPolicy,
) -> Result<EventStream, ReadError> {
    let mut reader = EventReader::new(source, geometry);
    let mut events: Vec<Event> = Vec::new();
    let mut out_of_order = 0;
    while let Some(ev) = reader.next() {
        let ev = ev?;
        if let Some(prev) = events.last() {
            if ev.t < prev.t {
                if policy == OrderPolicy::Strict {
                    return Err(ReadError::Order {
                        line: reader.line(),
                        prev: prev.t,
                        next: ev.t,
                    });
                }
                out_of_order += 1;
            }
        }
        events.push(ev);
    }
    if policy == OrderPolicy::Sort && out_of_order > 0 {
        // stable
        events.sort_by_key(|e| e.t);
    }
    Ok(EventStream {
        events,
        out_of_order,
    })
}
