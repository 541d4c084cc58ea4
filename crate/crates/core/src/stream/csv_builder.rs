//! CSV tokenizer and view builder.
//!
//! Dialect: comma-separated, `"` quoting with doubled quotes inside quoted
//! cells, first record is the header, records end with `\n` (a `\r\n` pair
//! is accepted on input). Columns are addressed 0-based. Canonical output
//! quotes a cell only when it contains a comma, quote, or line break, and
//! terminates every record with `\n`.
//!
//! The header row passes through untouched and fires no events. Data rows
//! fire one event per subscribed column, in field order, chaining the
//! subscriptions in installation order within a field. `Drop(Element)`
//! blanks the cell, `Drop(Record)` removes the whole row. Completion
//! outputs are appended as trailing `name,value` records.

use std::io::{Read, Write};

use super::{
    Completion, DropScope, Event, EventObserver, EventPath, EventValue, ObserverError,
    ScalarValue, StreamError, StreamStats, StreamToken, TokenKind, VerdictAction,
};
use crate::policy::CompiledEvent;

const READ_CHUNK: usize = 16 * 1024;
const FLUSH_THRESHOLD: usize = 32 * 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
enum CsvState {
    /// Before the first field of a record (or at EOF).
    RecordBoundary,
    /// Between fields inside a record.
    InRecord,
    Drained,
}

pub struct CsvTokenizer<R: Read> {
    src: R,
    buf: Vec<u8>,
    pos: usize,
    len: usize,
    offset: u64,
    state: CsvState,
    field_index: u32,
    /// Queued token when one input step yields two tokens.
    queued: Option<StreamToken>,
}

impl<R: Read> CsvTokenizer<R> {
    pub fn new(src: R) -> Self {
        CsvTokenizer {
            src,
            buf: vec![0; READ_CHUNK],
            pos: 0,
            len: 0,
            offset: 0,
            state: CsvState::RecordBoundary,
            field_index: 0,
            queued: None,
        }
    }

    pub fn bytes_read(&self) -> u64 {
        self.offset
    }

    fn fill(&mut self) -> Result<bool, StreamError> {
        self.pos = 0;
        self.len = self.src.read(&mut self.buf)?;
        Ok(self.len > 0)
    }

    fn peek(&mut self) -> Result<Option<u8>, StreamError> {
        if self.pos == self.len && !self.fill()? {
            return Ok(None);
        }
        Ok(Some(self.buf[self.pos]))
    }

    fn bump(&mut self) -> Result<Option<u8>, StreamError> {
        let b = self.peek()?;
        if b.is_some() {
            self.pos += 1;
            self.offset += 1;
        }
        Ok(b)
    }

    fn err(&self, detail: impl Into<String>) -> StreamError {
        StreamError::parse(self.offset, detail)
    }

    pub fn next_token(&mut self) -> Result<Option<StreamToken>, StreamError> {
        if let Some(tok) = self.queued.take() {
            return Ok(Some(tok));
        }
        match self.state {
            CsvState::Drained => Ok(None),
            CsvState::RecordBoundary => {
                let offset = self.offset;
                if self.peek()?.is_none() {
                    self.state = CsvState::Drained;
                    return Ok(Some(StreamToken {
                        kind: TokenKind::EndOfStream,
                        offset,
                    }));
                }
                self.state = CsvState::InRecord;
                self.field_index = 0;
                Ok(Some(StreamToken {
                    kind: TokenKind::RecordStart,
                    offset,
                }))
            }
            CsvState::InRecord => {
                let offset = self.offset;
                let (text, ended) = self.read_field()?;
                let index = self.field_index;
                self.field_index += 1;
                if ended {
                    self.state = CsvState::RecordBoundary;
                    self.queued = Some(StreamToken {
                        kind: TokenKind::RecordEnd,
                        offset: self.offset,
                    });
                }
                Ok(Some(StreamToken {
                    kind: TokenKind::Field { index, text },
                    offset,
                }))
            }
        }
    }

    /// Reads one field; returns the text and whether it ended its record.
    fn read_field(&mut self) -> Result<(String, bool), StreamError> {
        let mut raw: Vec<u8> = Vec::new();
        if self.peek()? == Some(b'"') {
            self.bump()?;
            loop {
                let Some(b) = self.bump()? else {
                    return Err(self.err("unterminated quoted cell"));
                };
                if b == b'"' {
                    if self.peek()? == Some(b'"') {
                        self.bump()?;
                        raw.push(b'"');
                    } else {
                        break;
                    }
                } else {
                    raw.push(b);
                }
            }
            let text =
                String::from_utf8(raw).map_err(|_| self.err("cell is not valid UTF-8"))?;
            match self.bump()? {
                Some(b',') => Ok((text, false)),
                Some(b'\n') | None => Ok((text, true)),
                Some(b'\r') if self.peek()? == Some(b'\n') => {
                    self.bump()?;
                    Ok((text, true))
                }
                Some(other) => Err(self.err(format!(
                    "expected separator after quoted cell, found byte 0x{other:02x}"
                ))),
            }
        } else {
            loop {
                match self.peek()? {
                    None => {
                        let text = String::from_utf8(raw)
                            .map_err(|_| self.err("cell is not valid UTF-8"))?;
                        return Ok((text, true));
                    }
                    Some(b',') => {
                        self.bump()?;
                        let text = String::from_utf8(raw)
                            .map_err(|_| self.err("cell is not valid UTF-8"))?;
                        return Ok((text, false));
                    }
                    Some(b'\n') => {
                        self.bump()?;
                        let text = String::from_utf8(raw)
                            .map_err(|_| self.err("cell is not valid UTF-8"))?;
                        return Ok((text, true));
                    }
                    Some(b'\r') => {
                        self.bump()?;
                        if self.peek()? == Some(b'\n') {
                            self.bump()?;
                            let text = String::from_utf8(raw)
                                .map_err(|_| self.err("cell is not valid UTF-8"))?;
                            return Ok((text, true));
                        }
                        raw.push(b'\r');
                    }
                    Some(b'"') => {
                        return Err(self.err("quote inside unquoted cell"));
                    }
                    Some(b) => {
                        self.bump()?;
                        raw.push(b);
                    }
                }
            }
        }
    }
}

struct CsvSub {
    columns: Vec<u32>,
    type_name: String,
    marker: Option<String>,
    obs: usize,
}

pub struct CsvBuilder {
    subs: Vec<CsvSub>,
    observers: Vec<Box<dyn EventObserver>>,
}

impl Default for CsvBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl CsvBuilder {
    pub fn new() -> Self {
        CsvBuilder {
            subs: Vec::new(),
            observers: Vec::new(),
        }
    }

    pub(crate) fn install(&mut self, event: &CompiledEvent, observer: Box<dyn EventObserver>) {
        let CompiledEvent::Column {
            type_name,
            columns,
            marker,
        } = event
        else {
            unreachable!("CSV builder installs column events only");
        };
        self.subs.push(CsvSub {
            columns: columns.clone(),
            type_name: type_name.clone(),
            marker: marker.clone(),
            obs: self.observers.len(),
        });
        self.observers.push(observer);
    }

    pub fn run(
        &mut self,
        source: &mut dyn Read,
        sink: &mut dyn Write,
    ) -> Result<StreamStats, StreamError> {
        let mut tk = CsvTokenizer::new(source);
        let mut stats = StreamStats::default();
        let mut out: Vec<u8> = Vec::with_capacity(FLUSH_THRESHOLD * 2);
        let mut written = 0u64;

        let mut header_done = false;
        let mut cells: Vec<String> = Vec::new();
        let mut record_dropped = false;

        loop {
            let Some(tok) = tk.next_token()? else {
                return Err(StreamError::parse(
                    tk.bytes_read(),
                    "token stream ended without EndOfStream",
                ));
            };
            match tok.kind {
                TokenKind::RecordStart => {
                    cells.clear();
                    record_dropped = false;
                }
                TokenKind::Field { index, text } => {
                    if record_dropped {
                        continue;
                    }
                    if !header_done {
                        cells.push(text);
                        continue;
                    }
                    let matched: Vec<usize> = (0..self.subs.len())
                        .filter(|i| self.subs[*i].columns.contains(&index))
                        .collect();
                    if matched.is_empty() {
                        cells.push(text);
                        continue;
                    }
                    stats.events_emitted += 1;
                    let mut current = EventValue::Scalar(ScalarValue::Str(text));
                    let mut alive = true;
                    for sub_idx in matched {
                        let sub = &self.subs[sub_idx];
                        let event = Event {
                            type_name: sub.type_name.clone(),
                            path: EventPath::Column(index),
                            value: current.clone(),
                            marker: sub.marker.clone(),
                            position: tok.offset,
                        };
                        let verdict = self.observers[sub.obs]
                            .on_event(&event)
                            .map_err(observer_error)?;
                        match verdict.action {
                            VerdictAction::Pass => {}
                            VerdictAction::Replace(v) => current = v,
                            VerdictAction::Drop(DropScope::Element) => alive = false,
                            VerdictAction::Drop(DropScope::Record) => {
                                alive = false;
                                record_dropped = true;
                            }
                        }
                        if verdict.halt_chain || !alive {
                            break;
                        }
                    }
                    if record_dropped {
                        continue;
                    }
                    cells.push(if alive { cell_text(&current) } else { String::new() });
                }
                TokenKind::RecordEnd => {
                    if !record_dropped {
                        write_record(&mut out, &cells);
                        header_done = true;
                    }
                    if out.len() >= FLUSH_THRESHOLD {
                        sink.write_all(&out)?;
                        written += out.len() as u64;
                        out.clear();
                    }
                }
                TokenKind::EndOfStream => {
                    for obs in self.observers.iter_mut() {
                        if let Some(Completion { field, value }) =
                            obs.on_complete().map_err(observer_error)?
                        {
                            let rendered = match &value {
                                serde_json::Value::String(s) => s.clone(),
                                other => other.to_string(),
                            };
                            write_record(&mut out, &[field, rendered]);
                        }
                    }
                    sink.write_all(&out)?;
                    written += out.len() as u64;
                    sink.flush()?;
                    stats.bytes_in = tk.bytes_read();
                    stats.bytes_out = written;
                    return Ok(stats);
                }
                _ => unreachable!("CSV tokenizer emits only CSV tokens"),
            }
        }
    }
}

fn observer_error(e: ObserverError) -> StreamError {
    StreamError::Observer {
        udf_id: e.udf_id,
        detail: e.detail,
    }
}

fn cell_text(value: &EventValue) -> String {
    match value {
        EventValue::Scalar(ScalarValue::Str(s)) => s.clone(),
        EventValue::Scalar(ScalarValue::Num(n)) => n.clone(),
        EventValue::Scalar(ScalarValue::Bool(b)) => b.to_string(),
        EventValue::Scalar(ScalarValue::Null) => String::new(),
        EventValue::Subtree(text) => text.clone(),
    }
}

fn write_record(out: &mut Vec<u8>, cells: &[String]) {
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        write_cell(out, cell);
    }
    out.push(b'\n');
}

fn write_cell(out: &mut Vec<u8>, cell: &str) {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') || cell.contains('\r') {
        out.push(b'"');
        for b in cell.bytes() {
            if b == b'"' {
                out.push(b'"');
            }
            out.push(b);
        }
        out.push(b'"');
    } else {
        out.extend_from_slice(cell.as_bytes());
    }
}
