//! JSON view builder.
//!
//! Walks the token stream once, keeping a key stack for member paths.
//! Member values (and the root value) are the matchable nodes; a matched
//! node is captured (scalar token or canonicalized subtree text), handed
//! through the observer chain in installation order, and then written,
//! replaced, or omitted per the final verdict. Everything else is
//! re-serialized verbatim in compact canonical form: original key order,
//! number lexemes untouched, strings minimally escaped.
//!
//! Nodes nested inside a captured subtree do not fire their own events;
//! the outermost match consumes the subtree as a unit.
//!
//! Record drops: when an installed observer can return `Drop(Record)`,
//! the serializer holds each in-progress array element back from the sink
//! so a dropped record can be rewound without a trace. The drop removes
//! the innermost array element enclosing the match.
//!
//! Completion outputs become top-level fields written before the closing
//! brace of the root object. Each appended field is offered, as a fresh
//! event, to the subscriptions of steps later in the chain than the step
//! that produced it, so a chain can post-process its own aggregate.

use std::io::{Read, Write};

use super::json_token::JsonTokenizer;
use super::{
    write_json_string, Completion, Event, EventObserver, EventPath, EventValue, ObserverError,
    ScalarValue, StreamError, StreamStats, TokenKind, VerdictAction,
};
use crate::policy::CompiledEvent;
use crate::stream::{DropScope, PathMatcher};

const FLUSH_THRESHOLD: usize = 32 * 1024;

#[derive(Clone)]
struct OutContainer {
    is_array: bool,
    first: bool,
}

struct OutMark {
    buf_len: usize,
    containers: Vec<OutContainer>,
}

/// Compact canonical JSON writer with comma management, threshold
/// flushing, and rewindable hold marks for record buffering.
struct CanonicalOut {
    buf: Vec<u8>,
    containers: Vec<OutContainer>,
    marks: Vec<OutMark>,
    written: u64,
}

impl CanonicalOut {
    fn new() -> Self {
        CanonicalOut {
            buf: Vec::with_capacity(FLUSH_THRESHOLD * 2),
            containers: Vec::new(),
            marks: Vec::new(),
            written: 0,
        }
    }

    fn value_prefix(&mut self) {
        if let Some(c) = self.containers.last_mut() {
            if c.is_array {
                if c.first {
                    c.first = false;
                } else {
                    self.buf.push(b',');
                }
            }
        }
    }

    fn key(&mut self, name: &str) {
        let c = self
            .containers
            .last_mut()
            .expect("keys are written inside objects");
        if c.first {
            c.first = false;
        } else {
            self.buf.push(b',');
        }
        write_json_string(&mut self.buf, name);
        self.buf.push(b':');
    }

    fn scalar(&mut self, v: &ScalarValue) {
        self.value_prefix();
        match v {
            ScalarValue::Str(s) => write_json_string(&mut self.buf, s),
            ScalarValue::Num(lexeme) => self.buf.extend_from_slice(lexeme.as_bytes()),
            ScalarValue::Bool(true) => self.buf.extend_from_slice(b"true"),
            ScalarValue::Bool(false) => self.buf.extend_from_slice(b"false"),
            ScalarValue::Null => self.buf.extend_from_slice(b"null"),
        }
    }

    fn raw_value(&mut self, text: &str) {
        self.value_prefix();
        self.buf.extend_from_slice(text.as_bytes());
    }

    fn object_start(&mut self) {
        self.value_prefix();
        self.buf.push(b'{');
        self.containers.push(OutContainer {
            is_array: false,
            first: true,
        });
    }

    fn object_end(&mut self) {
        self.containers.pop();
        self.buf.push(b'}');
    }

    fn array_start(&mut self) {
        self.value_prefix();
        self.buf.push(b'[');
        self.containers.push(OutContainer {
            is_array: true,
            first: true,
        });
    }

    fn array_end(&mut self) {
        self.containers.pop();
        self.buf.push(b']');
    }

    fn push_mark(&mut self) {
        self.marks.push(OutMark {
            buf_len: self.buf.len(),
            containers: self.containers.clone(),
        });
    }

    fn pop_mark(&mut self) {
        self.marks.pop();
    }

    fn rewind_to_top_mark(&mut self) {
        let mark = self.marks.pop().expect("rewind requires a mark");
        self.buf.truncate(mark.buf_len);
        self.containers = mark.containers;
    }

    /// Bytes not pinned down by an active record mark.
    fn flushable(&self) -> usize {
        self.marks.first().map_or(self.buf.len(), |m| m.buf_len)
    }

    fn maybe_flush(&mut self, sink: &mut dyn Write) -> std::io::Result<()> {
        let n = self.flushable();
        if n >= FLUSH_THRESHOLD {
            self.flush_n(sink, n)?;
        }
        Ok(())
    }

    fn flush_n(&mut self, sink: &mut dyn Write, n: usize) -> std::io::Result<()> {
        sink.write_all(&self.buf[..n])?;
        self.written += n as u64;
        self.buf.drain(..n);
        for m in &mut self.marks {
            m.buf_len -= n;
        }
        Ok(())
    }

    fn finish(&mut self, sink: &mut dyn Write) -> std::io::Result<u64> {
        debug_assert!(self.marks.is_empty(), "unreleased record mark");
        let n = self.buf.len();
        self.flush_n(sink, n)?;
        sink.flush()?;
        Ok(self.written)
    }
}

struct JsonSub {
    matcher: PathMatcher,
    type_name: String,
    marker: Option<String>,
    obs: usize,
}

struct Frame {
    /// Entered as an object-member value: closing pops the key stack.
    pops_path: bool,
    /// Entered as an array element under record buffering: closing
    /// releases the record mark.
    is_record: bool,
}

struct RecordMark {
    frames_len: usize,
    path_len: usize,
}

pub struct JsonBuilder {
    subs: Vec<JsonSub>,
    observers: Vec<Box<dyn EventObserver>>,
    record_buffering: bool,
}

impl Default for JsonBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl JsonBuilder {
    pub fn new() -> Self {
        JsonBuilder {
            subs: Vec::new(),
            observers: Vec::new(),
            record_buffering: false,
        }
    }

    /// Registers a subscription. The caller (see `StreamBuilder::install`)
    /// guarantees `event` is a JSONPath variant.
    pub(crate) fn install(&mut self, event: &CompiledEvent, observer: Box<dyn EventObserver>) {
        let CompiledEvent::JsonPath {
            type_name,
            matcher,
            marker,
        } = event
        else {
            unreachable!("JSON builder installs JSONPath events only");
        };
        self.record_buffering |= observer.may_drop_records();
        self.subs.push(JsonSub {
            matcher: matcher.clone(),
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
        let mut tk = JsonTokenizer::new(source);
        let mut out = CanonicalOut::new();
        let mut stats = StreamStats::default();

        let mut frames: Vec<Frame> = Vec::new();
        let mut path: Vec<String> = Vec::new();
        let mut marks: Vec<RecordMark> = Vec::new();
        let mut pending_key: Option<String> = None;
        let mut root_is_object = false;
        let mut seen_root = false;
        let mut held_root_end = false;

        loop {
            let Some(tok) = tk.next_token()? else {
                return Err(StreamError::parse(
                    tk.bytes_read(),
                    "token stream ended without EndOfStream",
                ));
            };
            match tok.kind {
                TokenKind::Key(name) => {
                    pending_key = Some(name);
                }
                TokenKind::ObjectStart | TokenKind::ArrayStart | TokenKind::Scalar(_) => {
                    if !seen_root {
                        seen_root = true;
                        root_is_object = matches!(tok.kind, TokenKind::ObjectStart);
                    }
                    self.handle_value(
                        tok,
                        &mut tk,
                        &mut out,
                        &mut stats,
                        &mut frames,
                        &mut path,
                        &mut marks,
                        &mut pending_key,
                    )?;
                }
                TokenKind::ObjectEnd | TokenKind::ArrayEnd => {
                    let closes_root = frames.len() == 1;
                    if closes_root && root_is_object && !self.observers.is_empty() {
                        // Hold the root brace: completion outputs may still
                        // need to be appended inside it.
                        frames.pop();
                        held_root_end = true;
                    } else {
                        match tok.kind {
                            TokenKind::ObjectEnd => out.object_end(),
                            _ => out.array_end(),
                        }
                        let frame = frames.pop().expect("close matches an open frame");
                        if frame.pops_path {
                            path.pop();
                        }
                        if frame.is_record {
                            marks.pop();
                            out.pop_mark();
                        }
                    }
                }
                TokenKind::EndOfStream => {
                    self.finish_stream(&mut tk, &mut out, &mut stats, held_root_end)?;
                    stats.bytes_in = tk.bytes_read();
                    stats.bytes_out = out.finish(sink)?;
                    return Ok(stats);
                }
                TokenKind::RecordStart | TokenKind::RecordEnd | TokenKind::Field { .. } => {
                    unreachable!("JSON tokenizer emits no CSV tokens")
                }
            }
            out.maybe_flush(sink)?;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn handle_value(
        &mut self,
        tok: super::StreamToken,
        tk: &mut JsonTokenizer<&mut dyn Read>,
        out: &mut CanonicalOut,
        stats: &mut StreamStats,
        frames: &mut Vec<Frame>,
        path: &mut Vec<String>,
        marks: &mut Vec<RecordMark>,
        pending_key: &mut Option<String>,
    ) -> Result<(), StreamError> {
        let member = pending_key.take();
        let at_root = frames.is_empty();
        let in_array = !at_root && member.is_none();

        // Matchable nodes: the root value and object-member values.
        let matched: Vec<usize> = if at_root {
            (0..self.subs.len())
                .filter(|i| self.subs[*i].matcher.is_root())
                .collect()
        } else if let Some(key) = &member {
            path.push(key.clone());
            let m = (0..self.subs.len())
                .filter(|i| self.subs[*i].matcher.matches(path))
                .collect();
            path.pop();
            m
        } else {
            Vec::new()
        };

        let is_container =
            matches!(tok.kind, TokenKind::ObjectStart | TokenKind::ArrayStart);

        if !matched.is_empty() {
            let position = tok.offset;
            let value = match &tok.kind {
                TokenKind::Scalar(v) => EventValue::Scalar(v.clone()),
                TokenKind::ObjectStart => {
                    EventValue::Subtree(capture_subtree(tk, false)?)
                }
                TokenKind::ArrayStart => EventValue::Subtree(capture_subtree(tk, true)?),
                _ => unreachable!(),
            };
            let event_path = if at_root {
                Vec::new()
            } else {
                let mut p = path.clone();
                p.push(member.clone().expect("non-root matches are members"));
                p
            };

            stats.events_emitted += 1;
            let mut current = value;
            let mut alive = true;
            let mut record_drop = false;
            for sub_idx in matched {
                let sub = &self.subs[sub_idx];
                let event = Event {
                    type_name: sub.type_name.clone(),
                    path: EventPath::Json(event_path.clone()),
                    value: current.clone(),
                    marker: sub.marker.clone(),
                    position,
                };
                let verdict = self.observers[sub.obs]
                    .on_event(&event)
                    .map_err(observer_error)?;
                match verdict.action {
                    VerdictAction::Pass => {}
                    VerdictAction::Replace(v) => current = v,
                    VerdictAction::Drop(scope) => {
                        alive = false;
                        record_drop = scope == DropScope::Record && !marks.is_empty();
                    }
                }
                if verdict.halt_chain || !alive {
                    break;
                }
            }

            if record_drop {
                let mark = marks.pop().expect("record drop requires a mark");
                out.rewind_to_top_mark();
                skip_to_depth(tk, frames.len() - mark.frames_len)?;
                frames.truncate(mark.frames_len);
                path.truncate(mark.path_len);
            } else if alive {
                if let Some(key) = &member {
                    out.key(key);
                }
                match current {
                    EventValue::Scalar(v) => out.scalar(&v),
                    EventValue::Subtree(text) => out.raw_value(&text),
                }
            }
            return Ok(());
        }

        // Unmatched: re-serialize, tracking structure.
        let records = self.record_buffering;
        if in_array && is_container && records {
            marks.push(RecordMark {
                frames_len: frames.len(),
                path_len: path.len(),
            });
            out.push_mark();
        }
        if let Some(key) = member {
            out.key(&key);
            match tok.kind {
                TokenKind::Scalar(v) => out.scalar(&v),
                TokenKind::ObjectStart => {
                    out.object_start();
                    path.push(key);
                    frames.push(Frame {
                        pops_path: true,
                        is_record: false,
                    });
                }
                TokenKind::ArrayStart => {
                    out.array_start();
                    path.push(key);
                    frames.push(Frame {
                        pops_path: true,
                        is_record: false,
                    });
                }
                _ => unreachable!(),
            }
        } else {
            match tok.kind {
                TokenKind::Scalar(v) => out.scalar(&v),
                TokenKind::ObjectStart => {
                    out.object_start();
                    frames.push(Frame {
                        pops_path: false,
                        is_record: in_array && records,
                    });
                }
                TokenKind::ArrayStart => {
                    out.array_start();
                    frames.push(Frame {
                        pops_path: false,
                        is_record: in_array && records,
                    });
                }
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    fn finish_stream(
        &mut self,
        tk: &mut JsonTokenizer<&mut dyn Read>,
        out: &mut CanonicalOut,
        stats: &mut StreamStats,
        held_root_end: bool,
    ) -> Result<(), StreamError> {
        let mut outputs: Vec<(usize, Completion)> = Vec::new();
        for (i, obs) in self.observers.iter_mut().enumerate() {
            if let Some(completion) = obs.on_complete().map_err(observer_error)? {
                outputs.push((i, completion));
            }
        }
        // Appends need the root object's brace to still be open; a
        // non-object root (or one consumed whole by a `$` subscription)
        // cannot take them.
        if !outputs.is_empty() && !held_root_end {
            return Err(StreamError::CompletionRequiresObjectRoot);
        }

        let position = tk.bytes_read();
        for (appender, completion) in outputs {
            let later: Vec<usize> = (0..self.subs.len())
                .filter(|i| {
                    self.subs[*i].obs > appender
                        && self.subs[*i]
                            .matcher
                            .matches(std::slice::from_ref(&completion.field))
                })
                .collect();
            let mut current = EventValue::from_json(&completion.value);
            let mut alive = true;
            if !later.is_empty() {
                stats.events_emitted += 1;
                for sub_idx in later {
                    let sub = &self.subs[sub_idx];
                    let event = Event {
                        type_name: sub.type_name.clone(),
                        path: EventPath::Json(vec![completion.field.clone()]),
                        value: current.clone(),
                        marker: sub.marker.clone(),
                        position,
                    };
                    let verdict = self.observers[sub.obs]
                        .on_event(&event)
                        .map_err(observer_error)?;
                    match verdict.action {
                        VerdictAction::Pass => {}
                        VerdictAction::Replace(v) => current = v,
                        VerdictAction::Drop(_) => alive = false,
                    }
                    if verdict.halt_chain || !alive {
                        break;
                    }
                }
            }
            if alive {
                out.key(&completion.field);
                match current {
                    EventValue::Scalar(v) => out.scalar(&v),
                    EventValue::Subtree(text) => out.raw_value(&text),
                }
            }
        }

        if held_root_end {
            out.object_end();
        }
        Ok(())
    }
}

fn observer_error(e: ObserverError) -> StreamError {
    StreamError::Observer {
        udf_id: e.udf_id,
        detail: e.detail,
    }
}

/// Consumes tokens for one container value, returning its canonical text.
/// The opening token has already been consumed; `as_array` says which.
fn capture_subtree(
    tk: &mut JsonTokenizer<&mut dyn Read>,
    as_array: bool,
) -> Result<String, StreamError> {
    let mut sub = CanonicalOut::new();
    if as_array {
        sub.array_start();
    } else {
        sub.object_start();
    }
    let mut depth = 1usize;
    while depth > 0 {
        let Some(tok) = tk.next_token()? else {
            return Err(StreamError::parse(tk.bytes_read(), "truncated subtree"));
        };
        match tok.kind {
            TokenKind::Key(k) => sub.key(&k),
            TokenKind::Scalar(v) => sub.scalar(&v),
            TokenKind::ObjectStart => {
                sub.object_start();
                depth += 1;
            }
            TokenKind::ArrayStart => {
                sub.array_start();
                depth += 1;
            }
            TokenKind::ObjectEnd => {
                sub.object_end();
                depth -= 1;
            }
            TokenKind::ArrayEnd => {
                sub.array_end();
                depth -= 1;
            }
            TokenKind::EndOfStream
            | TokenKind::RecordStart
            | TokenKind::RecordEnd
            | TokenKind::Field { .. } => {
                return Err(StreamError::parse(tk.bytes_read(), "truncated subtree"))
            }
        }
    }
    Ok(String::from_utf8(sub.buf).expect("canonical JSON is UTF-8"))
}

/// Consumes tokens until nesting returns `levels` container closes up from
/// the current point, discarding everything. Used to skip the remainder of
/// a dropped record.
fn skip_to_depth(
    tk: &mut JsonTokenizer<&mut dyn Read>,
    levels: usize,
) -> Result<(), StreamError> {
    let mut rel = levels as i64;
    while rel > 0 {
        let Some(tok) = tk.next_token()? else {
            return Err(StreamError::parse(tk.bytes_read(), "truncated record"));
        };
        match tok.kind {
            TokenKind::ObjectStart | TokenKind::ArrayStart => rel += 1,
            TokenKind::ObjectEnd | TokenKind::ArrayEnd => rel -= 1,
            TokenKind::EndOfStream => {
                return Err(StreamError::parse(tk.bytes_read(), "truncated record"))
            }
            _ => {}
        }
    }
    Ok(())
}
