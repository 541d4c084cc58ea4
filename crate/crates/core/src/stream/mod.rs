//! Streaming tokenizers, path matching, and view builders.
//!
//! A [`StreamBuilder`] consumes an object body as a token stream, dispatches
//! events to installed observers for the nodes their subscriptions match,
//! and re-serializes the surviving tokens into the response. Memory stays
//! bounded by nesting depth plus the largest scalar (JSON) or record (CSV);
//! the whole document is never materialized. Two pieces may buffer more:
//! a subscription whose match is a container captures that subtree to hand
//! it to the observer as text, and installing an observer that can drop
//! records makes the serializer hold each in-progress record so a dropped
//! one can be rewound before any of it reaches the sink.
//!
//! Builders are selected by object name extension via
//! [`StreamBuilder::for_object_name`]: `.json` and `.csv` today. Adding a
//! format means adding a tokenizer, a `StreamBuilder` variant, and an arm
//! in that factory.

mod csv_builder;
mod json_builder;
mod json_token;
mod jsonpath;

pub use csv_builder::{CsvBuilder, CsvTokenizer};
pub use json_builder::JsonBuilder;
pub use json_token::JsonTokenizer;
pub use jsonpath::{PathMatcher, PathStep};

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::CompiledEvent;

/// Event type names the stream layer can serve.
pub fn registered_event_types() -> BTreeSet<String> {
    [
        "JSONPathEvent",
        "JSONPathMarkerEvent",
        "ColumnEvent",
        "ColumnMarkerEvent",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// Errors from tokenizing, building, or observer execution.
#[derive(Debug, Error)]
pub enum StreamError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {detail}")]
    Parse { offset: u64, detail: String },
    #[error("no stream builder for object format `{0}`")]
    UnsupportedFormat(String),
    #[error("event type `{event_type}` is incompatible with the {format} builder")]
    IncompatibleEventType { event_type: String, format: String },
    #[error("function `{udf_id}` failed: {detail}")]
    Observer { udf_id: String, detail: String },
    #[error("completion outputs require a top-level JSON object")]
    CompletionRequiresObjectRoot,
}

impl StreamError {
    pub(crate) fn parse(offset: u64, detail: impl Into<String>) -> Self {
        StreamError::Parse {
            offset,
            detail: detail.into(),
        }
    }
}

/// A scalar carried by a token or event. Numbers keep their source lexeme
/// so re-serialization is byte-faithful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarValue {
    Str(String),
    Num(String),
    Bool(bool),
    Null,
}

/// Token kinds produced by the tokenizers. JSON streams use the structural
/// and scalar kinds; CSV streams use the record and field kinds. Both end
/// with `EndOfStream`.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    ObjectStart,
    ObjectEnd,
    ArrayStart,
    ArrayEnd,
    Key(String),
    Scalar(ScalarValue),
    RecordStart,
    RecordEnd,
    Field { index: u32, text: String },
    EndOfStream,
}

/// A token plus the byte offset where it starts in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamToken {
    pub kind: TokenKind,
    pub offset: u64,
}

/// Where a matched node sits in the document.
#[derive(Debug, Clone, PartialEq)]
pub enum EventPath {
    /// Object-member key stack; array indices contribute nothing.
    Json(Vec<String>),
    /// 0-based CSV column.
    Column(u32),
}

/// The matched node's value as handed to observers.
#[derive(Debug, Clone, PartialEq)]
pub enum EventValue {
    Scalar(ScalarValue),
    /// Canonical compact text of a container value.
    Subtree(String),
}

impl EventValue {
    /// Canonical JSON text of the value.
    pub fn canonical_text(&self) -> String {
        match self {
            EventValue::Scalar(ScalarValue::Str(s)) => {
                let mut out = Vec::with_capacity(s.len() + 2);
                write_json_string(&mut out, s);
                String::from_utf8(out).expect("escaped JSON is UTF-8")
            }
            EventValue::Scalar(ScalarValue::Num(lexeme)) => lexeme.clone(),
            EventValue::Scalar(ScalarValue::Bool(b)) => b.to_string(),
            EventValue::Scalar(ScalarValue::Null) => "null".to_string(),
            EventValue::Subtree(text) => text.clone(),
        }
    }

    /// The bare string when the value is a string scalar.
    pub fn as_str(&self) -> Option<&str> {
        match self {
            EventValue::Scalar(ScalarValue::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub(crate) fn from_json(value: &serde_json::Value) -> Self {
        match value {
            serde_json::Value::String(s) => EventValue::Scalar(ScalarValue::Str(s.clone())),
            serde_json::Value::Number(n) => EventValue::Scalar(ScalarValue::Num(n.to_string())),
            serde_json::Value::Bool(b) => EventValue::Scalar(ScalarValue::Bool(*b)),
            serde_json::Value::Null => EventValue::Scalar(ScalarValue::Null),
            other => EventValue::Subtree(
                serde_json::to_string(other).expect("JSON value serializes"),
            ),
        }
    }
}

/// An event delivered to an observer: one matched node.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub type_name: String,
    pub path: EventPath,
    pub value: EventValue,
    /// Object label attached by marker subscriptions.
    pub marker: Option<String>,
    /// Byte offset of the matched value in the source.
    pub position: u64,
}

/// What an observer decided about the event's node.
#[derive(Debug, Clone, PartialEq)]
pub struct EventVerdict {
    pub action: VerdictAction,
    /// Stop the remaining chain for this node.
    pub halt_chain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VerdictAction {
    /// Keep the node as currently valued.
    Pass,
    /// Substitute the node's value.
    Replace(EventValue),
    /// Remove the node (or its whole record) from the view.
    Drop(DropScope),
}

/// How much a `Drop` removes. `Record` removes the innermost enclosing
/// array element (JSON) or the current record (CSV); outside any record it
/// degrades to `Element`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropScope {
    Element,
    Record,
}

impl EventVerdict {
    pub fn pass() -> Self {
        EventVerdict {
            action: VerdictAction::Pass,
            halt_chain: false,
        }
    }

    pub fn replace(value: EventValue) -> Self {
        EventVerdict {
            action: VerdictAction::Replace(value),
            halt_chain: false,
        }
    }

    pub fn drop_element() -> Self {
        EventVerdict {
            action: VerdictAction::Drop(DropScope::Element),
            halt_chain: false,
        }
    }

    pub fn drop_record() -> Self {
        EventVerdict {
            action: VerdictAction::Drop(DropScope::Record),
            halt_chain: false,
        }
    }

    pub fn halting(mut self) -> Self {
        self.halt_chain = true;
        self
    }
}

/// Output appended when a stream completes: a named field (JSON) or a
/// trailing record (CSV).
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub field: String,
    pub value: serde_json::Value,
}

/// Observer failure, surfaced as [`StreamError::Observer`]. The response is
/// aborted rather than served partially transformed.
#[derive(Debug)]
pub struct ObserverError {
    pub udf_id: String,
    pub detail: String,
}

/// A chain participant. One observer instance serves one request.
pub trait EventObserver {
    /// Handles one matched node.
    fn on_event(&mut self, event: &Event) -> Result<EventVerdict, ObserverError>;

    /// Called once after the last token; may emit an appended output.
    fn on_complete(&mut self) -> Result<Option<Completion>, ObserverError>;

    /// Whether this observer can return `Drop(Record)`. Builders that must
    /// rewind records only buffer them when some observer returns true.
    fn may_drop_records(&self) -> bool {
        false
    }
}

/// Counters for one streamed response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Matched nodes that entered the observer chain, including events
    /// synthesized for completion outputs.
    pub events_emitted: u64,
}

/// Format-specific view builders.
pub enum StreamBuilder {
    Json(JsonBuilder),
    Csv(CsvBuilder),
}

impl fmt::Debug for StreamBuilder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("StreamBuilder").field(&self.format()).finish()
    }
}

impl StreamBuilder {
    /// Picks a builder from the object name's extension (case-insensitive).
    pub fn for_object_name(name: &str) -> Result<Self, StreamError> {
        let ext = name
            .rsplit_once('.')
            .map(|(_, e)| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "json" => Ok(StreamBuilder::Json(JsonBuilder::new())),
            "csv" => Ok(StreamBuilder::Csv(CsvBuilder::new())),
            other => Err(StreamError::UnsupportedFormat(other.to_string())),
        }
    }

    pub fn format(&self) -> &'static str {
        match self {
            StreamBuilder::Json(_) => "JSON",
            StreamBuilder::Csv(_) => "CSV",
        }
    }

    /// Subscribes `observer` to the nodes `event` describes. Subscriptions
    /// fire in installation order, which the engine keeps equal to plan
    /// order.
    pub fn install(
        &mut self,
        event: &CompiledEvent,
        observer: Box<dyn EventObserver>,
    ) -> Result<(), StreamError> {
        match (self, event) {
            (StreamBuilder::Json(b), CompiledEvent::JsonPath { .. }) => {
                b.install(event, observer);
                Ok(())
            }
            (StreamBuilder::Csv(b), CompiledEvent::Column { .. }) => {
                b.install(event, observer);
                Ok(())
            }
            (builder, event) => Err(StreamError::IncompatibleEventType {
                event_type: event.type_name().to_string(),
                format: builder.format().to_string(),
            }),
        }
    }

    /// Streams `source` into `sink`, transforming per the installed
    /// subscriptions. Consumes the builder's subscriptions for this one
    /// pass; a builder serves a single request.
    pub fn run(
        &mut self,
        source: &mut dyn Read,
        sink: &mut dyn Write,
    ) -> Result<StreamStats, StreamError> {
        match self {
            StreamBuilder::Json(b) => b.run(source, sink),
            StreamBuilder::Csv(b) => b.run(source, sink),
        }
    }
}

/// Writes `s` as a quoted JSON string with minimal escaping.
pub(crate) fn write_json_string(out: &mut Vec<u8>, s: &str) {
    out.push(b'"');
    for c in s.chars() {
        match c {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            '\u{0008}' => out.extend_from_slice(b"\\b"),
            '\u{000C}' => out.extend_from_slice(b"\\f"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}
