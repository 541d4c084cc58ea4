//! Reference implementations for equivalence testing, built independently
//! of the streaming pipeline: a duplicate-preserving JSON tree parser, a
//! tree-walk path matcher, a materialize-and-filter label oracle, and a
//! seeded random document generator. Enabled by the `testkit` feature and
//! meant for test code only.

use rand::Rng;

/// A parsed JSON value that keeps what the streaming pipeline keeps:
/// member order, duplicate keys, and number lexemes exactly as written.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeValue {
    Null,
    Bool(bool),
    /// Verbatim number lexeme.
    Num(String),
    Str(String),
    Array(Vec<TreeValue>),
    Object(Vec<(String, TreeValue)>),
}

/// One step of a reference path pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleStep {
    Key(String),
    Wild,
}

/// Parses `$`, `$.a.b`, `$.a.*` into steps. Returns `None` for anything
/// the production matcher would reject.
pub fn compile_oracle_path(src: &str) -> Option<Vec<OracleStep>> {
    if src == "$" {
        return Some(Vec::new());
    }
    let rest = src.strip_prefix("$.")?;
    if rest.is_empty() {
        return None;
    }
    let mut steps = Vec::new();
    for part in rest.split('.') {
        match part {
            "" => return None,
            "*" => steps.push(OracleStep::Wild),
            key => steps.push(OracleStep::Key(key.to_string())),
        }
    }
    Some(steps)
}

fn stack_matches(stack: &[String], pat: &[OracleStep]) -> bool {
    stack.len() == pat.len()
        && stack.iter().zip(pat).all(|(k, s)| match s {
            OracleStep::Key(want) => want == k,
            OracleStep::Wild => true,
        })
}

/// All nodes whose member-key stack equals the pattern, in document order.
/// Array elements are path-transparent; a matched node's interior is not
/// searched again (outermost wins).
pub fn oracle_matches<'a>(
    root: &'a TreeValue,
    pat: &[OracleStep],
) -> Vec<(Vec<String>, &'a TreeValue)> {
    let mut out = Vec::new();
    let mut stack = Vec::new();
    walk(root, &mut stack, pat, &mut out);
    out
}

fn walk<'a>(
    node: &'a TreeValue,
    stack: &mut Vec<String>,
    pat: &[OracleStep],
    out: &mut Vec<(Vec<String>, &'a TreeValue)>,
) {
    if stack_matches(stack, pat) {
        out.push((stack.clone(), node));
        return;
    }
    match node {
        TreeValue::Object(members) => {
            for (k, v) in members {
                stack.push(k.clone());
                walk(v, stack, pat, out);
                stack.pop();
            }
        }
        TreeValue::Array(items) => {
            for v in items {
                walk(v, stack, pat, out);
            }
        }
        _ => {}
    }
}

/// Materialize-and-filter reference for label-based filtering: when access
/// is granted the document is untouched; otherwise every node matching the
/// pattern is removed. `None` means the root itself was removed.
pub fn clac_filter(root: &TreeValue, pat: &[OracleStep], granted: bool) -> Option<TreeValue> {
    if granted {
        return Some(root.clone());
    }
    let mut stack = Vec::new();
    remove(root, &mut stack, pat)
}

fn remove(node: &TreeValue, stack: &mut Vec<String>, pat: &[OracleStep]) -> Option<TreeValue> {
    if stack_matches(stack, pat) {
        return None;
    }
    Some(match node {
        TreeValue::Object(members) => {
            let mut kept = Vec::new();
            for (k, v) in members {
                stack.push(k.clone());
                let filtered = remove(v, stack, pat);
                stack.pop();
                if let Some(v) = filtered {
                    kept.push((k.clone(), v));
                }
            }
            TreeValue::Object(kept)
        }
        TreeValue::Array(items) => TreeValue::Array(
            items
                .iter()
                .filter_map(|v| remove(v, stack, pat))
                .collect(),
        ),
        other => other.clone(),
    })
}

/// Canonical compact text: original member order, verbatim number lexemes,
/// minimal string escaping. Matches what the streaming serializer emits.
pub fn to_canonical(value: &TreeValue) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &TreeValue, out: &mut String) {
    match value {
        TreeValue::Null => out.push_str("null"),
        TreeValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        TreeValue::Num(lexeme) => out.push_str(lexeme),
        TreeValue::Str(s) => write_escaped(s, out),
        TreeValue::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        TreeValue::Object(members) => {
            out.push('{');
            for (i, (k, v)) in members.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_escaped(k, out);
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
    }
}

fn write_escaped(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Recursive-descent JSON parser, written separately from the streaming
/// tokenizer so the two can check each other.
pub fn parse_tree(text: &str) -> Result<TreeValue, String> {
    let mut p = TreeParser {
        chars: text.chars().collect(),
        pos: 0,
    };
    p.skip_ws();
    let v = p.value()?;
    p.skip_ws();
    if p.pos != p.chars.len() {
        return Err(format!("trailing input at {}", p.pos));
    }
    Ok(v)
}

struct TreeParser {
    chars: Vec<char>,
    pos: usize,
}

impl TreeParser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Result<char, String> {
        let c = self.peek().ok_or("unexpected end")?;
        self.pos += 1;
        Ok(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\n' | '\r')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        if self.bump()? == c {
            Ok(())
        } else {
            Err(format!("expected `{c}` at {}", self.pos - 1))
        }
    }

    fn literal(&mut self, rest: &str, value: TreeValue) -> Result<TreeValue, String> {
        for c in rest.chars() {
            self.expect(c)?;
        }
        Ok(value)
    }

    fn value(&mut self) -> Result<TreeValue, String> {
        match self.peek().ok_or("unexpected end")? {
            '{' => self.object(),
            '[' => self.array(),
            '"' => Ok(TreeValue::Str(self.string()?)),
            't' => {
                self.pos += 1;
                self.literal("rue", TreeValue::Bool(true))
            }
            'f' => {
                self.pos += 1;
                self.literal("alse", TreeValue::Bool(false))
            }
            'n' => {
                self.pos += 1;
                self.literal("ull", TreeValue::Null)
            }
            '-' | '0'..='9' => self.number(),
            c => Err(format!("unexpected `{c}` at {}", self.pos)),
        }
    }

    fn object(&mut self) -> Result<TreeValue, String> {
        self.expect('{')?;
        let mut members = Vec::new();
        self.skip_ws();
        if self.peek() == Some('}') {
            self.pos += 1;
            return Ok(TreeValue::Object(members));
        }
        loop {
            self.skip_ws();
            let key = self.string()?;
            self.skip_ws();
            self.expect(':')?;
            self.skip_ws();
            let value = self.value()?;
            members.push((key, value));
            self.skip_ws();
            match self.bump()? {
                ',' => continue,
                '}' => return Ok(TreeValue::Object(members)),
                c => return Err(format!("expected `,` or `}}`, got `{c}`")),
            }
        }
    }

    fn array(&mut self) -> Result<TreeValue, String> {
        self.expect('[')?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.pos += 1;
            return Ok(TreeValue::Array(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value()?);
            self.skip_ws();
            match self.bump()? {
                ',' => continue,
                ']' => return Ok(TreeValue::Array(items)),
                c => return Err(format!("expected `,` or `]`, got `{c}`")),
            }
        }
    }

    fn string(&mut self) -> Result<String, String> {
        self.expect('"')?;
        let mut out = String::new();
        loop {
            let c = self.bump()?;
            match c {
                '"' => return Ok(out),
                '\\' => match self.bump()? {
                    '"' => out.push('"'),
                    '\\' => out.push('\\'),
                    '/' => out.push('/'),
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'b' => out.push('\u{8}'),
                    'f' => out.push('\u{c}'),
                    'u' => {
                        let hi = self.hex4()?;
                        let cp = if (0xD800..0xDC00).contains(&hi) {
                            self.expect('\\')?;
                            self.expect('u')?;
                            let lo = self.hex4()?;
                            if !(0xDC00..0xE000).contains(&lo) {
                                return Err("bad low surrogate".to_string());
                            }
                            0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00)
                        } else {
                            hi
                        };
                        out.push(char::from_u32(cp).ok_or("bad code point")?);
                    }
                    c => return Err(format!("bad escape `\\{c}`")),
                },
                c if (c as u32) < 0x20 => return Err("raw control character".to_string()),
                c => out.push(c),
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, String> {
        let mut v = 0u32;
        for _ in 0..4 {
            let c = self.bump()?;
            v = v * 16 + c.to_digit(16).ok_or(format!("bad hex digit `{c}`"))?;
        }
        Ok(v)
    }

    fn number(&mut self) -> Result<TreeValue, String> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        match self.peek() {
            Some('0') => self.pos += 1,
            Some('1'..='9') => {
                while matches!(self.peek(), Some('0'..='9')) {
                    self.pos += 1;
                }
            }
            _ => return Err("bad number".to_string()),
        }
        if self.peek() == Some('.') {
            self.pos += 1;
            if !matches!(self.peek(), Some('0'..='9')) {
                return Err("bad fraction".to_string());
            }
            while matches!(self.peek(), Some('0'..='9')) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if !matches!(self.peek(), Some('0'..='9')) {
                return Err("bad exponent".to_string());
            }
            while matches!(self.peek(), Some('0'..='9')) {
                self.pos += 1;
            }
        }
        Ok(TreeValue::Num(self.chars[start..self.pos].iter().collect()))
    }
}

const KEY_POOL: &[&str] = &["a", "b", "k1", "k2", "salary", "items", "name", "x"];

const NUM_POOL: &[&str] = &[
    "0",
    "-0",
    "1",
    "42",
    "-7",
    "3.14",
    "-0.5",
    "1e3",
    "-2E-4",
    "0.0001",
    "12345678901234567890123456789",
    "1.7976931348623157e308",
];

const STR_POOL: &[&str] = &[
    "",
    "plain",
    "with \"quote\"",
    "tab\tand\nnewline",
    "π ≈ 3.14159",
    "emoji 😀 pair",
    "back\\slash",
    "ctrl\u{1}char",
    "a/slash",
];

/// Random small document with duplicate keys, varied number lexemes, and
/// awkward strings. Deterministic for a seeded generator.
pub fn random_document<R: Rng>(rng: &mut R, depth: u32) -> TreeValue {
    if depth > 0 {
        match rng.gen_range(0..4) {
            0 => {
                let n = rng.gen_range(0..4);
                let mut members = Vec::new();
                for _ in 0..n {
                    let key = KEY_POOL[rng.gen_range(0..KEY_POOL.len())].to_string();
                    members.push((key, random_document(rng, depth - 1)));
                }
                // Occasional duplicate key.
                if !members.is_empty() && rng.gen_bool(0.15) {
                    let (k, _) = members[rng.gen_range(0..members.len())].clone();
                    members.push((k, random_document(rng, depth - 1)));
                }
                return TreeValue::Object(members);
            }
            1 => {
                let n = rng.gen_range(0..4);
                return TreeValue::Array(
                    (0..n).map(|_| random_document(rng, depth - 1)).collect(),
                );
            }
            _ => {}
        }
    }
    match rng.gen_range(0..4) {
        0 => TreeValue::Null,
        1 => TreeValue::Bool(rng.gen()),
        2 => TreeValue::Num(NUM_POOL[rng.gen_range(0..NUM_POOL.len())].to_string()),
        _ => TreeValue::Str(STR_POOL[rng.gen_range(0..STR_POOL.len())].to_string()),
    }
}

/// Random path over the same key pool, 1-3 steps, occasional wildcards.
pub fn random_path<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(0.05) {
        return "$".to_string();
    }
    let steps = rng.gen_range(1..=3);
    let mut out = String::from("$");
    for _ in 0..steps {
        out.push('.');
        if rng.gen_bool(0.25) {
            out.push('*');
        } else {
            out.push_str(KEY_POOL[rng.gen_range(0..KEY_POOL.len())]);
        }
    }
    out
}

/// Renders the tree as JSON with randomized whitespace and randomized (but
/// always valid) string escaping, to exercise tokenizer edge cases.
pub fn to_spaced<R: Rng>(value: &TreeValue, rng: &mut R) -> String {
    let mut out = String::new();
    write_spaced(value, rng, &mut out);
    out
}

fn pad<R: Rng>(rng: &mut R, out: &mut String) {
    for _ in 0..rng.gen_range(0..3) {
        out.push([' ', '\t', '\n', '\r'][rng.gen_range(0..4)]);
    }
}

fn write_spaced<R: Rng>(value: &TreeValue, rng: &mut R, out: &mut String) {
    match value {
        TreeValue::Null => out.push_str("null"),
        TreeValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        TreeValue::Num(lexeme) => out.push_str(lexeme),
        TreeValue::Str(s) => write_fancy_escaped(s, rng, out),
        TreeValue::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                pad(rng, out);
                write_spaced(v, rng, out);
                pad(rng, out);
            }
            out.push(']');
        }
        TreeValue::Object(members) => {
            out.push('{');
            for (i, (k, v)) in members.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                pad(rng, out);
                write_fancy_escaped(k, rng, out);
                pad(rng, out);
                out.push(':');
                pad(rng, out);
                write_spaced(v, rng, out);
                pad(rng, out);
            }
            out.push('}');
        }
    }
}

fn write_fancy_escaped<R: Rng>(s: &str, rng: &mut R, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        let force_unicode = rng.gen_bool(0.2);
        match c {
            '"' => out.push_str(if force_unicode { "\\u0022" } else { "\\\"" }),
            '\\' => out.push_str(if force_unicode { "\\u005c" } else { "\\\\" }),
            '\n' => out.push_str(if force_unicode { "\\u000A" } else { "\\n" }),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '/' => out.push_str(if force_unicode { "\\/" } else { "/" }),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04X}", c as u32)),
            c if force_unicode => {
                let cp = c as u32;
                if cp <= 0xFFFF {
                    out.push_str(&format!("\\u{cp:04x}"));
                } else {
                    let v = cp - 0x10000;
                    out.push_str(&format!(
                        "\\u{:04x}\\u{:04x}",
                        0xD800 + (v >> 10),
                        0xDC00 + (v & 0x3FF)
                    ));
                }
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Randomized single-trial drivers pairing the production pipeline against
/// the reference implementations above. Used by the integration tests and
/// the acceptance suite; each returns `Err` with a reproduction dump on the
/// first disagreement.
pub mod trials {
    use std::cell::RefCell;
    use std::collections::BTreeMap;
    use std::io::Cursor;
    use std::rc::Rc;
    use std::sync::Arc;

    use rand::Rng;

    use super::{
        clac_filter, compile_oracle_path, oracle_matches, random_document, random_path,
        to_canonical, to_spaced,
    };
    use crate::crypto::{encode_b64, hom_encrypt, hom_keygen, DEFAULT_PLAINTEXT_BOUND};
    use crate::engine::{
        headers, Engine, EngineConfig, EnforcementRequest, MetadataStore,
    };
    use crate::policy::{CompiledEvent, CompiledPolicy, ObjectPath, ParamValue};
    use crate::stream::{
        Completion, Event, EventObserver, EventPath, EventVerdict, ObserverError, PathMatcher,
        StreamBuilder, StreamError,
    };
    use crate::udf::{BoundUdf, Clac, RequesterInfo, StepParams, UdfContext};

    /// Observer that records every event it sees and passes it through.
    pub struct RecordingObserver {
        pub seen: Rc<RefCell<Vec<(Vec<String>, String)>>>,
    }

    impl EventObserver for RecordingObserver {
        fn on_event(&mut self, event: &Event) -> Result<EventVerdict, ObserverError> {
            let stack = match &event.path {
                EventPath::Json(s) => s.clone(),
                EventPath::Column(c) => vec![c.to_string()],
            };
            self.seen
                .borrow_mut()
                .push((stack, event.value.canonical_text()));
            Ok(EventVerdict::pass())
        }

        fn on_complete(&mut self) -> Result<Option<Completion>, ObserverError> {
            Ok(None)
        }
    }

    /// One random (document, path) trial: the streamed output must equal the
    /// tree canonicalization, and the streamed event set must equal the
    /// tree-walk oracle's.
    pub fn stream_oracle_trial<R: Rng>(rng: &mut R) -> Result<(), String> {
        let doc = random_document(rng, 4);
        let path_src = random_path(rng);
        let pat = compile_oracle_path(&path_src).expect("generated paths are valid");
        let spaced = to_spaced(&doc, rng);

        let matcher = PathMatcher::compile(&path_src)
            .map_err(|e| format!("matcher rejected `{path_src}`: {e:?}"))?;
        let event = CompiledEvent::JsonPath {
            type_name: "JSONPathEvent".to_string(),
            matcher,
            marker: None,
        };
        let seen = Rc::new(RefCell::new(Vec::new()));
        let mut builder = StreamBuilder::for_object_name("doc.json").expect("json builder");
        builder
            .install(&event, Box::new(RecordingObserver { seen: seen.clone() }))
            .expect("compatible event");
        let mut out = Vec::new();
        let stats = builder
            .run(&mut Cursor::new(spaced.as_bytes()), &mut out)
            .map_err(|e| format!("stream failed: {e}\nsource: {spaced}"))?;

        let canonical = to_canonical(&doc);
        let streamed = String::from_utf8(out).map_err(|e| e.to_string())?;
        if streamed != canonical {
            return Err(format!(
                "output mismatch\n  streamed:  {streamed}\n  canonical: {canonical}\n  source: {spaced}"
            ));
        }

        let want: Vec<(Vec<String>, String)> = oracle_matches(&doc, &pat)
            .into_iter()
            .map(|(stack, v)| (stack, to_canonical(v)))
            .collect();
        let got = seen.borrow().clone();
        if got != want {
            return Err(format!(
                "event mismatch for `{path_src}`\n  got:  {got:?}\n  want: {want:?}\n  doc: {canonical}"
            ));
        }
        if stats.events_emitted != got.len() as u64 {
            return Err(format!(
                "events_emitted {} but observer saw {}",
                stats.events_emitted,
                got.len()
            ));
        }
        Ok(())
    }

    const ULABELS: &[&str] = &["user", "treasurer", "auditor"];
    const OLABELS: &[&str] = &["public", "sensitive", "secret"];

    /// One random (document, labeling, rule set, requester label) trial: the
    /// streamed label-filtered output must equal the materialize-and-filter
    /// oracle's.
    pub fn clac_oracle_trial<R: Rng>(rng: &mut R) -> Result<(), String> {
        let doc = random_document(rng, 4);
        let path_src = random_path(rng);
        let pat = compile_oracle_path(&path_src).expect("generated paths are valid");
        let olabel = OLABELS[rng.gen_range(0..OLABELS.len())];
        let rules: Vec<(String, String)> = (0..rng.gen_range(0..4))
            .map(|_| {
                (
                    ULABELS[rng.gen_range(0..ULABELS.len())].to_string(),
                    OLABELS[rng.gen_range(0..OLABELS.len())].to_string(),
                )
            })
            .collect();
        let ulabel: Option<String> = if rng.gen_bool(0.75) {
            Some(ULABELS[rng.gen_range(0..ULABELS.len())].to_string())
        } else {
            None
        };
        let spaced = to_spaced(&doc, rng);

        let matcher = PathMatcher::compile(&path_src)
            .map_err(|e| format!("matcher rejected `{path_src}`: {e:?}"))?;
        let event = CompiledEvent::JsonPath {
            type_name: "JSONPathMarkerEvent".to_string(),
            matcher,
            marker: Some(olabel.to_string()),
        };
        let params: Vec<BTreeMap<String, ParamValue>> = rules
            .iter()
            .map(|(u, o)| {
                BTreeMap::from([
                    ("ulabel".to_string(), ParamValue::Str(u.clone())),
                    ("olabel".to_string(), ParamValue::Str(o.clone())),
                ])
            })
            .collect();
        let ctx = UdfContext {
            requester: RequesterInfo {
                user_id: "someone".to_string(),
                ulabel: ulabel.clone(),
            },
            step_params: StepParams::new(params),
            ..UdfContext::default()
        };
        let mut builder = StreamBuilder::for_object_name("doc.json").expect("json builder");
        builder
            .install(&event, Box::new(BoundUdf::new(Box::new(Clac), ctx)))
            .expect("compatible event");
        let mut out = Vec::new();
        let run = builder.run(&mut Cursor::new(spaced.as_bytes()), &mut out);

        if rules.is_empty() {
            // A rule-less filter refuses to judge the first event it sees.
            return match run {
                Err(StreamError::Observer { .. }) => Ok(()),
                Ok(_) if oracle_matches(&doc, &pat).is_empty() => Ok(()),
                other => Err(format!("empty rule set: expected observer error, got {other:?}")),
            };
        }
        run.map_err(|e| format!("stream failed: {e}\nsource: {spaced}"))?;

        let granted = ulabel
            .as_deref()
            .is_some_and(|u| rules.iter().any(|(ru, ro)| ru == u && ro == olabel));
        let want = match clac_filter(&doc, &pat, granted) {
            Some(tree) => to_canonical(&tree),
            None => String::new(),
        };
        let got = String::from_utf8(out).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!(
                "filter mismatch (granted={granted}, olabel={olabel}, ulabel={ulabel:?}, rules={rules:?}, path={path_src})\n  got:  {got}\n  want: {want}\n  doc: {}",
                to_canonical(&doc)
            ));
        }
        Ok(())
    }

    const SENTINEL: &str = "SECRET-93261";

    /// One randomized fault injection across the enforcement path. The
    /// requester is never entitled to the protected fields, so the sentinel
    /// salary text must not appear in any output, faulted or not, and the
    /// raw object must never come back verbatim while its policy exists.
    pub fn fault_injection_trial<R: Rng + rand::CryptoRng>(rng: &mut R) -> Result<(), String> {
        let config = EngineConfig {
            cache_capacity: if rng.gen_bool(0.5) { 128 } else { 0 },
            ..EngineConfig::default()
        };
        let store = Arc::new(MetadataStore::new());
        let engine = Engine::new(store.clone(), config);
        let owner = hom_keygen(rng);
        store.put("keys/alice/hom", owner.pk.to_bytes());
        store.put("labels/bob", b"user".to_vec());
        store.put("labels/tess", b"treasurer".to_vec());

        let fault = rng.gen_range(0..10u32);
        let object = if fault == 9 { "employees.csv" } else { "employees.json" };
        let policy_id = "fuzz.policy";
        let sum_chain = (6..=8).contains(&fault);
        let policy = fuzz_policy(policy_id, object, sum_chain);
        engine
            .put_policy(policy.as_bytes())
            .map_err(|e| format!("rig policy rejected: {e}"))?;

        let n = rng.gen_range(2..5);
        let raw = if sum_chain {
            let rows: Vec<String> = (0..n)
                .map(|i| {
                    let value = rng.gen_range(0..1000u64);
                    let ct = hom_encrypt(&owner.pk, value, DEFAULT_PLAINTEXT_BOUND, rng)
                        .expect("in range");
                    format!(
                        r#"{{"name":"e{i}","salary":"{}"}}"#,
                        encode_b64(&ct.to_bytes())
                    )
                })
                .collect();
            format!(
                r#"{{"employee":[{}],"note":"unprotected-part"}}"#,
                rows.join(",")
            )
        } else {
            let rows: Vec<String> = (0..n)
                .map(|i| format!(r#"{{"name":"e{i}","salary":"{SENTINEL}-{i}"}}"#))
                .collect();
            format!(
                r#"{{"employee":[{}],"note":"unprotected-part"}}"#,
                rows.join(",")
            )
        };

        let mut user = "bob";
        let mut body = raw.clone().into_bytes();
        let mut extra_headers: Vec<(&str, String)> = Vec::new();
        match fault {
            0 => {} // no fault: baseline filtered view
            1 => {
                let key = format!("policies/{policy_id}");
                let mut bytes = store.try_get(&key).expect("policy stored");
                if rng.gen_bool(0.5) && bytes.len() > 4 {
                    bytes.truncate(bytes.len() / 2);
                } else {
                    let i = rng.gen_range(0..bytes.len());
                    bytes[i] ^= 0x5a;
                }
                store.put(&key, bytes);
            }
            2 => {
                store.delete("labels/tess");
                user = "tess";
            }
            3 => {
                let garbage: Vec<u8> = (0..8).map(|_| rng.gen()).collect();
                store.put("labels/tess", garbage);
                user = "tess";
            }
            4 => {
                let cut = rng.gen_range(1..body.len());
                body.truncate(cut);
            }
            5 => {
                let key = format!("policies/{policy_id}");
                let mut plan =
                    CompiledPolicy::from_bytes(&store.try_get(&key).expect("policy stored"))
                        .expect("plan decodes");
                plan.plan[0].udf_id = "GHOST".to_string();
                store.put(&key, plan.to_bytes());
            }
            6 => {
                store.delete("keys/alice/hom");
            }
            7 => {
                let garbage: Vec<u8> = (0..32).map(|_| rng.gen()).collect();
                store.put("keys/alice/hom", garbage);
            }
            8 => {
                let value = if rng.gen_bool(0.5) {
                    "!!!not-base64!!!".to_string()
                } else {
                    let garbage: Vec<u8> = (0..24).map(|_| rng.gen()).collect();
                    encode_b64(&garbage)
                };
                extra_headers.push((headers::REENC_TOKEN, value));
            }
            9 => {} // JSON-path policy bound to a .csv object
            _ => unreachable!(),
        }

        let path = ObjectPath::new("acct", "hr", object).expect("valid path");
        let mut req = EnforcementRequest::new(path, user);
        for (name, value) in &extra_headers {
            req = req.with_header(name, value);
        }
        let mut out = Vec::new();
        let result = engine.enforce_get(&req, &mut Cursor::new(&body), &mut out);

        let rendered = String::from_utf8_lossy(&out);
        if rendered.contains(SENTINEL) {
            return Err(format!(
                "fault {fault}: sentinel leaked (result {result:?})\n  output: {rendered}"
            ));
        }
        if let Ok(stats) = &result {
            if out == raw.as_bytes() {
                return Err(format!("fault {fault}: raw object returned ({stats:?})"));
            }
            if fault == 0 && !rendered.contains("unprotected-part") {
                return Err(format!(
                    "fault {fault}: baseline view lost unprotected content: {rendered}"
                ));
            }
        }
        Ok(())
    }

    fn fuzz_policy(id: &str, object: &str, sum_chain: bool) -> String {
        let tail = if sum_chain {
            r#""Next": "Step2"
          },
          "Step2": {
            "Id": "SUM",
            "EventType": {
              "Type": "JSONPathEvent",
              "Input": [{"Predicate": "$.employee.salary"}]
            },
            "Input": [{"average": true},
                      {"keyOwner": "meta://keys/alice/hom"},
                      {"output": "$.average_salary"}],
            "Next": "Step3"
          },
          "Step3": {
            "Id": "PRE",
            "EventType": {
              "Type": "JSONPathEvent",
              "Input": [{"Predicate": "$.average_salary"}]
            },
            "Next": "End"
          }"#
        } else {
            r#""Next": "End"
          }"#
        };
        format!(
            r#"{{
          "Id": "{id}",
          "Object": "v1/{{account}}/{{container}}/{object}",
          "Action": {{
            "StartAt": "Step1",
            "Steps": {{
              "Step1": {{
                "Id": "CLAC",
                "EventType": {{
                  "Type": "JSONPathMarkerEvent",
                  "Input": [{{"Predicate": "$.employee.salary", "olabel": "sensitive"}}]
                }},
                "Input": [{{"ulabel": "treasurer", "olabel": "sensitive"}}],
                {tail}
            }}
          }}
        }}"#
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn parse_and_canonicalize() {
        let text = r#" { "b" : 2 , "a" : [ 1 , -0.5e2 , "x\u0041\n" ] , "b" : null } "#;
        let tree = parse_tree(text).unwrap();
        assert_eq!(
            to_canonical(&tree),
            r#"{"b":2,"a":[1,-0.5e2,"xA\n"],"b":null}"#
        );
    }

    #[test]
    fn surrogate_pairs_decode() {
        let tree = parse_tree(r#""\ud83d\ude00""#).unwrap();
        assert_eq!(tree, TreeValue::Str("😀".to_string()));
    }

    #[test]
    fn bad_inputs_error() {
        for bad in ["{", "[1,]", "01", "\"\\x\"", "{\"a\":1}extra", "\"\u{1}\""] {
            assert!(parse_tree(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn oracle_matches_employee_shape() {
        let doc = parse_tree(
            r#"{"employee":[{"name":"e0","salary":1},{"name":"e1","salary":2}],"salary":3}"#,
        )
        .unwrap();
        let pat = compile_oracle_path("$.employee.salary").unwrap();
        let hits = oracle_matches(&doc, &pat);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].1, &TreeValue::Num("1".to_string()));
        assert_eq!(hits[1].1, &TreeValue::Num("2".to_string()));

        let root = compile_oracle_path("$").unwrap();
        assert_eq!(oracle_matches(&doc, &root).len(), 1);

        let top = compile_oracle_path("$.salary").unwrap();
        let hits = oracle_matches(&doc, &top);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].1, &TreeValue::Num("3".to_string()));
    }

    #[test]
    fn outermost_match_wins() {
        let doc = parse_tree(r#"{"a":{"a":1}}"#).unwrap();
        let pat = compile_oracle_path("$.a").unwrap();
        let hits = oracle_matches(&doc, &pat);
        assert_eq!(hits.len(), 1);
        assert_eq!(to_canonical(hits[0].1), r#"{"a":1}"#);
    }

    #[test]
    fn clac_filter_removes_or_keeps() {
        let doc = parse_tree(r#"{"a":1,"b":{"a":2},"c":[{"a":3},4]}"#).unwrap();
        let pat = compile_oracle_path("$.*.a").unwrap();
        let kept = clac_filter(&doc, &pat, true).unwrap();
        assert_eq!(kept, doc);
        let filtered = clac_filter(&doc, &pat, false).unwrap();
        assert_eq!(to_canonical(&filtered), r#"{"a":1,"b":{},"c":[{},4]}"#);

        let root = compile_oracle_path("$").unwrap();
        assert!(clac_filter(&doc, &root, false).is_none());
    }

    #[test]
    fn spaced_rendering_reparses_identically() {
        let mut rng = ChaCha20Rng::seed_from_u64(81);
        for _ in 0..200 {
            let doc = random_document(&mut rng, 4);
            let spaced = to_spaced(&doc, &mut rng);
            let reparsed = parse_tree(&spaced).unwrap_or_else(|e| {
                panic!("reparse failed: {e}\nsource: {spaced}");
            });
            assert_eq!(reparsed, doc, "spaced: {spaced}");
        }
    }
}
