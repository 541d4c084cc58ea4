//! Incremental JSON tokenizer.
//!
//! Pull-based: each call to [`JsonTokenizer::next_token`] consumes just
//! enough input to produce one token. Memory use is bounded by nesting
//! depth (an explicit container stack, no recursion) plus the largest
//! single scalar. The grammar is RFC 8259 with one deliberate allowance:
//! duplicate object keys are passed through untouched, since streams must
//! reproduce the source document rather than normalize it.
//!
//! Number tokens keep their source lexeme verbatim so values like `1e3` or
//! `-0.50` survive re-serialization byte-for-byte.

use std::io::Read;

use super::{ScalarValue, StreamError, StreamToken, TokenKind};

const READ_CHUNK: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Container {
    Object,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    /// Expecting a value; `allow_close` right after `[`.
    Value { allow_close: bool },
    /// Expecting a key; `allow_close` right after `{`.
    Key { allow_close: bool },
    /// Expecting `:` after a key.
    Colon,
    /// Expecting `,`, a container close, or end of input.
    AfterValue,
    /// Root value finished; only whitespace may remain.
    Finished,
    /// EndOfStream already emitted.
    Drained,
}

pub struct JsonTokenizer<R: Read> {
    src: R,
    buf: Vec<u8>,
    pos: usize,
    len: usize,
    /// Absolute offset of `buf[pos]`.
    offset: u64,
    stack: Vec<Container>,
    state: State,
}

impl<R: Read> JsonTokenizer<R> {
    pub fn new(src: R) -> Self {
        JsonTokenizer {
            src,
            buf: vec![0; READ_CHUNK],
            pos: 0,
            len: 0,
            offset: 0,
            stack: Vec::new(),
            state: State::Value { allow_close: false },
        }
    }

    /// Total bytes consumed from the source so far.
    pub fn bytes_read(&self) -> u64 {
        self.offset
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    fn fill(&mut self) -> Result<bool, StreamError> {
        debug_assert_eq!(self.pos, self.len);
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

    fn skip_ws(&mut self) -> Result<(), StreamError> {
        while let Some(b) = self.peek()? {
            match b {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    self.pos += 1;
                    self.offset += 1;
                }
                _ => break,
            }
        }
        Ok(())
    }

    fn err(&self, detail: impl Into<String>) -> StreamError {
        StreamError::parse(self.offset, detail)
    }

    /// Produces the next token, or `None` once `EndOfStream` has been
    /// emitted.
    pub fn next_token(&mut self) -> Result<Option<StreamToken>, StreamError> {
        if self.state == State::Drained {
            return Ok(None);
        }
        self.skip_ws()?;
        let offset = self.offset;

        if self.state == State::Finished {
            return match self.peek()? {
                None => {
                    self.state = State::Drained;
                    Ok(Some(StreamToken {
                        kind: TokenKind::EndOfStream,
                        offset,
                    }))
                }
                Some(b) => Err(self.err(format!(
                    "trailing content after root value: byte 0x{b:02x}"
                ))),
            };
        }

        let Some(b) = self.peek()? else {
            return Err(self.err("unexpected end of input"));
        };

        let kind = match self.state {
            State::Value { allow_close } => match b {
                b'{' => {
                    self.bump()?;
                    self.stack.push(Container::Object);
                    self.state = State::Key { allow_close: true };
                    TokenKind::ObjectStart
                }
                b'[' => {
                    self.bump()?;
                    self.stack.push(Container::Array);
                    self.state = State::Value { allow_close: true };
                    TokenKind::ArrayStart
                }
                b']' if allow_close => {
                    self.bump()?;
                    debug_assert_eq!(self.stack.pop(), Some(Container::Array));
                    self.after_close();
                    TokenKind::ArrayEnd
                }
                b'"' => {
                    let s = self.read_string()?;
                    self.after_scalar();
                    TokenKind::Scalar(ScalarValue::Str(s))
                }
                b'-' | b'0'..=b'9' => {
                    let lexeme = self.read_number()?;
                    self.after_scalar();
                    TokenKind::Scalar(ScalarValue::Num(lexeme))
                }
                b't' => {
                    self.expect_literal(b"true")?;
                    self.after_scalar();
                    TokenKind::Scalar(ScalarValue::Bool(true))
                }
                b'f' => {
                    self.expect_literal(b"false")?;
                    self.after_scalar();
                    TokenKind::Scalar(ScalarValue::Bool(false))
                }
                b'n' => {
                    self.expect_literal(b"null")?;
                    self.after_scalar();
                    TokenKind::Scalar(ScalarValue::Null)
                }
                other => {
                    return Err(self.err(format!(
                        "expected a value, found byte 0x{other:02x}"
                    )))
                }
            },
            State::Key { allow_close } => match b {
                b'"' => {
                    let key = self.read_string()?;
                    self.state = State::Colon;
                    TokenKind::Key(key)
                }
                b'}' if allow_close => {
                    self.bump()?;
                    debug_assert_eq!(self.stack.pop(), Some(Container::Object));
                    self.after_close();
                    TokenKind::ObjectEnd
                }
                other => {
                    return Err(self.err(format!(
                        "expected an object key, found byte 0x{other:02x}"
                    )))
                }
            },
            State::Colon => match b {
                b':' => {
                    self.bump()?;
                    self.state = State::Value { allow_close: false };
                    return self.next_token();
                }
                other => {
                    return Err(self.err(format!(
                        "expected `:` after key, found byte 0x{other:02x}"
                    )))
                }
            },
            State::AfterValue => match (b, self.stack.last().copied()) {
                (b',', Some(Container::Object)) => {
                    self.bump()?;
                    self.state = State::Key { allow_close: false };
                    return self.next_token();
                }
                (b',', Some(Container::Array)) => {
                    self.bump()?;
                    self.state = State::Value { allow_close: false };
                    return self.next_token();
                }
                (b'}', Some(Container::Object)) => {
                    self.bump()?;
                    self.stack.pop();
                    self.after_close();
                    TokenKind::ObjectEnd
                }
                (b']', Some(Container::Array)) => {
                    self.bump()?;
                    self.stack.pop();
                    self.after_close();
                    TokenKind::ArrayEnd
                }
                (other, Some(Container::Object)) => {
                    return Err(self.err(format!(
                        "expected `,` or `}}`, found byte 0x{other:02x}"
                    )))
                }
                (other, Some(Container::Array)) => {
                    return Err(self.err(format!(
                        "expected `,` or `]`, found byte 0x{other:02x}"
                    )))
                }
                (other, None) => {
                    return Err(self.err(format!(
                        "trailing content after root value: byte 0x{other:02x}"
                    )))
                }
            },
            State::Finished | State::Drained => unreachable!(),
        };

        Ok(Some(StreamToken { kind, offset }))
    }

    fn after_scalar(&mut self) {
        self.state = if self.stack.is_empty() {
            State::Finished
        } else {
            State::AfterValue
        };
    }

    fn after_close(&mut self) {
        self.state = if self.stack.is_empty() {
            State::Finished
        } else {
            State::AfterValue
        };
    }

    fn expect_literal(&mut self, literal: &[u8]) -> Result<(), StreamError> {
        for want in literal {
            match self.bump()? {
                Some(b) if b == *want => {}
                _ => {
                    return Err(self.err(format!(
                        "malformed literal, expected `{}`",
                        String::from_utf8_lossy(literal)
                    )))
                }
            }
        }
        Ok(())
    }

    /// Reads a quoted string, decoding escapes. The opening quote has not
    /// been consumed yet.
    fn read_string(&mut self) -> Result<String, StreamError> {
        self.bump()?;
        let mut raw: Vec<u8> = Vec::new();
        loop {
            let Some(b) = self.bump()? else {
                return Err(self.err("unterminated string"));
            };
            match b {
                b'"' => break,
                b'\\' => {
                    let Some(esc) = self.bump()? else {
                        return Err(self.err("unterminated escape"));
                    };
                    match esc {
                        b'"' => raw.push(b'"'),
                        b'\\' => raw.push(b'\\'),
                        b'/' => raw.push(b'/'),
                        b'b' => raw.push(0x08),
                        b'f' => raw.push(0x0c),
                        b'n' => raw.push(b'\n'),
                        b'r' => raw.push(b'\r'),
                        b't' => raw.push(b'\t'),
                        b'u' => {
                            let c = self.read_unicode_escape()?;
                            let mut buf = [0u8; 4];
                            raw.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                        }
                        other => {
                            return Err(
                                self.err(format!("invalid escape `\\{}`", other as char))
                            )
                        }
                    }
                }
                b if b < 0x20 => {
                    return Err(self.err("unescaped control character in string"))
                }
                b => raw.push(b),
            }
        }
        String::from_utf8(raw).map_err(|_| self.err("string is not valid UTF-8"))
    }

    fn read_unicode_escape(&mut self) -> Result<char, StreamError> {
        let first = self.read_hex4()?;
        if (0xD800..0xDC00).contains(&first) {
            // High surrogate: a low surrogate escape must follow.
            if self.bump()? != Some(b'\\') || self.bump()? != Some(b'u') {
                return Err(self.err("unpaired surrogate escape"));
            }
            let second = self.read_hex4()?;
            if !(0xDC00..0xE000).contains(&second) {
                return Err(self.err("invalid low surrogate"));
            }
            let code = 0x10000 + ((first - 0xD800) << 10) + (second - 0xDC00);
            char::from_u32(code).ok_or_else(|| self.err("invalid surrogate pair"))
        } else if (0xDC00..0xE000).contains(&first) {
            Err(self.err("unpaired low surrogate"))
        } else {
            char::from_u32(first).ok_or_else(|| self.err("invalid unicode escape"))
        }
    }

    fn read_hex4(&mut self) -> Result<u32, StreamError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let Some(b) = self.bump()? else {
                return Err(self.err("truncated unicode escape"));
            };
            let digit = (b as char)
                .to_digit(16)
                .ok_or_else(|| self.err("invalid hex digit in unicode escape"))?;
            value = (value << 4) | digit;
        }
        Ok(value)
    }

    /// Reads a number lexeme, validating the RFC 8259 grammar.
    fn read_number(&mut self) -> Result<String, StreamError> {
        let mut lexeme = Vec::new();
        if self.peek()? == Some(b'-') {
            lexeme.push(b'-');
            self.bump()?;
        }
        match self.peek()? {
            Some(b'0') => {
                lexeme.push(b'0');
                self.bump()?;
            }
            Some(b @ b'1'..=b'9') => {
                lexeme.push(b);
                self.bump()?;
                self.digits_into(&mut lexeme, false)?;
            }
            _ => return Err(self.err("malformed number")),
        }
        if self.peek()? == Some(b'.') {
            lexeme.push(b'.');
            self.bump()?;
            self.digits_into(&mut lexeme, true)?;
        }
        if matches!(self.peek()?, Some(b'e') | Some(b'E')) {
            lexeme.push(self.bump()?.unwrap());
            if matches!(self.peek()?, Some(b'+') | Some(b'-')) {
                lexeme.push(self.bump()?.unwrap());
            }
            self.digits_into(&mut lexeme, true)?;
        }
        Ok(String::from_utf8(lexeme).expect("number lexemes are ASCII"))
    }

    fn digits_into(&mut self, lexeme: &mut Vec<u8>, at_least_one: bool) -> Result<(), StreamError> {
        let mut seen = false;
        while let Some(b @ b'0'..=b'9') = self.peek()? {
            lexeme.push(b);
            self.bump()?;
            seen = true;
        }
        if at_least_one && !seen {
            return Err(self.err("malformed number"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(input: &str) -> Vec<TokenKind> {
        let mut tk = JsonTokenizer::new(input.as_bytes());
        let mut out = Vec::new();
        while let Some(tok) = tk.next_token().unwrap() {
            out.push(tok.kind);
        }
        out
    }

    fn parse_err(input: &str) -> StreamError {
        let mut tk = JsonTokenizer::new(input.as_bytes());
        loop {
            match tk.next_token() {
                Ok(Some(_)) => continue,
                Ok(None) => panic!("`{input}` unexpectedly tokenized"),
                Err(e) => return e,
            }
        }
    }

    #[test]
    fn simple_document() {
        use ScalarValue::*;
        use TokenKind::*;
        assert_eq!(
            tokens(r#"{"a": 1, "b": [true, null], "c": "x"}"#),
            vec![
                ObjectStart,
                Key("a".into()),
                Scalar(Num("1".into())),
                Key("b".into()),
                ArrayStart,
                Scalar(Bool(true)),
                Scalar(Null),
                ArrayEnd,
                Key("c".into()),
                Scalar(Str("x".into())),
                ObjectEnd,
                EndOfStream,
            ]
        );
    }

    #[test]
    fn offsets_point_at_token_starts() {
        let input = r#"{ "k" : 42 }"#;
        let mut tk = JsonTokenizer::new(input.as_bytes());
        let offsets: Vec<(TokenKind, u64)> = std::iter::from_fn(|| {
            tk.next_token().unwrap().map(|t| (t.kind, t.offset))
        })
        .collect();
        assert_eq!(offsets[0], (TokenKind::ObjectStart, 0));
        assert_eq!(offsets[1], (TokenKind::Key("k".into()), 2));
        assert_eq!(
            offsets[2],
            (TokenKind::Scalar(ScalarValue::Num("42".into())), 8)
        );
        assert_eq!(offsets[3], (TokenKind::ObjectEnd, 11));
    }

    #[test]
    fn number_lexemes_are_verbatim() {
        let kinds = tokens(r#"[-0.50, 1e3, 0.0e-7, 12345678901234567890]"#);
        let nums: Vec<&str> = kinds
            .iter()
            .filter_map(|k| match k {
                TokenKind::Scalar(ScalarValue::Num(s)) => Some(s.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(nums, ["-0.50", "1e3", "0.0e-7", "12345678901234567890"]);
    }

    #[test]
    fn string_escapes_and_surrogates() {
        let kinds = tokens(r#"["a\"b", "\u00e9", "\ud83d\ude00", "\\n"]"#);
        let strs: Vec<&str> = kinds
            .iter()
            .filter_map(|k| match k {
                TokenKind::Scalar(ScalarValue::Str(s)) => Some(s.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(strs, ["a\"b", "é", "😀", "\\n"]);
    }

    #[test]
    fn duplicate_keys_pass_through() {
        let kinds = tokens(r#"{"e": 1, "e": 2}"#);
        let keys = kinds
            .iter()
            .filter(|k| matches!(k, TokenKind::Key(_)))
            .count();
        assert_eq!(keys, 2);
    }

    #[test]
    fn empty_containers_and_scalar_roots() {
        assert_eq!(
            tokens("{}"),
            vec![
                TokenKind::ObjectStart,
                TokenKind::ObjectEnd,
                TokenKind::EndOfStream
            ]
        );
        assert_eq!(
            tokens("[]"),
            vec![
                TokenKind::ArrayStart,
                TokenKind::ArrayEnd,
                TokenKind::EndOfStream
            ]
        );
        assert_eq!(
            tokens(" 42 "),
            vec![
                TokenKind::Scalar(ScalarValue::Num("42".into())),
                TokenKind::EndOfStream
            ]
        );
    }

    #[test]
    fn malformed_inputs_fail_with_offsets() {
        for bad in [
            "{",
            "[1,]",
            "{\"a\" 1}",
            "{\"a\": 1,}",
            "{1: 2}",
            "[01]",
            "[1.]",
            "[+1]",
            "tru",
            "\"unterminated",
            "[1] trailing",
            "{\"a\": \"\\x\"}",
            "",
            "[\"\\ud800\"]",
        ] {
            let err = parse_err(bad);
            assert!(
                matches!(err, StreamError::Parse { .. }),
                "`{bad}` gave {err:?}"
            );
        }
    }

    #[test]
    fn deep_nesting_is_iterative() {
        let depth = 40_000;
        let mut doc = String::with_capacity(depth * 2 + 1);
        doc.extend(std::iter::repeat_n('[', depth));
        doc.push('1');
        doc.extend(std::iter::repeat_n(']', depth));
        let kinds = tokens(&doc);
        assert_eq!(kinds.len(), depth * 2 + 2);
    }

    #[test]
    fn tiny_read_chunks_do_not_split_tokens() {
        struct OneByte<'a>(&'a [u8]);
        impl Read for OneByte<'_> {
            fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
                if self.0.is_empty() {
                    return Ok(0);
                }
                buf[0] = self.0[0];
                self.0 = &self.0[1..];
                Ok(1)
            }
        }
        let input = r#"{"key": [1.5e2, "va\"lue", {"nested": null}]}"#;
        let mut tk = JsonTokenizer::new(OneByte(input.as_bytes()));
        let mut kinds = Vec::new();
        while let Some(tok) = tk.next_token().unwrap() {
            kinds.push(tok.kind);
        }
        assert_eq!(kinds, tokens(input));
    }
}
