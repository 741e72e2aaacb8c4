//! Agent actions and the parser that extracts them from free-form model text.
//!
//! A model response may contain arbitrary reasoning; the action is the single
//! python-style call inside the last triple-fenced code block.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scalar argument value carried by an [`ActionCall`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Str(String),
    None,
}

impl Scalar {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Scalar::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Str(s) => {
                f.write_str("'")?;
                for c in s.chars() {
                    match c {
                        '\\' => f.write_str("\\\\")?,
                        '\'' => f.write_str("\\'")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("'")
            }
            Scalar::None => f.write_str("None"),
        }
    }
}

/// A parsed agent action: function name plus keyword arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionCall {
    pub name: String,
    #[serde(default)]
    pub args: BTreeMap<String, Scalar>,
}

impl ActionCall {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            args: BTreeMap::new(),
        }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: Scalar) -> Self {
        self.args.insert(key.into(), value);
        self
    }

    pub fn arg(&self, key: &str) -> Option<&Scalar> {
        self.args.get(key)
    }

    /// Renders the call in keyword form, e.g. `pop(id=3)`.
    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Renders the call inside a python code fence.
    pub fn render_block(&self) -> String {
        format!("```python\n{self}\n```")
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, (k, v)) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    NoCodeBlock,
    MultipleStatements,
    UnknownSyntax,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::NoCodeBlock => "no code block",
            ParseErrorKind::MultipleStatements => "multiple statements",
            ParseErrorKind::UnknownSyntax => "unknown syntax",
        })
    }
}

/// Parse failure with the byte span of the offending text in the raw output.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at bytes {}..{}: {detail}", span.start, span.end)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Range<usize>,
    pub detail: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, span: Range<usize>, detail: impl Into<String>) -> Self {
        Self {
            kind,
            span,
            detail: detail.into(),
        }
    }
}

/// Declared parameter order for every action the environments understand.
/// Positional arguments are mapped through this table.
pub fn declared_params(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "pop" | "get_children" | "found" => &["id"],
        "done" | "unreachable" | "up" | "down" | "left" | "right" => &[],
        _ => return None,
    })
}

/// Extracts the action from the last fenced code block of `raw_output`.
pub fn parse_action(raw_output: &str) -> Result<ActionCall, ParseError> {
    let (body, offset) = last_code_block(raw_output).ok_or_else(|| {
        ParseError::new(
            ParseErrorKind::NoCodeBlock,
            0..raw_output.len(),
            "expected a triple-fenced code block",
        )
    })?;
    parse_statement(body, offset)
}

/// Returns the body of the last fenced block and its byte offset. An unclosed
/// trailing fence runs to the end of the text.
fn last_code_block(text: &str) -> Option<(&str, usize)> {
    let fences: Vec<usize> = text.match_indices("```").map(|(i, _)| i).collect();
    if fences.is_empty() {
        return None;
    }
    let mut blocks = Vec::new();
    let mut iter = fences.chunks(2);
    for pair in iter.by_ref() {
        let open = pair[0] + 3;
        let close = pair.get(1).copied().unwrap_or(text.len());
        blocks.push((open, close));
    }
    let (open, close) = *blocks.last()?;
    let inner = &text[open..close];
    // Skip a language tag such as `python` on the opening line.
    let line_end = inner.find('\n').unwrap_or(inner.len());
    let first_line = &inner[..line_end];
    let skip = if !first_line.contains('(')
        && first_line.trim().chars().all(|c| c.is_ascii_alphanumeric())
    {
        (line_end + 1).min(inner.len())
    } else {
        0
    };
    Some((&inner[skip..], open + skip))
}

fn parse_statement(body: &str, offset: usize) -> Result<ActionCall, ParseError> {
    let mut statements = Vec::new();
    let mut pos = 0;
    for line in body.split_inclusive('\n') {
        let trimmed = line.trim();
        let start = offset + pos + (line.len() - line.trim_start().len());
        pos += line.len();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        statements.push((trimmed, start));
    }
    match statements.as_slice() {
        [] => Err(ParseError::new(
            ParseErrorKind::UnknownSyntax,
            offset..offset + body.len(),
            "code block is empty",
        )),
        [(stmt, start)] => CallParser::new(stmt, *start).parse(),
        [_, (second, start), ..] => Err(ParseError::new(
            ParseErrorKind::MultipleStatements,
            *start..*start + second.len(),
            "expected exactly one function call",
        )),
    }
}

struct CallParser<'a> {
    src: &'a str,
    pos: usize,
    base: usize,
}

impl<'a> CallParser<'a> {
    fn new(src: &'a str, base: usize) -> Self {
        Self { src, pos: 0, base }
    }

    fn err(&self, kind: ParseErrorKind, from: usize, detail: impl Into<String>) -> ParseError {
        let end = self.pos.max(from + 1).min(self.src.len()).max(from);
        ParseError::new(kind, self.base + from..self.base + end, detail)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                self.bump();
            }
            _ => return None,
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Some(&self.src[start..self.pos])
    }

    fn parse(mut self) -> Result<ActionCall, ParseError> {
        let name = self
            .ident()
            .ok_or_else(|| self.err(ParseErrorKind::UnknownSyntax, 0, "expected a function name"))?
            .to_string();
        self.skip_ws();
        if self.bump() != Some('(') {
            return Err(self.err(
                ParseErrorKind::UnknownSyntax,
                0,
                "expected '(' after function name",
            ));
        }

        let mut keyword = BTreeMap::new();
        let mut positional = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(')') {
                self.bump();
                break;
            }
            let arg_start = self.pos;
            let save = self.pos;
            let key = self.ident().map(str::to_string);
            self.skip_ws();
            if let (Some(key), Some('=')) = (key, self.peek()) {
                self.bump();
                self.skip_ws();
                let value = self.value()?;
                if keyword.insert(key.clone(), value).is_some() {
                    return Err(self.err(
                        ParseErrorKind::UnknownSyntax,
                        arg_start,
                        format!("duplicate argument '{key}'"),
                    ));
                }
            } else {
                if !keyword.is_empty() {
                    return Err(self.err(
                        ParseErrorKind::UnknownSyntax,
                        arg_start,
                        "positional argument follows keyword argument",
                    ));
                }
                self.pos = save;
                positional.push((self.value()?, arg_start));
            }
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some(')') => break,
                _ => {
                    return Err(self.err(
                        ParseErrorKind::UnknownSyntax,
                        arg_start,
                        "expected ',' or ')'",
                    ));
                }
            }
        }

        self.skip_ws();
        if self.pos < self.src.len() {
            let rest = self.pos;
            let kind = if self.src[rest..].starts_with(';') {
                ParseErrorKind::MultipleStatements
            } else {
                ParseErrorKind::UnknownSyntax
            };
            self.pos = self.src.len();
            return Err(self.err(kind, rest, "unexpected text after the call"));
        }

        if !positional.is_empty() {
            let params = declared_params(&name).unwrap_or(&[]);
            for (i, (value, at)) in positional.into_iter().enumerate() {
                let Some(param) = params.get(i) else {
                    return Err(self.err(
                        ParseErrorKind::UnknownSyntax,
                        at,
                        format!("'{name}' takes no positional argument #{}", i + 1),
                    ));
                };
                if keyword.insert(param.to_string(), value).is_some() {
                    return Err(self.err(
                        ParseErrorKind::UnknownSyntax,
                        at,
                        format!("argument '{param}' given twice"),
                    ));
                }
            }
        }

        Ok(ActionCall {
            name,
            args: keyword,
        })
    }

    fn value(&mut self) -> Result<Scalar, ParseError> {
        let start = self.pos;
        match self.peek() {
            Some(q @ ('\'' | '"')) => {
                self.bump();
                let mut out = String::new();
                loop {
                    match self.bump() {
                        None => {
                            return Err(self.err(
                                ParseErrorKind::UnknownSyntax,
                                start,
                                "unterminated string",
                            ));
                        }
                        Some(c) if c == q => break,
                        Some('\\') => match self.bump() {
                            Some('n') => out.push('\n'),
                            Some('t') => out.push('\t'),
                            Some(c) => out.push(c),
                            None => {
                                return Err(self.err(
                                    ParseErrorKind::UnknownSyntax,
                                    start,
                                    "unterminated string",
                                ));
                            }
                        },
                        Some(c) => out.push(c),
                    }
                }
                Ok(Scalar::Str(out))
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' => {
                self.bump();
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
                let text = &self.src[start..self.pos];
                text.parse::<i64>().map(Scalar::Int).map_err(|_| {
                    self.err(
                        ParseErrorKind::UnknownSyntax,
                        start,
                        format!("invalid integer '{text}'"),
                    )
                })
            }
            _ => match self.ident() {
                Some("None") => Ok(Scalar::None),
                // Bare identifiers are read as strings: models often drop the quotes on node ids.
                Some(word) => Ok(Scalar::Str(word.to_string())),
                None => Err(self.err(
                    ParseErrorKind::UnknownSyntax,
                    start,
                    "expected a scalar value",
                )),
            },
        }
    }
}
