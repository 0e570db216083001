use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Identifier,
    Number,
    String,
    Operator,
    Keyword,
    Newline,
    Indent,
    Dedent,
}

/// Half-open byte range `[start, end)` into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn cover(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

/// One element of the code-token sequence.
///
/// `Indent` and `Dedent` tokens are zero-width with empty text; `Newline`
/// carries the `"\n"` that ends a logical line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: Span,
    pub index: usize,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_op(&self, text: &str) -> bool {
        self.is(TokenKind::Operator, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }

    /// Text used as this token's vocabulary entry. Layout tokens get
    /// printable placeholders so that vocabularies stay line-oriented.
    pub fn vocab_key(&self) -> &str {
        match self.kind {
            TokenKind::Newline => "<nl>",
            TokenKind::Indent => "<indent>",
            TokenKind::Dedent => "<dedent>",
            _ => &self.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("invalid character {ch:?} at byte offset {offset}")]
    InvalidCharacter { offset: usize, ch: char },
    #[error("unterminated string literal starting at byte offset {offset}")]
    UnterminatedString { offset: usize },
    #[error("dedent to a column that matches no enclosing block at byte offset {offset}")]
    InconsistentDedent { offset: usize },
}

pub const KEYWORDS: &[&str] = &["def", "return", "if", "elif", "else", "while", "for", "in"];

const TWO_CHAR_OPS: &[&str] = &["<=", ">=", "==", "!=", "+=", "-=", "*=", "/="];
const ONE_CHAR_OPS: &[u8] = b"+-*/%<>=(),:";

const TAB_WIDTH: usize = 8;

/// Splits MiniLang source into tokens.
///
/// Comments run from `#` to the end of the line and produce nothing. Blank
/// and comment-only lines are ignored. A `Newline` token separates logical
/// lines; end of input closes any open blocks without emitting trailing
/// `Newline`/`Dedent` tokens. Line breaks inside parentheses are joined.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    Lexer::new(source).run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    tokens: Vec<Token>,
    indents: Vec<usize>,
    depth: usize,
    /// Offset of the `\n` that ended the most recent logical line.
    pending_newline: Option<usize>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            tokens: Vec::new(),
            indents: vec![0],
            depth: 0,
            pending_newline: None,
        }
    }

    fn push(&mut self, kind: TokenKind, start: usize, end: usize) {
        let text = self.src[start..end].to_string();
        let index = self.tokens.len();
        self.tokens.push(Token { kind, text, span: Span::new(start, end), index });
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        while self.pos < self.bytes.len() {
            self.line_start()?;
        }
        Ok(self.tokens)
    }

    /// Handles one physical line beginning at `self.pos` outside parentheses.
    fn line_start(&mut self) -> Result<(), LexError> {
        let mut col = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b' ' => col += 1,
                b'\t' => col = (col / TAB_WIDTH + 1) * TAB_WIDTH,
                b'\r' | b'\x0c' => {}
                _ => break,
            }
            self.pos += 1;
        }
        match self.bytes.get(self.pos) {
            None => return Ok(()),
            Some(b'\n') => {
                self.pos += 1;
                return Ok(());
            }
            Some(b'#') => {
                self.skip_comment();
                if self.bytes.get(self.pos) == Some(&b'\n') {
                    self.pos += 1;
                }
                return Ok(());
            }
            Some(_) => {}
        }

        if let Some(nl) = self.pending_newline.take() {
            self.push(TokenKind::Newline, nl, nl + 1);
        }
        let at = self.pos;
        let top = *self.indents.last().expect("indent stack never empty");
        if col > top {
            self.indents.push(col);
            self.push(TokenKind::Indent, at, at);
        } else if col < top {
            while col < *self.indents.last().expect("indent stack never empty") {
                self.indents.pop();
                self.push(TokenKind::Dedent, at, at);
            }
            if col != *self.indents.last().expect("indent stack never empty") {
                return Err(LexError::InconsistentDedent { offset: at });
            }
        }
        self.logical_line()
    }

    fn skip_comment(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'\n' {
                break;
            }
            self.pos += 1;
        }
    }

    fn logical_line(&mut self) -> Result<(), LexError> {
        while let Some(&b) = self.bytes.get(self.pos) {
            let start = self.pos;
            match b {
                b'\n' => {
                    self.pos += 1;
                    if self.depth == 0 {
                        self.pending_newline = Some(start);
                        return Ok(());
                    }
                }
                b' ' | b'\t' | b'\r' | b'\x0c' => self.pos += 1,
                b'#' => self.skip_comment(),
                b'"' | b'\'' => self.string(b)?,
                b if b.is_ascii_digit() => {
                    self.eat_while(|c| c.is_ascii_digit());
                    if self.bytes.get(self.pos) == Some(&b'.')
                        && self.bytes.get(self.pos + 1).is_some_and(u8::is_ascii_digit)
                    {
                        self.pos += 1;
                        self.eat_while(|c| c.is_ascii_digit());
                    }
                    self.push(TokenKind::Number, start, self.pos);
                }
                b if b.is_ascii_alphabetic() || b == b'_' => {
                    self.eat_while(|c| c.is_ascii_alphanumeric() || c == b'_');
                    let word = &self.src[start..self.pos];
                    let kind = if KEYWORDS.contains(&word) {
                        TokenKind::Keyword
                    } else {
                        TokenKind::Identifier
                    };
                    self.push(kind, start, self.pos);
                }
                _ => {
                    let two = self.src.get(start..start + 2);
                    if two.is_some_and(|t| TWO_CHAR_OPS.contains(&t)) {
                        self.pos += 2;
                    } else if ONE_CHAR_OPS.contains(&b) {
                        self.pos += 1;
                        match b {
                            b'(' => self.depth += 1,
                            b')' => self.depth = self.depth.saturating_sub(1),
                            _ => {}
                        }
                    } else {
                        let ch = self.src[start..].chars().next().unwrap_or('\u{fffd}');
                        return Err(LexError::InvalidCharacter { offset: start, ch });
                    }
                    self.push(TokenKind::Operator, start, self.pos);
                }
            }
        }
        Ok(())
    }

    fn eat_while(&mut self, pred: impl Fn(u8) -> bool) {
        while self.bytes.get(self.pos).is_some_and(|&c| pred(c)) {
            self.pos += 1;
        }
    }

    fn string(&mut self, quote: u8) -> Result<(), LexError> {
        let start = self.pos;
        self.pos += 1;
        loop {
            match self.bytes.get(self.pos) {
                None | Some(b'\n') => return Err(LexError::UnterminatedString { offset: start }),
                Some(b'\\') => self.pos += 2,
                Some(&c) if c == quote => {
                    self.pos += 1;
                    break;
                }
                Some(_) => self.pos += 1,
            }
        }
        if self.pos > self.bytes.len() {
            return Err(LexError::UnterminatedString { offset: start });
        }
        self.push(TokenKind::String, start, self.pos);
        Ok(())
    }
}
