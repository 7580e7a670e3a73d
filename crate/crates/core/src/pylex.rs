//! A small Python tokenizer.
//!
//! Good enough for def/use analysis and syntax colouring of notebook cells.
//! It tracks bracket depth to tell logical from physical newlines and treats
//! IPython magics (`%matplotlib`, `!pip`) at the start of a logical line as
//! comments.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Keyword,
    Number,
    String,
    Comment,
    Op,
    /// End of a logical line.
    Newline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte range into the source.
    pub start: usize,
    pub end: usize,
    pub text: String,
    /// Zero-based physical line of the token start.
    pub line: usize,
    /// Indentation (in columns) of the physical line the token starts on.
    pub indent: usize,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == kw
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

impl std::error::Error for LexError {}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "@=", "**", "//", "<<", ">>", "<>",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    indent: usize,
    depth: Vec<char>,
    tokens: Vec<Token>,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer {
        src,
        pos: 0,
        line: 0,
        indent: 0,
        depth: Vec::new(),
        tokens: Vec::new(),
    };
    lx.run()?;
    Ok(lx.tokens)
}

/// Tokenizes as far as possible; on error the tokens before the failure are
/// returned together with the error.
pub fn tokenize_lossy(src: &str) -> (Vec<Token>, Option<LexError>) {
    let mut lx = Lexer {
        src,
        pos: 0,
        line: 0,
        indent: 0,
        depth: Vec::new(),
        tokens: Vec::new(),
    };
    let err = lx.run().err();
    (lx.tokens, err)
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn push(&mut self, kind: TokenKind, start: usize, line: usize) {
        self.tokens.push(Token {
            kind,
            start,
            end: self.pos,
            text: self.src[start..self.pos].to_string(),
            line,
            indent: self.indent,
        });
    }

    fn err<T>(&self, offset: usize, message: &str) -> Result<T, LexError> {
        Err(LexError {
            offset,
            message: message.to_string(),
        })
    }

    fn measure_indent(&mut self) {
        let rest = &self.src[self.pos..];
        let mut cols = 0;
        for c in rest.chars() {
            match c {
                ' ' => cols += 1,
                '\t' => cols = (cols / 8 + 1) * 8,
                '\x0c' => {}
                _ => break,
            }
        }
        self.indent = cols;
    }

    fn end_logical_line(&mut self) {
        if let Some(last) = self.tokens.last() {
            if last.kind != TokenKind::Newline {
                let (start, line) = (self.pos, self.line);
                self.tokens.push(Token {
                    kind: TokenKind::Newline,
                    start,
                    end: start,
                    text: String::new(),
                    line,
                    indent: self.indent,
                });
            }
        }
    }

    fn run(&mut self) -> Result<(), LexError> {
        self.measure_indent();
        let mut logical_start = true;
        while let Some(c) = self.peek() {
            let start = self.pos;
            let line = self.line;
            match c {
                '\n' => {
                    self.bump();
                    if self.depth.is_empty() {
                        self.end_logical_line();
                        logical_start = true;
                    }
                    self.measure_indent();
                }
                ' ' | '\t' | '\r' | '\x0c' => {
                    self.bump();
                }
                '\\' if matches!(self.peek_at(1), Some('\n')) => {
                    self.bump();
                    self.bump();
                }
                '\\' if self.peek_at(1) == Some('\r') && self.peek_at(2) == Some('\n') => {
                    self.bump();
                    self.bump();
                    self.bump();
                }
                '#' => {
                    self.skip_to_eol();
                    self.push(TokenKind::Comment, start, line);
                }
                '%' | '!' if logical_start && self.depth.is_empty() => {
                    // IPython magic or shell escape
                    self.skip_to_eol();
                    self.push(TokenKind::Comment, start, line);
                }
                '"' | '\'' => {
                    self.string(start)?;
                    logical_start = false;
                }
                c if c.is_ascii_digit()
                    || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) =>
                {
                    self.number();
                    self.push(TokenKind::Number, start, line);
                    logical_start = false;
                }
                c if c.is_alphabetic() || c == '_' => {
                    while let Some(c) = self.peek() {
                        if c.is_alphanumeric() || c == '_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let word = &self.src[start..self.pos];
                    let is_prefix = word.len() <= 2
                        && word.chars().all(|c| "rRbBuUfF".contains(c))
                        && matches!(self.peek(), Some('"') | Some('\''));
                    if is_prefix {
                        self.string(start)?;
                    } else if is_keyword(word) {
                        self.push(TokenKind::Keyword, start, line);
                    } else {
                        self.push(TokenKind::Name, start, line);
                    }
                    logical_start = false;
                }
                _ => {
                    self.operator(start, line)?;
                    logical_start = false;
                }
            }
        }
        if let Some(open) = self.depth.last() {
            return self.err(self.pos, &format!("unclosed '{open}'"));
        }
        self.end_logical_line();
        Ok(())
    }

    fn skip_to_eol(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    fn number(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                let exp = matches!(c, 'e' | 'E');
                self.bump();
                if exp && matches!(self.peek(), Some('+') | Some('-')) {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn string(&mut self, start: usize) -> Result<(), LexError> {
        let line = self.line;
        let quote = self.bump().expect("caller saw a quote");
        let triple = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        loop {
            let Some(c) = self.bump() else {
                return self.err(start, "unterminated string literal");
            };
            match c {
                // Raw strings still treat a backslash-quote pair as part of the literal.
                '\\' => {
                    self.bump();
                }
                '\n' if !triple => return self.err(start, "unterminated string literal"),
                c if c == quote => {
                    if !triple {
                        break;
                    }
                    if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) {
                        self.bump();
                        self.bump();
                        break;
                    }
                }
                _ => {}
            }
        }
        self.push(TokenKind::String, start, line);
        Ok(())
    }

    fn operator(&mut self, start: usize, line: usize) -> Result<(), LexError> {
        let rest = &self.src[self.pos..];
        if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
            self.pos += op.len();
            self.push(TokenKind::Op, start, line);
            return Ok(());
        }
        let c = self.bump().expect("caller saw a char");
        match c {
            '(' | '[' | '{' => self.depth.push(c),
            ')' | ']' | '}' => {
                let expected = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                if self.depth.pop() != Some(expected) {
                    return self.err(start, &format!("unbalanced '{c}'"));
                }
            }
            _ => {}
        }
        self.push(TokenKind::Op, start, line);
        Ok(())
    }
}

/// Strips prefix and quotes from a string token, returning the literal body.
pub fn string_body(token: &str) -> &str {
    let s = token.trim_start_matches(|c: char| "rRbBuUfF".contains(c));
    for q in ["\"\"\"", "'''", "\"", "'"] {
        if s.len() >= 2 * q.len() && s.starts_with(q) && s.ends_with(q) {
            return &s[q.len()..s.len() - q.len()];
        }
    }
    s
}
