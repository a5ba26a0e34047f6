use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const KEYWORD_FILE: &str = include_str!("../../data/cxx_keywords.txt");

/// The 73-entry C++ keyword list shipped in `data/cxx_keywords.txt`.
pub fn keywords() -> &'static [&'static str] {
    static LIST: OnceLock<Vec<&'static str>> = OnceLock::new();
    LIST.get_or_init(|| KEYWORD_FILE.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect())
}

pub fn is_keyword(word: &str) -> bool {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| keywords().iter().copied().collect()).contains(word)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    StringLit,
    CharLit,
    Punct,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexToken {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
}

impl LexToken {
    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == p
    }
}

const PUNCT3: [&str; 3] = ["<<=", ">>=", "..."];
const PUNCT2: [&str; 20] = [
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "^=", "|=",
    "::",
];
const PUNCT1: &str = "{}[]();,:?.+-*/%&|^!~<>=";

struct Cursor<'a> {
    chars: &'a [char],
    pos: usize,
    line: usize,
}

impl Cursor<'_> {
    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek(0)?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn at_line_start(&self) -> bool {
        self.chars[..self.pos].iter().rev().take_while(|&&c| c != '\n').all(|c| c.is_whitespace())
    }

    /// Consumes a quoted literal whose opening quote is at the cursor; stops
    /// at the closing quote or, if unterminated, before the end of the line.
    fn quoted(&mut self, quote: char, out: &mut String) {
        out.push(self.bump().unwrap_or(quote));
        while let Some(c) = self.peek(0) {
            if c == '\n' {
                return;
            }
            out.push(c);
            self.bump();
            if c == '\\' {
                if let Some(next) = self.peek(0).filter(|&n| n != '\n') {
                    out.push(next);
                    self.bump();
                }
            } else if c == quote {
                return;
            }
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Lexes decompiler pseudo-C. Never fails: anything unrecognized becomes an
/// `Unknown` token. Comments and whitespace are dropped; a `#` at the start
/// of a line swallows the rest of that line as one `Punct` token.
pub fn lex_pseudo_c(text: &str) -> Vec<LexToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut cur = Cursor { chars: &chars, pos: 0, line: 1 };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek(0) {
        let line = cur.line;
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.starts_with("//") {
            while cur.peek(0).is_some_and(|c| c != '\n') {
                cur.bump();
            }
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            while cur.peek(0).is_some() && !cur.starts_with("*/") {
                cur.bump();
            }
            cur.bump();
            cur.bump();
            continue;
        }
        let mut text = String::new();
        let kind = if c == '#' && cur.at_line_start() {
            while let Some(c) = cur.peek(0).filter(|&c| c != '\n') {
                text.push(c);
                cur.bump();
            }
            let trimmed = text.trim_end().len();
            text.truncate(trimmed);
            TokenKind::Punct
        } else if is_ident_start(c) {
            while let Some(c) = cur.peek(0).filter(|&c| is_ident_continue(c)) {
                text.push(c);
                cur.bump();
            }
            match (text.as_str(), cur.peek(0)) {
                ("L" | "u" | "U" | "u8", Some('"')) => {
                    cur.quoted('"', &mut text);
                    TokenKind::StringLit
                }
                ("L" | "u" | "U", Some('\'')) => {
                    cur.quoted('\'', &mut text);
                    TokenKind::CharLit
                }
                _ if is_keyword(&text) => TokenKind::Keyword,
                _ => TokenKind::Identifier,
            }
        } else if c.is_ascii_digit() || (c == '.' && cur.peek(1).is_some_and(|d| d.is_ascii_digit())) {
            let hex = cur.starts_with("0x") || cur.starts_with("0X");
            while let Some(c) = cur.peek(0) {
                let exponent = if hex { matches!(c, 'p' | 'P') } else { matches!(c, 'e' | 'E') };
                if is_ident_continue(c) || c == '.' {
                    text.push(c);
                    cur.bump();
                    if exponent && matches!(cur.peek(0), Some('+' | '-')) {
                        text.push(cur.bump().unwrap());
                    }
                } else {
                    break;
                }
            }
            TokenKind::Number
        } else if c == '"' {
            cur.quoted('"', &mut text);
            TokenKind::StringLit
        } else if c == '\'' {
            cur.quoted('\'', &mut text);
            TokenKind::CharLit
        } else if let Some(p) = PUNCT3.iter().chain(PUNCT2.iter()).find(|p| cur.starts_with(p)) {
            for _ in 0..p.len() {
                cur.bump();
            }
            text.push_str(p);
            TokenKind::Punct
        } else if PUNCT1.contains(c) {
            cur.bump();
            text.push(c);
            TokenKind::Punct
        } else {
            cur.bump();
            text.push(c);
            TokenKind::Unknown
        };
        tokens.push(LexToken { kind, text, line });
    }
    tokens
}
