//! Tokens, abstracted utterances and spans.

use std::fmt;

use serde::Serialize;

use crate::symbol::{Symbol, SymbolKind};
use crate::value::ColumnType;

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    Common(String),
    Unknown,
    Symbol(Symbol),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Character range `[start, end)` in the original question.
    pub source: (usize, usize),
}

pub const UNK: &str = "UNK";
pub const EMPTY: &str = "<EMPTY>";

impl Token {
    pub fn symbol(&self) -> Option<&Symbol> {
        match &self.kind {
            TokenKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_symbol(&self) -> bool {
        matches!(self.kind, TokenKind::Symbol(_))
    }

    /// Table-agnostic key fed to scorers: the common word, `UNK`, or the
    /// symbol kind (with the data type for columns).
    pub fn key(&self) -> String {
        match &self.kind {
            TokenKind::Common(w) => w.clone(),
            TokenKind::Unknown => UNK.to_string(),
            TokenKind::Symbol(s) => symbol_key(s),
        }
    }
}

pub fn symbol_key(s: &Symbol) -> String {
    match (s.kind, s.ty) {
        (SymbolKind::C, Some(t)) => format!("${}:{}", s.kind, t),
        (SymbolKind::C, None) => "$C:mixed".to_string(),
        (k, _) => format!("${k}"),
    }
}

/// Every key a symbol token can take, used to size embedding tables.
pub fn all_symbol_keys() -> Vec<String> {
    let mut keys = vec!["$T".to_string()];
    for t in [ColumnType::Str, ColumnType::Num, ColumnType::Date] {
        keys.push(format!("$C:{t}"));
    }
    keys.push("$C:mixed".to_string());
    for k in ["$V", "$N", "$D", "$A", "$G", "$F", "$S"] {
        keys.push(k.to_string());
    }
    keys
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbstractedUtterance {
    pub tokens: Vec<Token>,
}

impl AbstractedUtterance {
    pub fn new(tokens: Vec<Token>) -> Self {
        AbstractedUtterance { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token indices of symbol tokens, in order.
    pub fn symbol_positions(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_symbol())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn unknown_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::Unknown))
            .count()
    }

    pub fn keys(&self) -> Vec<String> {
        self.tokens.iter().map(Token::key).collect()
    }
}

impl fmt::Display for AbstractedUtterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let keys = self.keys();
        f.write_str(&keys.join(" "))
    }
}

/// Half-open token range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        debug_assert!(start < end, "empty span {start}..{end}");
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }

    pub fn contains(self, other: Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn disjoint(self, other: Span) -> bool {
        self.end <= other.start || other.end <= self.start
    }

    pub fn len(self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(self) -> bool {
        self.start >= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}
