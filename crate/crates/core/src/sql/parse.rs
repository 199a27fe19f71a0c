//! Recursive-descent parser for the dialect produced by the renderer.

use super::{Agg, Clause, CmpOp, Condition, SelectItem, SqlQuery, Superlative};
use crate::error::{Error, Result};
use crate::table::Table;
use crate::value::{normalize_date, parse_number, Value};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Str(String),
    Num(f64),
    Sym(&'static str),
}

fn lex(input: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: &str| Error::SqlSyntax { pos, msg: msg.to_string() };
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == '\'' || c == '"' {
            let quote = c;
            let mut text = String::new();
            i += 1;
            loop {
                let Some(ch) = input[i..].chars().next() else {
                    return Err(err(start, "unterminated quoted text"));
                };
                i += ch.len_utf8();
                if ch == quote {
                    if input[i..].starts_with(quote) {
                        text.push(quote);
                        i += 1;
                    } else {
                        break;
                    }
                } else {
                    text.push(ch);
                }
            }
            out.push((start, if quote == '\'' { Tok::Str(text) } else { Tok::Quoted(text) }));
            continue;
        }
        let negative_number = c == '-'
            && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())
            && !matches!(out.last(), Some((_, Tok::Num(_) | Tok::Word(_) | Tok::Quoted(_))));
        if c.is_ascii_digit() || negative_number {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let n = parse_number(&input[start..i]).ok_or_else(|| err(start, "bad number"))?;
            out.push((start, Tok::Num(n)));
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            while let Some(ch) = input[i..].chars().next() {
                if ch.is_alphanumeric() || ch == '_' {
                    i += ch.len_utf8();
                } else {
                    break;
                }
            }
            out.push((start, Tok::Word(input[start..i].to_string())));
            continue;
        }
        let two = input.get(i..i + 2).unwrap_or("");
        let sym: &'static str = match two {
            ">=" => ">=",
            "<=" => "<=",
            _ => match c {
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '*' => "*",
                '=' => "=",
                '>' => ">",
                '<' => "<",
                ';' => ";",
                _ => return Err(err(start, &format!("unexpected character `{c}`"))),
            },
        };
        i += sym.len();
        out.push((start, Tok::Sym(sym)));
    }
    Ok(out)
}

/// Boolean expression before conversion to conjunctive normal form.
enum Bool {
    Leaf(Condition),
    And(Vec<Bool>),
    Or(Vec<Bool>),
}

fn to_cnf(b: Bool) -> Vec<Clause> {
    match b {
        Bool::Leaf(c) => vec![vec![c]],
        Bool::And(parts) => parts.into_iter().flat_map(to_cnf).collect(),
        Bool::Or(parts) => {
            let mut acc: Vec<Clause> = vec![Vec::new()];
            for p in parts {
                let cnf = to_cnf(p);
                let mut next = Vec::with_capacity(acc.len() * cnf.len());
                for a in &acc {
                    for c in &cnf {
                        let mut merged = a.clone();
                        merged.extend(c.iter().cloned());
                        next.push(merged);
                    }
                }
                acc = next;
            }
            acc
        }
    }
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    input_len: usize,
    table: Option<&'a Table>,
}

impl Parser<'_> {
    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.input_len)
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::SqlSyntax { pos: self.here(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.fail(format!("expected {kw}"))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().cloned() {
            Some(Tok::Quoted(s)) => {
                self.pos += 1;
                Ok(s)
            }
            Some(Tok::Word(w)) => {
                self.pos += 1;
                Ok(w)
            }
            _ => self.fail("expected identifier"),
        }
    }

    /// `col` or `AGG(col)`.
    fn operand(&mut self) -> Result<(String, Option<Agg>)> {
        if let Some(Tok::Word(w)) = self.peek().cloned() {
            if let Some(agg) = Agg::from_keyword(&w) {
                if matches!(self.toks.get(self.pos + 1), Some((_, Tok::Sym("(")))) {
                    self.pos += 2;
                    let col = self.ident()?;
                    if !self.eat_sym(")") {
                        return self.fail("expected `)`");
                    }
                    return Ok((col, Some(agg)));
                }
            }
        }
        Ok((self.ident()?, None))
    }

    fn literal(&mut self) -> Result<Value> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Value::Num(n))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Value::Str(s))
            }
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("date") => {
                self.pos += 1;
                match self.peek().cloned() {
                    Some(Tok::Str(s)) => {
                        self.pos += 1;
                        match normalize_date(&s) {
                            Some(d) => Ok(Value::Date(d)),
                            None => self.fail(format!("invalid date `{s}`")),
                        }
                    }
                    _ => self.fail("expected date string"),
                }
            }
            _ => self.fail("expected literal"),
        }
    }

    fn condition(&mut self) -> Result<Condition> {
        let (column, agg) = self.operand()?;
        let op = match self.peek() {
            Some(Tok::Sym(s)) => CmpOp::from_symbol(s),
            _ => None,
        };
        let Some(op) = op else {
            return self.fail("expected comparison operator");
        };
        self.pos += 1;
        let value = self.literal()?;
        Ok(Condition { column, agg, op, value })
    }

    fn atom(&mut self) -> Result<Bool> {
        if self.eat_sym("(") {
            let b = self.disjunction()?;
            if !self.eat_sym(")") {
                return self.fail("expected `)`");
            }
            Ok(b)
        } else {
            Ok(Bool::Leaf(self.condition()?))
        }
    }

    fn conjunction(&mut self) -> Result<Bool> {
        let mut parts = vec![self.atom()?];
        while self.eat_kw("and") {
            parts.push(self.atom()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Bool::And(parts) })
    }

    fn disjunction(&mut self) -> Result<Bool> {
        let mut parts = vec![self.conjunction()?];
        while self.eat_kw("or") {
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Bool::Or(parts) })
    }

    fn query(&mut self) -> Result<SqlQuery> {
        self.expect_kw("select")?;
        let mut select = Vec::new();
        if self.eat_sym("*") {
            let Some(table) = self.table else {
                return self.fail("`*` needs a table to expand against");
            };
            select = table.columns.iter().map(|c| SelectItem::raw(c.name.clone())).collect();
        } else {
            loop {
                let (column, agg) = self.operand()?;
                select.push(SelectItem { column, agg });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_kw("from")?;
        self.ident()?;
        let mut q = SqlQuery::select(select);
        if self.eat_kw("where") {
            q.where_ = to_cnf(self.disjunction()?);
        }
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                q.group_by.push(self.ident()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        if self.eat_kw("having") {
            q.having = to_cnf(self.disjunction()?);
        }
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            let (column, agg) = self.operand()?;
            let descending = if self.eat_kw("desc") {
                true
            } else {
                self.eat_kw("asc");
                false
            };
            self.expect_kw("limit")?;
            match self.peek() {
                Some(Tok::Num(n)) if *n == 1.0 => self.pos += 1,
                _ => return self.fail("only LIMIT 1 is supported"),
            }
            q.superlative = Some(Superlative { column, agg, descending });
        }
        self.eat_sym(";");
        if self.pos != self.toks.len() {
            return self.fail("unexpected trailing input");
        }
        Ok(q)
    }
}

/// Parse SQL text. With a table, column names are resolved, literals are
/// coerced to column types, `*` is expanded, and the result is validated.
pub fn parse_sql(input: &str, table: Option<&Table>) -> Result<SqlQuery> {
    let toks = lex(input)?;
    let mut p = Parser { toks, pos: 0, input_len: input.len(), table };
    let q = p.query()?;
    match table {
        Some(t) => q.bind(t),
        None => {
            q.check_structure()?;
            Ok(q)
        }
    }
}
