//! Derivation trees over abstracted utterances.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rules::RulePred;
use crate::symbol::{Symbol, SymbolKind};
use crate::table::Table;
use crate::token::{AbstractedUtterance, Span};

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    /// `None` for a leaf (a symbol token of the utterance).
    pub rule: Option<RulePred>,
    /// Inputs matched the rule's left-hand side in reverse order.
    pub swapped: bool,
    pub span: Span,
    pub symbol: Symbol,
    pub children: Vec<Arc<Node>>,
}

impl Node {
    pub fn leaf(token: usize, symbol: Symbol) -> Node {
        Node { rule: None, swapped: false, span: Span::new(token, token + 1), symbol, children: Vec::new() }
    }

    pub fn is_leaf(&self) -> bool {
        self.rule.is_none()
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    fn serialize_into(&self, out: &mut String) {
        match self.rule {
            None => {
                let _ = write!(out, "{}@{}", self.symbol.signature(), self.span.start);
            }
            Some(r) => {
                let _ = write!(
                    out,
                    "({}{} {} {}",
                    r.index(),
                    if self.swapped { "'" } else { "" },
                    self.span,
                    self.symbol.signature()
                );
                for c in &self.children {
                    out.push(' ');
                    c.serialize_into(out);
                }
                out.push(')');
            }
        }
    }
}

/// Kinds a complete derivation may end in.
pub fn is_root_kind(kind: SymbolKind) -> bool {
    matches!(kind, SymbolKind::T | SymbolKind::C | SymbolKind::A | SymbolKind::G | SymbolKind::S | SymbolKind::F)
}

/// A complete parse: the root covers every symbol token.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivation {
    pub root: Arc<Node>,
}

impl Derivation {
    pub fn new(root: Arc<Node>) -> Derivation {
        Derivation { root }
    }

    /// Nodes in pre-order.
    pub fn nodes(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        self.root.walk(&mut |n| out.push(n));
        out
    }

    /// Rule nodes (non-leaves) in pre-order.
    pub fn rule_nodes(&self) -> Vec<&Node> {
        self.nodes().into_iter().filter(|n| !n.is_leaf()).collect()
    }

    pub fn size(&self) -> usize {
        self.rule_nodes().len()
    }

    /// Canonical s-expression, e.g. `(14 0..3 C[2]:num C[2]:num@0 (20 2..3 F[1] V[1]=bmw@2))`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        self.root.serialize_into(&mut s);
        s
    }

    /// Check the structural invariants against the utterance: leaves are the
    /// utterance's symbol tokens, spans nest correctly, composition children
    /// are adjacent up to context tokens, every rule application is licensed,
    /// and the root covers all symbol tokens.
    pub fn validate(&self, u: &AbstractedUtterance) -> Result<()> {
        fn check(n: &Node, u: &AbstractedUtterance) -> Result<()> {
            let bad = |m: String| Err(Error::Interpretation(m));
            match n.rule {
                None => {
                    let tok = u.tokens.get(n.span.start);
                    if n.span.len() != 1 || tok.and_then(|t| t.symbol()) != Some(&n.symbol) {
                        return bad(format!("leaf {} does not match a symbol token", n.span));
                    }
                    if !n.children.is_empty() {
                        return bad("leaf with children".into());
                    }
                }
                Some(r) => {
                    let inputs: Vec<&Symbol> = n.children.iter().map(|c| &c.symbol).collect();
                    if r.rule().is_raising() {
                        if n.children.len() != 1 || n.children[0].span != n.span {
                            return bad(format!("raising node {} must have one child on its span", n.span));
                        }
                    } else {
                        if n.children.len() != 2 {
                            return bad(format!("composition node {} needs two children", n.span));
                        }
                        let (l, rr) = (&n.children[0], &n.children[1]);
                        if l.span.end > rr.span.start
                            || l.span.start != n.span.start
                            || rr.span.end != n.span.end
                        {
                            return bad(format!("children of {} are not adjacent parts of it", n.span));
                        }
                        if (l.span.end..rr.span.start).any(|i| u.tokens[i].is_symbol()) {
                            return bad(format!("symbol token between the children of {}", n.span));
                        }
                    }
                    let licensed = crate::rules::applicable(&inputs)
                        .iter()
                        .any(|a| a.rule == r && a.swapped == n.swapped && a.output == n.symbol);
                    if !licensed {
                        return bad(format!("rule {r} is not licensed at {}", n.span));
                    }
                    for c in &n.children {
                        check(c, u)?;
                    }
                }
            }
            Ok(())
        }
        check(&self.root, u)?;
        let positions = u.symbol_positions();
        let (first, last) = match (positions.first(), positions.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Err(Error::NothingToParse),
        };
        if self.root.span != Span::new(first, last + 1) {
            return Err(Error::Interpretation("root does not cover every symbol token".into()));
        }
        if !is_root_kind(self.root.symbol.kind) {
            return Err(Error::Interpretation(format!("{} cannot be a root", self.root.symbol.kind)));
        }
        Ok(())
    }

    /// Indented tree with column names resolved against the table.
    pub fn pretty(&self, table: &Table) -> String {
        fn go(n: &Node, table: &Table, depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            match n.rule {
                None => {
                    let _ = writeln!(out, "{pad}{} {}", n.symbol.describe(table), n.span);
                }
                Some(r) => {
                    let _ = writeln!(out, "{pad}{} {} {}", r.name(), n.symbol.describe(table), n.span);
                }
            }
            for c in &n.children {
                go(c, table, depth + 1, out);
            }
        }
        let mut out = String::new();
        go(&self.root, table, 0, &mut out);
        out
    }
}
