//! Meta-data and operator symbols with their property records.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::table::Table;
use crate::value::{ColumnType, Value};

/// The nine symbol kinds: meta-data `T C V N D` and operators `A G F S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SymbolKind {
    T,
    C,
    V,
    N,
    D,
    A,
    G,
    F,
    S,
}

impl SymbolKind {
    pub const ALL: [SymbolKind; 9] = [
        SymbolKind::T,
        SymbolKind::C,
        SymbolKind::V,
        SymbolKind::N,
        SymbolKind::D,
        SymbolKind::A,
        SymbolKind::G,
        SymbolKind::F,
        SymbolKind::S,
    ];

    pub fn is_meta(self) -> bool {
        matches!(self, SymbolKind::T | SymbolKind::C | SymbolKind::V | SymbolKind::N | SymbolKind::D)
    }

    pub fn is_literal(self) -> bool {
        matches!(self, SymbolKind::V | SymbolKind::N | SymbolKind::D)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SymbolKind::T => "T",
            SymbolKind::C => "C",
            SymbolKind::V => "V",
            SymbolKind::N => "N",
            SymbolKind::D => "D",
            SymbolKind::A => "A",
            SymbolKind::G => "G",
            SymbolKind::F => "F",
            SymbolKind::S => "S",
        }
    }
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Set of column indices into the grounding table.
pub type ColSet = BTreeSet<usize>;

/// A symbol instance: kind plus the `col`, `type` and `value` properties.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub cols: ColSet,
    /// Only meaningful for `C`; `None` for a combined column set of mixed types.
    pub ty: Option<ColumnType>,
    /// Literal carried by `V`, `N` and `D`.
    pub value: Option<Value>,
}

impl Symbol {
    pub fn table(table: &Table) -> Symbol {
        Symbol {
            kind: SymbolKind::T,
            cols: (0..table.columns.len()).collect(),
            ty: None,
            value: None,
        }
    }

    pub fn column(table: &Table, idx: usize) -> Symbol {
        Symbol {
            kind: SymbolKind::C,
            cols: ColSet::from([idx]),
            ty: Some(table.column_type(idx)),
            value: None,
        }
    }

    pub fn literal(kind: SymbolKind, value: Value, cols: ColSet) -> Symbol {
        debug_assert!(kind.is_literal());
        Symbol { kind, cols, ty: None, value: Some(value) }
    }

    pub fn operator(kind: SymbolKind, cols: ColSet) -> Symbol {
        Symbol { kind, cols, ty: None, value: None }
    }

    /// Signature string: equal signatures mean interchangeable chart items.
    pub fn signature(&self) -> String {
        let cols: Vec<String> = self.cols.iter().map(|c| c.to_string()).collect();
        format!(
            "{}[{}]{}{}",
            self.kind,
            cols.join(","),
            self.ty.map(|t| format!(":{t}")).unwrap_or_default(),
            self.value
                .as_ref()
                .map(|v| format!("={}", v.match_key()))
                .unwrap_or_default()
        )
    }

    /// Check the structural invariants against a table.
    pub fn is_valid_for(&self, table: &Table) -> bool {
        let in_table = self.cols.iter().all(|&c| c < table.columns.len());
        let value_ok = self.kind.is_literal() == self.value.is_some();
        let type_ok = self.kind == SymbolKind::C || self.ty.is_none();
        in_table && value_ok && type_ok
    }

    /// Human readable form using column names, e.g. `C{Attacks}:num`.
    pub fn describe(&self, table: &Table) -> String {
        let names: Vec<&str> = self
            .cols
            .iter()
            .filter_map(|&c| table.columns.get(c).map(|c| c.name.as_str()))
            .collect();
        let mut s = format!("{}{{{}}}", self.kind, names.join(","));
        if let Some(t) = self.ty {
            s.push_str(&format!(":{t}"));
        }
        if let Some(v) = &self.value {
            s.push_str(&format!("={v}"));
        }
        s
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature())
    }
}
