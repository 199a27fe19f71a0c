//! SQL query AST covering the clause inventory the rule system can produce:
//! SELECT with aggregators, WHERE in conjunctive normal form, GROUP BY,
//! HAVING and a superlative `ORDER BY .. LIMIT 1`.

mod canonical;
mod parse;
mod render;

use std::fmt;

use serde::Serialize;

pub use canonical::{canonicalize, CanonicalSql};
pub use parse::parse_sql;

use crate::error::{Error, Result};
use crate::table::{normalize_name, Table};
use crate::value::{ColumnType, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Agg {
    Min,
    Max,
    Sum,
    Avg,
    Count,
}

impl Agg {
    pub const ALL: [Agg; 5] = [Agg::Min, Agg::Max, Agg::Sum, Agg::Avg, Agg::Count];

    pub fn keyword(self) -> &'static str {
        match self {
            Agg::Min => "MIN",
            Agg::Max => "MAX",
            Agg::Sum => "SUM",
            Agg::Avg => "AVG",
            Agg::Count => "COUNT",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Agg> {
        Agg::ALL.into_iter().find(|a| a.keyword().eq_ignore_ascii_case(s))
    }

    /// Aggregators other than `count` need a numeric column.
    pub fn legal_on(self, ty: ColumnType) -> bool {
        self == Agg::Count || ty == ColumnType::Num
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CmpOp {
    Eq,
    Gt,
    Lt,
    Ge,
    Le,
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Eq, CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|o| o.symbol() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectItem {
    pub column: String,
    pub agg: Option<Agg>,
}

impl SelectItem {
    pub fn raw(column: impl Into<String>) -> Self {
        SelectItem { column: column.into(), agg: None }
    }

    pub fn agg(agg: Agg, column: impl Into<String>) -> Self {
        SelectItem { column: column.into(), agg: Some(agg) }
    }
}

/// `[agg(]column[)] op literal`. Aggregated conditions only occur in HAVING.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub column: String,
    pub agg: Option<Agg>,
    pub op: CmpOp,
    pub value: Value,
}

impl Condition {
    pub fn new(column: impl Into<String>, op: CmpOp, value: Value) -> Self {
        Condition { column: column.into(), agg: None, op, value }
    }
}

/// A disjunction of conditions; WHERE and HAVING are conjunctions of clauses.
pub type Clause = Vec<Condition>;

#[derive(Clone, Debug, PartialEq)]
pub struct Superlative {
    pub column: String,
    pub agg: Option<Agg>,
    pub descending: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SqlQuery {
    pub select: Vec<SelectItem>,
    pub where_: Vec<Clause>,
    pub group_by: Vec<String>,
    pub having: Vec<Clause>,
    pub superlative: Option<Superlative>,
}

impl SqlQuery {
    pub fn select(items: Vec<SelectItem>) -> Self {
        SqlQuery { select: items, ..Default::default() }
    }

    pub fn and_where(mut self, cond: Condition) -> Self {
        self.where_.push(vec![cond]);
        self
    }

    pub fn group(mut self, column: impl Into<String>) -> Self {
        self.group_by.push(column.into());
        self
    }

    pub fn has_aggregate(&self) -> bool {
        self.select.iter().any(|s| s.agg.is_some())
    }

    /// Clause letters present: S, W, G, H (superlative counted separately).
    pub fn form(&self) -> String {
        let mut s = String::from("S");
        if !self.where_.is_empty() {
            s.push('W');
        }
        if !self.group_by.is_empty() {
            s.push('G');
        }
        if !self.having.is_empty() {
            s.push('H');
        }
        s
    }

    /// Table-independent structural invariants.
    pub fn check_structure(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidQuery(m.to_string()));
        if self.select.is_empty() {
            return bad("select list is empty");
        }
        if !self.having.is_empty() && self.group_by.is_empty() {
            return bad("HAVING requires a non-empty GROUP BY");
        }
        if self
            .where_
            .iter()
            .flatten()
            .any(|c| c.agg.is_some())
        {
            return bad("aggregated condition in WHERE");
        }
        if self.where_.iter().chain(&self.having).any(|c| c.is_empty()) {
            return bad("empty disjunction in WHERE/HAVING");
        }
        if self
            .where_
            .iter()
            .chain(&self.having)
            .flatten()
            .any(|c| c.value.is_null())
        {
            return bad("NULL literal in condition");
        }
        let grouped: Vec<String> = self.group_by.iter().map(|g| normalize_name(g)).collect();
        if !grouped.is_empty() {
            for item in &self.select {
                if item.agg.is_none() && !grouped.contains(&normalize_name(&item.column)) {
                    return Err(Error::InvalidQuery(format!(
                        "selected column `{}` is neither aggregated nor grouped",
                        item.column
                    )));
                }
            }
            for c in self.having.iter().flatten() {
                if c.agg.is_none() && !grouped.contains(&normalize_name(&c.column)) {
                    return Err(Error::InvalidQuery(format!(
                        "HAVING column `{}` is neither aggregated nor grouped",
                        c.column
                    )));
                }
            }
            if let Some(s) = &self.superlative {
                if s.agg.is_none() && !grouped.contains(&normalize_name(&s.column)) {
                    return bad("ORDER BY on a grouped query needs an aggregate or a grouped column");
                }
            }
        } else if self.has_aggregate() && self.select.iter().any(|s| s.agg.is_none()) {
            return bad("aggregated and plain columns mixed without GROUP BY");
        }
        Ok(())
    }

    /// Full validation against the grounding table.
    pub fn validate(&self, table: &Table) -> Result<()> {
        self.check_structure()?;
        let col = |name: &str| {
            table
                .column(name)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown column `{name}`")))
        };
        for item in &self.select {
            let c = col(&item.column)?;
            if let Some(a) = item.agg {
                if !a.legal_on(c.ty) {
                    return Err(Error::InvalidQuery(format!(
                        "{} is not legal on {} column `{}`",
                        a.keyword(),
                        c.ty,
                        c.name
                    )));
                }
            }
        }
        for cond in self.where_.iter().chain(&self.having).flatten() {
            let c = col(&cond.column)?;
            let effective = match cond.agg {
                Some(Agg::Count) => ColumnType::Num,
                Some(a) => {
                    if !a.legal_on(c.ty) {
                        return Err(Error::InvalidQuery(format!(
                            "{} is not legal on {} column `{}`",
                            a.keyword(),
                            c.ty,
                            c.name
                        )));
                    }
                    ColumnType::Num
                }
                None => c.ty,
            };
            if cond.value.type_of() != Some(effective) {
                return Err(Error::InvalidQuery(format!(
                    "literal `{}` does not match {} column `{}`",
                    cond.value, effective, c.name
                )));
            }
            if effective == ColumnType::Str && cond.op != CmpOp::Eq {
                return Err(Error::InvalidQuery(format!(
                    "operator {} is not defined on string column `{}`",
                    cond.op.symbol(),
                    c.name
                )));
            }
        }
        for g in &self.group_by {
            col(g)?;
        }
        if let Some(s) = &self.superlative {
            let c = col(&s.column)?;
            match s.agg {
                Some(a) if !a.legal_on(c.ty) => {
                    return Err(Error::InvalidQuery(format!(
                        "{} is not legal on {} column `{}`",
                        a.keyword(),
                        c.ty,
                        c.name
                    )))
                }
                None if c.ty == ColumnType::Str => {
                    return Err(Error::InvalidQuery(format!(
                        "superlative over string column `{}`",
                        c.name
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Resolve column names to the table's spelling and coerce literals to
    /// the column types (numbers in text, dates in ISO form).
    pub fn bind(mut self, table: &Table) -> Result<SqlQuery> {
        let resolve = |name: &mut String| -> Result<ColumnType> {
            let c = table
                .column(name)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown column `{name}`")))?;
            *name = c.name.clone();
            Ok(c.ty)
        };
        for item in &mut self.select {
            resolve(&mut item.column)?;
        }
        for g in &mut self.group_by {
            resolve(g)?;
        }
        for cond in self.where_.iter_mut().chain(self.having.iter_mut()).flatten() {
            let ty = resolve(&mut cond.column)?;
            let target = if cond.agg.is_some() { ColumnType::Num } else { ty };
            cond.value = coerce(&cond.value, target).ok_or_else(|| {
                Error::InvalidQuery(format!(
                    "literal `{}` cannot be read as {} for column `{}`",
                    cond.value, target, cond.column
                ))
            })?;
        }
        if let Some(s) = &mut self.superlative {
            resolve(&mut s.column)?;
        }
        self.validate(table)?;
        Ok(self)
    }

    /// Render as SQL text against the given table name.
    pub fn to_sql(&self, table_name: &str) -> String {
        render::render(self, table_name)
    }
}

pub(crate) fn coerce(v: &Value, ty: ColumnType) -> Option<Value> {
    match (v, ty) {
        (Value::Num(_), ColumnType::Num) => Some(v.clone()),
        (Value::Num(n), ColumnType::Str) => Some(Value::Str(crate::value::format_number(*n))),
        (Value::Num(n), ColumnType::Date) => {
            crate::value::normalize_date(&crate::value::format_number(*n)).map(Value::Date)
        }
        (Value::Str(s) | Value::Date(s), t) => Value::parse_typed(s, t).filter(|v| !v.is_null()),
        (Value::Null, _) => None,
    }
}

impl fmt::Display for SqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sql("t"))
    }
}
