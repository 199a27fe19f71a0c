use std::fmt;

use super::render;
use super::{Clause, SqlQuery};
use crate::error::Result;
use crate::table::normalize_name;
use crate::value::{fold_text, Value};

/// Normal form of a query: two queries are equivalent iff their canonical
/// forms are identical.
#[derive(Clone, Debug)]
pub struct CanonicalSql {
    text: String,
    parts: NormalQuery,
    query: SqlQuery,
}

impl PartialEq for CanonicalSql {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for CanonicalSql {}

impl std::hash::Hash for CanonicalSql {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.text.hash(state);
    }
}

impl PartialOrd for CanonicalSql {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CanonicalSql {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.text.cmp(&other.text)
    }
}

/// Normalized pieces, kept for per-clause comparison.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalQuery {
    pub select: Vec<String>,
    pub where_: Vec<String>,
    pub group_by: Vec<String>,
    pub having: Vec<String>,
    pub superlative: Option<String>,
}

impl CanonicalSql {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn parts(&self) -> &NormalQuery {
        &self.parts
    }

    /// The normalized query itself.
    pub fn query(&self) -> &SqlQuery {
        &self.query
    }
}

impl fmt::Display for CanonicalSql {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn normalize_value(v: &Value) -> Value {
    match v {
        Value::Str(s) => Value::Str(fold_text(s)),
        other => other.clone(),
    }
}

fn normalize_clauses(clauses: &[Clause]) -> Vec<Clause> {
    let mut out: Vec<(String, Clause)> = clauses
        .iter()
        .map(|clause| {
            let mut conds: Vec<(String, _)> = clause
                .iter()
                .map(|c| {
                    let mut c = c.clone();
                    c.column = normalize_name(&c.column);
                    c.value = normalize_value(&c.value);
                    (render::condition(&c), c)
                })
                .collect();
            conds.sort_by(|a, b| a.0.cmp(&b.0));
            conds.dedup_by(|a, b| a.0 == b.0);
            let clause: Clause = conds.into_iter().map(|(_, c)| c).collect();
            (render::clause(&clause, true), clause)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0);
    out.into_iter().map(|(_, c)| c).collect()
}

/// Order-insensitive normal form. Select items, conditions within each
/// disjunction, the conjunction's clauses, grouping columns and HAVING
/// clauses are sorted by their rendered text; identifiers and string
/// literals are case-folded; numbers use canonical decimal text.
pub fn canonicalize(q: &SqlQuery) -> Result<CanonicalSql> {
    q.check_structure()?;
    let mut select: Vec<(String, _)> = q
        .select
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.column = normalize_name(&s.column);
            (render::select_item(&s), s)
        })
        .collect();
    select.sort_by(|a, b| a.0.cmp(&b.0));

    let mut group: Vec<String> = q.group_by.iter().map(|g| normalize_name(g)).collect();
    group.sort();
    group.dedup();

    let superlative = q.superlative.clone().map(|mut s| {
        s.column = normalize_name(&s.column);
        s
    });

    let normal = SqlQuery {
        select: select.iter().map(|(_, s)| s.clone()).collect(),
        where_: normalize_clauses(&q.where_),
        group_by: group.clone(),
        having: normalize_clauses(&q.having),
        superlative,
    };
    let text = render::render(&normal, "t");
    let parts = NormalQuery {
        select: select.into_iter().map(|(t, _)| t).collect(),
        where_: normal.where_.iter().map(|c| render::clause(c, true)).collect(),
        group_by: group,
        having: normal.having.iter().map(|c| render::clause(c, true)).collect(),
        superlative: normal.superlative.as_ref().map(|s| {
            format!(
                "{}({}) {}",
                s.agg.map(|a| a.keyword()).unwrap_or(""),
                s.column,
                if s.descending { "DESC" } else { "ASC" }
            )
        }),
    };
    Ok(CanonicalSql { text, parts, query: normal })
}
