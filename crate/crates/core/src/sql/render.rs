use super::{Clause, Condition, SelectItem, SqlQuery};
use crate::value::{format_number, Value};

const KEYWORDS: &[&str] = &[
    "select", "from", "where", "group", "by", "having", "order", "limit", "and", "or", "asc",
    "desc", "date", "min", "max", "sum", "avg", "count", "not", "null",
];

pub(crate) fn ident(name: &str) -> String {
    let simple = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&name.to_ascii_lowercase().as_str());
    if simple {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

pub(crate) fn literal(v: &Value) -> String {
    match v {
        Value::Null => "NULL".to_string(),
        Value::Num(n) => format_number(*n),
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Date(s) => format!("DATE '{s}'"),
    }
}

pub(crate) fn select_item(item: &SelectItem) -> String {
    match item.agg {
        Some(a) => format!("{}({})", a.keyword(), ident(&item.column)),
        None => ident(&item.column),
    }
}

pub(crate) fn condition(c: &Condition) -> String {
    let lhs = match c.agg {
        Some(a) => format!("{}({})", a.keyword(), ident(&c.column)),
        None => ident(&c.column),
    };
    format!("{lhs} {} {}", c.op.symbol(), literal(&c.value))
}

pub(crate) fn clause(c: &Clause, parenthesize: bool) -> String {
    let parts: Vec<String> = c.iter().map(condition).collect();
    if parts.len() > 1 && parenthesize {
        format!("({})", parts.join(" OR "))
    } else {
        parts.join(" OR ")
    }
}

fn conjunction(clauses: &[Clause]) -> String {
    let many = clauses.len() > 1;
    clauses
        .iter()
        .map(|c| clause(c, many))
        .collect::<Vec<_>>()
        .join(" AND ")
}

pub(crate) fn render(q: &SqlQuery, table_name: &str) -> String {
    let items: Vec<String> = q.select.iter().map(select_item).collect();
    let mut sql = format!("SELECT {} FROM {}", items.join(", "), ident(table_name));
    if !q.where_.is_empty() {
        sql.push_str(" WHERE ");
        sql.push_str(&conjunction(&q.where_));
    }
    if !q.group_by.is_empty() {
        let cols: Vec<String> = q.group_by.iter().map(|c| ident(c)).collect();
        sql.push_str(" GROUP BY ");
        sql.push_str(&cols.join(", "));
    }
    if !q.having.is_empty() {
        sql.push_str(" HAVING ");
        sql.push_str(&conjunction(&q.having));
    }
    if let Some(s) = &q.superlative {
        let key = match s.agg {
            Some(a) => format!("{}({})", a.keyword(), ident(&s.column)),
            None => ident(&s.column),
        };
        sql.push_str(&format!(
            " ORDER BY {key} {} LIMIT 1",
            if s.descending { "DESC" } else { "ASC" }
        ));
    }
    sql
}
