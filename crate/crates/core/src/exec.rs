//! In-memory execution of [`SqlQuery`] over a [`Table`].
//!
//! Clause order is WHERE, GROUP BY with aggregation, HAVING, ORDER BY ..
//! LIMIT 1, then projection. Semantics follow SQLite with `COLLATE NOCASE`
//! text columns: NULL never satisfies a comparison, NULL sorts lowest,
//! `COUNT` skips NULLs and aggregates over no rows give NULL (0 for COUNT).

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sql::{Agg, Clause, CmpOp, Condition, SqlQuery};
use crate::table::Table;
use crate::value::{fold_text, ColumnType, Value};

/// Query output. Comparison via [`ResultTable::same_rows`] ignores row order
/// and column headers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

fn cell_key(v: &Value) -> String {
    match v {
        Value::Null => "\u{0}null".into(),
        Value::Num(n) => {
            // Tolerate float noise from AVG and SUM.
            let r = (n * 1e6).round() / 1e6;
            format!("n{}", if r == 0.0 { 0.0 } else { r })
        }
        Value::Str(s) => format!("s{}", fold_text(s)),
        Value::Date(s) => format!("d{s}"),
    }
}

impl ResultTable {
    fn multiset(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(cell_key).collect()).collect();
        rows.sort();
        rows
    }

    /// Multiset equality of rows.
    pub fn same_rows(&self, other: &ResultTable) -> bool {
        self.rows.len() == other.rows.len() && self.multiset() == other.multiset()
    }

    /// Like [`ResultTable::same_rows`], but first lines up the columns of
    /// `other` with ours when the headers are a permutation of each other,
    /// since select order carries no meaning.
    pub fn same_result(&self, other: &ResultTable) -> bool {
        let key = |h: &String| fold_text(h).replace(' ', "");
        let mine: Vec<String> = self.columns.iter().map(key).collect();
        let theirs: Vec<String> = other.columns.iter().map(key).collect();
        let mut perm = Vec::with_capacity(mine.len());
        let mut used = vec![false; theirs.len()];
        for m in &mine {
            match (0..theirs.len()).find(|&j| !used[j] && &theirs[j] == m) {
                Some(j) => {
                    used[j] = true;
                    perm.push(j);
                }
                None => return self.same_rows(other),
            }
        }
        if perm.len() != theirs.len() {
            return self.same_rows(other);
        }
        let aligned = ResultTable {
            columns: self.columns.clone(),
            rows: other.rows.iter().map(|r| perm.iter().map(|&j| r[j].clone()).collect()).collect(),
        };
        self.same_rows(&aligned)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(&self.columns);
        for r in &self.rows {
            let _ = w.write_record(r.iter().map(|v| v.display_text()));
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}

fn order(a: &Value, b: &Value) -> Ordering {
    match (a.is_null(), b.is_null()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        _ => a.compare(b).unwrap_or(Ordering::Equal),
    }
}

fn holds(cell: &Value, cond: &Condition, ty: ColumnType) -> Result<bool> {
    if ty == ColumnType::Str && cond.op != CmpOp::Eq {
        return Err(Error::Execution(format!(
            "operator {} applied to string column `{}`",
            cond.op.symbol(),
            cond.column
        )));
    }
    if cell.is_null() || cond.value.is_null() {
        return Ok(false);
    }
    let Some(ord) = cell.compare(&cond.value) else {
        return Err(Error::Execution(format!(
            "cannot compare `{cell}` with `{}` on column `{}`",
            cond.value, cond.column
        )));
    };
    Ok(match cond.op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Ge => ord != Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
    })
}

fn aggregate(agg: Agg, vals: impl Iterator<Item = Value>) -> Value {
    let vals: Vec<Value> = vals.filter(|v| !v.is_null()).collect();
    match agg {
        Agg::Count => Value::Num(vals.len() as f64),
        _ if vals.is_empty() => Value::Null,
        Agg::Sum => Value::Num(vals.iter().filter_map(Value::as_num).sum()),
        Agg::Avg => Value::Num(vals.iter().filter_map(Value::as_num).sum::<f64>() / vals.len() as f64),
        Agg::Min => vals.into_iter().min_by(order).unwrap_or(Value::Null),
        // max_by keeps the last of equal elements; reverse to keep the first.
        Agg::Max => vals.into_iter().rev().max_by(order).unwrap_or(Value::Null),
    }
}

struct Ctx<'t> {
    table: &'t Table,
}

impl Ctx<'_> {
    fn col(&self, name: &str) -> Result<usize> {
        self.table
            .column_index(name)
            .ok_or_else(|| Error::Execution(format!("unknown column `{name}`")))
    }

    /// Value of an optionally aggregated column over a group of rows.
    fn value(&self, rows: &[usize], col: usize, agg: Option<Agg>) -> Value {
        match agg {
            Some(a) => aggregate(a, rows.iter().map(|&r| self.table.rows[r][col].clone())),
            None => rows.first().map(|&r| self.table.rows[r][col].clone()).unwrap_or(Value::Null),
        }
    }

    fn clause_holds(&self, clause: &Clause, eval: impl Fn(&Condition) -> Result<bool>) -> Result<bool> {
        for c in clause {
            if eval(c)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Execute a query. The query should already be valid for the table.
pub fn execute(q: &SqlQuery, table: &Table) -> Result<ResultTable> {
    let cx = Ctx { table };

    let mut rows: Vec<usize> = Vec::new();
    'rows: for (i, row) in table.rows.iter().enumerate() {
        for clause in &q.where_ {
            let ok = cx.clause_holds(clause, |c| {
                let ci = cx.col(&c.column)?;
                if c.agg.is_some() {
                    return Err(Error::Execution("aggregate in WHERE".into()));
                }
                holds(&row[ci], c, table.column_type(ci))
            })?;
            if !ok {
                continue 'rows;
            }
        }
        rows.push(i);
    }

    let grouped = !q.group_by.is_empty() || q.has_aggregate();
    let mut groups: Vec<Vec<usize>> = if q.group_by.is_empty() {
        if grouped {
            vec![rows]
        } else {
            rows.into_iter().map(|r| vec![r]).collect()
        }
    } else {
        let keys: Vec<usize> = q.group_by.iter().map(|g| cx.col(g)).collect::<Result<_>>()?;
        let mut index: HashMap<Vec<String>, usize> = HashMap::new();
        let mut out: Vec<Vec<usize>> = Vec::new();
        for r in rows {
            let key: Vec<String> = keys.iter().map(|&k| table.rows[r][k].match_key()).collect();
            let slot = *index.entry(key).or_insert_with(|| {
                out.push(Vec::new());
                out.len() - 1
            });
            out[slot].push(r);
        }
        out
    };

    if !q.having.is_empty() {
        let mut kept = Vec::with_capacity(groups.len());
        'groups: for g in groups {
            for clause in &q.having {
                let ok = cx.clause_holds(clause, |c| {
                    let ci = cx.col(&c.column)?;
                    let v = cx.value(&g, ci, c.agg);
                    let ty = if c.agg.is_some() { ColumnType::Num } else { table.column_type(ci) };
                    holds(&v, c, ty)
                })?;
                if !ok {
                    continue 'groups;
                }
            }
            kept.push(g);
        }
        groups = kept;
    }

    if let Some(s) = &q.superlative {
        let ci = cx.col(&s.column)?;
        let keyed: Vec<(Value, Vec<usize>)> =
            groups.into_iter().map(|g| (cx.value(&g, ci, s.agg), g)).collect();
        let mut best: Option<(Value, Vec<usize>)> = None;
        for (v, g) in keyed {
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    let o = order(&v, b);
                    if s.descending {
                        o == Ordering::Greater
                    } else {
                        o == Ordering::Less
                    }
                }
            };
            if better {
                best = Some((v, g));
            }
        }
        groups = best.map(|(_, g)| vec![g]).unwrap_or_default();
    }

    let mut columns = Vec::with_capacity(q.select.len());
    let mut cols = Vec::with_capacity(q.select.len());
    for item in &q.select {
        cols.push((cx.col(&item.column)?, item.agg));
        let mut h = String::new();
        match item.agg {
            Some(a) => {
                let _ = write!(h, "{}({})", a.keyword(), item.column);
            }
            None => h.push_str(&item.column),
        }
        columns.push(h);
    }
    let rows = groups
        .iter()
        .map(|g| cols.iter().map(|&(c, a)| cx.value(g, c, a)).collect())
        .collect();
    Ok(ResultTable { columns, rows })
}
