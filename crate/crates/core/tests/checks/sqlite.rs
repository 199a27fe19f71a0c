//! The in-memory executor against SQLite, with text columns declared
//! `COLLATE NOCASE`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rusqlite::types::ValueRef;
use rusqlite::Connection;
use tablequery_core::exec::{execute, ResultTable};
use tablequery_core::sql::{Clause, Condition, SqlQuery};
use tablequery_core::table::Table;
use tablequery_core::value::{format_number, ColumnType, Value};

fn quote(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn lit(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Num(n) => format_number(*n),
        Value::Str(s) | Value::Date(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

fn load(table: &Table) -> Connection {
    let conn = Connection::open_in_memory().unwrap();
    let cols: Vec<String> = table
        .columns
        .iter()
        .map(|c| match c.ty {
            ColumnType::Num => format!("{} REAL", quote(&c.name)),
            ColumnType::Str => format!("{} TEXT COLLATE NOCASE", quote(&c.name)),
            ColumnType::Date => format!("{} TEXT", quote(&c.name)),
        })
        .collect();
    conn.execute(&format!("CREATE TABLE t ({})", cols.join(", ")), []).unwrap();
    for row in &table.rows {
        let vals: Vec<String> = row.iter().map(lit).collect();
        conn.execute(&format!("INSERT INTO t VALUES ({})", vals.join(", ")), []).unwrap();
    }
    conn
}

fn term(column: &str, agg: Option<tablequery_core::sql::Agg>) -> String {
    match agg {
        Some(a) => format!("{}({})", a.keyword(), quote(column)),
        None => quote(column),
    }
}

fn cond(c: &Condition) -> String {
    format!("{} {} {}", term(&c.column, c.agg), c.op.symbol(), lit(&c.value))
}

fn conj(clauses: &[Clause]) -> String {
    clauses
        .iter()
        .map(|c| format!("({})", c.iter().map(cond).collect::<Vec<_>>().join(" OR ")))
        .collect::<Vec<_>>()
        .join(" AND ")
}

/// SQLite text for `q`. With `all_ties`, the LIMIT is dropped and the sort
/// key appended as a last column.
fn to_sqlite(q: &SqlQuery, all_ties: bool) -> String {
    let mut items: Vec<String> = q.select.iter().map(|s| term(&s.column, s.agg)).collect();
    let key = q.superlative.as_ref().map(|s| term(&s.column, s.agg));
    if all_ties {
        items.push(key.clone().expect("superlative"));
    }
    let mut sql = format!("SELECT {} FROM t", items.join(", "));
    if !q.where_.is_empty() {
        sql += &format!(" WHERE {}", conj(&q.where_));
    }
    if !q.group_by.is_empty() {
        sql += &format!(" GROUP BY {}", q.group_by.iter().map(|g| quote(g)).collect::<Vec<_>>().join(", "));
    }
    if !q.having.is_empty() {
        sql += &format!(" HAVING {}", conj(&q.having));
    }
    if let Some(s) = &q.superlative {
        sql += &format!(" ORDER BY {} {}", key.unwrap(), if s.descending { "DESC" } else { "ASC" });
        if !all_ties {
            sql += " LIMIT 1";
        }
    }
    sql
}

fn from_sqlite(v: ValueRef, ty: Option<ColumnType>) -> Value {
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::Num(i as f64),
        ValueRef::Real(f) => Value::Num(f),
        ValueRef::Text(t) => {
            let s = String::from_utf8_lossy(t).into_owned();
            if ty == Some(ColumnType::Date) {
                Value::Date(s)
            } else {
                Value::Str(s)
            }
        }
        ValueRef::Blob(_) => panic!("blob in result"),
    }
}

fn run(conn: &Connection, sql: &str, types: &[Option<ColumnType>]) -> Vec<Vec<Value>> {
    let mut stmt = conn.prepare(sql).unwrap_or_else(|e| panic!("{sql}: {e}"));
    let n = stmt.column_count();
    let rows = stmt
        .query_map([], |r| Ok((0..n).map(|i| from_sqlite(r.get_ref(i).unwrap(), types.get(i).copied().flatten())).collect()))
        .unwrap();
    rows.map(|r| r.unwrap()).collect()
}

/// Result types of each select item: the column type unless aggregated to a number.
fn item_types(q: &SqlQuery, table: &Table) -> Vec<Option<ColumnType>> {
    let ty = |c: &str, agg: Option<tablequery_core::sql::Agg>| {
        let t = table.column(c).unwrap().ty;
        match agg {
            Some(tablequery_core::sql::Agg::Count) => ColumnType::Num,
            Some(_) => ColumnType::Num,
            None => t,
        }
    };
    let mut v: Vec<Option<ColumnType>> = q.select.iter().map(|s| Some(ty(&s.column, s.agg))).collect();
    if let Some(s) = &q.superlative {
        v.push(Some(ty(&s.column, s.agg)));
    }
    v
}

/// Whether the two engines agree on `q`. For a superlative, any row tied
/// for the top sort key is a correct answer.
fn agree(conn: &Connection, q: &SqlQuery, table: &Table) -> bool {
    let ours = execute(q, table).unwrap();
    let types = item_types(q, table);
    let width = q.select.len();
    let as_result = |rows: Vec<Vec<Value>>| ResultTable { columns: ours.columns.clone(), rows };
    if q.superlative.is_none() {
        return ours.same_rows(&as_result(run(conn, &to_sqlite(q, false), &types)));
    }
    let ranked = run(conn, &to_sqlite(q, true), &types);
    let Some(first) = ranked.first() else {
        return ours.rows.is_empty();
    };
    let top = as_result(vec![first[width].clone()].into_iter().map(|v| vec![v]).collect());
    let tied: Vec<Vec<Value>> = ranked
        .iter()
        .filter(|r| as_result(vec![vec![r[width].clone()]]).same_rows(&top))
        .map(|r| r[..width].to_vec())
        .collect();
    ours.rows.len() == 1 && tied.iter().any(|r| ours.same_rows(&as_result(vec![r.clone()])))
}

/// Agreement rate over `n` random queries, with the disagreeing SQL.
pub fn agreement(seed: u64, n: usize) -> (f64, Vec<String>) {
    let table = crate::common::sample_table();
    let conn = load(&table);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disagreements = Vec::new();
    for _ in 0..n {
        let q = crate::common::random_query(&mut rng, &table);
        if !agree(&conn, &q, &table) {
            disagreements.push(q.to_sql("t"));
        }
    }
    (1.0 - disagreements.len() as f64 / n as f64, disagreements)
}

/// Hand-picked queries around case folding and NULLs.
pub fn nocase_and_nulls() {
    let table = crate::common::sample_table();
    let conn = load(&table);
    for sql in [
        "SELECT Player FROM t WHERE Team = 'LIONS'",
        "SELECT COUNT(Goals) FROM t",
        "SELECT SUM(Points) FROM t WHERE Team = 'Nobody'",
        "SELECT Team, MAX(Points) FROM t GROUP BY Team",
        "SELECT Player FROM t WHERE Goals < 1 OR Points > 25",
    ] {
        let q = tablequery_core::sql::parse_sql(sql, Some(&table)).unwrap();
        assert!(agree(&conn, &q, &table), "{sql}");
    }
}
