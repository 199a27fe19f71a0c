//! WikiSQL ingestion.
//!
//! A split `<name>` is the pair `<name>.jsonl` (one question record per
//! line) and `<name>.tables.jsonl` (one table per line), as in the public
//! release. Column types are inferred: a column is numeric iff every
//! non-empty cell parses as a number. The release's own `types` field is
//! ignored.
//!
//! When no release is at hand, [`generate_slice`] writes a slice in the same
//! format over made-up tables, so the loader and the experiments run end to
//! end without the download.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tablequery_core::sql::{Agg, CmpOp, Condition, SelectItem, SqlQuery};
use tablequery_core::table::{Column, Table};
use tablequery_core::value::{format_number, parse_number, ColumnType, Value};

use crate::corpus::{Corpus, Example};

const CODES: &str = include_str!("../data/wikisql_codes.json");

/// The release's operator code tables.
#[derive(Clone, Debug, Deserialize)]
pub struct Codes {
    pub agg_ops: Vec<String>,
    pub cond_ops: Vec<String>,
}

impl Codes {
    pub fn shipped() -> Codes {
        serde_json::from_str(CODES).expect("bundled code table parses")
    }

    /// `None` for code 0 (no aggregator); an error for unknown codes.
    pub fn agg(&self, code: usize) -> Result<Option<Agg>> {
        match self.agg_ops.get(code).map(String::as_str) {
            Some("") => Ok(None),
            Some(k) => Agg::from_keyword(k).map(Some).with_context(|| format!("aggregator `{k}` unsupported")),
            None => bail!("aggregator code {code} out of range"),
        }
    }

    pub fn cond(&self, code: usize) -> Result<CmpOp> {
        let sym = self.cond_ops.get(code).with_context(|| format!("operator code {code} out of range"))?;
        CmpOp::from_symbol(sym).with_context(|| format!("operator `{sym}` unsupported"))
    }

    fn agg_code(&self, a: Option<Agg>) -> usize {
        let k = a.map_or("", Agg::keyword);
        self.agg_ops.iter().position(|x| x == k).expect("aggregator has a code")
    }

    fn cond_code(&self, op: CmpOp) -> Option<usize> {
        self.cond_ops.iter().position(|x| x == op.symbol())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SqlRecord {
    pub sel: usize,
    pub agg: usize,
    /// `[column index, operator code, value]`.
    pub conds: Vec<(usize, usize, serde_json::Value)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuestionRecord {
    #[serde(default)]
    pub phase: u32,
    pub table_id: String,
    pub question: String,
    pub sql: SqlRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableRecord {
    pub id: String,
    pub header: Vec<String>,
    #[serde(default)]
    pub types: Vec<String>,
    pub rows: Vec<Vec<serde_json::Value>>,
}

fn cell_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), format_number),
        other => other.to_string(),
    }
}

/// Numeric iff every non-empty cell parses as a number (and one exists).
pub fn infer_type<'a>(cells: impl IntoIterator<Item = &'a str>) -> ColumnType {
    let mut any = false;
    for c in cells {
        let c = c.trim();
        if c.is_empty() {
            continue;
        }
        any = true;
        if parse_number(c).is_none() {
            return ColumnType::Str;
        }
    }
    if any {
        ColumnType::Num
    } else {
        ColumnType::Str
    }
}

/// Build a table from a release record. Duplicate or empty headers get a
/// positional suffix so every column stays addressable.
pub fn table_from_record(r: &TableRecord) -> Result<Table> {
    let text: Vec<Vec<String>> = r.rows.iter().map(|row| row.iter().map(cell_text).collect()).collect();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut columns = Vec::with_capacity(r.header.len());
    for (i, h) in r.header.iter().enumerate() {
        let mut name = h.trim().to_string();
        if name.is_empty() {
            name = format!("column {}", i + 1);
        }
        let n = seen.entry(name.to_lowercase()).or_insert(0);
        *n += 1;
        if *n > 1 {
            name = format!("{name} {}", *n);
        }
        let ty = infer_type(text.iter().filter_map(|row| row.get(i).map(String::as_str)));
        columns.push(Column { name, ty });
    }
    Ok(Table::from_text_rows(r.id.clone(), columns, text)?)
}

/// Convert a structured query record against its table.
pub fn query_from_record(r: &SqlRecord, table: &Table, codes: &Codes) -> Result<SqlQuery> {
    let col = |i: usize| -> Result<String> {
        Ok(table.columns.get(i).with_context(|| format!("column index {i} out of range"))?.name.clone())
    };
    let sel = col(r.sel)?;
    let item = match codes.agg(r.agg)? {
        Some(a) => SelectItem::agg(a, sel),
        None => SelectItem::raw(sel),
    };
    let mut q = SqlQuery::select(vec![item]);
    for (c, op, v) in &r.conds {
        let value = Value::Str(cell_text(v));
        q = q.and_where(Condition::new(col(*c)?, codes.cond(*op)?, value));
    }
    Ok(q.bind(table)?)
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path, skipped: &mut usize) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) => {
                tracing::warn!("{}:{}: skipped: {e}", path.display(), n + 1);
                *skipped += 1;
            }
        }
    }
    Ok(out)
}

/// Load split `name` from `dir`. Malformed or unconvertible records are
/// skipped with a warning and counted in `Corpus::skipped`.
pub fn load_wikisql(dir: &Path, name: &str) -> Result<Corpus> {
    let codes = Codes::shipped();
    let mut c = Corpus::default();
    let mut skipped = 0;
    let tables: Vec<TableRecord> = read_lines(&dir.join(format!("{name}.tables.jsonl")), &mut skipped)?;
    for t in &tables {
        match table_from_record(t) {
            Ok(table) => c.add_table(&t.id, table),
            Err(e) => {
                tracing::warn!("table {}: skipped: {e:#}", t.id);
                skipped += 1;
            }
        }
    }
    let records: Vec<QuestionRecord> = read_lines(&dir.join(format!("{name}.jsonl")), &mut skipped)?;
    for (n, r) in records.into_iter().enumerate() {
        let converted = c
            .table(&r.table_id)
            .with_context(|| format!("unknown table `{}`", r.table_id))
            .and_then(|t| query_from_record(&r.sql, &t.table, &codes));
        match converted {
            Ok(sql) => c.examples.push(Example { question: r.question, table: r.table_id, sql }),
            Err(e) => {
                tracing::warn!("{name} record {}: skipped: {e:#}", n + 1);
                skipped += 1;
            }
        }
    }
    c.skipped = skipped;
    Ok(c)
}

/// Encode a simple query (one select item, conjunctive single conditions)
/// as a release record.
pub fn record_from_query(q: &SqlQuery, table: &Table, codes: &Codes) -> Option<SqlRecord> {
    if q.select.len() != 1 || !q.group_by.is_empty() || !q.having.is_empty() || q.superlative.is_some() {
        return None;
    }
    let sel = table.column_index(&q.select[0].column)?;
    let mut conds = Vec::new();
    for clause in &q.where_ {
        let [c] = clause.as_slice() else { return None };
        let v = match &c.value {
            Value::Num(n) => serde_json::json!(n),
            v => serde_json::Value::String(v.display_text()),
        };
        conds.push((table.column_index(&c.column)?, codes.cond_code(c.op)?, v));
    }
    Some(SqlRecord { sel, agg: codes.agg_code(q.select[0].agg), conds })
}

pub fn write_split(dir: &Path, name: &str, tables: &[TableRecord], records: &[QuestionRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(format!("{name}.tables.jsonl")))?;
    for t in tables {
        writeln!(f, "{}", serde_json::to_string(t)?)?;
    }
    let mut f = fs::File::create(dir.join(format!("{name}.jsonl")))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

struct Domain {
    /// Header, numeric flag, value pool (ignored for numeric columns).
    columns: &'static [(&'static str, bool, &'static [&'static str])],
    range: (u32, u32),
}

const FIRST: &[&str] = &["James", "Maria", "Ahmed", "Chen", "Olga", "Pedro", "Grace", "Ivan", "Laura", "Kenji", "Amara", "Lukas"];
const LAST: &[&str] = &["Walker", "Santos", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Kowalski", "Byrne", "Haddad", "Novak"];

const DOMAINS: &[Domain] = &[
    Domain {
        columns: &[
            ("Player", false, &[]),
            ("Position", false, &["Guard", "Forward", "Center", "Goalkeeper", "Defender", "Pitcher"]),
            ("School", false, &["Duke", "Stanford", "Michigan", "Georgetown", "Villanova", "Gonzaga"]),
            ("Nationality", false, &["Canada", "Brazil", "Nigeria", "Sweden", "Japan", "Serbia"]),
            ("Points", true, &[]),
            ("Games", true, &[]),
        ],
        range: (1, 90),
    },
    Domain {
        columns: &[
            ("Title", false, &["Pilot", "Homecoming", "The Storm", "Lost Keys", "Open House", "Finale", "Crossroads", "Echoes"]),
            ("Director", false, &["Ava Brooks", "Sam Reyes", "Nina Patel", "Tom Hale", "Rosa Klein"]),
            ("Writer", false, &["Ben Ortiz", "Kim Lee", "Dana Frost", "Eli Stone"]),
            ("Viewers", true, &[]),
            ("Season", true, &[]),
        ],
        range: (1, 30),
    },
    Domain {
        columns: &[
            ("District", false, &["Ohio 3", "Texas 7", "Iowa 2", "Utah 1", "Maine 4", "Kansas 5", "Idaho 6"]),
            ("Incumbent", false, &[]),
            ("Party", false, &["Democratic", "Republican", "Independent", "Green"]),
            ("Result", false, &["Re-elected", "Retired", "Lost renomination", "Defeated"]),
            ("Votes", true, &[]),
        ],
        range: (1000, 90000),
    },
    Domain {
        columns: &[
            ("Race", false, &["Monaco", "Silverstone", "Monza", "Suzuka", "Interlagos", "Spa", "Imola"]),
            ("Driver", false, &[]),
            ("Team", false, &["Ferrari", "McLaren", "Williams", "Renault", "Lotus", "Brabham"]),
            ("Round", true, &[]),
            ("Laps", true, &[]),
        ],
        range: (1, 80),
    },
    Domain {
        columns: &[
            ("City", false, &["Lyon", "Porto", "Gdansk", "Bergen", "Turin", "Leipzig", "Malmo", "Graz", "Ghent"]),
            ("Region", false, &["North", "South", "East", "West", "Central"]),
            ("Mayor", false, &[]),
            ("Population", true, &[]),
            ("Area", true, &[]),
        ],
        range: (50, 9000),
    },
];

fn person(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", FIRST.choose(rng).expect("names"), LAST.choose(rng).expect("names"))
}

fn make_table(id: String, d: &Domain, rng: &mut ChaCha8Rng) -> TableRecord {
    let n = rng.gen_range(8..=16);
    let rows = (0..n)
        .map(|_| {
            d.columns
                .iter()
                .map(|&(_, num, pool)| {
                    if num {
                        serde_json::json!(rng.gen_range(d.range.0..=d.range.1))
                    } else if pool.is_empty() {
                        serde_json::Value::String(person(rng))
                    } else {
                        serde_json::Value::String(pool.choose(rng).expect("pool").to_string())
                    }
                })
                .collect()
        })
        .collect();
    TableRecord {
        id,
        header: d.columns.iter().map(|c| c.0.to_string()).collect(),
        types: d.columns.iter().map(|c| if c.1 { "real" } else { "text" }.to_string()).collect(),
        rows,
    }
}

fn question(t: &TableRecord, rng: &mut ChaCha8Rng, codes: &Codes) -> Option<QuestionRecord> {
    let table = table_from_record(t).ok()?;
    let nc = table.columns.len();
    let nums: Vec<usize> = (0..nc).filter(|&i| table.column_type(i) == ColumnType::Num).collect();
    let row = &table.rows[rng.gen_range(0..table.rows.len())];
    let lower = |i: usize| table.columns[i].name.to_lowercase();
    let cond_col = rng.gen_range(0..nc);
    let mut sel = rng.gen_range(0..nc);
    if sel == cond_col {
        sel = (sel + 1) % nc;
    }
    let v = row[cond_col].clone();
    let vt = v.display_text();
    let (s, c) = (lower(sel), lower(cond_col));
    let eq = Condition::new(table.columns[cond_col].name.clone(), CmpOp::Eq, v);
    let (text, q) = match rng.gen_range(0..8) {
        0 => (format!("What is the {s} when the {c} is {vt}?"), SqlQuery::select(vec![SelectItem::raw(lower(sel))]).and_where(eq)),
        1 => (format!("What {s} has a {c} of {vt}?"), SqlQuery::select(vec![SelectItem::raw(lower(sel))]).and_where(eq)),
        2 => (format!("Name the {s} for {vt}"), SqlQuery::select(vec![SelectItem::raw(lower(sel))]).and_where(eq)),
        3 => (format!("How many {s} have a {c} of {vt}?"), SqlQuery::select(vec![SelectItem::agg(Agg::Count, lower(sel))]).and_where(eq)),
        4 | 5 => {
            let n = *nums.iter().find(|&&i| i != cond_col)?;
            let (a, w) = *[(Agg::Max, "highest"), (Agg::Min, "lowest"), (Agg::Sum, "total"), (Agg::Avg, "average")].choose(rng)?;
            (format!("What is the {w} {} when the {c} is {vt}?", lower(n)), SqlQuery::select(vec![SelectItem::agg(a, lower(n))]).and_where(eq))
        }
        6 => {
            let n = *nums.choose(rng)?;
            let x = row[n].clone();
            let (op, w) = *[(CmpOp::Gt, "larger than"), (CmpOp::Lt, "smaller than"), (CmpOp::Gt, "more than"), (CmpOp::Lt, "less than")].choose(rng)?;
            let s = if sel == n { lower(cond_col) } else { s };
            let q = SqlQuery::select(vec![SelectItem::raw(s.clone())]).and_where(Condition::new(lower(n), op, x.clone()));
            (format!("Which {s} has a {} {w} {}?", lower(n), x.display_text()), q)
        }
        _ => {
            let c2 = (0..nc).find(|&i| i != cond_col && i != sel)?;
            let v2 = row[c2].clone();
            let q = SqlQuery::select(vec![SelectItem::raw(lower(sel))])
                .and_where(eq)
                .and_where(Condition::new(lower(c2), CmpOp::Eq, v2.clone()));
            (format!("What is the {s} when the {c} is {vt} and the {} is {}?", lower(c2), v2.display_text()), q)
        }
    };
    let q = q.bind(&table).ok()?;
    Some(QuestionRecord { phase: 1, table_id: t.id.clone(), question: text, sql: record_from_query(&q, &table, codes)? })
}

/// A release-format slice of `n` questions over generated tables.
pub fn generate_slice(seed: u64, n: usize) -> (Vec<TableRecord>, Vec<QuestionRecord>) {
    let codes = Codes::shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tables = (n / 25).max(1);
    let tables: Vec<TableRecord> = (0..n_tables)
        .map(|k| make_table(format!("2-{}-{k}", 1000 + k % DOMAINS.len()), &DOMAINS[k % DOMAINS.len()], &mut rng))
        .collect();
    let mut records = Vec::with_capacity(n);
    while records.len() < n {
        let t = &tables[rng.gen_range(0..tables.len())];
        if let Some(r) = question(t, &mut rng, &codes) {
            records.push(r);
        }
    }
    (tables, records)
}
