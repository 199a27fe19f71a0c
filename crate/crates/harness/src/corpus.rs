//! Question/SQL corpora and their table stores.
//!
//! The native on-disk form is a directory holding `examples.jsonl` (one
//! `{"question", "table", "sql"}` object per line, SQL as rendered text) and
//! `tables/<id>.csv` in the two-header-row CSV format.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tablequery_core::abstraction::TableIndex;
use tablequery_core::sql::{parse_sql, SqlQuery};
use tablequery_core::table::Table;
use tablequery_core::vocab::English;

#[derive(Clone, Debug)]
pub struct Example {
    pub question: String,
    pub table: String,
    pub sql: SqlQuery,
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub tables: BTreeMap<String, Arc<TableIndex>>,
    pub examples: Vec<Example>,
    /// Records dropped while loading.
    pub skipped: usize,
}

#[derive(Serialize, Deserialize)]
struct Line {
    question: String,
    table: String,
    sql: String,
}

/// Build the lookup index of a table with the shipped normalizer.
pub fn index_table(table: Table) -> Arc<TableIndex> {
    Arc::new(TableIndex::new(table, &English))
}

impl Corpus {
    pub fn add_table(&mut self, id: &str, table: Table) {
        self.tables.insert(id.to_string(), index_table(table));
    }

    pub fn table(&self, id: &str) -> Option<&Arc<TableIndex>> {
        self.tables.get(id)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Check the corpus invariants: tables resolve and gold queries validate.
    pub fn check(&self) -> Result<()> {
        for (i, e) in self.examples.iter().enumerate() {
            let t = self.table(&e.table).with_context(|| format!("example {i}: unknown table `{}`", e.table))?;
            e.sql.validate(&t.table).with_context(|| format!("example {i}: gold query"))?;
        }
        Ok(())
    }

    /// A corpus holding the given examples and only the tables they use.
    pub fn subset(&self, idx: &[usize]) -> Corpus {
        let examples: Vec<Example> = idx.iter().map(|&i| self.examples[i].clone()).collect();
        let tables = self
            .tables
            .iter()
            .filter(|(id, _)| examples.iter().any(|e| &e.table == *id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Corpus { tables, examples, skipped: 0 }
    }

    pub fn load_native(dir: &Path) -> Result<Corpus> {
        let mut c = Corpus::default();
        let tdir = dir.join("tables");
        let mut entries: Vec<_> = fs::read_dir(&tdir)
            .with_context(|| format!("reading {}", tdir.display()))?
            .collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let p = e.path();
            if p.extension().is_some_and(|x| x == "csv") {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
                let t = Table::read_csv_path(&p).with_context(|| format!("table {}", p.display()))?;
                c.add_table(&id, t);
            }
        }
        let path = dir.join("examples.jsonl");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Result<Example> = (|| {
                let l: Line = serde_json::from_str(line)?;
                let t = c.table(&l.table).with_context(|| format!("unknown table `{}`", l.table))?;
                let sql = parse_sql(&l.sql, Some(&t.table))?;
                Ok(Example { question: l.question, table: l.table, sql })
            })();
            match parsed {
                Ok(e) => c.examples.push(e),
                Err(err) => {
                    tracing::warn!("{}:{}: skipped: {err:#}", path.display(), n + 1);
                    c.skipped += 1;
                }
            }
        }
        Ok(c)
    }

    pub fn save_native(&self, dir: &Path) -> Result<()> {
        let tdir = dir.join("tables");
        fs::create_dir_all(&tdir)?;
        for (id, t) in &self.tables {
            if id.contains(['/', '\\']) || id.starts_with('.') {
                bail!("table id `{id}` is not a plain file name");
            }
            t.table.write_csv(fs::File::create(tdir.join(format!("{id}.csv")))?)?;
        }
        let mut f = fs::File::create(dir.join("examples.jsonl"))?;
        for e in &self.examples {
            let line = Line { question: e.question.clone(), table: e.table.clone(), sql: e.sql.to_sql(&e.table) };
            writeln!(f, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }
}
