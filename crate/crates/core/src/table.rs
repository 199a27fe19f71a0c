//! Tables: the grounding context of every question.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::value::{fold_text, ColumnType, Value};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
}

/// Normalized form of a column or table name: case-folded, whitespace collapsed.
pub fn normalize_name(name: &str) -> String {
    fold_text(name)
}

impl Table {
    /// Build a table, validating unique column names, row widths and cell types.
    pub fn new(name: impl Into<String>, columns: Vec<Column>, rows: Vec<Vec<Value>>) -> Result<Table> {
        let name = name.into();
        if columns.is_empty() {
            return Err(Error::Table(format!("table `{name}` has no columns")));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            let key = normalize_name(&c.name);
            if key.is_empty() {
                return Err(Error::Table(format!("table `{name}` has an empty column name")));
            }
            if !seen.insert(key) {
                return Err(Error::Table(format!("duplicate column `{}` in table `{name}`", c.name)));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Table(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            for (cell, col) in row.iter().zip(&columns) {
                if let Some(t) = cell.type_of() {
                    if t != col.ty {
                        return Err(Error::Table(format!(
                            "row {i}: cell `{cell}` is {t} but column `{}` is {}",
                            col.name, col.ty
                        )));
                    }
                }
            }
        }
        Ok(Table { name, columns, rows })
    }

    /// Build from raw text cells, parsing each according to its column type.
    pub fn from_text_rows(
        name: impl Into<String>,
        columns: Vec<Column>,
        rows: Vec<Vec<String>>,
    ) -> Result<Table> {
        let mut parsed = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Table(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            let mut out = Vec::with_capacity(row.len());
            for (raw, col) in row.iter().zip(&columns) {
                let v = Value::parse_typed(raw, col.ty).ok_or_else(|| {
                    Error::Table(format!("row {i}: `{raw}` is not a valid {} for column `{}`", col.ty, col.name))
                })?;
                out.push(v);
            }
            parsed.push(out);
        }
        Table::new(name, columns, parsed)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        let key = normalize_name(name);
        self.columns.iter().position(|c| normalize_name(&c.name) == key)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    pub fn column_type(&self, idx: usize) -> ColumnType {
        self.columns[idx].ty
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Read CSV with a two-row header: column names, then column types.
    pub fn read_csv<R: Read>(name: impl Into<String>, reader: R) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let names = records
            .next()
            .ok_or_else(|| Error::Table("missing header row".into()))??;
        let types = records
            .next()
            .ok_or_else(|| Error::Table("missing type row".into()))??;
        if names.len() != types.len() {
            return Err(Error::Table(format!(
                "header has {} names but {} types",
                names.len(),
                types.len()
            )));
        }
        let mut columns = Vec::with_capacity(names.len());
        for (n, t) in names.iter().zip(types.iter()) {
            let ty = ColumnType::parse(t)
                .ok_or_else(|| Error::Table(format!("unknown column type `{t}` for `{n}`")))?;
            columns.push(Column { name: n.trim().to_string(), ty });
        }
        let mut rows = Vec::new();
        for rec in records {
            let rec = rec?;
            rows.push(rec.iter().map(|s| s.to_string()).collect());
        }
        Table::from_text_rows(name, columns, rows)
    }

    pub fn read_csv_path(path: &std::path::Path) -> Result<Table> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().replace(['_', '-'], " "))
            .unwrap_or_else(|| "table".into());
        Table::read_csv(name, std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        w.write_record(self.columns.iter().map(|c| c.ty.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.display_text()))?;
        }
        w.flush()?;
        Ok(())
    }
}
