//! Typed cell values and the textual normal forms used for numbers and dates.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Str,
    Num,
    Date,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Str => "str",
            ColumnType::Num => "num",
            ColumnType::Date => "date",
        }
    }

    pub fn parse(s: &str) -> Option<ColumnType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "str" | "text" | "string" => Some(ColumnType::Str),
            "num" | "real" | "number" => Some(ColumnType::Num),
            "date" => Some(ColumnType::Date),
            _ => None,
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A table cell or query literal.
///
/// Dates are held as ISO-8601 strings (`YYYY`, `YYYY-MM` or `YYYY-MM-DD`),
/// which compare correctly as strings at equal precision.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Null,
    Num(f64),
    Str(String),
    Date(String),
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Num(n) => s.serialize_f64(*n),
            Value::Str(v) | Value::Date(v) => s.serialize_str(v),
        }
    }
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn type_of(&self) -> Option<ColumnType> {
        match self {
            Value::Null => None,
            Value::Num(_) => Some(ColumnType::Num),
            Value::Str(_) => Some(ColumnType::Str),
            Value::Date(_) => Some(ColumnType::Date),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            _ => None,
        }
    }

    /// Parse raw cell text according to the declared column type. Empty text is null.
    pub fn parse_typed(raw: &str, ty: ColumnType) -> Option<Value> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Some(Value::Null);
        }
        match ty {
            ColumnType::Str => Some(Value::Str(raw.to_string())),
            ColumnType::Num => parse_number(raw).map(Value::Num),
            ColumnType::Date => normalize_date(raw).map(Value::Date),
        }
    }

    /// Text used for display, CSV output and entry-value matching.
    pub fn display_text(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Num(n) => format_number(*n),
            Value::Str(s) | Value::Date(s) => s.clone(),
        }
    }

    /// Key under which two values are considered equal by the executor.
    pub fn match_key(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Num(n) => format_number(*n),
            Value::Str(s) => fold_text(s),
            Value::Date(s) => s.clone(),
        }
    }

    /// Total order used for sorting; `None` when the values are not comparable.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.partial_cmp(b),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(fold_text(a).cmp(&fold_text(b))),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_text())
    }
}

/// Case-folded, whitespace-collapsed text.
pub fn fold_text(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse integers, decimals and digit-grouped numbers (`3,000.5`).
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    if body.is_empty() || !body.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    if body.contains(',') {
        let int_part = body.split('.').next().unwrap_or("");
        let groups: Vec<&str> = int_part.split(',').collect();
        let well_grouped = !groups[0].is_empty()
            && groups[0].len() <= 3
            && groups[1..].iter().all(|g| g.len() == 3);
        if !well_grouped {
            return None;
        }
    }
    let cleaned: String = s.chars().filter(|&c| c != ',').collect();
    if !cleaned
        .chars()
        .all(|c| c.is_ascii_digit() || c == '.' || c == '-' || c == '+')
    {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Canonical decimal text for a number: integers without a fractional part,
/// otherwise the shortest round-tripping representation.
pub fn format_number(n: f64) -> String {
    if n == 0.0 {
        return "0".to_string();
    }
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

const MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];

pub fn month_number(name: &str) -> Option<u32> {
    let name = name.to_ascii_lowercase();
    let name = name.trim_end_matches('.');
    if name.len() < 3 {
        return None;
    }
    MONTHS
        .iter()
        .position(|m| *m == name || (name.len() == 3 && m.starts_with(name)) || (name == "sept" && *m == "september"))
        .map(|i| i as u32 + 1)
}

fn valid_ymd(y: u32, m: u32, d: u32) -> bool {
    (1000..=9999).contains(&y) && (1..=12).contains(&m) && (1..=31).contains(&d)
}

/// Normalize a date string to its ISO form. Accepts `YYYY`, `YYYY-MM`,
/// `YYYY-MM-DD`, `YYYY/MM/DD`, `DD/MM/YYYY` and `Month DD, YYYY`.
pub fn normalize_date(s: &str) -> Option<String> {
    let s = s.trim();
    let digits = |p: &str| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit());
    if s.len() == 4 && digits(s) {
        return Some(s.to_string());
    }
    for sep in ['-', '/'] {
        let parts: Vec<&str> = s.split(sep).collect();
        if parts.iter().all(|p| digits(p)) {
            match parts.as_slice() {
                [y, m] if y.len() == 4 && m.len() <= 2 => {
                    let (y, m): (u32, u32) = (y.parse().ok()?, m.parse().ok()?);
                    if valid_ymd(y, m, 1) {
                        return Some(format!("{y:04}-{m:02}"));
                    }
                }
                [y, m, d] if y.len() == 4 => {
                    let (y, m, d): (u32, u32, u32) = (y.parse().ok()?, m.parse().ok()?, d.parse().ok()?);
                    if valid_ymd(y, m, d) {
                        return Some(format!("{y:04}-{m:02}-{d:02}"));
                    }
                }
                [d, m, y] if y.len() == 4 && sep == '/' => {
                    let (y, m, d): (u32, u32, u32) = (y.parse().ok()?, m.parse().ok()?, d.parse().ok()?);
                    if valid_ymd(y, m, d) {
                        return Some(format!("{y:04}-{m:02}-{d:02}"));
                    }
                }
                _ => {}
            }
        }
    }
    // Month DD, YYYY
    let cleaned = s.replace(',', " ");
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    if let [month, day, year] = words.as_slice() {
        let m = month_number(month)?;
        let d: u32 = day.trim_end_matches(|c: char| c.is_ascii_alphabetic()).parse().ok()?;
        if year.len() == 4 && digits(year) {
            let y: u32 = year.parse().ok()?;
            if valid_ymd(y, m, d) {
                return Some(format!("{y:04}-{m:02}-{d:02}"));
            }
        }
    }
    None
}
