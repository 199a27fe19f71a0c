//! Template corpus of analysis questions over small tables.
//!
//! Six question types: statistic, group by, superlative, filter,
//! comparison and pinpoint. Each template builds the question and its gold
//! query together. Phrasing varies, and column and value mentions may carry
//! a one-letter typo that stays within the edit-distance linking threshold.

use std::sync::Arc;

use anyhow::{bail, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tablequery_core::abstraction::TableIndex;
use tablequery_core::pipeline::Resources;
use tablequery_core::sql::{Agg, CmpOp, Condition, SelectItem, SqlQuery, Superlative};
use tablequery_core::table::Table;
use tablequery_core::training::{label_candidates, Status};
use tablequery_core::value::{ColumnType, Value};

use crate::corpus::{index_table, Corpus, Example};

pub const TOY_TABLES: [(&str, &str); 3] = [
    ("car_sales", include_str!("../data/toy/car_sales.csv")),
    ("shark_attacks", include_str!("../data/toy/shark_attacks.csv")),
    ("movie_revenue", include_str!("../data/toy/movie_revenue.csv")),
];

pub fn toy_tables() -> Vec<(String, Table)> {
    TOY_TABLES
        .iter()
        .map(|(id, csv)| {
            let t = Table::read_csv(id.replace('_', " "), csv.as_bytes()).expect("shipped toy table parses");
            (id.to_string(), t)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Statistic,
    GroupBy,
    Superlative,
    Filter,
    Comparison,
    Pinpoint,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::Statistic,
        QuestionType::GroupBy,
        QuestionType::Superlative,
        QuestionType::Filter,
        QuestionType::Comparison,
        QuestionType::Pinpoint,
    ];
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub seed: u64,
    pub n: usize,
    /// Chance that an eligible mention gets a typo.
    pub typo_rate: f64,
    /// Label every pair and fail on an unreachable one.
    pub check_reachable: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { seed: 0, n: 500, typo_rate: 0.1, check_reachable: true }
    }
}

struct Shape<'t> {
    table: &'t Table,
    strs: Vec<usize>,
    nums: Vec<usize>,
    dates: Vec<usize>,
}

impl<'t> Shape<'t> {
    fn of(table: &'t Table) -> Shape<'t> {
        let by = |ty| (0..table.columns.len()).filter(|&c| table.column_type(c) == ty).collect();
        Shape { table, strs: by(ColumnType::Str), nums: by(ColumnType::Num), dates: by(ColumnType::Date) }
    }

    fn name(&self, c: usize) -> String {
        self.table.columns[c].name.clone()
    }

    fn distinct(&self, c: usize) -> Vec<Value> {
        let mut out: Vec<Value> = Vec::new();
        for r in &self.table.rows {
            if !r[c].is_null() && !out.iter().any(|v| v.match_key() == r[c].match_key()) {
                out.push(r[c].clone());
            }
        }
        out
    }
}

const AGG_WORDS: [(Agg, &[&str]); 4] = [
    (Agg::Sum, &["total", "sum of", "overall"]),
    (Agg::Avg, &["average", "mean"]),
    (Agg::Max, &["maximum", "max"]),
    (Agg::Min, &["minimum", "min"]),
];

struct Gen<'a> {
    rng: ChaCha8Rng,
    typo_rate: f64,
    shape: &'a Shape<'a>,
}

impl Gen<'_> {
    fn pick<'x, T>(&mut self, xs: &'x [T]) -> &'x T {
        xs.choose(&mut self.rng).expect("non-empty choice")
    }

    /// Drop or replace one interior letter of a word long enough to stay
    /// above the linking threshold.
    fn noisy(&mut self, text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        if chars.len() < 6 || !chars.iter().all(|c| c.is_ascii_alphabetic()) || !self.rng.gen_bool(self.typo_rate) {
            return text.to_string();
        }
        let i = self.rng.gen_range(1..chars.len() - 1);
        let mut out = chars.clone();
        if self.rng.gen_bool(0.5) {
            out.remove(i);
        } else {
            let c = (b'a' + self.rng.gen_range(0..26u8)) as char;
            if c == out[i] {
                out.remove(i);
            } else {
                out[i] = c;
            }
        }
        out.into_iter().collect()
    }

    fn col(&mut self, c: usize, plural: bool) -> String {
        let base = self.shape.name(c).to_lowercase();
        if !plural || base.ends_with('s') {
            return self.noisy(&base);
        }
        // Plurals are linked through their lemma, which a typo would break.
        match base.strip_suffix('y') {
            Some(stem) => format!("{stem}ies"),
            None => format!("{base}s"),
        }
    }

    fn value(&mut self, v: &Value) -> String {
        let t = v.display_text().to_lowercase();
        self.noisy(&t)
    }

    fn agg(&mut self) -> (Agg, String) {
        let (a, words) = *self.pick(&AGG_WORDS);
        (a, self.pick(words).to_string())
    }

    fn str_col(&mut self) -> usize {
        *self.pick(&self.shape.strs.clone())
    }

    fn num_col(&mut self) -> usize {
        *self.pick(&self.shape.nums.clone())
    }

    fn two_values(&mut self, c: usize) -> (Value, Value) {
        let mut vals = self.shape.distinct(c);
        vals.shuffle(&mut self.rng);
        (vals[0].clone(), vals[1].clone())
    }

    fn generate(&mut self, ty: QuestionType) -> Option<(String, SqlQuery)> {
        let sh = self.shape;
        let q = match ty {
            QuestionType::Statistic => {
                let n = self.num_col();
                let (a, w) = self.agg();
                let lead = *self.pick(&["please compute the", "what is the", "show me the", "give me the", ""]);
                let tail = *self.pick(&[" for me", "", "", " please"]);
                let c = self.col(n, false);
                let text = format!("{lead} {w} {c}{tail}");
                (text, SqlQuery::select(vec![SelectItem::agg(a, sh.name(n))]))
            }
            QuestionType::GroupBy => {
                let n = self.num_col();
                let s = self.str_col();
                let (a, w) = self.agg();
                let (cn, cs) = (self.col(n, false), self.col(s, false));
                let mut q = SqlQuery::select(vec![SelectItem::agg(a, sh.name(n))]).group(sh.name(s));
                let two = sh.strs.len() > 1 && self.rng.gen_bool(0.25);
                let text = if two {
                    let s2 = *sh.strs.iter().find(|&&x| x != s).expect("second string column");
                    let cs2 = self.col(s2, false);
                    q = q.group(sh.name(s2));
                    format!("show me {w} {cn} for each {cs} and {cs2}")
                } else {
                    match self.rng.gen_range(0..3) {
                        0 => format!("show me {w} {cn} for each {cs}"),
                        1 => format!("{w} {cn} by {cs}"),
                        _ => format!("what is the {w} {cn} per {cs}"),
                    }
                };
                q.select.splice(0..0, q.group_by.iter().map(|g| SelectItem::raw(g.clone())).collect::<Vec<_>>());
                (text, q)
            }
            QuestionType::Superlative => {
                let n = self.num_col();
                let s = self.str_col();
                let desc = self.rng.gen_bool(0.6);
                let (cn, cs) = (self.col(n, false), self.col(s, false));
                let text = if desc {
                    let w = *self.pick(&["most", "highest", "largest"]);
                    match self.rng.gen_range(0..2) {
                        0 => format!("which {cs} has the {w} {cn}"),
                        _ => format!("{cs} with the {w} {cn}"),
                    }
                } else {
                    let w = *self.pick(&["lowest", "least", "smallest", "fewest"]);
                    match self.rng.gen_range(0..2) {
                        0 => format!("which {cs} has the {w} {cn}"),
                        _ => format!("{cs} with the {w} {cn}"),
                    }
                };
                let mut q = SqlQuery::select(vec![SelectItem::raw(sh.name(s))]);
                q.superlative = Some(Superlative { column: sh.name(n), agg: None, descending: desc });
                (text, q)
            }
            QuestionType::Filter => {
                let n = self.num_col();
                let by_year = !sh.dates.is_empty() && self.rng.gen_bool(0.25);
                if by_year {
                    let d = sh.dates[0];
                    let (a, w) = self.agg();
                    let year = self.pick(&sh.distinct(d)).clone();
                    let cn = self.col(n, false);
                    let text = format!("{w} {cn} in {}", year.display_text());
                    let q = SqlQuery::select(vec![SelectItem::agg(a, sh.name(n))])
                        .and_where(Condition::new(sh.name(d), CmpOp::Eq, year));
                    (text, q)
                } else {
                    let s = self.str_col();
                    let v = self.pick(&sh.distinct(s)).clone();
                    let (cn, vv) = (self.col(n, false), self.value(&v));
                    let cond = Condition::new(sh.name(s), CmpOp::Eq, v);
                    match self.rng.gen_range(0..3) {
                        0 => (format!("show me {cn} of {vv}"), SqlQuery::select(vec![SelectItem::raw(sh.name(n))]).and_where(cond)),
                        1 => {
                            let (a, w) = self.agg();
                            (format!("{w} {cn} of {vv}"), SqlQuery::select(vec![SelectItem::agg(a, sh.name(n))]).and_where(cond))
                        }
                        _ => {
                            let s2 = *sh.strs.iter().find(|&&x| x != s)?;
                            let (a, w) = self.agg();
                            let cs2 = self.col(s2, false);
                            let q = SqlQuery::select(vec![SelectItem::raw(sh.name(s2)), SelectItem::agg(a, sh.name(n))])
                                .and_where(cond)
                                .group(sh.name(s2));
                            (format!("show me {w} {cn} of {vv} by each {cs2}"), q)
                        }
                    }
                }
            }
            QuestionType::Comparison => {
                let n = self.num_col();
                let s = self.str_col();
                let (v1, v2) = self.two_values(s);
                let (cn, t1, t2) = (self.col(n, false), self.value(&v1), self.value(&v2));
                let clause = vec![
                    Condition::new(sh.name(s), CmpOp::Eq, v1),
                    Condition::new(sh.name(s), CmpOp::Eq, v2),
                ];
                if self.rng.gen_bool(0.5) {
                    let mut q = SqlQuery::select(vec![SelectItem::raw(sh.name(n))]);
                    q.where_.push(clause);
                    (format!("compare {cn} of {t1} and {t2}"), q)
                } else {
                    let (a, w) = self.agg();
                    let cs = self.col(s, false);
                    let mut q = SqlQuery::select(vec![SelectItem::raw(sh.name(s)), SelectItem::agg(a, sh.name(n))])
                        .group(sh.name(s));
                    q.where_.push(clause);
                    (format!("compare {w} {cn} of {t1} and {t2} for each {cs}"), q)
                }
            }
            QuestionType::Pinpoint => {
                let n = self.num_col();
                let s = self.str_col();
                let vals: Vec<f64> = sh.distinct(n).iter().filter_map(Value::as_num).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut threshold = self.rng.gen_range(lo..=hi);
                let magnitude = 10f64.powi(((hi - lo).max(1.0)).log10().floor() as i32 - 1).max(1.0);
                threshold = ((threshold / magnitude).round() * magnitude).clamp(lo, hi);
                let (op, phrase) = *self.pick(&[
                    (CmpOp::Gt, "more than"),
                    (CmpOp::Gt, "over"),
                    (CmpOp::Gt, "above"),
                    (CmpOp::Lt, "less than"),
                    (CmpOp::Lt, "under"),
                    (CmpOp::Lt, "below"),
                    (CmpOp::Ge, "at least"),
                    (CmpOp::Le, "at most"),
                ]);
                let (cs, cn) = (self.col(s, true), self.col(n, false));
                let lead = *self.pick(&["select", "show", "list", "find"]);
                let text = format!("{lead} {cs} whose {cn} is {phrase} {}", Value::Num(threshold).display_text());
                let q = SqlQuery::select(vec![SelectItem::raw(sh.name(s))])
                    .and_where(Condition::new(sh.name(n), op, Value::Num(threshold)));
                (text, q)
            }
        };
        Some((q.0.trim().to_string(), q.1))
    }
}

/// Counts by question type of a generated corpus.
pub fn type_counts(types: &[QuestionType]) -> Vec<(QuestionType, usize)> {
    QuestionType::ALL.iter().map(|&t| (t, types.iter().filter(|&&x| x == t).count())).collect()
}

/// Generate `n` pairs spread over the tables and the six question types.
/// Returns the corpus and each example's type.
pub fn generate(tables: &[(String, Table)], cfg: &GenConfig, res: &Resources) -> Result<(Corpus, Vec<QuestionType>)> {
    let mut corpus = Corpus::default();
    let mut usable: Vec<(String, Arc<TableIndex>)> = Vec::new();
    for (id, t) in tables {
        let sh = Shape::of(t);
        if sh.nums.is_empty() || sh.strs.is_empty() {
            tracing::warn!("table `{id}` skipped: needs a numeric and a string column");
            continue;
        }
        let idx = index_table(t.clone());
        corpus.tables.insert(id.clone(), idx.clone());
        usable.push((id.clone(), idx));
    }
    if cfg.n > 0 && usable.is_empty() {
        bail!("no table has both a numeric and a string column");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut types = Vec::with_capacity(cfg.n);
    let mut attempts = 0;
    while corpus.examples.len() < cfg.n {
        attempts += 1;
        if attempts > cfg.n * 20 + 100 {
            bail!("could not generate {} valid pairs", cfg.n);
        }
        let k = corpus.examples.len();
        let (id, idx) = &usable[k % usable.len()];
        let ty = QuestionType::ALL[(k / usable.len()) % QuestionType::ALL.len()];
        let shape = Shape::of(&idx.table);
        let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(rng.gen()), typo_rate: cfg.typo_rate, shape: &shape };
        let Some((question, sql)) = g.generate(ty) else { continue };
        let sql = sql.bind(&idx.table)?;
        if cfg.check_reachable {
            let ex = label_candidates(&question, idx, &sql, res)?;
            if ex.status != Status::Ok {
                bail!("template produced an unreachable pair: {question:?} -> {}", sql.to_sql(id));
            }
        }
        corpus.examples.push(Example { question, table: id.clone(), sql });
        types.push(ty);
    }
    Ok((corpus, types))
}
