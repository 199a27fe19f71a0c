//! Corpus evaluation: query-match and execution accuracy, a per-clause
//! breakdown and failure buckets.

use std::thread;

use serde::Serialize;
use tablequery_core::abstraction::{Candidate, TableIndex};
use tablequery_core::chart::Chart;
use tablequery_core::exec::execute;
use tablequery_core::pipeline::{predict, Resources};
use tablequery_core::scoring::NodeScorer;
use tablequery_core::sql::{canonicalize, CanonicalSql, SqlQuery};
use tablequery_core::table::normalize_name;
use tablequery_core::value::Value;

use crate::corpus::Corpus;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bucket {
    /// A gold column or literal is not linked in any abstracted utterance.
    AbstractionMiss,
    /// No utterance yields an interpretable derivation.
    NoParse,
    /// A query came out but is not the gold query.
    WrongTree,
    /// Canonically equal to gold yet the results differ, or the
    /// prediction failed to execute.
    ExecutionDivergence,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Bucket::AbstractionMiss, Bucket::NoParse, Bucket::WrongTree, Bucket::ExecutionDivergence];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::AbstractionMiss => "abstraction-miss",
            Bucket::NoParse => "no-parse",
            Bucket::WrongTree => "wrong-tree",
            Bucket::ExecutionDivergence => "execution-divergence",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub question: String,
    pub table: String,
    pub gold: String,
    /// Rendered prediction, absent when nothing was produced.
    pub predicted: Option<String>,
    pub query_match: bool,
    pub execution_match: bool,
    pub select_column: bool,
    pub select_aggregator: bool,
    pub where_clause: bool,
    pub bucket: Option<Bucket>,
    /// Complete derivations per abstracted utterance.
    pub trees: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ClauseAccuracy {
    pub select_column: f64,
    pub select_aggregator: f64,
    pub where_clause: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub examples: usize,
    pub acc_qm: f64,
    pub acc_ex: f64,
    pub breakdown: ClauseAccuracy,
    pub avg_valid_trees: f64,
    pub buckets: Vec<(Bucket, usize)>,
    /// Records dropped while loading the corpus.
    pub skipped: usize,
}

#[derive(Clone, Debug, Default)]
pub struct EvalConfig {
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

fn canon(q: &SqlQuery) -> Option<CanonicalSql> {
    canonicalize(q).ok()
}

fn select_columns(q: &SqlQuery) -> Vec<String> {
    let mut v: Vec<String> = q.select.iter().map(|s| normalize_name(&s.column)).collect();
    v.sort();
    v
}

fn select_aggs(q: &SqlQuery) -> Vec<String> {
    let mut v: Vec<String> =
        q.select.iter().map(|s| s.agg.map_or(String::new(), |a| a.keyword().to_string())).collect();
    v.sort();
    v
}

fn same_literal(a: &Value, b: &Value) -> bool {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-9,
        _ => a.match_key() == b.match_key(),
    }
}

/// Whether every column and literal the gold query uses is linked by at
/// least one utterance.
fn linked(gold: &SqlQuery, index: &TableIndex, utterances: &[Candidate]) -> bool {
    let t = &index.table;
    let mut cols = Vec::new();
    let mut lits = Vec::new();
    for s in &gold.select {
        cols.push(s.column.clone());
    }
    for c in gold.where_.iter().chain(&gold.having).flatten() {
        cols.push(c.column.clone());
        lits.push(c.value.clone());
    }
    cols.extend(gold.group_by.iter().cloned());
    if let Some(s) = &gold.superlative {
        cols.push(s.column.clone());
    }
    let symbols: Vec<_> = utterances
        .iter()
        .flat_map(|u| u.utterance.tokens.iter().filter_map(|tok| tok.symbol()))
        .collect();
    let col_ok = cols.iter().all(|c| {
        c == "*"
            || t.column_index(c).is_some_and(|i| symbols.iter().any(|s| s.cols.len() < t.columns.len() && s.cols.contains(&i)))
    });
    let lit_ok = lits.iter().all(|v| symbols.iter().any(|s| s.value.as_ref().is_some_and(|sv| same_literal(sv, v))));
    col_ok && lit_ok
}

fn tree_counts(utterances: &[Candidate], res: &Resources) -> Vec<f64> {
    utterances
        .iter()
        .filter_map(|c| Chart::build(&c.utterance, &res.limits).ok())
        .map(|ch| ch.tree_count() as f64)
        .collect()
}

/// Evaluate one question against its gold query.
pub fn evaluate_one(
    question: &str,
    table_id: &str,
    index: &TableIndex,
    gold: &SqlQuery,
    res: &Resources,
    scorer: &dyn NodeScorer,
) -> Prediction {
    let utterances = res.abstract_question(question, index);
    let trees = tree_counts(&utterances, res);
    let mut p = Prediction {
        question: question.to_string(),
        table: table_id.to_string(),
        gold: gold.to_sql(table_id),
        predicted: None,
        query_match: false,
        execution_match: false,
        select_column: false,
        select_aggregator: false,
        where_clause: false,
        bucket: None,
        trees,
    };
    let predicted = match predict(question, index, res, scorer) {
        Ok((_, _, q)) => q,
        Err(_) => {
            p.bucket = Some(if linked(gold, index, &utterances) { Bucket::NoParse } else { Bucket::AbstractionMiss });
            return p;
        }
    };
    p.predicted = Some(predicted.to_sql(table_id));
    let (cg, cp) = (canon(gold), canon(&predicted));
    p.query_match = cg.is_some() && cg == cp;
    p.select_column = select_columns(gold) == select_columns(&predicted);
    p.select_aggregator = select_aggs(gold) == select_aggs(&predicted);
    p.where_clause = match (&cg, &cp) {
        (Some(g), Some(q)) => g.parts().where_ == q.parts().where_ && g.parts().having == q.parts().having,
        _ => false,
    };
    let gold_rows = execute(gold, &index.table);
    let pred_rows = execute(&predicted, &index.table);
    p.execution_match = match (&gold_rows, &pred_rows) {
        (Ok(g), Ok(q)) => g.same_result(q),
        _ => false,
    };
    p.bucket = match (p.query_match, p.execution_match) {
        (true, true) => None,
        (true, false) => Some(Bucket::ExecutionDivergence),
        (false, _) if !linked(gold, index, &utterances) => Some(Bucket::AbstractionMiss),
        (false, _) => Some(Bucket::WrongTree),
    };
    p
}

/// Per-example predictions, in corpus order, computed in parallel.
pub fn predictions(corpus: &Corpus, scorer: &(dyn NodeScorer + Sync), res: &Resources, cfg: &EvalConfig) -> Vec<Prediction> {
    let n = corpus.examples.len();
    if n == 0 {
        return Vec::new();
    }
    let threads = match cfg.threads {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .min(n);
    let chunk = n.div_ceil(threads);
    thread::scope(|s| {
        let handles: Vec<_> = corpus
            .examples
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|e| {
                            let index = corpus.table(&e.table).expect("corpus invariant: table resolves");
                            evaluate_one(&e.question, &e.table, index, &e.sql, res, scorer)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("evaluation worker panicked")).collect()
    })
}

/// Aggregate per-example predictions.
pub fn summarize(preds: &[Prediction], skipped: usize) -> EvalReport {
    let n = preds.len();
    let frac = |f: &dyn Fn(&Prediction) -> bool| {
        if n == 0 {
            0.0
        } else {
            preds.iter().filter(|p| f(p)).count() as f64 / n as f64
        }
    };
    let trees: Vec<f64> = preds.iter().flat_map(|p| p.trees.iter().copied()).collect();
    EvalReport {
        examples: n,
        acc_qm: frac(&|p| p.query_match),
        acc_ex: frac(&|p| p.execution_match),
        breakdown: ClauseAccuracy {
            select_column: frac(&|p| p.select_column),
            select_aggregator: frac(&|p| p.select_aggregator),
            where_clause: frac(&|p| p.where_clause),
        },
        avg_valid_trees: if trees.is_empty() { 0.0 } else { trees.iter().sum::<f64>() / trees.len() as f64 },
        buckets: Bucket::ALL.iter().map(|&b| (b, preds.iter().filter(|p| p.bucket == Some(b)).count())).collect(),
        skipped,
    }
}

pub fn evaluate(corpus: &Corpus, scorer: &(dyn NodeScorer + Sync), res: &Resources, cfg: &EvalConfig) -> EvalReport {
    summarize(&predictions(corpus, scorer, res, cfg), corpus.skipped)
}

impl EvalReport {
    pub fn bucket(&self, b: Bucket) -> usize {
        self.buckets.iter().find(|(k, _)| *k == b).map_or(0, |(_, n)| *n)
    }
}
