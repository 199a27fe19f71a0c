//! Shared generators for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tablequery_core::rules::RulePred;
use tablequery_core::symbol::{ColSet, Symbol, SymbolKind::*};
use tablequery_core::token::{AbstractedUtterance, Span, Token, TokenKind};
use tablequery_core::value::{ColumnType, Value};

pub const TYPES: [ColumnType; 4] = [ColumnType::Str, ColumnType::Num, ColumnType::Date, ColumnType::Num];

pub fn subset(rng: &mut ChaCha8Rng, of: &[usize]) -> ColSet {
    of.iter().copied().filter(|_| rng.gen_bool(0.5)).collect()
}

pub fn random_symbol(rng: &mut ChaCha8Rng) -> Symbol {
    let c = rng.gen_range(0..TYPES.len());
    match rng.gen_range(0..12) {
        0 => Symbol::operator(T, (0..TYPES.len()).collect()),
        1..=4 => Symbol { kind: C, cols: ColSet::from([c]), ty: Some(TYPES[c]), value: None },
        5 | 6 => Symbol::literal(V, Value::Str("x".into()), subset(rng, &[0, 2]).into_iter().chain([0]).collect()),
        7 => Symbol::literal(N, Value::Num(5.0), subset(rng, &[1, 3])),
        8 => Symbol::literal(D, Value::Date("2001".into()), subset(rng, &[2])),
        9 => Symbol::operator(A, ColSet::from([c])),
        10 => Symbol::operator(F, ColSet::from([c])),
        _ => Symbol::operator(G, ColSet::from([0])),
    }
}

/// Random utterance with one to six symbol tokens.
pub fn random_utterance(rng: &mut ChaCha8Rng) -> AbstractedUtterance {
    random_utterance_upto(rng, 6)
}

/// Random utterance with up to `max` symbol tokens.
pub fn random_utterance_upto(rng: &mut ChaCha8Rng, max: usize) -> AbstractedUtterance {
    let n = rng.gen_range(1..=max);
    let mut toks = Vec::new();
    for _ in 0..n {
        if rng.gen_bool(0.3) {
            toks.push(Token { kind: TokenKind::Common("of".into()), source: (0, 0) });
        }
        toks.push(Token { kind: TokenKind::Symbol(random_symbol(rng)), source: (0, 0) });
    }
    AbstractedUtterance::new(toks)
}

/// Deterministic pseudo-random node score in [-1, 1).
pub fn hash_score(seed: u64, span: Span, r: RulePred) -> f64 {
    let mut x = seed ^ ((span.start as u64) << 40) ^ ((span.end as u64) << 20) ^ r.index() as u64;
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}


/// Small fixture with repeated values, case variants and nulls.
pub fn sample_table() -> tablequery_core::table::Table {
    use tablequery_core::table::{Column, Table};
    let cols = [
        ("Player", ColumnType::Str),
        ("Team", ColumnType::Str),
        ("Points", ColumnType::Num),
        ("Goals", ColumnType::Num),
        ("Season", ColumnType::Date),
    ];
    let s = |x: &str| Value::Str(x.into());
    let d = |x: &str| Value::Date(x.into());
    let n = Value::Num;
    let rows = vec![
        vec![s("Ann"), s("Lions"), n(12.0), n(3.0), d("2001")],
        vec![s("Bob"), s("lions"), n(7.5), n(1.0), d("2002")],
        vec![s("Cid"), s("Tigers"), n(20.0), n(3.0), d("2001")],
        vec![s("Dee"), s("Bears"), n(3.0), Value::Null, d("2003")],
        vec![s("Eve"), s("Tigers"), n(15.0), n(0.0), d("2002")],
        vec![s("Fay"), s("Bears"), Value::Null, n(2.0), d("2003")],
        vec![s("Gus"), s("LIONS"), n(9.0), n(5.0), Value::Null],
        vec![s("Hal"), s("Sharks"), n(-4.0), n(1.0), d("2004")],
        vec![s("Ida"), s("Tigers"), n(11.0), n(2.0), d("2004")],
        vec![s("Jon"), Value::Null, n(6.0), n(4.0), d("2001")],
        vec![s("Kim"), s("Sharks"), n(30.0), n(2.0), d("2002")],
        vec![s("Lea"), s("Bears"), n(1.0), n(6.0), d("2001")],
    ];
    Table::new(
        "games",
        cols.iter().map(|(name, ty)| Column { name: name.to_string(), ty: *ty }).collect(),
        rows,
    )
    .unwrap()
}

fn random_literal(rng: &mut ChaCha8Rng, table: &tablequery_core::table::Table, col: usize, agg: bool) -> Value {
    if agg {
        return Value::Num(rng.gen_range(0..25) as f64);
    }
    // Mostly values present in the column, so filters select something.
    let present: Vec<&Value> = table.rows.iter().map(|r| &r[col]).filter(|v| !v.is_null()).collect();
    if !present.is_empty() && rng.gen_bool(0.8) {
        let v = present[rng.gen_range(0..present.len())].clone();
        return match v {
            Value::Str(s) if rng.gen_bool(0.3) => Value::Str(s.to_uppercase()),
            other => other,
        };
    }
    match table.column_type(col) {
        ColumnType::Num => Value::Num(rng.gen_range(-5..30) as f64),
        ColumnType::Str => Value::Str("Nobody".into()),
        ColumnType::Date => Value::Date(format!("{}", rng.gen_range(1999..2006))),
    }
}

fn random_condition(
    rng: &mut ChaCha8Rng,
    table: &tablequery_core::table::Table,
    allowed: &[usize],
    aggregate: bool,
) -> tablequery_core::sql::Condition {
    use tablequery_core::sql::{Agg, CmpOp, Condition};
    let col = allowed[rng.gen_range(0..allowed.len())];
    let ty = table.column_type(col);
    let agg = if aggregate {
        let legal: Vec<Agg> = Agg::ALL.into_iter().filter(|a| a.legal_on(ty)).collect();
        Some(legal[rng.gen_range(0..legal.len())])
    } else {
        None
    };
    let effective = if agg.is_some() { ColumnType::Num } else { ty };
    let op = if effective == ColumnType::Str { CmpOp::Eq } else { CmpOp::ALL[rng.gen_range(0..CmpOp::ALL.len())] };
    Condition { column: table.columns[col].name.clone(), agg, op, value: random_literal(rng, table, col, agg.is_some()) }
}

fn random_clauses(
    rng: &mut ChaCha8Rng,
    table: &tablequery_core::table::Table,
    allowed: &[usize],
    aggregate: impl Fn(&mut ChaCha8Rng) -> bool,
) -> Vec<tablequery_core::sql::Clause> {
    (0..rng.gen_range(1..=3))
        .map(|_| {
            (0..if rng.gen_bool(0.75) { 1 } else { 2 })
                .map(|_| {
                    let a = aggregate(rng);
                    random_condition(rng, table, allowed, a)
                })
                .collect()
        })
        .collect()
}

/// A random query valid for `table`, across every clause form.
pub fn random_query(rng: &mut ChaCha8Rng, table: &tablequery_core::table::Table) -> tablequery_core::sql::SqlQuery {
    use tablequery_core::sql::{Agg, SelectItem, SqlQuery, Superlative};
    let all: Vec<usize> = (0..table.columns.len()).collect();
    let name = |i: usize| table.columns[i].name.clone();
    let legal_agg = |rng: &mut ChaCha8Rng, i: usize| {
        let legal: Vec<Agg> = Agg::ALL.into_iter().filter(|a| a.legal_on(table.column_type(i))).collect();
        legal[rng.gen_range(0..legal.len())]
    };
    let ordered: Vec<usize> = all.iter().copied().filter(|&i| table.column_type(i) != ColumnType::Str).collect();
    loop {
        let mut q = SqlQuery::default();
        match rng.gen_range(0..3) {
            // Plain projection.
            0 => {
                for _ in 0..rng.gen_range(1..=2) {
                    q.select.push(SelectItem::raw(name(all[rng.gen_range(0..all.len())])));
                }
                if rng.gen_bool(0.3) {
                    let c = ordered[rng.gen_range(0..ordered.len())];
                    q.superlative = Some(Superlative { column: name(c), agg: None, descending: rng.gen_bool(0.5) });
                }
            }
            // Aggregates over the whole table.
            1 => {
                for _ in 0..rng.gen_range(1..=2) {
                    let c = all[rng.gen_range(0..all.len())];
                    let a = legal_agg(rng, c);
                    q.select.push(SelectItem::agg(a, name(c)));
                }
            }
            // Grouped.
            _ => {
                let groupable: Vec<usize> = all.iter().copied().filter(|&i| table.column_type(i) != ColumnType::Num).collect();
                let g = groupable[rng.gen_range(0..groupable.len())];
                q.group_by.push(name(g));
                if rng.gen_bool(0.8) {
                    q.select.push(SelectItem::raw(name(g)));
                }
                for _ in 0..rng.gen_range(0..=2) {
                    let c = all[rng.gen_range(0..all.len())];
                    let a = legal_agg(rng, c);
                    q.select.push(SelectItem::agg(a, name(c)));
                }
                if q.select.is_empty() {
                    q.select.push(SelectItem::agg(Agg::Count, name(g)));
                }
                if rng.gen_bool(0.4) {
                    q.having = random_clauses(rng, table, &all, |_| true);
                    // Occasionally a plain condition on the grouping column.
                    if rng.gen_bool(0.2) {
                        q.having.push(vec![random_condition(rng, table, &[g], false)]);
                    }
                }
                if rng.gen_bool(0.3) {
                    let c = all[rng.gen_range(0..all.len())];
                    let a = legal_agg(rng, c);
                    q.superlative = Some(Superlative { column: name(c), agg: Some(a), descending: rng.gen_bool(0.5) });
                }
            }
        }
        if rng.gen_bool(0.6) {
            q.where_ = random_clauses(rng, table, &all, |_| false);
        }
        if q.validate(table).is_ok() {
            return q;
        }
    }
}
