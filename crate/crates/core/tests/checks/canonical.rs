//! Canonical query matching: equivalence properties, invariance under
//! reordering and case, and agreement with execution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablequery_core::exec::execute;
use tablequery_core::sql::{canonicalize, parse_sql, CmpOp, SqlQuery};
use tablequery_core::value::Value;

/// Same query with every order-insensitive list shuffled.
fn shuffled(q: &SqlQuery, rng: &mut ChaCha8Rng) -> SqlQuery {
    let mut q = q.clone();
    q.select.shuffle(rng);
    q.where_.shuffle(rng);
    for c in &mut q.where_ {
        c.shuffle(rng);
    }
    q.having.shuffle(rng);
    for c in &mut q.having {
        c.shuffle(rng);
    }
    q.group_by.shuffle(rng);
    q
}

fn flip_case(s: &str, rng: &mut ChaCha8Rng) -> String {
    s.chars()
        .map(|c| if rng.gen_bool(0.5) { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
        .collect()
}

/// Same query with identifiers and string literals in random case.
fn recased(q: &SqlQuery, rng: &mut ChaCha8Rng) -> SqlQuery {
    let mut q = q.clone();
    for s in &mut q.select {
        s.column = flip_case(&s.column, rng);
    }
    for g in &mut q.group_by {
        *g = flip_case(g, rng);
    }
    for c in q.where_.iter_mut().chain(q.having.iter_mut()).flatten() {
        c.column = flip_case(&c.column, rng);
        if let Value::Str(v) = &c.value {
            c.value = Value::Str(flip_case(v, rng));
        }
    }
    if let Some(s) = &mut q.superlative {
        s.column = flip_case(&s.column, rng);
    }
    q
}

/// A change that alters the meaning, or `None` if the query has nothing to change.
fn mutated(q: &SqlQuery, rng: &mut ChaCha8Rng) -> Option<SqlQuery> {
    let mut q = q.clone();
    let conds: Vec<(usize, usize)> =
        q.where_.iter().enumerate().flat_map(|(i, c)| (0..c.len()).map(move |j| (i, j))).collect();
    if !conds.is_empty() && rng.gen_bool(0.5) {
        let (i, j) = conds[rng.gen_range(0..conds.len())];
        let c = &mut q.where_[i][j];
        match &c.value {
            Value::Num(n) => c.value = Value::Num(n + 1.0),
            Value::Str(s) => c.value = Value::Str(format!("{s}x")),
            Value::Date(d) => c.value = Value::Date(format!("{d}-01")),
            Value::Null => return None,
        }
        return Some(q);
    }
    if let Some(s) = &mut q.superlative {
        s.descending = !s.descending;
        return Some(q);
    }
    if let Some(item) = q.select.iter_mut().find(|s| s.agg.is_some()) {
        item.agg = Some(match item.agg {
            Some(tablequery_core::sql::Agg::Count) => return None,
            Some(tablequery_core::sql::Agg::Max) => tablequery_core::sql::Agg::Min,
            _ => tablequery_core::sql::Agg::Max,
        });
        return Some(q);
    }
    if let Some(c) = q.where_.first_mut().and_then(|c| c.first_mut()) {
        c.op = match c.op {
            CmpOp::Eq => CmpOp::Gt,
            _ => CmpOp::Eq,
        };
        return Some(q);
    }
    None
}

/// Canonicalizing twice changes nothing.
pub fn idempotent(seed: u64) {
    let table = crate::common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = crate::common::random_query(&mut rng, &table);
    let c = canonicalize(&q).unwrap();
    assert_eq!(canonicalize(c.query()).unwrap(), c);
    assert_eq!(canonicalize(&q).unwrap(), c);
}

pub fn reorder_and_case_invariant(seed: u64) {
    let table = crate::common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = crate::common::random_query(&mut rng, &table);
    let v = recased(&shuffled(&q, &mut rng), &mut rng);
    assert_eq!(canonicalize(&q).unwrap(), canonicalize(&v).unwrap());
}

/// Returns whether the first pair was equivalent.
pub fn symmetric_and_transitive(seed: u64) -> bool {
    let table = crate::common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = crate::common::random_query(&mut rng, &table);
    // b and c are variants of a or fresh queries, so both outcomes occur.
    let b = if rng.gen_bool(0.5) { shuffled(&a, &mut rng) } else { crate::common::random_query(&mut rng, &table) };
    let c = if rng.gen_bool(0.5) { recased(&b, &mut rng) } else { crate::common::random_query(&mut rng, &table) };
    let (ca, cb, cc) = (canonicalize(&a).unwrap(), canonicalize(&b).unwrap(), canonicalize(&c).unwrap());
    assert_eq!(ca == cb, cb == ca);
    if ca == cb && cb == cc {
        assert_eq!(ca, cc);
    }
    ca == cb
}

pub fn equal_forms_execute_alike(seed: u64) {
    let table = crate::common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = crate::common::random_query(&mut rng, &table);
    let b = if rng.gen_bool(0.7) { recased(&shuffled(&a, &mut rng), &mut rng) } else { crate::common::random_query(&mut rng, &table) };
    if canonicalize(&a).unwrap() == canonicalize(&b).unwrap() {
        let b = b.bind(&table).unwrap();
        let (ra, rb) = (execute(&a, &table).unwrap(), execute(&b, &table).unwrap());
        assert!(ra.same_result(&rb), "{} vs {}", a.to_sql("t"), b.to_sql("t"));
    }
}

pub fn meaning_changes_change_the_form(seed: u64) {
    let table = crate::common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = crate::common::random_query(&mut rng, &table);
    if let Some(m) = mutated(&q, &mut rng) {
        assert_ne!(canonicalize(&q).unwrap(), canonicalize(&m).unwrap());
    }
}

pub fn rendering_round_trips(seed: u64) {
    let table = crate::common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = crate::common::random_query(&mut rng, &table);
    let text = q.to_sql(&table.name);
    let back = parse_sql(&text, Some(&table)).unwrap();
    assert_eq!(canonicalize(&back).unwrap(), canonicalize(&q).unwrap(), "{}", text);
}

/// `n` queries with at least two WHERE clauses against a reshuffled copy.
pub fn shuffled_where_pairs(seed: u64, n: usize) {
    let table = crate::common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let mut q = crate::common::random_query(&mut rng, &table);
        while q.where_.len() < 2 {
            q = crate::common::random_query(&mut rng, &table);
        }
        let mut p = q.clone();
        for _ in 0..20 {
            if p.where_ != q.where_ {
                break;
            }
            p.where_.shuffle(&mut rng);
            for c in &mut p.where_ {
                c.shuffle(&mut rng);
            }
        }
        assert_eq!(canonicalize(&q).unwrap(), canonicalize(&p).unwrap(), "{}", q.to_sql("t"));
        assert!(execute(&q, &table).unwrap().same_result(&execute(&p, &table).unwrap()));
    }
}
