//! Rule cases and the set-expression oracle, shared by the rule tests and
//! the acceptance run.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablequery_core::rules::{compose, raise, Rule};
use tablequery_core::symbol::{ColSet, Symbol, SymbolKind, SymbolKind::*};
use tablequery_core::value::{ColumnType, Value};

fn cols(c: &[usize]) -> ColSet {
    c.iter().copied().collect()
}

fn t(c: &[usize]) -> Symbol {
    Symbol::operator(T, cols(c))
}

fn col(i: usize, ty: ColumnType) -> Symbol {
    Symbol { kind: C, cols: cols(&[i]), ty: Some(ty), value: None }
}

fn op(kind: SymbolKind, c: &[usize]) -> Symbol {
    Symbol::operator(kind, cols(c))
}

fn lit(kind: SymbolKind, c: &[usize]) -> Symbol {
    let v = match kind {
        N => Value::Num(3.0),
        D => Value::Date("2020".into()),
        _ => Value::Str("x".into()),
    };
    Symbol::literal(kind, v, cols(c))
}

/// Rules licensed for `(a, b)`, as (rule, output kind, output cols).
fn applied(a: &Symbol, b: &Symbol) -> Vec<(Rule, SymbolKind, ColSet)> {
    compose(a, b).into_iter().map(|x| (x.rule.rule(), x.output.kind, x.output.cols)).collect()
}

fn raised(a: &Symbol) -> Vec<(Rule, SymbolKind, ColSet)> {
    raise(a).into_iter().map(|x| (x.rule.rule(), x.output.kind, x.output.cols)).collect()
}

fn has(apps: &[(Rule, SymbolKind, ColSet)], rule: Rule) -> bool {
    apps.iter().any(|a| a.0 == rule)
}

const NUM: ColumnType = ColumnType::Num;
const STR: ColumnType = ColumnType::Str;
const DATE: ColumnType = ColumnType::Date;

pub fn project_accepts_column_subset() {
    let apps = applied(&col(1, STR), &t(&[0, 1, 2]));
    assert!(apps.contains(&(Rule::Project, T, cols(&[1]))));
}

pub fn project_rejects_foreign_column() {
    assert!(!has(&applied(&col(5, STR), &t(&[0, 1, 2])), Rule::Project));
}

pub fn filter_keeps_table_columns() {
    let apps = applied(&op(F, &[2]), &t(&[0, 1, 2]));
    assert!(apps.contains(&(Rule::Filter, T, cols(&[0, 1, 2]))));
}

pub fn filter_rejects_foreign_filter() {
    assert!(!has(&applied(&op(F, &[7]), &t(&[0, 1, 2])), Rule::Filter));
}

pub fn group_by_string_column() {
    let apps = applied(&op(A, &[3]), &col(0, STR));
    assert!(apps.contains(&(Rule::Group, G, cols(&[0, 3]))));
}

pub fn group_rejects_numeric_key() {
    assert!(!has(&applied(&op(A, &[3]), &col(2, NUM)), Rule::Group));
}

pub fn equal_on_value_column() {
    let apps = applied(&col(0, STR), &lit(V, &[0, 1]));
    assert!(apps.contains(&(Rule::Equal, F, cols(&[0]))));
}

pub fn equal_rejects_value_of_other_column() {
    assert!(!has(&applied(&col(0, STR), &lit(V, &[1])), Rule::Equal));
}

pub fn compare_numeric_column_with_number() {
    let apps = applied(&col(2, NUM), &lit(N, &[]));
    let n = apps.iter().filter(|a| a.0 == Rule::Compare).count();
    assert_eq!(n, 4, "more, less, >=, <=");
    assert!(apps.contains(&(Rule::Compare, F, cols(&[2]))));
}

pub fn compare_rejects_string_column() {
    assert!(!has(&applied(&col(0, STR), &lit(N, &[])), Rule::Compare));
    assert!(!has(&applied(&col(2, NUM), &lit(N, &[3])), Rule::Compare));
}

pub fn connect_two_filters() {
    let apps = applied(&op(F, &[0]), &op(F, &[2]));
    assert_eq!(apps.iter().filter(|a| a.0 == Rule::Connect).count(), 2);
    assert!(apps.contains(&(Rule::Connect, F, cols(&[0, 2]))));
}

pub fn superlative_of_string_by_number() {
    let apps = applied(&col(0, STR), &col(2, NUM));
    assert!(apps.contains(&(Rule::Superlative, S, cols(&[0, 2]))));
    let apps = applied(&op(A, &[3]), &col(2, NUM));
    assert!(has(&apps, Rule::Superlative));
}

pub fn superlative_rejects_non_numeric_measure() {
    assert!(!has(&applied(&col(0, STR), &col(1, STR)), Rule::Superlative));
    assert!(!has(&applied(&col(3, NUM), &col(2, NUM)), Rule::Superlative));
}

pub fn combine_columns() {
    let apps = applied(&col(0, STR), &col(2, NUM));
    assert!(apps.contains(&(Rule::CombineColumns, C, cols(&[0, 2]))));
}

pub fn combine_aggregates() {
    let apps = applied(&op(A, &[2]), &op(A, &[3]));
    assert!(apps.contains(&(Rule::CombineAggregates, A, cols(&[2, 3]))));
}

pub fn modify_with_disjoint_filter() {
    let apps = applied(&op(G, &[0, 2]), &op(F, &[1]));
    assert!(apps.contains(&(Rule::Modify, G, cols(&[0, 2]))));
}

pub fn modify_rejects_overlap() {
    assert!(!has(&applied(&op(G, &[0, 2]), &op(F, &[2])), Rule::Modify));
}

pub fn raise_numeric_column() {
    let apps = raised(&col(2, NUM));
    assert_eq!(apps.len(), 4);
    assert!(apps.iter().all(|a| a.0 == Rule::RaiseNumeric && a.1 == A && a.2 == cols(&[2])));
}

pub fn raise_numeric_rejects_string_column() {
    assert!(!has(&raised(&col(0, STR)), Rule::RaiseNumeric));
}

pub fn raise_count_on_string_or_date() {
    assert_eq!(raised(&col(0, STR)), vec![(Rule::RaiseCount, A, cols(&[0]))]);
    assert_eq!(raised(&col(4, DATE)), vec![(Rule::RaiseCount, A, cols(&[4]))]);
}

pub fn raise_count_rejects_numeric_column() {
    assert!(!has(&raised(&col(2, NUM)), Rule::RaiseCount));
}

pub fn raise_value_to_filter() {
    assert_eq!(raised(&lit(V, &[0, 1])), vec![(Rule::RaiseFilter, F, cols(&[0, 1]))]);
    assert_eq!(raised(&lit(D, &[4])), vec![(Rule::RaiseFilter, F, cols(&[4]))]);
}

pub fn raise_filter_rejects_unbound_literal() {
    assert!(raised(&lit(D, &[])).is_empty());
    assert!(raised(&lit(N, &[])).is_empty());
}

/// Every per-rule case, by name.
pub const CASES: &[(&str, fn())] = &[
    ("project_accepts_column_subset", project_accepts_column_subset),
    ("project_rejects_foreign_column", project_rejects_foreign_column),
    ("filter_keeps_table_columns", filter_keeps_table_columns),
    ("filter_rejects_foreign_filter", filter_rejects_foreign_filter),
    ("group_by_string_column", group_by_string_column),
    ("group_rejects_numeric_key", group_rejects_numeric_key),
    ("equal_on_value_column", equal_on_value_column),
    ("equal_rejects_value_of_other_column", equal_rejects_value_of_other_column),
    ("compare_numeric_column_with_number", compare_numeric_column_with_number),
    ("compare_rejects_string_column", compare_rejects_string_column),
    ("connect_two_filters", connect_two_filters),
    ("superlative_of_string_by_number", superlative_of_string_by_number),
    ("superlative_rejects_non_numeric_measure", superlative_rejects_non_numeric_measure),
    ("combine_columns", combine_columns),
    ("combine_aggregates", combine_aggregates),
    ("modify_with_disjoint_filter", modify_with_disjoint_filter),
    ("modify_rejects_overlap", modify_rejects_overlap),
    ("raise_numeric_column", raise_numeric_column),
    ("raise_numeric_rejects_string_column", raise_numeric_rejects_string_column),
    ("raise_count_on_string_or_date", raise_count_on_string_or_date),
    ("raise_count_rejects_numeric_column", raise_count_rejects_numeric_column),
    ("raise_value_to_filter", raise_value_to_filter),
    ("raise_filter_rejects_unbound_literal", raise_filter_rejects_unbound_literal),
];

// Set-expression oracle. Written from the precondition and schema columns
// of the rule table, independent of the matcher's control flow.

type Out = BTreeSet<(Rule, bool, SymbolKind, ColSet)>;

fn u(a: &ColSet, b: &ColSet) -> ColSet {
    a | b
}

fn sub(a: &ColSet, b: &ColSet) -> bool {
    a.difference(b).next().is_none()
}

fn ty_in(s: &Symbol, tys: &[ColumnType]) -> bool {
    s.ty.is_some_and(|t| tys.contains(&t))
}

fn ordered(l: &Symbol, r: &Symbol, swapped: bool, out: &mut Out) {
    let mut add = |rule, kind, c: ColSet| {
        out.insert((rule, swapped, kind, c));
    };
    let k = (l.kind, r.kind);
    if [C, A, G, S].contains(&k.0) && k.1 == T && !l.cols.is_empty() && sub(&l.cols, &r.cols) {
        add(Rule::Project, T, l.cols.clone());
    }
    if k == (F, T) && sub(&l.cols, &r.cols) {
        add(Rule::Filter, T, r.cols.clone());
    }
    if [A, G].contains(&k.0) && k.1 == C && ty_in(r, &[STR, DATE]) {
        add(Rule::Group, G, u(&l.cols, &r.cols));
    }
    let one = l.cols.len() == 1;
    if k == (C, V) && one && sub(&l.cols, &r.cols) {
        add(Rule::Equal, F, l.cols.clone());
    }
    if k == (C, D) && one && ty_in(l, &[DATE]) && (r.cols.is_empty() || sub(&l.cols, &r.cols)) {
        add(Rule::Equal, F, l.cols.clone());
    }
    if k == (C, N) && one && ty_in(l, &[NUM]) && (r.cols.is_empty() || sub(&l.cols, &r.cols)) {
        add(Rule::Compare, F, l.cols.clone());
    }
    let head = k.0 == A || (k.0 == C && ty_in(l, &[STR, DATE]));
    if head && k.1 == C && r.cols.len() == 1 && ty_in(r, &[NUM]) {
        add(Rule::Superlative, S, u(&l.cols, &r.cols));
    }
    if [C, A, G, S].contains(&k.0) && k.1 == F && l.cols.is_disjoint(&r.cols) {
        add(Rule::Modify, k.0, l.cols.clone());
    }
}

fn oracle_compose(a: &Symbol, b: &Symbol) -> Out {
    let mut out = Out::new();
    ordered(a, b, false, &mut out);
    ordered(b, a, true, &mut out);
    match (a.kind, b.kind) {
        (F, F) => {
            out.insert((Rule::Connect, false, F, u(&a.cols, &b.cols)));
        }
        (C, C) => {
            out.insert((Rule::CombineColumns, false, C, u(&a.cols, &b.cols)));
        }
        (A, A) => {
            out.insert((Rule::CombineAggregates, false, A, u(&a.cols, &b.cols)));
        }
        _ => {}
    }
    out
}

fn oracle_raise(a: &Symbol) -> Out {
    let mut out = Out::new();
    match a.kind {
        C if ty_in(a, &[NUM]) => {
            out.insert((Rule::RaiseNumeric, false, A, a.cols.clone()));
        }
        C if ty_in(a, &[STR, DATE]) => {
            out.insert((Rule::RaiseCount, false, A, a.cols.clone()));
        }
        V | D if !a.cols.is_empty() => {
            out.insert((Rule::RaiseFilter, false, F, a.cols.clone()));
        }
        _ => {}
    }
    out
}

fn random_cols(rng: &mut ChaCha8Rng) -> ColSet {
    let width = if rng.gen_bool(0.6) { 1 } else { rng.gen_range(0..4) };
    (0..width).map(|_| rng.gen_range(0..3)).collect()
}

fn random_symbol(rng: &mut ChaCha8Rng) -> Symbol {
    let c = random_cols(rng);
    random_symbol_on(rng, c)
}

fn random_symbol_on(rng: &mut ChaCha8Rng, c: ColSet) -> Symbol {
    let kind = SymbolKind::ALL[rng.gen_range(0..SymbolKind::ALL.len())];
    let tys = [NUM, STR, DATE];
    match kind {
        C => {
            let ty = if c.len() > 1 && rng.gen_bool(0.3) { None } else { Some(tys[rng.gen_range(0..3)]) };
            Symbol { kind: C, cols: c, ty, value: None }
        }
        V | N | D => lit(kind, &c.into_iter().collect::<Vec<_>>()),
        _ => Symbol::operator(kind, c),
    }
}

/// Compare `compose` and `raise` with the oracle on `n` random inputs.
/// Returns how many pairs licensed at least one rule.
pub fn set_oracle(seed: u64, n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonempty = 0;
    for _ in 0..n {
        let a = random_symbol(&mut rng);
        // Half the pairs share columns so column-sensitive rules fire.
        let b = if rng.gen_bool(0.5) { random_symbol_on(&mut rng, a.cols.clone()) } else { random_symbol(&mut rng) };
        let got: Out = compose(&a, &b)
            .into_iter()
            .map(|x| (x.rule.rule(), x.swapped, x.output.kind, x.output.cols))
            .collect();
        let want = oracle_compose(&a, &b);
        assert_eq!(got, want, "compose({a:?}, {b:?})");
        let got: Out =
            raise(&a).into_iter().map(|x| (x.rule.rule(), x.swapped, x.output.kind, x.output.cols)).collect();
        assert_eq!(got, oracle_raise(&a), "raise({a:?})");
        if !want.is_empty() {
            nonempty += 1;
        }
    }
    nonempty
}
