//! The deduction rules: composition and raising, their preconditions,
//! schemas and predicates.

use std::fmt;

use crate::symbol::{ColSet, Symbol, SymbolKind};
use crate::value::ColumnType;

use SymbolKind::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Project,
    Filter,
    Group,
    Equal,
    Compare,
    Connect,
    Superlative,
    CombineColumns,
    CombineAggregates,
    Modify,
    RaiseNumeric,
    RaiseCount,
    RaiseFilter,
}

impl Rule {
    pub const ALL: [Rule; 13] = [
        Rule::Project,
        Rule::Filter,
        Rule::Group,
        Rule::Equal,
        Rule::Compare,
        Rule::Connect,
        Rule::Superlative,
        Rule::CombineColumns,
        Rule::CombineAggregates,
        Rule::Modify,
        Rule::RaiseNumeric,
        Rule::RaiseCount,
        Rule::RaiseFilter,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_raising(self) -> bool {
        matches!(self, Rule::RaiseNumeric | Rule::RaiseCount | Rule::RaiseFilter)
    }

    pub fn notation(self) -> &'static str {
        match self {
            Rule::Project => "C|A|G|S+T->T^",
            Rule::Filter => "F+T->T^",
            Rule::Group => "A|G+C->G^",
            Rule::Equal => "C+V|D->F^",
            Rule::Compare => "C+N->F^",
            Rule::Connect => "F+F->F^",
            Rule::Superlative => "A|C1+C2->S^",
            Rule::CombineColumns => "C+C->C^",
            Rule::CombineAggregates => "A+A->A^",
            Rule::Modify => "C|A|G|S+F->C^|A^|G^|S^",
            Rule::RaiseNumeric => "C->A^",
            Rule::RaiseCount => "C->A^",
            Rule::RaiseFilter => "V|D->F^",
        }
    }

    pub fn precondition(self) -> &'static str {
        match self {
            Rule::Project => "(C|A|G|S).col ⊆ T.col",
            Rule::Filter => "F.col ⊆ T.col",
            Rule::Group => "C.type ∈ {str, date}",
            Rule::Equal => "C.col ⊆ (V|D).col",
            Rule::Compare => "C.type = num, C.col ⊆ N.col or N.col = ∅",
            Rule::Connect => "N/A",
            Rule::Superlative => "A or C1.type ∈ {str, date}; C2.type = num",
            Rule::CombineColumns => "N/A",
            Rule::CombineAggregates => "N/A",
            Rule::Modify => "(C|A|G|S).col ∩ F.col = ∅",
            Rule::RaiseNumeric => "C.type = num",
            Rule::RaiseCount => "C.type ∈ {str, date}",
            Rule::RaiseFilter => "(V|D).col ≠ ∅",
        }
    }

    pub fn schema(self) -> &'static str {
        match self {
            Rule::Project => "T^.col = (C|A|G|S).col",
            Rule::Filter => "T^.col = T.col",
            Rule::Group => "G^.col = (A|G).col ∪ C.col",
            Rule::Equal => "F^.col = C.col",
            Rule::Compare => "F^.col = C.col",
            Rule::Connect => "F^.col = F.col ∪ F.col",
            Rule::Superlative => "S^.col = (A|C1).col ∪ C2.col",
            Rule::CombineColumns => "C^.col = C.col ∪ C.col",
            Rule::CombineAggregates => "A^.col = A.col ∪ A.col",
            Rule::Modify => "head^ = head",
            Rule::RaiseNumeric => "A^.col = C.col",
            Rule::RaiseCount => "A^.col = C.col",
            Rule::RaiseFilter => "F^.col = (V|D).col",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    Project,
    Filter,
    Group,
    Equal,
    More,
    Less,
    MoreEq,
    LessEq,
    And,
    Or,
    Argmax,
    Argmin,
    Combine,
    Modify,
    Min,
    Max,
    Sum,
    Avg,
    Count,
}

impl Predicate {
    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Project => "project",
            Predicate::Filter => "filter",
            Predicate::Group => "group",
            Predicate::Equal => "equal",
            Predicate::More => "more",
            Predicate::Less => "less",
            Predicate::MoreEq => ">=",
            Predicate::LessEq => "<=",
            Predicate::And => "and",
            Predicate::Or => "or",
            Predicate::Argmax => "argmax",
            Predicate::Argmin => "argmin",
            Predicate::Combine => "combine",
            Predicate::Modify => "modify",
            Predicate::Min => "min",
            Predicate::Max => "max",
            Predicate::Sum => "sum",
            Predicate::Avg => "avg",
            Predicate::Count => "count",
        }
    }
}

/// A licensed (rule, predicate) pair. Its index is the feature identity
/// used by the scorers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RulePred(u8);

const TABLE: [(Rule, Predicate); 21] = [
    (Rule::Project, Predicate::Project),
    (Rule::Filter, Predicate::Filter),
    (Rule::Group, Predicate::Group),
    (Rule::Equal, Predicate::Equal),
    (Rule::Compare, Predicate::More),
    (Rule::Compare, Predicate::Less),
    (Rule::Compare, Predicate::MoreEq),
    (Rule::Compare, Predicate::LessEq),
    (Rule::Connect, Predicate::And),
    (Rule::Connect, Predicate::Or),
    (Rule::Superlative, Predicate::Argmax),
    (Rule::Superlative, Predicate::Argmin),
    (Rule::CombineColumns, Predicate::Combine),
    (Rule::CombineAggregates, Predicate::Combine),
    (Rule::Modify, Predicate::Modify),
    (Rule::RaiseNumeric, Predicate::Min),
    (Rule::RaiseNumeric, Predicate::Max),
    (Rule::RaiseNumeric, Predicate::Sum),
    (Rule::RaiseNumeric, Predicate::Avg),
    (Rule::RaiseCount, Predicate::Count),
    (Rule::RaiseFilter, Predicate::Equal),
];

impl RulePred {
    pub const COUNT: usize = TABLE.len();

    pub fn all() -> impl Iterator<Item = RulePred> {
        (0..TABLE.len() as u8).map(RulePred)
    }

    pub fn new(rule: Rule, pred: Predicate) -> Option<RulePred> {
        TABLE
            .iter()
            .position(|&(r, p)| r == rule && p == pred)
            .map(|i| RulePred(i as u8))
    }

    pub fn from_index(i: usize) -> Option<RulePred> {
        (i < TABLE.len()).then_some(RulePred(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn rule(self) -> Rule {
        TABLE[self.index()].0
    }

    pub fn predicate(self) -> Predicate {
        TABLE[self.index()].1
    }

    /// Feature index: per (rule, predicate) pair, or per rule when
    /// `rule_level` is set.
    pub fn feature(self, rule_level: bool) -> usize {
        if rule_level {
            self.rule().index()
        } else {
            self.index()
        }
    }

    pub fn feature_count(rule_level: bool) -> usize {
        if rule_level {
            Rule::ALL.len()
        } else {
            RulePred::COUNT
        }
    }

    /// Display name, e.g. `C+N->F^ [more]`.
    pub fn name(self) -> String {
        format!("{} [{}]", self.rule().notation(), self.predicate().as_str())
    }

    pub fn parse_name(name: &str) -> Option<RulePred> {
        RulePred::all().find(|r| r.name() == name)
    }
}

impl fmt::Display for RulePred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A successful rule application. `swapped` is set when the inputs matched
/// the rule's left-hand side in reverse order.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleApplication {
    pub rule: RulePred,
    pub swapped: bool,
    pub output: Symbol,
}

fn single(s: &Symbol) -> bool {
    s.cols.len() == 1
}

fn union(a: &ColSet, b: &ColSet) -> ColSet {
    a.union(b).copied().collect()
}

fn is_str_or_date(s: &Symbol) -> bool {
    matches!(s.ty, Some(ColumnType::Str | ColumnType::Date))
}

fn push_preds(out: &mut Vec<RuleApplication>, rule: Rule, preds: &[Predicate], swapped: bool, output: Symbol) {
    for &p in preds {
        let rule = RulePred::new(rule, p).expect("licensed pair");
        out.push(RuleApplication { rule, swapped, output: output.clone() });
    }
}

/// Composition rules whose left-hand side matches `(a, b)` in this order.
fn compose_ordered(a: &Symbol, b: &Symbol, swapped: bool, out: &mut Vec<RuleApplication>) {
    match (a.kind, b.kind) {
        (C | A | G | S, T) => {
            if !a.cols.is_empty() && a.cols.is_subset(&b.cols) {
                push_preds(out, Rule::Project, &[Predicate::Project], swapped, Symbol::operator(T, a.cols.clone()));
            }
        }
        (F, T) => {
            if a.cols.is_subset(&b.cols) {
                push_preds(out, Rule::Filter, &[Predicate::Filter], swapped, Symbol::operator(T, b.cols.clone()));
            }
        }
        _ => {}
    }
    if matches!(a.kind, A | G) && b.kind == C && is_str_or_date(b) {
        push_preds(out, Rule::Group, &[Predicate::Group], swapped, Symbol::operator(G, union(&a.cols, &b.cols)));
    }
    if a.kind == C && single(a) {
        match b.kind {
            V if a.cols.is_subset(&b.cols) => {
                push_preds(out, Rule::Equal, &[Predicate::Equal], swapped, Symbol::operator(F, a.cols.clone()));
            }
            D if a.ty == Some(ColumnType::Date) && (b.cols.is_empty() || a.cols.is_subset(&b.cols)) => {
                push_preds(out, Rule::Equal, &[Predicate::Equal], swapped, Symbol::operator(F, a.cols.clone()));
            }
            N if a.ty == Some(ColumnType::Num) && (b.cols.is_empty() || a.cols.is_subset(&b.cols)) => {
                push_preds(
                    out,
                    Rule::Compare,
                    &[Predicate::More, Predicate::Less, Predicate::MoreEq, Predicate::LessEq],
                    swapped,
                    Symbol::operator(F, a.cols.clone()),
                );
            }
            _ => {}
        }
    }
    if (a.kind == A || (a.kind == C && is_str_or_date(a)))
        && b.kind == C
        && single(b)
        && b.ty == Some(ColumnType::Num)
    {
        push_preds(
            out,
            Rule::Superlative,
            &[Predicate::Argmax, Predicate::Argmin],
            swapped,
            Symbol::operator(S, union(&a.cols, &b.cols)),
        );
    }
    if matches!(a.kind, C | A | G | S) && b.kind == F && a.cols.is_disjoint(&b.cols) {
        push_preds(out, Rule::Modify, &[Predicate::Modify], swapped, a.clone());
    }
}

/// Rules that are symmetric in their operands; applied once, unswapped.
fn compose_symmetric(a: &Symbol, b: &Symbol, out: &mut Vec<RuleApplication>) {
    match (a.kind, b.kind) {
        (F, F) => push_preds(
            out,
            Rule::Connect,
            &[Predicate::And, Predicate::Or],
            false,
            Symbol::operator(F, union(&a.cols, &b.cols)),
        ),
        (C, C) => {
            let ty = if a.ty == b.ty { a.ty } else { None };
            let output = Symbol { kind: C, cols: union(&a.cols, &b.cols), ty, value: None };
            push_preds(out, Rule::CombineColumns, &[Predicate::Combine], false, output);
        }
        (A, A) => push_preds(
            out,
            Rule::CombineAggregates,
            &[Predicate::Combine],
            false,
            Symbol::operator(A, union(&a.cols, &b.cols)),
        ),
        _ => {}
    }
}

/// All composition rule applications for an adjacent pair. The order of
/// the inputs does not matter beyond the `swapped` flag.
pub fn compose(a: &Symbol, b: &Symbol) -> Vec<RuleApplication> {
    let mut out = Vec::new();
    compose_ordered(a, b, false, &mut out);
    compose_ordered(b, a, true, &mut out);
    compose_symmetric(a, b, &mut out);
    out.sort_by_key(|r| r.rule);
    out
}

/// All raising rule applications for a single symbol.
pub fn raise(a: &Symbol) -> Vec<RuleApplication> {
    let mut out = Vec::new();
    match a.kind {
        C => match a.ty {
            Some(ColumnType::Num) => push_preds(
                &mut out,
                Rule::RaiseNumeric,
                &[Predicate::Min, Predicate::Max, Predicate::Sum, Predicate::Avg],
                false,
                Symbol::operator(A, a.cols.clone()),
            ),
            Some(_) => push_preds(&mut out, Rule::RaiseCount, &[Predicate::Count], false, Symbol::operator(A, a.cols.clone())),
            None => {}
        },
        V | D if !a.cols.is_empty() => {
            push_preds(&mut out, Rule::RaiseFilter, &[Predicate::Equal], false, Symbol::operator(F, a.cols.clone()))
        }
        _ => {}
    }
    out
}

/// Applicable rules for one (raising) or two (composition) inputs.
pub fn applicable(inputs: &[&Symbol]) -> Vec<RuleApplication> {
    match inputs {
        [a] => raise(a),
        [a, b] => compose(a, b),
        _ => Vec::new(),
    }
}

/// Re-derive the output of `rule` on `inputs` (left, right order) and
/// check it is licensed; used to re-validate derivations.
pub fn check_application(rule: RulePred, inputs: &[&Symbol], output: &Symbol) -> bool {
    applicable(inputs)
        .iter()
        .any(|app| app.rule == rule && &app.output == output)
}

/// The modification precondition: head and filter columns are disjoint.
pub fn check_modification(head: &Symbol, f: &Symbol) -> bool {
    debug_assert_eq!(f.kind, F);
    head.cols.is_disjoint(&f.cols)
}

/// Kind-level edges `from -> to` of the shipped raising rules.
pub fn raising_edges() -> Vec<(SymbolKind, SymbolKind)> {
    vec![(C, A), (V, F), (D, F)]
}

/// Cycles in a kind graph, each reported once as the sorted list of kinds
/// in a strongly connected component (or a self loop).
pub fn detect_loops(edges: &[(SymbolKind, SymbolKind)]) -> Vec<Vec<SymbolKind>> {
    let reach = |from: SymbolKind, to: SymbolKind| -> bool {
        let mut seen = vec![from];
        let mut stack = vec![from];
        while let Some(k) = stack.pop() {
            for &(x, y) in edges {
                if x == k {
                    if y == to {
                        return true;
                    }
                    if !seen.contains(&y) {
                        seen.push(y);
                        stack.push(y);
                    }
                }
            }
        }
        false
    };
    let mut cycles: Vec<Vec<SymbolKind>> = Vec::new();
    for k in SymbolKind::ALL {
        if !reach(k, k) {
            continue;
        }
        let comp: Vec<SymbolKind> = SymbolKind::ALL
            .into_iter()
            .filter(|&j| j == k || (reach(k, j) && reach(j, k)))
            .collect();
        if !cycles.contains(&comp) {
            cycles.push(comp);
        }
    }
    cycles
}

/// Text table of every rule with its predicates, precondition and schema.
pub fn dump() -> String {
    let mut rows: Vec<[String; 3]> = Vec::new();
    for rule in Rule::ALL {
        let preds: Vec<&str> = RulePred::all()
            .filter(|r| r.rule() == rule)
            .map(|r| r.predicate().as_str())
            .collect();
        rows.push([
            format!("{} : [{}]", rule.notation(), preds.join("|")),
            rule.precondition().to_string(),
            rule.schema().to_string(),
        ]);
    }
    let width = |i: usize| {
        rows.iter()
            .map(|r| r[i].chars().count())
            .max()
            .unwrap_or(0)
            .max(["Symbols -> Symbol^ : [predicate]", "Precondition", "Schema"][i].len())
    };
    let (w0, w1) = (width(0), width(1));
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let mut out = String::new();
    out.push_str(&format!(
        "{}  {}  Schema\n",
        pad("Symbols -> Symbol^ : [predicate]", w0),
        pad("Precondition", w1)
    ));
    for (i, r) in rows.iter().enumerate() {
        if i == 0 {
            out.push_str("-- composition rules --\n");
        }
        if Rule::ALL[i] == Rule::RaiseNumeric {
            out.push_str("-- raising rules --\n");
        }
        out.push_str(&format!("{}  {}  {}\n", pad(&r[0], w0), pad(&r[1], w1), r[2]));
    }
    out
}
