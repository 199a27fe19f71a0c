//! Mapping derivations to SQL.
//!
//! Each node denotes a query fragment built from its children's fragments:
//!
//! | node                  | fragment                                            |
//! |-----------------------|-----------------------------------------------------|
//! | `T` leaf              | every column                                        |
//! | `C` leaf              | its columns, plain                                  |
//! | project `X+T`         | `X`'s select list, constraints of both              |
//! | filter `F+T`          | `T` plus `F`'s conditions                           |
//! | group `A\|G+C`        | head's select, `C` added to select and GROUP BY     |
//! | equal `C+V\|D`        | condition `C = literal`                             |
//! | compare `C+N`         | condition `C > < >= <= N`                           |
//! | `F+F` and / or        | conjunction / disjunction of the two condition sets |
//! | argmax / argmin       | head's select, `ORDER BY C2 DESC\|ASC LIMIT 1`      |
//! | combine               | concatenated select lists                           |
//! | modify `X+F`          | `X` plus `F`'s conditions                           |
//! | `C->A`                | aggregator applied to every selected column         |
//! | `V\|D->F`             | `col = literal`, or-ed over the literal's columns   |
//!
//! Finalization then places each condition clause in WHERE or HAVING and
//! repairs the select list and superlative so the result is valid SQL.

use crate::derivation::{Derivation, Node};
use crate::error::{Error, Result};
use crate::rules::{Predicate, Rule};
use crate::sql::{coerce, Agg, Clause, CmpOp, Condition, SelectItem, SqlQuery, Superlative};
use crate::symbol::SymbolKind;
use crate::table::Table;
use crate::value::{ColumnType, Value};

#[derive(Clone, Debug, Default)]
struct Frag {
    select: Vec<SelectItem>,
    conds: Vec<Clause>,
    group: Vec<String>,
    superlative: Option<Superlative>,
}

impl Frag {
    fn absorb(&mut self, other: Frag) {
        self.conds.extend(other.conds);
        for g in other.group {
            if !self.group.contains(&g) {
                self.group.push(g);
            }
        }
        if self.superlative.is_none() {
            self.superlative = other.superlative;
        }
    }
}

fn agg_of(p: Predicate) -> Option<Agg> {
    match p {
        Predicate::Min => Some(Agg::Min),
        Predicate::Max => Some(Agg::Max),
        Predicate::Sum => Some(Agg::Sum),
        Predicate::Avg => Some(Agg::Avg),
        Predicate::Count => Some(Agg::Count),
        _ => None,
    }
}

fn op_of(p: Predicate) -> CmpOp {
    match p {
        Predicate::More => CmpOp::Gt,
        Predicate::Less => CmpOp::Lt,
        Predicate::MoreEq => CmpOp::Ge,
        Predicate::LessEq => CmpOp::Le,
        _ => CmpOp::Eq,
    }
}

/// Disjunction of two CNF condition sets, distributed back into CNF.
pub(crate) fn or_cnf(a: &[Clause], b: &[Clause]) -> Vec<Clause> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            out.push(c);
        }
    }
    out
}

struct Interp<'t> {
    table: &'t Table,
}

impl Interp<'_> {
    fn name(&self, c: usize) -> String {
        self.table.columns[c].name.clone()
    }

    fn literal_for(&self, col: usize, v: &Value) -> Option<Value> {
        coerce(v, self.table.column_type(col))
    }

    /// Children in the rule's left-hand-side order.
    fn ordered<'n>(&self, n: &'n Node) -> (&'n Node, &'n Node) {
        let (a, b) = (&*n.children[0], &*n.children[1]);
        if n.swapped {
            (b, a)
        } else {
            (a, b)
        }
    }

    fn frag(&self, n: &Node) -> Frag {
        let Some(rp) = n.rule else {
            return match n.symbol.kind {
                SymbolKind::T => Frag::default(),
                SymbolKind::C => Frag {
                    select: n.symbol.cols.iter().map(|&c| SelectItem::raw(self.name(c))).collect(),
                    ..Frag::default()
                },
                _ => Frag::default(),
            };
        };
        let pred = rp.predicate();
        match rp.rule() {
            Rule::Project => {
                let (x, t) = self.ordered(n);
                let mut out = self.frag(x);
                out.absorb(self.frag(t));
                out
            }
            Rule::Filter | Rule::Modify => {
                let (head, f) = self.ordered(n);
                let (head, f) = if rp.rule() == Rule::Filter { (f, head) } else { (head, f) };
                let mut out = self.frag(head);
                out.absorb(self.frag(f));
                out
            }
            Rule::Group => {
                let (head, c) = self.ordered(n);
                let mut out = self.frag(head);
                let cf = self.frag(c);
                for &col in &c.symbol.cols {
                    let name = self.name(col);
                    if !out.group.contains(&name) {
                        out.group.push(name.clone());
                    }
                    out.select.push(SelectItem::raw(name));
                }
                out.absorb(cf);
                out
            }
            Rule::Equal | Rule::Compare => {
                let (c, lit) = self.ordered(n);
                let mut out = self.frag(c);
                out.select.clear();
                let col = *c.symbol.cols.iter().next().expect("single column");
                if let Some(v) = lit.symbol.value.as_ref().and_then(|v| self.literal_for(col, v)) {
                    out.conds.push(vec![Condition::new(self.name(col), op_of(pred), v)]);
                }
                out
            }
            Rule::Connect => {
                let a = self.frag(&n.children[0]);
                let b = self.frag(&n.children[1]);
                let conds = if pred == Predicate::Or {
                    or_cnf(&a.conds, &b.conds)
                } else {
                    let mut c = a.conds;
                    c.extend(b.conds);
                    c
                };
                Frag { conds, ..Frag::default() }
            }
            Rule::Superlative => {
                let (head, c2) = self.ordered(n);
                let mut out = self.frag(head);
                let mut order = self.frag(c2);
                order.select.clear();
                let col = *c2.symbol.cols.iter().next().expect("single column");
                out.superlative = Some(Superlative {
                    column: self.name(col),
                    agg: None,
                    descending: pred == Predicate::Argmax,
                });
                out.absorb(order);
                out
            }
            Rule::CombineColumns | Rule::CombineAggregates => {
                let mut out = self.frag(&n.children[0]);
                let b = self.frag(&n.children[1]);
                out.select.extend(b.select.iter().cloned());
                out.absorb(b);
                out
            }
            Rule::RaiseNumeric | Rule::RaiseCount => {
                let mut out = self.frag(&n.children[0]);
                let agg = agg_of(pred);
                for item in &mut out.select {
                    item.agg = agg;
                }
                out
            }
            Rule::RaiseFilter => {
                let lit = &n.children[0].symbol;
                let clause: Clause = lit
                    .cols
                    .iter()
                    .filter_map(|&col| {
                        let v = self.literal_for(col, lit.value.as_ref()?)?;
                        Some(Condition::new(self.name(col), CmpOp::Eq, v))
                    })
                    .collect();
                let conds = if clause.is_empty() { Vec::new() } else { vec![clause] };
                Frag { conds, ..Frag::default() }
            }
        }
    }
}

fn finalize(mut f: Frag, table: &Table) -> Result<SqlQuery> {
    if f.select.is_empty() {
        f.select = table.columns.iter().map(|c| SelectItem::raw(c.name.clone())).collect();
    }
    let mut select: Vec<SelectItem> = Vec::new();
    for s in f.select {
        if !select.contains(&s) {
            select.push(s);
        }
    }
    let grouped = !f.group.is_empty();
    if grouped {
        select.retain(|s| s.agg.is_some() || f.group.contains(&s.column));
        if select.is_empty() {
            select = f.group.iter().map(|g| SelectItem::raw(g.clone())).collect();
        }
    } else if select.iter().any(|s| s.agg.is_some()) {
        select.retain(|s| s.agg.is_some());
    }

    let aggregated = |col: &str| select.iter().find(|s| s.column == col).and_then(|s| s.agg);
    let mut where_: Vec<Clause> = Vec::new();
    let mut having: Vec<Clause> = Vec::new();
    for clause in f.conds {
        let mut deduped: Clause = Vec::new();
        for c in clause {
            if !deduped.contains(&c) {
                deduped.push(c);
            }
        }
        let havable = grouped
            && deduped.iter().all(|c| {
                f.group.contains(&c.column)
                    || (aggregated(&c.column).is_some() && matches!(c.value, Value::Num(_)))
            })
            && deduped
                .iter()
                .any(|c| !f.group.contains(&c.column) && aggregated(&c.column).is_some());
        let target = if havable { &mut having } else { &mut where_ };
        let clause: Clause = if havable {
            deduped
                .into_iter()
                .map(|mut c| {
                    if !f.group.contains(&c.column) {
                        c.agg = aggregated(&c.column);
                    }
                    c
                })
                .collect()
        } else {
            deduped
        };
        if !target.contains(&clause) {
            target.push(clause);
        }
    }

    let has_agg = select.iter().any(|s| s.agg.is_some());
    let superlative = f.superlative.map(|mut s| {
        if (grouped || has_agg) && s.agg.is_none() && !f.group.contains(&s.column) {
            s.agg = Some(aggregated(&s.column).unwrap_or(if s.descending { Agg::Max } else { Agg::Min }));
        }
        s
    });
    let q = SqlQuery { select, where_, group_by: f.group, having, superlative };
    q.validate(table)
        .map_err(|e| Error::Interpretation(format!("derivation maps to invalid SQL: {e}")))?;
    Ok(q)
}

/// Interpret a derivation over its grounding table.
pub fn interpret(d: &Derivation, table: &Table) -> Result<SqlQuery> {
    let frag = Interp { table }.frag(&d.root);
    finalize(frag, table)
}

/// Whether a column type admits ordering comparisons in generated SQL.
pub fn orderable(ty: ColumnType) -> bool {
    ty != ColumnType::Str
}
