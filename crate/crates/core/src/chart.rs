//! Extended CYK over the symbol tokens of an abstracted utterance.
//!
//! Cells are indexed by ranges of symbol tokens; common and `UNK` tokens
//! between symbols are transparent. A cell maps each symbol signature to a
//! packed entry holding every way of deriving it, so the forest stays
//! exact while sharing sub-derivations.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::derivation::{is_root_kind, Derivation, Node};
use crate::error::{Error, Result};
use crate::rules::{compose, raise, RulePred};
use crate::scoring::NodeScorer;
use crate::symbol::Symbol;
use crate::token::{AbstractedUtterance, Span, EMPTY};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    /// Derivations returned by `parse_all`.
    pub max_trees: usize,
    /// Chart items (entries plus alternatives) before the chart stops growing.
    pub max_items: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_trees: 5_000, max_items: 50_000 }
    }
}

#[derive(Clone, Copy, Debug)]
enum Kids {
    Leaf(usize),
    Raise(usize),
    Compose(usize, usize),
}

#[derive(Clone, Debug)]
struct Alt {
    rule: Option<RulePred>,
    swapped: bool,
    kids: Kids,
}

#[derive(Clone, Debug)]
struct Entry {
    symbol: Symbol,
    cell: (usize, usize),
    alts: Vec<Alt>,
}

/// A packed parse forest.
pub struct Chart<'u> {
    u: &'u AbstractedUtterance,
    positions: Vec<usize>,
    entries: Vec<Entry>,
    cells: Vec<Vec<usize>>,
    counts: Vec<u128>,
    items: usize,
    /// The item cap was hit; the forest is incomplete.
    pub truncated: bool,
}

impl<'u> Chart<'u> {
    pub fn build(u: &'u AbstractedUtterance, limits: &Limits) -> Result<Chart<'u>> {
        let positions = u.symbol_positions();
        if positions.is_empty() {
            return Err(Error::NothingToParse);
        }
        let m = positions.len();
        let mut chart = Chart {
            u,
            positions,
            entries: Vec::new(),
            cells: vec![Vec::new(); m * m],
            counts: Vec::new(),
            items: 0,
            truncated: false,
        };
        for len in 1..=m {
            for i in 0..=m - len {
                chart.fill(i, i + len - 1, limits);
            }
        }
        chart.sort_alternatives();
        chart.counts = vec![0; chart.entries.len()];
        let mut done = vec![false; chart.entries.len()];
        for e in 0..chart.entries.len() {
            chart.count(e, &mut done);
        }
        Ok(chart)
    }

    fn cell(&self, i: usize, j: usize) -> &[usize] {
        &self.cells[i * self.positions.len() + j]
    }

    pub fn span_of(&self, i: usize, j: usize) -> Span {
        Span::new(self.positions[i], self.positions[j] + 1)
    }

    fn fill(&mut self, i: usize, j: usize, limits: &Limits) {
        let mut map: BTreeMap<String, usize> = BTreeMap::new();
        let add = |chart: &mut Chart, map: &mut BTreeMap<String, usize>, symbol: Symbol, alt: Alt| -> bool {
            if chart.items >= limits.max_items {
                chart.truncated = true;
                return false;
            }
            let sig = symbol.signature();
            let id = match map.get(&sig) {
                Some(&id) => id,
                None => {
                    chart.entries.push(Entry { symbol, cell: (i, j), alts: Vec::new() });
                    chart.items += 1;
                    map.insert(sig, chart.entries.len() - 1);
                    chart.entries.len() - 1
                }
            };
            chart.entries[id].alts.push(alt);
            chart.items += 1;
            true
        };
        if i == j {
            let t = self.positions[i];
            let symbol = self.u.tokens[t].symbol().expect("symbol position").clone();
            add(self, &mut map, symbol, Alt { rule: None, swapped: false, kids: Kids::Leaf(t) });
        }
        'split: for k in i..j {
            let lefts = self.cell(i, k).to_vec();
            let rights = self.cell(k + 1, j).to_vec();
            for &l in &lefts {
                for &r in &rights {
                    for app in compose(&self.entries[l].symbol, &self.entries[r].symbol) {
                        let alt = Alt { rule: Some(app.rule), swapped: app.swapped, kids: Kids::Compose(l, r) };
                        if !add(self, &mut map, app.output, alt) {
                            break 'split;
                        }
                    }
                }
            }
        }
        let sources: Vec<usize> = map.values().copied().collect();
        'raise: for src in sources {
            for app in raise(&self.entries[src].symbol) {
                let alt = Alt { rule: Some(app.rule), swapped: false, kids: Kids::Raise(src) };
                if !add(self, &mut map, app.output, alt) {
                    break 'raise;
                }
            }
        }
        let m = self.positions.len();
        self.cells[i * m + j] = map.into_values().collect();
    }

    fn sort_alternatives(&mut self) {
        let mut rank = vec![0usize; self.entries.len()];
        for cell in &self.cells {
            for (r, &e) in cell.iter().enumerate() {
                rank[e] = r;
            }
        }
        let entries = &self.entries;
        let key = |a: &Alt| {
            let rule = a.rule.map_or(0, |r| r.index() + 1);
            match a.kids {
                Kids::Leaf(t) => (rule, t, 0, 0, a.swapped),
                Kids::Raise(c) => (rule, 0, rank[c], 0, a.swapped),
                Kids::Compose(l, r) => (rule, entries[l].cell.1, rank[l], rank[r], a.swapped),
            }
        };
        let mut sorted: Vec<Vec<Alt>> = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let mut alts = e.alts.clone();
            alts.sort_by_key(|a| key(a));
            sorted.push(alts);
        }
        for (e, alts) in self.entries.iter_mut().zip(sorted) {
            e.alts = alts;
        }
    }

    fn count(&mut self, e: usize, done: &mut Vec<bool>) -> u128 {
        if done[e] {
            return self.counts[e];
        }
        let mut total: u128 = 0;
        for a in 0..self.entries[e].alts.len() {
            let n = match self.entries[e].alts[a].kids {
                Kids::Leaf(_) => 1,
                Kids::Raise(c) => self.count(c, done),
                Kids::Compose(l, r) => self.count(l, done).saturating_mul(self.count(r, done)),
            };
            total = total.saturating_add(n);
        }
        self.counts[e] = total;
        done[e] = true;
        total
    }

    /// Root entries: the full-range cell restricted to accepted root kinds.
    fn roots(&self) -> Vec<usize> {
        let m = self.positions.len();
        self.cell(0, m - 1)
            .iter()
            .copied()
            .filter(|&e| is_root_kind(self.entries[e].symbol.kind))
            .collect()
    }

    /// Number of complete derivations (saturating).
    pub fn tree_count(&self) -> u128 {
        self.roots()
            .iter()
            .fold(0u128, |acc, &e| acc.saturating_add(self.counts[e]))
    }

    pub fn item_count(&self) -> usize {
        self.items
    }

    fn first_trees(&self, e: usize, k: usize, memo: &mut HashMap<usize, Vec<Arc<Node>>>) -> Vec<Arc<Node>> {
        let want = (k as u128).min(self.counts[e]) as usize;
        if let Some(v) = memo.get(&e) {
            if v.len() >= want {
                return v[..want].to_vec();
            }
        }
        let entry = &self.entries[e];
        let span = self.span_of(entry.cell.0, entry.cell.1);
        let mut out: Vec<Arc<Node>> = Vec::with_capacity(want);
        for alt in &entry.alts {
            if out.len() >= want {
                break;
            }
            let need = want - out.len();
            let node = |children: Vec<Arc<Node>>| {
                Arc::new(Node {
                    rule: alt.rule,
                    swapped: alt.swapped,
                    span,
                    symbol: entry.symbol.clone(),
                    children,
                })
            };
            match alt.kids {
                Kids::Leaf(t) => out.push(Arc::new(Node::leaf(t, entry.symbol.clone()))),
                Kids::Raise(c) => {
                    for child in self.first_trees(c, need, memo) {
                        out.push(node(vec![child]));
                    }
                }
                Kids::Compose(l, r) => {
                    let cr = self.counts[r];
                    if cr == 0 || self.counts[l] == 0 {
                        continue;
                    }
                    let nl = ((need as u128).div_ceil(cr)).min(self.counts[l]) as usize;
                    let nr = (need as u128).min(cr) as usize;
                    let lt = self.first_trees(l, nl, memo);
                    let rt = self.first_trees(r, nr, memo);
                    'outer: for a in &lt {
                        for b in &rt {
                            if out.len() >= want {
                                break 'outer;
                            }
                            out.push(node(vec![a.clone(), b.clone()]));
                        }
                    }
                }
            }
        }
        out.truncate(want);
        memo.insert(e, out.clone());
        out
    }

    /// The first `max` derivations in the deterministic order: root entries
    /// by signature, alternatives by (rule, split, children), children
    /// enumerated left-major. Any truncation is a prefix of the full order.
    pub fn derivations(&self, max: usize) -> Vec<Derivation> {
        let mut memo = HashMap::new();
        let mut out = Vec::new();
        for e in self.roots() {
            if out.len() >= max {
                break;
            }
            for t in self.first_trees(e, max - out.len(), &mut memo) {
                out.push(Derivation::new(t));
            }
        }
        out
    }

    /// Max-score derivation. Ties go to the first alternative in the
    /// deterministic order.
    pub fn best(&self, scorer: &dyn NodeScorer) -> Result<(Derivation, f64)> {
        let m = self.positions.len();
        let mut node_scores: HashMap<(usize, RulePred), f64> = HashMap::new();
        for i in 0..m {
            for j in i..m {
                let cell = self.cell(i, j);
                let mut rules: Vec<RulePred> = cell
                    .iter()
                    .flat_map(|&e| self.entries[e].alts.iter().filter_map(|a| a.rule))
                    .collect();
                rules.sort();
                rules.dedup();
                if rules.is_empty() {
                    continue;
                }
                let scores = scorer.score_span(self.u, self.span_of(i, j), &rules);
                for (r, s) in rules.into_iter().zip(scores) {
                    node_scores.insert((i * m + j, r), s);
                }
            }
        }
        let mut best: Vec<Option<(f64, usize)>> = vec![None; self.entries.len()];
        fn solve(
            chart: &Chart,
            e: usize,
            node_scores: &HashMap<(usize, RulePred), f64>,
            best: &mut Vec<Option<(f64, usize)>>,
        ) -> f64 {
            if let Some((s, _)) = best[e] {
                return s;
            }
            let entry = &chart.entries[e];
            let m = chart.positions.len();
            let mut top: Option<(f64, usize)> = None;
            for (ai, alt) in entry.alts.iter().enumerate() {
                let here = alt
                    .rule
                    .map_or(0.0, |r| node_scores[&(entry.cell.0 * m + entry.cell.1, r)]);
                let s = match alt.kids {
                    Kids::Leaf(_) => here,
                    Kids::Raise(c) => here + solve(chart, c, node_scores, best),
                    Kids::Compose(l, r) => {
                        if chart.counts[l] == 0 || chart.counts[r] == 0 {
                            continue;
                        }
                        here + solve(chart, l, node_scores, best) + solve(chart, r, node_scores, best)
                    }
                };
                if top.map_or(true, |(t, _)| s > t) {
                    top = Some((s, ai));
                }
            }
            let top = top.unwrap_or((f64::NEG_INFINITY, 0));
            best[e] = Some(top);
            top.0
        }
        let mut winner: Option<(f64, usize)> = None;
        for e in self.roots() {
            let s = solve(self, e, &node_scores, &mut best);
            if winner.map_or(true, |(t, _)| s > t) {
                winner = Some((s, e));
            }
        }
        let (score, root) = winner.ok_or(Error::NoValidTree)?;
        fn build(chart: &Chart, e: usize, best: &[Option<(f64, usize)>]) -> Arc<Node> {
            let entry = &chart.entries[e];
            let alt = &entry.alts[best[e].expect("solved").1];
            let span = chart.span_of(entry.cell.0, entry.cell.1);
            let children = match alt.kids {
                Kids::Leaf(t) => return Arc::new(Node::leaf(t, entry.symbol.clone())),
                Kids::Raise(c) => vec![build(chart, c, best)],
                Kids::Compose(l, r) => vec![build(chart, l, best), build(chart, r, best)],
            };
            Arc::new(Node { rule: alt.rule, swapped: alt.swapped, span, symbol: entry.symbol.clone(), children })
        }
        Ok((Derivation::new(build(self, root, &best)), score))
    }
}

/// All derivations of `u` up to `limits.max_trees`.
pub fn parse_all(u: &AbstractedUtterance, limits: &Limits) -> Result<Vec<Derivation>> {
    let chart = Chart::build(u, limits)?;
    let trees = chart.derivations(limits.max_trees);
    if trees.is_empty() {
        return Err(Error::NoValidTree);
    }
    Ok(trees)
}

/// The max-score derivation of `u` and its score.
pub fn parse_best(u: &AbstractedUtterance, limits: &Limits, scorer: &dyn NodeScorer) -> Result<(Derivation, f64)> {
    Chart::build(u, limits)?.best(scorer)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceMode {
    Inside,
    Left,
    Right,
    Bidirectional,
}

impl SurfaceMode {
    pub const ALL: [SurfaceMode; 4] =
        [SurfaceMode::Inside, SurfaceMode::Left, SurfaceMode::Right, SurfaceMode::Bidirectional];

    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceMode::Inside => "inside",
            SurfaceMode::Left => "left",
            SurfaceMode::Right => "right",
            SurfaceMode::Bidirectional => "bidirectional",
        }
    }

    pub fn parse(s: &str) -> Option<SurfaceMode> {
        SurfaceMode::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Token window around a span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceStructure {
    pub mode: SurfaceMode,
    /// Token range `[start, end)` of the window.
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<String>,
}

/// The span plus, depending on the mode, the context tokens to its left
/// and/or right up to (not including) the nearest symbol token.
pub fn surface(u: &AbstractedUtterance, span: Span, mode: SurfaceMode) -> SurfaceStructure {
    let mut start = span.start;
    let mut end = span.end;
    if matches!(mode, SurfaceMode::Left | SurfaceMode::Bidirectional) {
        while start > 0 && !u.tokens[start - 1].is_symbol() {
            start -= 1;
        }
    }
    if matches!(mode, SurfaceMode::Right | SurfaceMode::Bidirectional) {
        while end < u.tokens.len() && !u.tokens[end].is_symbol() {
            end += 1;
        }
    }
    let mut tokens: Vec<String> = u.tokens[start..end].iter().map(|t| t.key()).collect();
    if tokens.is_empty() {
        tokens.push(EMPTY.to_string());
    }
    SurfaceStructure { mode, start, end, tokens }
}
