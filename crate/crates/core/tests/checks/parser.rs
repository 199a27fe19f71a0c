//! The packed chart against a brute-force enumerator that builds every tree
//! by plain recursion over symbol ranges, with no sharing.

use std::time::{Duration, Instant};

use crate::common::{hash_score, random_utterance};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablequery_core::chart::{parse_all, parse_best, Chart, Limits};
use tablequery_core::derivation::is_root_kind;
use tablequery_core::rules::{compose, raise, RulePred};
use tablequery_core::scoring::{tree_logscore, FnScorer};
use tablequery_core::symbol::{Symbol, SymbolKind};
use tablequery_core::token::{AbstractedUtterance, Span};

#[derive(Clone, Debug)]
struct Tree {
    rule: Option<(RulePred, bool)>,
    span: Span,
    symbol: Symbol,
    kids: Vec<Tree>,
}

impl Tree {
    fn render(&self, out: &mut String) {
        match self.rule {
            None => out.push_str(&format!("{}@{}", self.symbol.signature(), self.span.start)),
            Some((r, sw)) => {
                out.push_str(&format!(
                    "({}{} {} {}",
                    r.index(),
                    if sw { "'" } else { "" },
                    self.span,
                    self.symbol.signature()
                ));
                for k in &self.kids {
                    out.push(' ');
                    k.render(out);
                }
                out.push(')');
            }
        }
    }
}

/// Every tree over symbols `i..=j` (indices into `pos`).
fn all_trees(u: &AbstractedUtterance, pos: &[usize], i: usize, j: usize) -> Vec<Tree> {
    let mut base = Vec::new();
    if i == j {
        let t = pos[i];
        base.push(Tree { rule: None, span: Span::new(t, t + 1), symbol: u.tokens[t].symbol().unwrap().clone(), kids: vec![] });
    }
    for k in i..j {
        let left = all_trees(u, pos, i, k);
        let right = all_trees(u, pos, k + 1, j);
        for l in &left {
            for r in &right {
                for app in compose(&l.symbol, &r.symbol) {
                    base.push(Tree {
                        rule: Some((app.rule, app.swapped)),
                        span: Span::new(l.span.start, r.span.end),
                        symbol: app.output,
                        kids: vec![l.clone(), r.clone()],
                    });
                }
            }
        }
    }
    // Raising to a fixpoint; a chain longer than the kind count would be a loop.
    let mut out = base.clone();
    let mut frontier = base;
    for _ in 0..SymbolKind::ALL.len() {
        let mut next = Vec::new();
        for t in &frontier {
            for app in raise(&t.symbol) {
                next.push(Tree { rule: Some((app.rule, false)), span: t.span, symbol: app.output, kids: vec![t.clone()] });
            }
        }
        if next.is_empty() {
            break;
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn oracle(u: &AbstractedUtterance) -> Vec<String> {
    let pos = u.symbol_positions();
    let mut v: Vec<String> = all_trees(u, &pos, 0, pos.len() - 1)
        .into_iter()
        .filter(|t| is_root_kind(t.symbol.kind))
        .map(|t| {
            let mut s = String::new();
            t.render(&mut s);
            s
        })
        .collect();
    v.sort();
    v
}

pub struct Stats {
    pub checked: usize,
    pub with_trees: usize,
    pub multi: usize,
    pub elapsed: Duration,
}

/// Check `n` random utterances against the enumerator, panicking on the
/// first disagreement.
pub fn check(seed: u64, n: usize) -> Stats {
    let started = Instant::now();
    let limits = Limits { max_trees: 1_000_000, max_items: 10_000_000 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut checked, mut with_trees, mut multi) = (0, 0, 0);
    while checked < n {
        let u = random_utterance(&mut rng);
        let chart = Chart::build(&u, &limits).unwrap();
        // Keep the brute force tractable.
        if chart.tree_count() > 20_000 {
            continue;
        }
        checked += 1;
        let want = oracle(&u);
        assert_eq!(chart.tree_count() as usize, want.len());
        let got = match parse_all(&u, &limits) {
            Ok(trees) => trees,
            Err(_) => {
                assert!(want.is_empty(), "parse_all failed but the oracle has {} trees", want.len());
                assert!(parse_best(&u, &limits, &FnScorer(|_: &AbstractedUtterance, _, _| 0.0)).is_err());
                continue;
            }
        };
        with_trees += 1;
        if got.len() > 1 {
            multi += 1;
        }
        let mut got_s: Vec<String> = got.iter().map(|d| d.serialize()).collect();
        got_s.sort();
        assert_eq!(got_s, want, "utterance {:?}", u.keys());
        for d in &got {
            d.validate(&u).unwrap();
        }

        let seed: u64 = rng.gen();
        let scorer = FnScorer(move |_: &AbstractedUtterance, span, r| hash_score(seed, span, r));
        let (best, score) = parse_best(&u, &limits, &scorer).unwrap();
        let max = got.iter().map(|d| tree_logscore(&scorer, d, &u).total).fold(f64::NEG_INFINITY, f64::max);
        assert!((score - max).abs() < 1e-9, "best {score} vs max {max}");
        assert!((tree_logscore(&scorer, &best, &u).total - score).abs() < 1e-9);
        assert!(got_s.binary_search(&best.serialize()).is_ok());
    }
    Stats { checked, with_trees, multi, elapsed: started.elapsed() }
}
