//! Labeling, training determinism, score linearity, interpretation
//! totality and surface windows.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablequery_core::abstraction::TableIndex;
use tablequery_core::chart::{parse_all, surface, Limits, SurfaceMode};
use tablequery_core::exec::execute;
use tablequery_core::interpret::interpret;
use tablequery_core::pipeline::Resources;
use tablequery_core::scoring::neural::default_tokens;
use tablequery_core::scoring::{
    tree_logscore, NeuralDims, NeuralModel, ScorerConfig, SpanModel, SparseModel,
};
use tablequery_core::sql::{canonicalize, parse_sql};
use tablequery_core::symbol::{ColSet, Symbol, SymbolKind};
use tablequery_core::table::Table;
use tablequery_core::token::{AbstractedUtterance, Span, Token, TokenKind};
use tablequery_core::training::{label_candidates, train, Compiled, Status, TrainerConfig, TrainingExample};
use tablequery_core::value::{ColumnType, Value};

const QUESTIONS: &[(&str, &str)] = &[
    ("points of Ann", "SELECT Points FROM t WHERE Player = 'Ann'"),
    ("total points by team", "SELECT Team, SUM(Points) FROM t GROUP BY Team"),
    ("how many players in tigers", "SELECT COUNT(Player) FROM t WHERE Team = 'Tigers'"),
    ("player with the highest points", "SELECT Player FROM t ORDER BY Points DESC LIMIT 1"),
    ("goals of Kim", "SELECT Goals FROM t WHERE Player = 'Kim'"),
    ("team of Eve", "SELECT Team FROM t WHERE Player = 'Eve'"),
    ("average goals by team", "SELECT Team, AVG(Goals) FROM t GROUP BY Team"),
    ("players with points more than 10", "SELECT Player FROM t WHERE Points > 10"),
];

fn labeled(res: &Resources, index: &TableIndex) -> Vec<TrainingExample> {
    QUESTIONS
        .iter()
        .map(|(q, sql)| {
            let gold = parse_sql(sql, Some(&index.table)).unwrap();
            label_candidates(q, index, &gold, res).unwrap()
        })
        .collect()
}

fn setup() -> (Resources, TableIndex) {
    let res = Resources::english();
    let index = TableIndex::new(common::sample_table(), res.normalizer.as_ref());
    (res, index)
}

#[test]
fn labels_partition_candidates_by_canonical_match() {
    let (res, index) = setup();
    let examples = labeled(&res, &index);
    assert!(examples.iter().filter(|e| e.status == Status::Ok).count() >= 6);
    for ex in &examples {
        let gold = canonicalize(&ex.gold).unwrap();
        assert_eq!(ex.positives() + ex.negatives(), ex.candidates.len());
        for c in &ex.candidates {
            let ours = interpret(&c.derivation, &index.table).ok().and_then(|q| canonicalize(&q).ok());
            assert_eq!(c.consistent, ours.as_ref() == Some(&gold), "{}: {}", ex.question, c.derivation.serialize());
        }
        match ex.status {
            Status::Ok => assert!(ex.positives() > 0),
            Status::Unreachable => assert!(ex.positives() == 0 && !ex.candidates.is_empty()),
            Status::Unparseable => assert!(ex.candidates.is_empty()),
        }
    }
}

fn neural(res: &Resources, seed: u64) -> NeuralModel {
    NeuralModel::new(ScorerConfig::default(), NeuralDims { emb: 8, hidden: 4, attn: 6 }, default_tokens(&res.vocab), seed)
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (res, index) = setup();
    let examples = labeled(&res, &index);
    let mut cfg = TrainerConfig { epochs: 3, ..TrainerConfig::default() };
    cfg.adam.lr = 0.0;
    let init = neural(&res, 3);
    let (trained, _) = train(init.clone(), &examples, &[], &cfg, |_| {}).unwrap();
    assert_eq!(trained.params, init.params);
    let (trained, _) = train(SparseModel::new(ScorerConfig::default()), &examples, &[], &cfg, |_| {}).unwrap();
    assert!(trained.weights.values().all(|&w| w == 0.0));
}

#[test]
fn same_seed_gives_identical_parameters() {
    let (res, index) = setup();
    let examples = labeled(&res, &index);
    let cfg = TrainerConfig { epochs: 4, batch_size: 2, seed: 9, ..TrainerConfig::default() };
    let run = || train(neural(&res, 5), &examples, &[], &cfg, |_| {}).unwrap().0;
    let (a, b) = (run(), run());
    assert!(a.params.iter().zip(&b.params).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.params, neural(&res, 5).params);

    let run = || train(SparseModel::new(ScorerConfig::default()), &examples, &[], &cfg, |_| {}).unwrap().0;
    let (a, b) = (run(), run());
    assert_eq!(a.weights.len(), b.weights.len());
    assert!(!a.weights.is_empty());
    for (k, w) in &a.weights {
        assert_eq!(w.to_bits(), b.weights[k].to_bits());
    }
}

#[test]
fn tree_scores_are_linear_in_the_weights() {
    let (res, index) = setup();
    let examples = labeled(&res, &index);
    let cfg = TrainerConfig { epochs: 2, ..TrainerConfig::default() };
    let (model, _) = train(SparseModel::new(ScorerConfig::default()), &examples, &[], &cfg, |_| {}).unwrap();
    for factor in [0.5, 3.0] {
        let mut scaled = model.clone();
        scaled.scale(factor);
        for ex in &examples {
            for c in &ex.candidates {
                let u = &ex.utterances[c.utterance];
                let a = tree_logscore(&model, &c.derivation, u);
                let b = tree_logscore(&scaled, &c.derivation, u);
                assert!((b.total - factor * a.total).abs() < 1e-9);
                // The total is the sum of its nodes.
                assert!((a.per_node.iter().map(|n| n.2).sum::<f64>() - a.total).abs() < 1e-12);
            }
            let (ca, cb) = (Compiled::build(&model, ex), Compiled::build(&scaled, ex));
            assert_eq!(ca.argmax(&model), cb.argmax(&scaled));
        }
    }
}

/// Random utterance whose symbols are grounded in `table`.
fn grounded_utterance(rng: &mut ChaCha8Rng, table: &Table) -> AbstractedUtterance {
    let n = rng.gen_range(1..=5);
    let mut toks = Vec::new();
    let ncols = table.columns.len();
    for _ in 0..n {
        let c = rng.gen_range(0..ncols);
        let ty = table.column_type(c);
        let row = &table.rows[rng.gen_range(0..table.rows.len())];
        let sym = match rng.gen_range(0..6) {
            0 => Symbol::table(table),
            1 | 2 => Symbol::column(table, c),
            _ => match (ty, &row[c]) {
                (_, Value::Null) => Symbol::column(table, c),
                (ColumnType::Str, v) => Symbol::literal(SymbolKind::V, v.clone(), ColSet::from([c])),
                (ColumnType::Date, v) => Symbol::literal(SymbolKind::D, v.clone(), ColSet::from([c])),
                (ColumnType::Num, v) => {
                    let cols = if rng.gen_bool(0.5) { ColSet::new() } else { ColSet::from([c]) };
                    Symbol::literal(SymbolKind::N, v.clone(), cols)
                }
            },
        };
        if rng.gen_bool(0.3) {
            toks.push(Token { kind: TokenKind::Common("of".into()), source: (0, 0) });
        }
        toks.push(Token { kind: TokenKind::Symbol(sym), source: (0, 0) });
    }
    AbstractedUtterance::new(toks)
}

#[test]
fn interpretation_is_total_and_yields_valid_sql() {
    let table = common::sample_table();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let (mut ok, mut rejected) = (0, 0);
    for _ in 0..500 {
        let u = grounded_utterance(&mut rng, &table);
        let Ok(trees) = parse_all(&u, &Limits { max_trees: 200, ..Limits::default() }) else { continue };
        for d in trees {
            match interpret(&d, &table) {
                Ok(q) => {
                    ok += 1;
                    q.validate(&table).unwrap_or_else(|e| panic!("{}: {e}", d.serialize()));
                    canonicalize(&q).unwrap();
                    execute(&q, &table).unwrap();
                }
                Err(_) => rejected += 1,
            }
        }
    }
    assert!(ok > 1000, "only {ok} interpretations ({rejected} rejected)");
}

#[test]
fn surface_windows_contain_the_span_and_stop_at_symbols() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for _ in 0..300 {
        let u = common::random_utterance(&mut rng);
        let pos = u.symbol_positions();
        let i = rng.gen_range(0..pos.len());
        let j = rng.gen_range(i..pos.len());
        let span = Span::new(pos[i], pos[j] + 1);
        let inside = surface(&u, span, SurfaceMode::Inside);
        assert_eq!((inside.start, inside.end), (span.start, span.end));
        let left = surface(&u, span, SurfaceMode::Left);
        let right = surface(&u, span, SurfaceMode::Right);
        let both = surface(&u, span, SurfaceMode::Bidirectional);
        assert_eq!((both.start, both.end), (left.start, right.end));
        assert_eq!(left.end, span.end);
        assert_eq!(right.start, span.start);
        assert!(both.start == 0 || u.tokens[both.start - 1].is_symbol());
        assert!(both.end == u.len() || u.tokens[both.end].is_symbol());
        assert!((both.start..span.start).chain(span.end..both.end).all(|t| !u.tokens[t].is_symbol()));
        assert_eq!(both.tokens.len(), both.end - both.start);
    }
}
