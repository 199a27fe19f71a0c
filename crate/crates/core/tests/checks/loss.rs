//! The margin loss against a literal double-sum evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablequery_core::chart::{parse_all, Limits};
use tablequery_core::scoring::{tree_logscore, ScorerConfig, SparseModel};
use tablequery_core::sql::{SelectItem, SqlQuery};
use tablequery_core::training::{margin_loss, Compiled, LabeledCandidate, Status, TrainerConfig, TrainingExample};

pub const ALPHA: f64 = 0.5;

/// Probabilities over the concatenation `pos ++ neg`, then
/// `max(0, α − Σ_j Σ_k (p⁺_j − p⁻_k))`.
fn oracle(pos: &[f64], neg: &[f64], alpha: f64) -> f64 {
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let hi = all.iter().copied().fold(f64::MIN, f64::max);
    let z: f64 = all.iter().map(|t| (t - hi).exp()).sum();
    let p = |t: f64| (t - hi).exp() / z;
    let mut inner = 0.0;
    for &a in pos {
        for &b in neg {
            inner += p(a) - p(b);
        }
    }
    (alpha - inner).max(0.0)
}

fn oracle_pairs(pos: &[f64], neg: &[f64], alpha: f64) -> f64 {
    let all: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let hi = all.iter().copied().fold(f64::MIN, f64::max);
    let z: f64 = all.iter().map(|t| (t - hi).exp()).sum();
    let p = |t: f64| (t - hi).exp() / z;
    let mut l = 0.0;
    for &a in pos {
        for &b in neg {
            l += (alpha - (p(a) - p(b))).max(0.0);
        }
    }
    l
}

/// Both loss variants against the oracles on `n` random score vectors.
/// Returns how many instances had a zero and a positive loss.
pub fn random_totals(seed: u64, n: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut zero, mut positive) = (0, 0);
    for _ in 0..n {
        let m = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=8);
        let spread = [0.1, 1.0, 5.0, 30.0][rng.gen_range(0..4)];
        let pos: Vec<f64> = (0..m).map(|_| rng.gen_range(-spread..spread)).collect();
        let neg: Vec<f64> = (0..k).map(|_| rng.gen_range(-spread..spread)).collect();
        let got = margin_loss(&pos, &neg, ALPHA, false).loss;
        let want = oracle(&pos, &neg, ALPHA);
        assert!((got - want).abs() < 1e-9, "{got} vs {want} for {pos:?} {neg:?}");
        if want == 0.0 {
            zero += 1;
        } else {
            positive += 1;
        }
        let got = margin_loss(&pos, &neg, ALPHA, true).loss;
        let want = oracle_pairs(&pos, &neg, ALPHA);
        assert!((got - want).abs() < 1e-9, "per-pair {got} vs {want}");
    }
    (zero, positive)
}

pub fn hinge_cases() {
    // One positive holding nearly all the mass against one negative.
    let lg = margin_loss(&[20.0], &[0.0], ALPHA, false);
    assert_eq!(lg.loss, 0.0);
    assert!(lg.d_pos.iter().chain(&lg.d_neg).all(|&d| d == 0.0));
    // Equal scores: the inner sum is zero and the loss is α.
    let lg = margin_loss(&[1.0, 1.0], &[1.0, 1.0, 1.0], ALPHA, false);
    assert!((lg.loss - ALPHA).abs() < 1e-12);
}

pub fn totals_gradient(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for per_pair in [false, true] {
        for _ in 0..50 {
            let pos: Vec<f64> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let neg: Vec<f64> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lg = margin_loss(&pos, &neg, ALPHA, per_pair);
            let f = |p: &[f64], n: &[f64]| margin_loss(p, n, ALPHA, per_pair).loss;
            let h = 1e-6;
            for i in 0..pos.len() + neg.len() {
                let (mut p, mut n) = (pos.clone(), neg.clone());
                let bump = |p: &mut Vec<f64>, n: &mut Vec<f64>, d: f64| {
                    if i < p.len() {
                        p[i] += d
                    } else {
                        n[i - p.len()] += d
                    }
                };
                bump(&mut p, &mut n, h);
                let up = f(&p, &n);
                bump(&mut p, &mut n, -2.0 * h);
                let down = f(&p, &n);
                // Skip coordinates where a pair's hinge flips inside the step.
                let kinked = per_pair && ((up - lg.loss) - (lg.loss - down)).abs() > 1e-7;
                if kinked {
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                let analytic = if i < pos.len() { lg.d_pos[i] } else { lg.d_neg[i - pos.len()] };
                assert!((numeric - analytic).abs() < 1e-6, "coordinate {i}: {numeric} vs {analytic}");
            }
        }
    }
}

/// `Compiled::loss` on `n` parsed examples against the oracle.
pub fn training_path(seed: u64, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    while checked < n {
        let u = crate::common::random_utterance_upto(&mut rng, 4);
        let Ok(trees) = parse_all(&u, &Limits::default()) else { continue };
        if trees.len() < 2 || trees.len() > 40 {
            continue;
        }
        let candidates: Vec<LabeledCandidate> = trees
            .into_iter()
            .enumerate()
            .map(|(i, d)| LabeledCandidate { utterance: 0, derivation: d, sql: None, consistent: i % 3 == 0 })
            .collect();
        let ex = TrainingExample {
            question: String::new(),
            gold: SqlQuery::select(vec![SelectItem::raw("a")]),
            utterances: vec![u.clone()],
            candidates,
            status: Status::Ok,
            truncated: false,
        };
        let mut model = SparseModel::new(ScorerConfig::default());
        for (i, c) in ex.candidates.iter().enumerate() {
            for n in c.derivation.rule_nodes() {
                let w = tablequery_core::chart::surface(&u, n.span, model.config.mode);
                for b in model.features(&w.tokens) {
                    let key = b as u64 * model.rule_dim() + n.rule.unwrap().feature(false) as u64;
                    model.weights.insert(key, ((i * 7 + b as usize) % 11) as f64 / 10.0 - 0.5);
                }
            }
        }
        let cfg = TrainerConfig { margin: ALPHA, max_negatives: None, ..TrainerConfig::default() };
        let compiled = Compiled::build(&model, &ex);
        let got = compiled.loss(&model, &cfg).unwrap();
        let totals: Vec<f64> = ex.candidates.iter().map(|c| tree_logscore(&model, &c.derivation, &u).total).collect();
        let pos: Vec<f64> = (0..totals.len()).filter(|i| i % 3 == 0).map(|i| totals[i]).collect();
        let neg: Vec<f64> = (0..totals.len()).filter(|i| i % 3 != 0).map(|i| totals[i]).collect();
        let want = oracle(&pos, &neg, ALPHA);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        checked += 1;
    }
}
