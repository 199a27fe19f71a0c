//! Analytic loss gradients against central finite differences (neural) and
//! against the closed form (sparse), through the real training path.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablequery_core::chart::{parse_all, surface, Limits, SurfaceMode};
use tablequery_core::rules::RulePred;
use tablequery_core::scoring::{NeuralDims, NeuralModel, ScorerConfig, SpanModel, SparseModel};
use tablequery_core::sql::{SelectItem, SqlQuery};
use tablequery_core::token::{AbstractedUtterance, EMPTY, UNK};
use tablequery_core::training::{margin_loss, Compiled, LabeledCandidate, Status, TrainerConfig, TrainingExample};

/// A labeled example over random utterances: two to 40 trees, at least
/// one consistent and one not.
fn toy_example(rng: &mut ChaCha8Rng) -> TrainingExample {
    loop {
        let utterances: Vec<AbstractedUtterance> =
            (0..rng.gen_range(1..=2)).map(|_| crate::common::random_utterance_upto(rng, 4)).collect();
        let mut candidates = Vec::new();
        for (ui, u) in utterances.iter().enumerate() {
            if let Ok(trees) = parse_all(u, &Limits::default()) {
                for d in trees {
                    candidates.push(LabeledCandidate { utterance: ui, derivation: d, sql: None, consistent: rng.gen_bool(0.3) });
                }
            }
        }
        let pos = candidates.iter().filter(|c| c.consistent).count();
        if candidates.len() < 2 || candidates.len() > 40 || pos == 0 || pos == candidates.len() {
            continue;
        }
        return TrainingExample {
            question: String::new(),
            gold: SqlQuery::select(vec![SelectItem::raw("a")]),
            utterances,
            candidates,
            status: Status::Ok,
            truncated: false,
        };
    }
}

fn vocab(ex: &TrainingExample) -> Vec<String> {
    let mut v = vec![UNK.to_string(), EMPTY.to_string()];
    for u in &ex.utterances {
        for k in u.keys() {
            if !v.contains(&k) {
                v.push(k);
            }
        }
    }
    v
}

/// Compare every parameter's gradient with central differences on
/// `instances` toy examples. Returns (within 1e-4, parameters with a gradient).
pub fn neural(seed: u64, instances: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pass, mut active) = (0usize, 0usize);
    for i in 0..instances {
        let ex = toy_example(&mut rng);
        let per_pair = i % 2 == 1;
        let cfg = TrainerConfig { per_pair_hinge: per_pair, ..TrainerConfig::default() };
        let dims = NeuralDims { emb: 3, hidden: 2, attn: 3 };
        let mut model = NeuralModel::new(ScorerConfig::default(), dims, vocab(&ex), 100 + i);
        // Larger weights than the default init so the scores are not flat.
        model.scale(6.0);
        let compiled = Compiled::build(&model, &ex);
        let mut grad = model.zero_grad();
        compiled.accumulate(&model, &cfg, &mut grad).expect("has both labels");
        // Small enough for truncation error, large enough to stay clear of roundoff.
        let h = 1e-4;
        for p in 0..model.param_count() {
            let mut m = model.clone();
            m.params[p] += h;
            let up = compiled.loss(&m, &cfg).unwrap();
            m.params[p] -= 2.0 * h;
            let down = compiled.loss(&m, &cfg).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad[p];
            let scale = analytic.abs().max(numeric.abs());
            if scale < 1e-8 {
                continue;
            }
            active += 1;
            if (analytic - numeric).abs() / scale <= 1e-4 {
                pass += 1;
            } else {
                eprintln!("instance {i} param {p}: analytic {analytic:e} numeric {numeric:e}");
            }
        }
    }
    (pass, active)
}

/// dL/dw(b, r) = Σ_z dL/dt_z · #{nodes of z with rule r whose window has gram b}.
fn sparse_closed_form(model: &SparseModel, ex: &TrainingExample, cfg: &TrainerConfig) -> HashMap<u64, f64> {
    let totals: Vec<f64> = ex
        .candidates
        .iter()
        .map(|c| tablequery_core::scoring::tree_logscore(model, &c.derivation, &ex.utterances[c.utterance]).total)
        .collect();
    let pos: Vec<usize> = (0..totals.len()).filter(|&i| ex.candidates[i].consistent).collect();
    let neg: Vec<usize> = (0..totals.len()).filter(|&i| !ex.candidates[i].consistent).collect();
    assert!(neg.len() <= cfg.max_negatives.unwrap_or(usize::MAX));
    let tp: Vec<f64> = pos.iter().map(|&i| totals[i]).collect();
    let tn: Vec<f64> = neg.iter().map(|&i| totals[i]).collect();
    let lg = margin_loss(&tp, &tn, cfg.margin, cfg.per_pair_hinge);
    let rule_dim = RulePred::feature_count(model.config.rule_level) as u64;
    let mut out: HashMap<u64, f64> = HashMap::new();
    for (&i, &d) in pos.iter().chain(&neg).zip(lg.d_pos.iter().chain(&lg.d_neg)) {
        let c = &ex.candidates[i];
        let u = &ex.utterances[c.utterance];
        for n in c.derivation.rule_nodes() {
            let r = n.rule.unwrap();
            let window = surface(u, n.span, model.config.mode);
            for b in model.features(&window.tokens) {
                *out.entry(b as u64 * rule_dim + r.feature(model.config.rule_level) as u64).or_insert(0.0) += d;
            }
        }
    }
    out.retain(|_, g| *g != 0.0);
    out
}

/// Compare the accumulated gradient with the closed form, panicking on a
/// mismatch. Returns the number of keys compared.
pub fn sparse(seed: u64, instances: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for i in 0..instances {
        let ex = toy_example(&mut rng);
        let cfg = TrainerConfig { per_pair_hinge: i % 2 == 1, ..TrainerConfig::default() };
        let config = ScorerConfig { mode: SurfaceMode::ALL[i % 4], rule_level: i % 3 == 0 };
        let mut model = SparseModel::new(config);
        // Random weights on the keys the example touches.
        let compiled = Compiled::build(&model, &ex);
        let mut touched = model.zero_grad();
        let flat = TrainerConfig { margin: 1e6, ..cfg.clone() };
        compiled.accumulate(&model, &flat, &mut touched);
        let mut keys: Vec<u64> = touched.keys().copied().collect();
        keys.sort_unstable();
        for k in keys {
            model.weights.insert(k, rng.gen_range(-1.0..1.0));
        }
        let mut grad = model.zero_grad();
        compiled.accumulate(&model, &cfg, &mut grad).unwrap();
        grad.retain(|_, g| *g != 0.0);
        let want = sparse_closed_form(&model, &ex, &cfg);
        // Over the union of keys: a sum that cancels may come out as an exact
        // zero on one side and as roundoff on the other.
        let mut all: Vec<u64> = grad.keys().chain(want.keys()).copied().collect();
        all.sort_unstable();
        all.dedup();
        compared += all.len();
        for k in &all {
            let (got, g) = (grad.get(k).copied().unwrap_or(0.0), want.get(k).copied().unwrap_or(0.0));
            assert!((got - g).abs() <= 1e-9 * g.abs().max(1.0), "instance {i} key {k}: {got} vs {g}");
        }
        // And a finite-difference spot check on a few keys.
        let mut keys: Vec<u64> = want.keys().copied().collect();
        keys.sort_unstable();
        keys.truncate(5);
        for k in keys {
            let h = 1e-4;
            let mut m = model.clone();
            *m.weights.entry(k).or_insert(0.0) += h;
            let up = compiled.loss(&m, &cfg).unwrap();
            *m.weights.get_mut(&k).unwrap() -= 2.0 * h;
            let down = compiled.loss(&m, &cfg).unwrap();
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - want[&k]).abs() <= 1e-5 * want[&k].abs().max(1e-3), "{numeric} vs {}", want[&k]);
        }
    }
    compared
}
