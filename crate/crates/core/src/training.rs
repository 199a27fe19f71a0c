//! Candidate labeling, the pairwise margin loss and the training loop.
//!
//! For one question with retained candidates `z`, tree totals `t_z` and
//! `p = softmax(t)`, the loss is
//!
//! ```text
//! L = max(0, α − Σ_j Σ_k (p(z⁺_j) − p(z⁻_k)))  =  max(0, α − (K·P⁺ − M·P⁻))
//! ```
//!
//! with `M` positives, `K` negatives and `P±` their probability mass. The
//! per-pair variant sums `max(0, α − (p⁺_j − p⁻_k))` over all pairs.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::abstraction::TableIndex;
use crate::chart::{parse_all, Limits};
use crate::derivation::Derivation;
use crate::error::{Error, Result};
use crate::interpret::interpret;
use crate::optim::AdamConfig;
use crate::pipeline::Resources;
use crate::rules::RulePred;
use crate::scoring::{normalize, SpanModel};
use crate::sql::{canonicalize, CanonicalSql, SqlQuery};
use crate::token::{AbstractedUtterance, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Ok,
    /// Candidates exist but none interprets to the gold query.
    Unreachable,
    /// No utterance produced any derivation.
    Unparseable,
}

#[derive(Clone, Debug)]
pub struct LabeledCandidate {
    pub utterance: usize,
    pub derivation: Derivation,
    pub sql: Option<SqlQuery>,
    pub consistent: bool,
}

#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub question: String,
    pub gold: SqlQuery,
    pub utterances: Vec<AbstractedUtterance>,
    pub candidates: Vec<LabeledCandidate>,
    pub status: Status,
    /// A parse of some utterance hit the tree limit.
    pub truncated: bool,
}

impl TrainingExample {
    pub fn positives(&self) -> usize {
        self.candidates.iter().filter(|c| c.consistent).count()
    }

    pub fn negatives(&self) -> usize {
        self.candidates.len() - self.positives()
    }

    /// Valid trees per utterance that had any.
    pub fn trees_per_utterance(&self) -> Option<f64> {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for c in &self.candidates {
            *counts.entry(c.utterance).or_default() += 1;
        }
        if counts.is_empty() {
            None
        } else {
            Some(self.candidates.len() as f64 / counts.len() as f64)
        }
    }
}

/// Whether a derivation interprets to the canonical gold query.
pub fn is_consistent(d: &Derivation, index: &TableIndex, gold: &CanonicalSql) -> (Option<SqlQuery>, bool) {
    match interpret(d, &index.table) {
        Ok(q) => {
            let ok = canonicalize(&q).map(|c| &c == gold).unwrap_or(false);
            (Some(q), ok)
        }
        Err(_) => (None, false),
    }
}

/// Enumerate and label every candidate derivation of a question.
pub fn label_candidates(question: &str, index: &TableIndex, gold: &SqlQuery, res: &Resources) -> Result<TrainingExample> {
    gold.validate(&index.table)?;
    let canon = canonicalize(gold)?;
    let utts = res.abstract_question(question, index);
    let mut candidates = Vec::new();
    let mut truncated = false;
    for (ui, c) in utts.iter().enumerate() {
        let ds = match parse_all(&c.utterance, &res.limits) {
            Ok(ds) => ds,
            Err(Error::NothingToParse | Error::NoValidTree) => continue,
            Err(e) => return Err(e),
        };
        truncated |= ds.len() >= res.limits.max_trees;
        for d in ds {
            let (sql, consistent) = is_consistent(&d, index, &canon);
            candidates.push(LabeledCandidate { utterance: ui, derivation: d, sql, consistent });
        }
    }
    let status = if candidates.is_empty() {
        Status::Unparseable
    } else if candidates.iter().any(|c| c.consistent) {
        Status::Ok
    } else {
        Status::Unreachable
    };
    Ok(TrainingExample {
        question: question.to_string(),
        gold: gold.clone(),
        utterances: utts.into_iter().map(|c| c.utterance).collect(),
        candidates,
        status,
        truncated,
    })
}

/// Label many questions on all cores; output order follows input order.
pub fn label_all(
    items: &[(String, &TableIndex, SqlQuery)],
    res: &Resources,
) -> Vec<Result<TrainingExample>> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(16);
    let chunk = items.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter().map(|(q, idx, gold)| label_candidates(q, idx, gold, res)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("labeling thread panicked")).collect()
    })
}

/// Loss value and its gradient with respect to each tree total.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// The margin loss of one question over the retained candidates.
pub fn margin_loss(pos: &[f64], neg: &[f64], alpha: f64, per_pair: bool) -> LossGrad {
    let m = pos.len();
    let k = neg.len();
    let mut totals = pos.to_vec();
    totals.extend_from_slice(neg);
    let p = normalize(&totals);
    let (pp, pn) = p.split_at(m);
    // dL/dp for every candidate, then through the softmax.
    let mut dp = vec![0.0; m + k];
    let loss = if per_pair {
        let mut l = 0.0;
        for j in 0..m {
            for kk in 0..k {
                let v = alpha - (pp[j] - pn[kk]);
                if v > 0.0 {
                    l += v;
                    dp[j] -= 1.0;
                    dp[m + kk] += 1.0;
                }
            }
        }
        l
    } else {
        let inner = k as f64 * pp.iter().sum::<f64>() - m as f64 * pn.iter().sum::<f64>();
        let v = alpha - inner;
        if v > 0.0 {
            for d in dp.iter_mut().take(m) {
                *d = -(k as f64);
            }
            for d in dp.iter_mut().skip(m) {
                *d = m as f64;
            }
            v
        } else {
            0.0
        }
    };
    let mean: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
    let dt: Vec<f64> = p.iter().zip(&dp).map(|(pz, g)| pz * (g - mean)).collect();
    LossGrad { loss, d_pos: dt[..m].to_vec(), d_neg: dt[m..].to_vec() }
}

/// A labeled example reduced to what the optimizer needs: the distinct
/// (span, rule) nodes, encoded once, and each candidate as a node list.
#[derive(Clone, Debug)]
pub struct Compiled<I> {
    spans: Vec<(I, Vec<RulePred>)>,
    /// Node id → (span id, position in that span's rule list).
    nodes: Vec<(usize, usize)>,
    trees: Vec<Vec<usize>>,
    consistent: Vec<bool>,
}

impl<I: Clone> Compiled<I> {
    pub fn build<M: SpanModel<Input = I>>(model: &M, ex: &TrainingExample) -> Compiled<I> {
        let mut span_ids: HashMap<(usize, Span), usize> = HashMap::new();
        let mut node_ids: HashMap<(usize, RulePred), usize> = HashMap::new();
        let mut spans: Vec<(I, Vec<RulePred>)> = Vec::new();
        let mut nodes = Vec::new();
        let mut trees = Vec::with_capacity(ex.candidates.len());
        for c in &ex.candidates {
            let u = &ex.utterances[c.utterance];
            let mut tree = Vec::new();
            for n in c.derivation.rule_nodes() {
                let r = n.rule.expect("rule node");
                let sid = *span_ids.entry((c.utterance, n.span)).or_insert_with(|| {
                    spans.push((model.input_for(u, n.span), Vec::new()));
                    spans.len() - 1
                });
                let nid = *node_ids.entry((sid, r)).or_insert_with(|| {
                    spans[sid].1.push(r);
                    nodes.push((sid, spans[sid].1.len() - 1));
                    nodes.len() - 1
                });
                tree.push(nid);
            }
            trees.push(tree);
        }
        let consistent = ex.candidates.iter().map(|c| c.consistent).collect();
        Compiled { spans, nodes, trees, consistent }
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.consistent.iter().filter(|&&c| c).count()
    }

    /// Tree totals under the model.
    pub fn totals<M: SpanModel<Input = I>>(&self, model: &M) -> Vec<f64> {
        let span_scores: Vec<Vec<f64>> = self.spans.iter().map(|(x, rules)| model.forward(x, rules)).collect();
        self.trees
            .iter()
            .map(|t| t.iter().map(|&n| span_scores[self.nodes[n].0][self.nodes[n].1]).sum())
            .collect()
    }

    /// Index of the highest scoring candidate, first on ties.
    pub fn argmax<M: SpanModel<Input = I>>(&self, model: &M) -> Option<usize> {
        let totals = self.totals(model);
        let mut best: Option<usize> = None;
        for (i, &t) in totals.iter().enumerate() {
            if best.map_or(true, |b| t > totals[b]) {
                best = Some(i);
            }
        }
        best
    }

    pub fn predicts_gold<M: SpanModel<Input = I>>(&self, model: &M) -> bool {
        self.argmax(model).is_some_and(|i| self.consistent[i])
    }

    /// Retained negatives: the `cap` highest scoring ones (ties by index).
    fn retained(&self, totals: &[f64], cap: Option<usize>) -> (Vec<usize>, Vec<usize>) {
        let pos: Vec<usize> = (0..self.len()).filter(|&i| self.consistent[i]).collect();
        let mut neg: Vec<usize> = (0..self.len()).filter(|&i| !self.consistent[i]).collect();
        if let Some(cap) = cap {
            if neg.len() > cap {
                neg.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));
                neg.truncate(cap);
                neg.sort_unstable();
            }
        }
        (pos, neg)
    }

    /// Loss of this example; `None` when it has no positive or no negative.
    pub fn loss<M: SpanModel<Input = I>>(&self, model: &M, cfg: &TrainerConfig) -> Option<f64> {
        let totals = self.totals(model);
        let (pos, neg) = self.retained(&totals, cfg.max_negatives);
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let tp: Vec<f64> = pos.iter().map(|&i| totals[i]).collect();
        let tn: Vec<f64> = neg.iter().map(|&i| totals[i]).collect();
        Some(margin_loss(&tp, &tn, cfg.margin, cfg.per_pair_hinge).loss)
    }

    /// Accumulate the loss gradient into `grad`; returns the loss.
    pub fn accumulate<M: SpanModel<Input = I>>(&self, model: &M, cfg: &TrainerConfig, grad: &mut M::Grad) -> Option<f64> {
        let span_scores: Vec<Vec<f64>> = self.spans.iter().map(|(x, rules)| model.forward(x, rules)).collect();
        let totals: Vec<f64> = self
            .trees
            .iter()
            .map(|t| t.iter().map(|&n| span_scores[self.nodes[n].0][self.nodes[n].1]).sum())
            .collect();
        let (pos, neg) = self.retained(&totals, cfg.max_negatives);
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let tp: Vec<f64> = pos.iter().map(|&i| totals[i]).collect();
        let tn: Vec<f64> = neg.iter().map(|&i| totals[i]).collect();
        let lg = margin_loss(&tp, &tn, cfg.margin, cfg.per_pair_hinge);
        if lg.loss == 0.0 {
            return Some(0.0);
        }
        let mut dnode = vec![0.0; self.nodes.len()];
        for (&i, &d) in pos.iter().chain(&neg).zip(lg.d_pos.iter().chain(&lg.d_neg)) {
            for &n in &self.trees[i] {
                dnode[n] += d;
            }
        }
        let mut dspan: Vec<Vec<f64>> = self.spans.iter().map(|(_, r)| vec![0.0; r.len()]).collect();
        for (n, &(s, k)) in self.nodes.iter().enumerate() {
            dspan[s][k] += dnode[n];
        }
        for ((x, rules), d) in self.spans.iter().zip(&dspan) {
            model.backward(x, rules, d, grad);
        }
        Some(lg.loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub margin: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hard-negative cap per example; `None` keeps all.
    pub max_negatives: Option<usize>,
    pub per_pair_hinge: bool,
    pub limits: Limits,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            margin: 0.5,
            adam: AdamConfig::default(),
            epochs: 15,
            batch_size: 16,
            seed: 0,
            max_negatives: Some(50),
            per_pair_hinge: false,
            limits: Limits::default(),
        }
    }
}

impl TrainerConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Training("margin must be positive".into()));
        }
        if !(self.adam.lr >= 0.0) {
            return Err(Error::Training("learning rate must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Training("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean loss over the examples that contributed.
    pub loss: f64,
    pub train_acc_qm: f64,
    pub dev_acc_qm: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub examples: usize,
    pub used: usize,
    pub unreachable: usize,
    pub unparseable: usize,
    pub avg_trees_per_utterance: f64,
    pub epochs: Vec<EpochReport>,
    pub best_epoch: Option<usize>,
}

/// Summary counts of labeled examples.
pub fn label_stats(examples: &[TrainingExample]) -> TrainReport {
    let trees: Vec<f64> = examples.iter().filter_map(TrainingExample::trees_per_utterance).collect();
    TrainReport {
        examples: examples.len(),
        used: examples.iter().filter(|e| e.status == Status::Ok && e.negatives() > 0).count(),
        unreachable: examples.iter().filter(|e| e.status == Status::Unreachable).count(),
        unparseable: examples.iter().filter(|e| e.status == Status::Unparseable).count(),
        avg_trees_per_utterance: if trees.is_empty() { 0.0 } else { trees.iter().sum::<f64>() / trees.len() as f64 },
        epochs: Vec::new(),
        best_epoch: None,
    }
}

/// Fraction of compiled examples whose top candidate is consistent.
pub fn accuracy<M: SpanModel>(model: &M, set: &[Compiled<M::Input>]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    set.iter().filter(|c| c.predicts_gold(model)).count() as f64 / set.len() as f64
}

/// Train on labeled examples. Returns the checkpoint with the best dev
/// accuracy (the last epoch's parameters when `dev` is empty).
pub fn train<M>(
    mut model: M,
    train: &[TrainingExample],
    dev: &[TrainingExample],
    cfg: &TrainerConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<(M, TrainReport)>
where
    M: SpanModel + Clone,
{
    cfg.check()?;
    let mut report = label_stats(train);
    let usable: Vec<Compiled<M::Input>> = train
        .iter()
        .filter(|e| e.status == Status::Ok && e.negatives() > 0)
        .map(|e| Compiled::build(&model, e))
        .collect();
    if train.iter().all(|e| e.status != Status::Ok) {
        return Err(Error::Training(format!(
            "no trainable example: {} unreachable, {} unparseable of {}",
            report.unreachable, report.unparseable, report.examples
        )));
    }
    let train_eval: Vec<Compiled<M::Input>> = train.iter().map(|e| Compiled::build(&model, e)).collect();
    let dev_eval: Vec<Compiled<M::Input>> = dev.iter().map(|e| Compiled::build(&model, e)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = M::Opt::default();
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut best: Option<(f64, M)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut counted = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.zero_grad();
            for &i in batch {
                if let Some(l) = usable[i].accumulate(&model, cfg, &mut grad) {
                    total += l;
                    counted += 1;
                }
            }
            model.apply(&grad, &mut opt, &cfg.adam);
        }
        let dev_acc = (!dev_eval.is_empty()).then(|| accuracy(&model, &dev_eval));
        let er = EpochReport {
            epoch,
            loss: if counted == 0 { 0.0 } else { total / counted as f64 },
            train_acc_qm: accuracy(&model, &train_eval),
            dev_acc_qm: dev_acc,
        };
        on_epoch(&er);
        if let Some(a) = dev_acc {
            if best.as_ref().map_or(true, |(b, _)| a > *b) {
                best = Some((a, model.clone()));
                report.best_epoch = Some(epoch);
            }
        }
        report.epochs.push(er);
    }
    let model = match best {
        Some((_, m)) => m,
        None => {
            report.best_epoch = (cfg.epochs > 0).then_some(cfg.epochs);
            model
        }
    };
    Ok((model, report))
}
