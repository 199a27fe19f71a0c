//! Log-linear model over hashed n-grams of the surface window:
//! `score = f_s · W f_r`.

use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use super::{NodeScorer, ScorerConfig, SpanModel};
use crate::chart::SurfaceStructure;
use crate::optim::AdamConfig;
use crate::rules::RulePred;
use crate::token::{AbstractedUtterance, Span};

pub const DEFAULT_BUCKETS: u32 = 1 << 20;
pub const DEFAULT_ORDER: u32 = 3;

const BOS: &str = "<s>";
const EOS: &str = "</s>";

#[derive(Clone, Debug, PartialEq)]
pub struct SparseModel {
    pub config: ScorerConfig,
    pub buckets: u32,
    /// Longest n-gram extracted (all orders from 1 up are used).
    pub order: u32,
    /// Non-zero weights keyed by `bucket * rule_dim + rule feature`.
    pub weights: HashMap<u64, f64>,
}

/// Lazily updated Adam moments for the touched weights.
#[derive(Clone, Debug, Default)]
pub struct SparseAdam {
    t: u64,
    moments: HashMap<u64, (f64, f64)>,
}

pub type SparseGrad = HashMap<u64, f64>;

/// FNV-1a of the n-gram's tokens joined by a unit separator.
pub fn hash_ngram(tokens: &[&str], buckets: u32) -> u32 {
    let mut h = FnvHasher::default();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            h.write_u8(0x1f);
        }
        h.write(t.as_bytes());
    }
    (h.finish() % buckets as u64) as u32
}

impl SparseModel {
    pub fn new(config: ScorerConfig) -> SparseModel {
        SparseModel { config, buckets: DEFAULT_BUCKETS, order: DEFAULT_ORDER, weights: HashMap::new() }
    }

    pub fn rule_dim(&self) -> u64 {
        RulePred::feature_count(self.config.rule_level) as u64
    }

    fn key(&self, bucket: u32, r: RulePred) -> u64 {
        bucket as u64 * self.rule_dim() + r.feature(self.config.rule_level) as u64
    }

    /// Sorted, deduplicated buckets of every 1..=order gram over the padded window.
    pub fn features(&self, tokens: &[String]) -> Vec<u32> {
        let padded: Vec<&str> = std::iter::once(BOS)
            .chain(tokens.iter().map(String::as_str))
            .chain(std::iter::once(EOS))
            .collect();
        let mut out = Vec::new();
        for n in 1..=self.order as usize {
            for w in padded.windows(n) {
                out.push(hash_ngram(w, self.buckets));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn nonzero(&self) -> usize {
        self.weights.len()
    }
}

impl NodeScorer for SparseModel {
    fn score_span(&self, u: &AbstractedUtterance, span: Span, rules: &[RulePred]) -> Vec<f64> {
        let x = self.input_for(u, span);
        self.forward(&x, rules)
    }
}

impl SpanModel for SparseModel {
    type Input = Vec<u32>;
    type Grad = SparseGrad;
    type Opt = SparseAdam;

    fn config(&self) -> ScorerConfig {
        self.config
    }

    fn encode(&self, s: &SurfaceStructure) -> Vec<u32> {
        self.features(&s.tokens)
    }

    fn forward(&self, x: &Vec<u32>, rules: &[RulePred]) -> Vec<f64> {
        rules
            .iter()
            .map(|&r| x.iter().map(|&b| self.weights.get(&self.key(b, r)).copied().unwrap_or(0.0)).sum())
            .collect()
    }

    fn backward(&self, x: &Vec<u32>, rules: &[RulePred], dscores: &[f64], grad: &mut SparseGrad) {
        for (&r, &d) in rules.iter().zip(dscores) {
            if d == 0.0 {
                continue;
            }
            for &b in x {
                *grad.entry(self.key(b, r)).or_insert(0.0) += d;
            }
        }
    }

    fn zero_grad(&self) -> SparseGrad {
        HashMap::new()
    }

    /// Adam restricted to weights with a gradient entry this step; bias
    /// correction uses the global step count.
    fn apply(&mut self, grad: &SparseGrad, opt: &mut SparseAdam, cfg: &AdamConfig) {
        opt.t += 1;
        let mut keys: Vec<&u64> = grad.keys().collect();
        keys.sort_unstable();
        for k in keys {
            let g = grad[k];
            let (m, v) = opt.moments.entry(*k).or_insert((0.0, 0.0));
            let mut w = self.weights.get(k).copied().unwrap_or(0.0);
            cfg.update(&mut w, g, m, v, opt.t);
            if w == 0.0 {
                self.weights.remove(k);
            } else {
                self.weights.insert(*k, w);
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for w in self.weights.values_mut() {
            *w *= factor;
        }
    }
}
