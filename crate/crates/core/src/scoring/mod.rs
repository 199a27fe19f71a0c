//! Node-local scoring: the shared scorer interface, the sparse n-gram model
//! and the neural encoder-attention model.

pub mod io;
pub mod neural;
pub mod sparse;

pub use neural::{NeuralDims, NeuralModel};
pub use sparse::SparseModel;

use crate::chart::{surface, SurfaceMode, SurfaceStructure};
use crate::derivation::Derivation;
use crate::optim::AdamConfig;
use crate::rules::RulePred;
use crate::token::{AbstractedUtterance, Span};

/// Scores rule applications on a span. Node scores may depend only on the
/// rule and the span, which keeps max-score parsing exact.
pub trait NodeScorer: Send + Sync {
    /// One score per entry of `rules`, all applied on `span` of `u`.
    fn score_span(&self, u: &AbstractedUtterance, span: Span, rules: &[RulePred]) -> Vec<f64>;
}

/// Scores every node 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroScorer;

impl NodeScorer for ZeroScorer {
    fn score_span(&self, _u: &AbstractedUtterance, _span: Span, rules: &[RulePred]) -> Vec<f64> {
        vec![0.0; rules.len()]
    }
}

/// Adapter turning a closure into a scorer.
pub struct FnScorer<F>(pub F);

impl<F> NodeScorer for FnScorer<F>
where
    F: Fn(&AbstractedUtterance, Span, RulePred) -> f64 + Send + Sync,
{
    fn score_span(&self, u: &AbstractedUtterance, span: Span, rules: &[RulePred]) -> Vec<f64> {
        rules.iter().map(|&r| (self.0)(u, span, r)).collect()
    }
}

/// A trainable node scorer. Scores depend on the surface window of the
/// span, which the model encodes once and reuses for every rule.
pub trait SpanModel: NodeScorer {
    /// Encoded surface window.
    type Input: Clone + Send + Sync;
    /// Gradient accumulator.
    type Grad: Send;
    /// Optimizer state.
    type Opt: Default + Send;

    fn config(&self) -> ScorerConfig;
    fn encode(&self, s: &SurfaceStructure) -> Self::Input;
    fn forward(&self, x: &Self::Input, rules: &[RulePred]) -> Vec<f64>;
    /// Accumulate `dscores[i] * d score(x, rules[i]) / d params` into `grad`.
    fn backward(&self, x: &Self::Input, rules: &[RulePred], dscores: &[f64], grad: &mut Self::Grad);
    fn zero_grad(&self) -> Self::Grad;
    fn apply(&mut self, grad: &Self::Grad, opt: &mut Self::Opt, cfg: &AdamConfig);
    /// Scale every parameter, used by tests of score linearity.
    fn scale(&mut self, factor: f64);

    fn input_for(&self, u: &AbstractedUtterance, span: Span) -> Self::Input {
        self.encode(&surface(u, span, self.config().mode))
    }
}

/// Options shared by both models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScorerConfig {
    pub mode: SurfaceMode,
    /// One rule feature per rule rather than per (rule, predicate) pair.
    pub rule_level: bool,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig { mode: SurfaceMode::Bidirectional, rule_level: false }
    }
}

/// Either model, as loaded from a model file.
#[derive(Clone, Debug)]
pub enum Model {
    Sparse(SparseModel),
    Neural(NeuralModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Sparse(_) => "sparse",
            Model::Neural(_) => "neural",
        }
    }

    pub fn config(&self) -> ScorerConfig {
        match self {
            Model::Sparse(m) => m.config(),
            Model::Neural(m) => m.config(),
        }
    }
}

impl NodeScorer for Model {
    fn score_span(&self, u: &AbstractedUtterance, span: Span, rules: &[RulePred]) -> Vec<f64> {
        match self {
            Model::Sparse(m) => m.score_span(u, span, rules),
            Model::Neural(m) => m.score_span(u, span, rules),
        }
    }
}

/// Per-node scores of a derivation and their sum; `p(Z|x) ∝ exp(total)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeScore {
    pub per_node: Vec<(Span, RulePred, f64)>,
    pub total: f64,
}

/// Score every rule node of `d`.
pub fn tree_logscore(scorer: &dyn NodeScorer, d: &Derivation, u: &AbstractedUtterance) -> TreeScore {
    let per_node: Vec<(Span, RulePred, f64)> = d
        .rule_nodes()
        .into_iter()
        .map(|n| {
            let r = n.rule.expect("rule node");
            (n.span, r, scorer.score_span(u, n.span, &[r])[0])
        })
        .collect();
    let total = per_node.iter().map(|x| x.2).sum();
    TreeScore { per_node, total }
}

/// Softmax of tree totals.
pub fn normalize(totals: &[f64]) -> Vec<f64> {
    let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if totals.is_empty() || !max.is_finite() {
        return vec![1.0 / totals.len().max(1) as f64; totals.len()];
    }
    let exps: Vec<f64> = totals.iter().map(|t| (t - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
