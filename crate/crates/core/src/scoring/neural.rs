//! Encoder-attention model.
//!
//! The surface window is embedded and run through a bidirectional LSTM
//! (zero initial state). For rule embedding `e_r`:
//!
//! ```text
//! u_i = θᵀ tanh(W1 h_i + W2 e_r)
//! a   = softmax(u)
//! e_s = Σ a_i h_i
//! φ   = e_r · e_s
//! ```
//!
//! `h_i` concatenates both directions, so `e_r` has twice the per-direction
//! hidden size. All parameters live in one flat vector.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NodeScorer, ScorerConfig, SpanModel};
use crate::chart::SurfaceStructure;
use crate::optim::{AdamConfig, DenseAdam};
use crate::rules::RulePred;
use crate::token::{all_symbol_keys, AbstractedUtterance, Span, EMPTY, UNK};
use crate::vocab::Vocabulary;

pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeuralDims {
    pub emb: usize,
    /// Per direction; the rule embedding has size `2 * hidden`.
    pub hidden: usize,
    pub attn: usize,
}

impl Default for NeuralDims {
    fn default() -> Self {
        NeuralDims { emb: 100, hidden: 25, attn: 50 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layout {
    emb: usize,
    /// Per direction: wx, wh, b.
    lstm: [(usize, usize, usize); 2],
    rule: usize,
    w1: usize,
    w2: usize,
    theta: usize,
    len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralModel {
    pub config: ScorerConfig,
    pub dims: NeuralDims,
    pub tokens: Vec<String>,
    index: HashMap<String, usize>,
    layout: Layout,
    pub params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += M x` for row-major `M` of shape `rows × x.len()`.
fn matvec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Mᵀ y`.
fn matvec_t_add(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `G += y xᵀ`.
fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(x) {
            *o += yr * b;
        }
    }
}

/// Forward state of one LSTM direction, in processing order.
#[derive(Clone, Debug, Default)]
struct DirTrace {
    gates: Vec<[Vec<f64>; 4]>,
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

/// Encoder output of one window.
#[derive(Clone, Debug)]
pub struct Encoding {
    ids: Vec<usize>,
    dirs: [DirTrace; 2],
    /// `h_i` per token, both directions concatenated.
    pub states: Vec<Vec<f64>>,
}

/// Token vocabulary for the embedding table: reserved keys, every symbol
/// key, then the common-word lemmas.
pub fn default_tokens(vocab: &Vocabulary) -> Vec<String> {
    let mut out = vec![UNK.to_string(), EMPTY.to_string()];
    out.extend(all_symbol_keys());
    out.extend(vocab.iter().map(|(w, _)| w.to_string()));
    out
}

impl NeuralModel {
    fn layout(dims: NeuralDims, vocab: usize, rules: usize) -> Layout {
        let NeuralDims { emb, hidden: h, attn } = dims;
        let d = 2 * h;
        let mut at = vocab * emb;
        let mut lstm = [(0, 0, 0); 2];
        for dir in &mut lstm {
            let wx = at;
            let wh = wx + 4 * h * emb;
            let b = wh + 4 * h * h;
            at = b + 4 * h;
            *dir = (wx, wh, b);
        }
        let rule = at;
        let w1 = rule + rules * d;
        let w2 = w1 + attn * d;
        let theta = w2 + attn * d;
        Layout { emb: 0, lstm, rule, w1, w2, theta, len: theta + attn }
    }

    /// Zero-initialized model.
    pub fn zeros(config: ScorerConfig, dims: NeuralDims, tokens: Vec<String>) -> NeuralModel {
        let rules = RulePred::feature_count(config.rule_level);
        let layout = Self::layout(dims, tokens.len(), rules);
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        NeuralModel { config, dims, tokens, index, layout, params: vec![0.0; layout.len] }
    }

    /// Uniform initialization in `[-0.08, 0.08]` from a seed.
    pub fn new(config: ScorerConfig, dims: NeuralDims, tokens: Vec<String>, seed: u64) -> NeuralModel {
        let mut m = Self::zeros(config, dims, tokens);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut m.params {
            *p = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    fn token_id(&self, key: &str) -> usize {
        self.index.get(key).or_else(|| self.index.get(UNK)).copied().unwrap_or(0)
    }

    fn embedding(&self, id: usize) -> &[f64] {
        let e = self.dims.emb;
        &self.params[self.layout.emb + id * e..self.layout.emb + (id + 1) * e]
    }

    fn rule_embedding(&self, r: RulePred) -> &[f64] {
        let d = 2 * self.dims.hidden;
        let f = r.feature(self.config.rule_level);
        &self.params[self.layout.rule + f * d..self.layout.rule + (f + 1) * d]
    }

    /// Run both LSTM directions over the window.
    pub fn encode_ids(&self, ids: &[usize]) -> Encoding {
        let h = self.dims.hidden;
        let e = self.dims.emb;
        let n = ids.len();
        let mut dirs: [DirTrace; 2] = Default::default();
        for (dir, trace) in dirs.iter_mut().enumerate() {
            let (wx, wh, b) = self.layout.lstm[dir];
            let wx = &self.params[wx..wx + 4 * h * e];
            let wh = &self.params[wh..wh + 4 * h * h];
            let b = &self.params[b..b + 4 * h];
            let mut hp = vec![0.0; h];
            let mut cp = vec![0.0; h];
            for step in 0..n {
                let t = if dir == 0 { step } else { n - 1 - step };
                let mut z = b.to_vec();
                matvec_add(wx, self.embedding(ids[t]), &mut z);
                matvec_add(wh, &hp, &mut z);
                let i: Vec<f64> = z[0..h].iter().map(|&v| sigmoid(v)).collect();
                let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
                let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
                let o: Vec<f64> = z[3 * h..4 * h].iter().map(|&v| sigmoid(v)).collect();
                let c: Vec<f64> = (0..h).map(|k| f[k] * cp[k] + i[k] * g[k]).collect();
                let hn: Vec<f64> = (0..h).map(|k| o[k] * c[k].tanh()).collect();
                trace.gates.push([i, f, g, o]);
                trace.c.push(c.clone());
                trace.h.push(hn.clone());
                hp = hn;
                cp = c;
            }
        }
        let states = (0..n)
            .map(|t| {
                let mut s = dirs[0].h[t].clone();
                s.extend_from_slice(&dirs[1].h[n - 1 - t]);
                s
            })
            .collect();
        Encoding { ids: ids.to_vec(), dirs, states }
    }

    /// Attention weights, context vector and score for one rule.
    fn attend(&self, enc: &Encoding, r: RulePred) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64) {
        let d = 2 * self.dims.hidden;
        let a = self.dims.attn;
        let er = self.rule_embedding(r);
        let w1 = &self.params[self.layout.w1..self.layout.w1 + a * d];
        let w2 = &self.params[self.layout.w2..self.layout.w2 + a * d];
        let theta = &self.params[self.layout.theta..self.layout.theta + a];
        let mut q = vec![0.0; a];
        matvec_add(w2, er, &mut q);
        let mut acts = Vec::with_capacity(enc.states.len());
        let mut u = Vec::with_capacity(enc.states.len());
        for hs in &enc.states {
            let mut pre = q.clone();
            matvec_add(w1, hs, &mut pre);
            let act: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
            u.push(theta.iter().zip(&act).map(|(x, y)| x * y).sum::<f64>());
            acts.push(act);
        }
        let alpha = super::normalize(&u);
        let mut es = vec![0.0; d];
        for (hs, &w) in enc.states.iter().zip(&alpha) {
            for (o, v) in es.iter_mut().zip(hs) {
                *o += w * v;
            }
        }
        let score = er.iter().zip(&es).map(|(x, y)| x * y).sum();
        (acts, alpha, es, score)
    }

    /// Attention distribution of rule `r` over the window's tokens.
    pub fn attention(&self, enc: &Encoding, r: RulePred) -> Vec<f64> {
        self.attend(enc, r).1
    }

    fn backward_one(&self, enc: &Encoding, r: RulePred, g: f64, grad: &mut [f64], dstates: &mut [Vec<f64>]) {
        let d = 2 * self.dims.hidden;
        let a = self.dims.attn;
        let (acts, alpha, es, _) = self.attend(enc, r);
        let er = self.rule_embedding(r).to_vec();
        let w1 = &self.params[self.layout.w1..self.layout.w1 + a * d];
        let w2 = &self.params[self.layout.w2..self.layout.w2 + a * d];
        let theta = &self.params[self.layout.theta..self.layout.theta + a];

        let mut d_er: Vec<f64> = es.iter().map(|v| g * v).collect();
        let d_es: Vec<f64> = er.iter().map(|v| g * v).collect();
        let d_alpha: Vec<f64> =
            enc.states.iter().map(|hs| hs.iter().zip(&d_es).map(|(x, y)| x * y).sum()).collect();
        let mean: f64 = alpha.iter().zip(&d_alpha).map(|(x, y)| x * y).sum();
        let mut dq = vec![0.0; a];
        for t in 0..enc.states.len() {
            for (o, v) in dstates[t].iter_mut().zip(&d_es) {
                *o += alpha[t] * v;
            }
            let du = alpha[t] * (d_alpha[t] - mean);
            if du == 0.0 {
                continue;
            }
            let dpre: Vec<f64> = (0..a).map(|k| du * theta[k] * (1.0 - acts[t][k] * acts[t][k])).collect();
            let gt = &mut grad[self.layout.theta..self.layout.theta + a];
            for (o, v) in gt.iter_mut().zip(&acts[t]) {
                *o += du * v;
            }
            outer_add(&mut grad[self.layout.w1..self.layout.w1 + a * d], &dpre, &enc.states[t]);
            matvec_t_add(w1, &dpre, &mut dstates[t]);
            for (o, v) in dq.iter_mut().zip(&dpre) {
                *o += v;
            }
        }
        outer_add(&mut grad[self.layout.w2..self.layout.w2 + a * d], &dq, &er);
        matvec_t_add(w2, &dq, &mut d_er);
        let f = r.feature(self.config.rule_level);
        for (o, v) in grad[self.layout.rule + f * d..self.layout.rule + (f + 1) * d].iter_mut().zip(&d_er) {
            *o += v;
        }
    }

    /// Backpropagate through both LSTM directions and the embeddings.
    fn backward_encoder(&self, enc: &Encoding, dstates: &[Vec<f64>], grad: &mut [f64]) {
        let h = self.dims.hidden;
        let e = self.dims.emb;
        let n = enc.ids.len();
        for dir in 0..2 {
            let (wx_at, wh_at, b_at) = self.layout.lstm[dir];
            let trace = &enc.dirs[dir];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for step in (0..n).rev() {
                let t = if dir == 0 { step } else { n - 1 - step };
                let [i, f, gg, o] = &trace.gates[step];
                let c = &trace.c[step];
                let zero = vec![0.0; h];
                let cp = if step > 0 { &trace.c[step - 1] } else { &zero };
                let hp = if step > 0 { &trace.h[step - 1] } else { &zero };
                let dh: Vec<f64> = (0..h).map(|k| dstates[t][dir * h + k] + dh_next[k]).collect();
                let mut dz = vec![0.0; 4 * h];
                for k in 0..h {
                    let tc = c[k].tanh();
                    let d_o = dh[k] * tc;
                    let dc = dc_next[k] + dh[k] * o[k] * (1.0 - tc * tc);
                    dz[k] = dc * gg[k] * i[k] * (1.0 - i[k]);
                    dz[h + k] = dc * cp[k] * f[k] * (1.0 - f[k]);
                    dz[2 * h + k] = dc * i[k] * (1.0 - gg[k] * gg[k]);
                    dz[3 * h + k] = d_o * o[k] * (1.0 - o[k]);
                    dc_next[k] = dc * f[k];
                }
                let x = self.embedding(enc.ids[t]);
                outer_add(&mut grad[wx_at..wx_at + 4 * h * e], &dz, x);
                outer_add(&mut grad[wh_at..wh_at + 4 * h * h], &dz, hp);
                for (o, v) in grad[b_at..b_at + 4 * h].iter_mut().zip(&dz) {
                    *o += v;
                }
                let id = enc.ids[t];
                let at = self.layout.emb + id * e;
                let mut dx = vec![0.0; e];
                matvec_t_add(&self.params[wx_at..wx_at + 4 * h * e], &dz, &mut dx);
                for (o, v) in grad[at..at + e].iter_mut().zip(&dx) {
                    *o += v;
                }
                dh_next = vec![0.0; h];
                matvec_t_add(&self.params[wh_at..wh_at + 4 * h * h], &dz, &mut dh_next);
            }
        }
    }
}

impl NodeScorer for NeuralModel {
    fn score_span(&self, u: &AbstractedUtterance, span: Span, rules: &[RulePred]) -> Vec<f64> {
        let x = self.input_for(u, span);
        self.forward(&x, rules)
    }
}

impl SpanModel for NeuralModel {
    type Input = Vec<usize>;
    type Grad = Vec<f64>;
    type Opt = DenseAdam;

    fn config(&self) -> ScorerConfig {
        self.config
    }

    fn encode(&self, s: &SurfaceStructure) -> Vec<usize> {
        s.tokens.iter().map(|t| self.token_id(t)).collect()
    }

    fn forward(&self, x: &Vec<usize>, rules: &[RulePred]) -> Vec<f64> {
        let enc = self.encode_ids(x);
        rules.iter().map(|&r| self.attend(&enc, r).3).collect()
    }

    fn backward(&self, x: &Vec<usize>, rules: &[RulePred], dscores: &[f64], grad: &mut Vec<f64>) {
        if dscores.iter().all(|&d| d == 0.0) {
            return;
        }
        let enc = self.encode_ids(x);
        let mut dstates = vec![vec![0.0; 2 * self.dims.hidden]; x.len()];
        for (&r, &g) in rules.iter().zip(dscores) {
            if g != 0.0 {
                self.backward_one(&enc, r, g, grad, &mut dstates);
            }
        }
        self.backward_encoder(&enc, &dstates, grad);
    }

    fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.layout.len]
    }

    fn apply(&mut self, grad: &Vec<f64>, opt: &mut DenseAdam, cfg: &AdamConfig) {
        opt.step(cfg, &mut self.params, grad);
    }

    fn scale(&mut self, factor: f64) {
        for p in &mut self.params {
            *p *= factor;
        }
    }
}
