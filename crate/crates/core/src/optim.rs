//! Adam.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    /// One update of a single parameter at step `t` (1-based).
    pub fn update(&self, p: &mut f64, g: f64, m: &mut f64, v: &mut f64, t: u64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let mh = *m / (1.0 - self.beta1.powi(t as i32));
        let vh = *v / (1.0 - self.beta2.powi(t as i32));
        *p -= self.lr * mh / (vh.sqrt() + self.eps);
    }
}

/// Moment estimates for a dense parameter vector.
#[derive(Clone, Debug, Default)]
pub struct DenseAdam {
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl DenseAdam {
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [f64], grad: &[f64]) {
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
        }
        self.t += 1;
        for i in 0..params.len() {
            cfg.update(&mut params[i], grad[i], &mut self.m[i], &mut self.v[i], self.t);
        }
    }
}
