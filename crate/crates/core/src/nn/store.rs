//! Named parameter tensors with gradient accumulators and Adam state.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    /// First-moment accumulator.
    pub m: Tensor,
    /// Second-moment accumulator.
    pub v: Tensor,
    /// Number of Adam steps applied to this parameter.
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Parameter store. Iteration order is the BTreeMap name order, so every
/// operation over "all parameters" is deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

/// Gradients produced by one backward pass, keyed by parameter name.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub by_name: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn accumulate(&mut self, name: &str, grad: &[f64], shape: &[usize]) {
        let entry = self
            .by_name
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(shape));
        for (g, d) in entry.data.iter_mut().zip(grad) {
            *g += d;
        }
    }

    /// Scale everything down so the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping. A non-positive bound is a no-op.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self
            .by_name
            .values()
            .flat_map(|t| t.data.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if max_norm > 0.0 && norm > max_norm {
            let scale = max_norm / norm;
            for t in self.by_name.values_mut() {
                for g in &mut t.data {
                    *g *= scale;
                }
            }
        }
        norm
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let shape = value.shape.clone();
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: Tensor::zeros(&shape),
                m: Tensor::zeros(&shape),
                v: Tensor::zeros(&shape),
                steps: 0,
            },
        );
    }

    /// Insert a fully populated parameter (checkpoint restore path).
    pub fn insert_raw(&mut self, name: String, param: Param) {
        self.params.insert(name, param);
    }

    pub fn get(&self, name: &str) -> &Param {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Param {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self.get(name).value
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Add a backward pass result into the gradient accumulators.
    pub fn apply_gradients(&mut self, grads: &Gradients) {
        for (name, g) in &grads.by_name {
            let p = self.get_mut(name);
            debug_assert_eq!(p.value.shape, g.shape);
            for (acc, d) in p.grad.data.iter_mut().zip(&g.data) {
                *acc += d;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Bias-corrected Adam update. Parameters whose accumulated gradient is
    /// identically zero are left untouched (value, moments and step count),
    /// which is what makes head-only training leave the rest of the model
    /// bit-identical. Gradient accumulators are cleared afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.adam_step_scaled(cfg, &[])
    }

    /// Adam with per-group learning rates: parameters whose name starts with
    /// a listed prefix use `learning_rate * scale`. First match wins.
    pub fn adam_step_scaled(&mut self, cfg: &AdamConfig, lr_scales: &[(&str, f64)]) -> Result<()> {
        for (name, p) in self.params.iter_mut() {
            if p.grad.data.iter().all(|&g| g == 0.0) {
                continue;
            }
            if !p.grad.all_finite() {
                return Err(Error::Train(format!("non-finite gradient for {name}")));
            }
            let lr = lr_scales
                .iter()
                .find(|(prefix, _)| name.starts_with(prefix))
                .map_or(cfg.learning_rate, |(_, s)| cfg.learning_rate * s);
            p.steps += 1;
            let t = p.steps as f64;
            let bc1 = 1.0 - cfg.beta1.powf(t);
            let bc2 = 1.0 - cfg.beta2.powf(t);
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
                p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = p.m.data[i] / bc1;
                let v_hat = p.v.data[i] / bc2;
                p.value.data[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
        Ok(())
    }
}

/// Uniform(-scale, scale) init, used for embedding tables.
pub fn uniform_init<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
    }
}

/// Scaled-uniform (Glorot-style) init for dense and recurrent weights.
pub fn glorot_init<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    uniform_init(rng, &[rows, cols], scale)
}
