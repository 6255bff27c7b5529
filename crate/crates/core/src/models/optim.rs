use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::param::Module;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p -= lr * wd * p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with moments keyed by parameter path.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    cfg: AdamConfig,
    moments: HashMap<String, (Vec<f32>, Vec<f32>)>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            moments: HashMap::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates every trainable parameter whose path satisfies `filter`.
    pub fn step(&mut self, model: &mut dyn Module, lr: f64, filter: &dyn Fn(&str) -> bool) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let moments = &mut self.moments;
        model.visit_mut("", &mut |name, p| {
            if !p.trainable || !filter(name) {
                return;
            }
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
            for i in 0..p.value.len() {
                let g = p.grad[i] as f64;
                let mi = c.beta1 * m[i] as f64 + (1.0 - c.beta1) * g;
                let vi = c.beta2 * v[i] as f64 + (1.0 - c.beta2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let mut w = p.value[i] as f64;
                if c.weight_decay > 0.0 {
                    w -= lr * c.weight_decay * w;
                }
                w -= lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                p.value[i] = w as f32;
            }
        });
    }
}
