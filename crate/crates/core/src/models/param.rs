use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::rng;

/// A named tensor owned by a layer, with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    /// Running statistics are stored as non-trainable params so checkpoints carry them.
    pub trainable: bool,
}

impl Param {
    pub fn filled(shape: &[usize], v: f32, trainable: bool) -> Self {
        let n = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![v; n],
            grad: vec![0.0; n],
            trainable,
        }
    }

    pub fn normal(shape: &[usize], std: f32, seed: u64, name: &str) -> Self {
        let mut p = Param::filled(shape, 0.0, true);
        let mut r = rng::rng_str(seed, name);
        let dist = Normal::new(0.0, std).unwrap();
        p.value.iter_mut().for_each(|v| *v = dist.sample(&mut r));
        p
    }

    pub fn uniform(shape: &[usize], bound: f32, seed: u64, name: &str) -> Self {
        let mut p = Param::filled(shape, 0.0, true);
        let mut r = rng::rng_str(seed, name);
        p.value.iter_mut().for_each(|v| *v = r.random_range(-bound..=bound));
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns parameters addressable by dotted path.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
