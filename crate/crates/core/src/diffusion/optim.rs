use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::loss::GradientSet;
use super::model::{row_name, ModelState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig::Sgd { lr, momentum: 0.0 }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

/// First-order optimizer with per-tensor state. Only tensors present in
/// the gradient set are touched.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    state: HashMap<String, (Vec<f64>, Vec<f64>)>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            state: HashMap::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match &mut self.config {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => *lr = new_lr,
        }
    }

    pub fn step(&mut self, model: &mut ModelState, grads: &GradientSet) {
        self.steps += 1;
        let t = self.steps as i32;
        let config = self.config;
        let state = &mut self.state;
        let mut update = |name: &str, p: &mut [f64], g: &[f64]| {
            let entry = state
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
            match config {
                OptimizerConfig::Sgd { lr, momentum } => {
                    if momentum == 0.0 {
                        for (pi, gi) in p.iter_mut().zip(g) {
                            *pi -= lr * gi;
                        }
                    } else {
                        for ((pi, gi), vi) in p.iter_mut().zip(g).zip(entry.0.iter_mut()) {
                            *vi = momentum * *vi + gi;
                            *pi -= lr * *vi;
                        }
                    }
                }
                OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let (m, v) = entry;
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        };
        if let Some(gd) = &grads.denoiser {
            for ((name, p), (_, g)) in model.denoiser.tensors_mut().into_iter().zip(gd.tensors()) {
                update(name, p, g);
            }
        }
        if let Some(gt) = &grads.text {
            for ((name, p), (_, g)) in model.text.tensors_mut().into_iter().zip(gt.tensors()) {
                update(name, p, g);
            }
        }
        for (&r, g) in &grads.rows {
            let mut row = model.table.vectors.row_mut(r);
            let p = row.as_slice_mut().expect("contiguous row");
            update(&row_name(r), p, g.as_slice().unwrap());
        }
    }
}
