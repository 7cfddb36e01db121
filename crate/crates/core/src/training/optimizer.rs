use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::models::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Plain gradient descent or Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: &TrainConfig, params: &ParamStore) -> Self {
        let moments = |kind| match kind {
            OptimizerKind::Adam => params
                .entries()
                .iter()
                .map(|e| vec![0.0; e.value.len()])
                .collect(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Self {
            kind: config.optimizer,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.weight_decay,
            step: 0,
            first: moments(config.optimizer),
            second: moments(config.optimizer),
        }
    }

    /// Applies one update. `grads[i]` is `None` for frozen tensors.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Vec<f64>>]) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step);
        let bias2 = 1.0 - self.beta2.powi(self.step);
        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let values = params.value_mut(i).data_mut();
            if self.weight_decay > 0.0 {
                let keep = 1.0 - self.lr * self.weight_decay;
                values.iter_mut().for_each(|v| *v *= keep);
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (v, g) in values.iter_mut().zip(grad) {
                        *v -= self.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, s) = (&mut self.first[i], &mut self.second[i]);
                    for (j, (v, g)) in values.iter_mut().zip(grad).enumerate() {
                        m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                        s[j] = self.beta2 * s[j] + (1.0 - self.beta2) * g * g;
                        let m_hat = m[j] / bias1;
                        let s_hat = s[j] / bias2;
                        *v -= self.lr * m_hat / (s_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
    }
}
