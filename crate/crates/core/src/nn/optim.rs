use super::{CnnModel, Gradients, LayerId, Params};

/// Adaptive-moment optimizer state. Only trainable layers are updated.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(model: &CnnModel, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = Params::zeros(&model.arch, model.num_classes());
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, model: &mut CnnModel, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in LayerId::ALL {
            if !model.is_trainable(id) {
                continue;
            }
            let g = grads.layer(id);
            let m = self.m.layer_mut(id);
            let v = self.v.layer_mut(id);
            let p = model.params.layer_mut(id);
            let params = p.weights.iter_mut().chain(p.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((w, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
