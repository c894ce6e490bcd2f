use super::mlp::{MlpParams, ParamGrads};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Option<ParamGrads>,
    second_moment: Option<ParamGrads>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: None,
            second_moment: None,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Adam,
            ..OptimizerState::sgd(learning_rate)
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &ParamGrads) -> Result<()> {
        grads.check_shape(params.layers())?;
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.learning_rate;
                for (p, g) in params.layers_mut().iter_mut().zip(&grads.layers) {
                    for (w, gw) in p.weights.data_mut().iter_mut().zip(g.weights.data()) {
                        *w -= lr * gw;
                    }
                    for (b, gb) in p.bias.iter_mut().zip(&g.bias) {
                        *b -= lr * gb;
                    }
                }
            }
            OptimizerKind::Adam => {
                let m = self
                    .first_moment
                    .get_or_insert_with(|| ParamGrads::zeros_like(params));
                let v = self
                    .second_moment
                    .get_or_insert_with(|| ParamGrads::zeros_like(params));
                let t = self.step_count as i32;
                let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (((p, g), ml), vl) in params
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut m.layers)
                    .zip(&mut v.layers)
                {
                    adam_update(
                        p.weights.data_mut(),
                        g.weights.data(),
                        ml.weights.data_mut(),
                        vl.weights.data_mut(),
                        (b1, b2, eps, lr, c1, c2),
                    );
                    adam_update(
                        &mut p.bias,
                        &g.bias,
                        &mut ml.bias,
                        &mut vl.bias,
                        (b1, b2, eps, lr, c1, c2),
                    );
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    (b1, b2, eps, lr, c1, c2): (f64, f64, f64, f64, f64, f64),
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
