//! FGSM state perturbation against a fixed Q-network.

use crate::agent::{greedy_from_q, QNetwork};
use crate::envsim::Action;
use crate::numerics::cross_entropy_grad;
use crate::{Error, Result};

/// Loss whose input gradient steers the attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackLoss {
    /// Cross-entropy between `softmax(Q(s))` and the one-hot greedy action.
    CrossEntropyGreedy,
    /// `−Q(s, a_greedy)`.
    NegQOfGreedy,
}

impl AttackLoss {
    pub fn name(self) -> &'static str {
        match self {
            AttackLoss::CrossEntropyGreedy => "cross_entropy_greedy",
            AttackLoss::NegQOfGreedy => "neg_q_of_greedy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cross_entropy_greedy" => Some(AttackLoss::CrossEntropyGreedy),
            "neg_q_of_greedy" => Some(AttackLoss::NegQOfGreedy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgsmConfig {
    pub epsilon: f64,
    pub loss: AttackLoss,
    pub apply_every_step: bool,
    /// When `apply_every_step` is off, attack only steps where `step % period == 0`.
    pub period: usize,
}

impl FgsmConfig {
    pub fn new(epsilon: f64) -> Self {
        FgsmConfig {
            epsilon,
            loss: AttackLoss::CrossEntropyGreedy,
            apply_every_step: true,
            period: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "attack epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.period == 0 {
            return Err(Error::Config("attack period must be positive".into()));
        }
        Ok(())
    }

    pub fn attacks_step(&self, step: usize) -> bool {
        self.apply_every_step || step % self.period == 0
    }
}

/// Gradient of the configured loss with respect to the state, plus the
/// greedy action it was taken at.
pub fn attack_gradient(q: &QNetwork, state: &[f64], loss: AttackLoss) -> Result<(Vec<f64>, Action)> {
    let params = q.params();
    let (out, cache) = params.forward(state)?;
    let greedy = greedy_from_q(&out);
    let d_out = match loss {
        AttackLoss::CrossEntropyGreedy => cross_entropy_grad(&out, greedy.index())?,
        AttackLoss::NegQOfGreedy => {
            let mut d = vec![0.0; out.len()];
            d[greedy.index()] = -1.0;
            d
        }
    };
    let grad = params
        .input_gradient_from_output(&cache, d_out)
        .map_err(|e| Error::Attack(format!("input gradient failed: {e}")))?;
    Ok((grad, greedy))
}

/// `s + ε · sign(∇ₛ J)` with `sign(0) = 0`. The result is not clipped.
pub fn fgsm_perturb(q: &QNetwork, state: &[f64], cfg: &FgsmConfig) -> Result<Vec<f64>> {
    if cfg.epsilon == 0.0 {
        // The gradient is irrelevant at ε = 0; still validate the input length.
        q.params().forward(state)?;
        return Ok(state.to_vec());
    }
    let (grad, _) = attack_gradient(q, state, cfg.loss)?;
    Ok(state
        .iter()
        .zip(&grad)
        .map(|(s, g)| s + cfg.epsilon * sign(*g))
        .collect())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Whether the attack changes the greedy action at `state`.
pub fn attack_success_probe(q: &QNetwork, state: &[f64], cfg: &FgsmConfig) -> Result<bool> {
    let clean = q.greedy_action(state)?;
    let adv = fgsm_perturb(q, state, cfg)?;
    Ok(q.greedy_action(&adv)? != clean)
}
