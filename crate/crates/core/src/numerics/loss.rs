use crate::{Error, Result};

/// Target of a scalar loss on a network output.
#[derive(Debug, Clone, Copy)]
pub enum LossTarget<'a> {
    /// Mean squared error against a target vector.
    Mse(&'a [f64]),
    /// Cross-entropy between `softmax(output)` and a one-hot class.
    CrossEntropy(usize),
}

impl LossTarget<'_> {
    /// Loss value and its gradient with respect to the network output.
    pub fn value_and_grad(&self, pred: &[f64]) -> Result<(f64, Vec<f64>)> {
        match *self {
            LossTarget::Mse(target) => Ok((mse_loss(pred, target)?, mse_grad(pred, target)?)),
            LossTarget::CrossEntropy(index) => Ok((
                cross_entropy_from_logits(pred, index)?,
                cross_entropy_grad(pred, index)?,
            )),
        }
    }
}

/// `(1/d) Σ (pred_i − target_i)²`
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(pred, target)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_len(pred, target)?;
    let scale = 2.0 / pred.len().max(1) as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| scale * (p - t)).collect())
}

/// `−log softmax(logits)[target]`, stabilized by subtracting the max logit.
pub fn cross_entropy_from_logits(logits: &[f64], target: usize) -> Result<f64> {
    check_index(logits, target)?;
    let max = max_of(logits);
    let log_sum: f64 = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(log_sum - (logits[target] - max))
}

/// `softmax(logits) − onehot(target)`
pub fn cross_entropy_grad(logits: &[f64], target: usize) -> Result<Vec<f64>> {
    check_index(logits, target)?;
    let max = max_of(logits);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps
        .iter()
        .enumerate()
        .map(|(i, e)| e / total - if i == target { 1.0 } else { 0.0 })
        .collect())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = max_of(logits);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn check_len(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Dimension {
            context: "loss target",
            expected: pred.len(),
            got: target.len(),
        });
    }
    Ok(())
}

fn check_index(logits: &[f64], target: usize) -> Result<()> {
    if target >= logits.len() {
        return Err(Error::Dimension {
            context: "cross-entropy class index",
            expected: logits.len(),
            got: target,
        });
    }
    Ok(())
}
