use super::{EpisodeRecord, EvalSummary};
use crate::{Error, Result};

/// Mean and population standard deviation of episode rewards; collision
/// rate as the fraction collided in each consecutive batch, with mean and
/// population standard deviation over batches.
pub fn summarize(label: &str, records: &[EpisodeRecord], batch_size: usize) -> Result<EvalSummary> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no episode records to summarize".into()));
    }
    if batch_size == 0 || records.len() % batch_size != 0 {
        return Err(Error::Config(format!(
            "collision batch size {batch_size} must divide {} records",
            records.len()
        )));
    }
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let (mean_reward, std_reward) = mean_std(&rewards);
    let rates: Vec<f64> = records
        .chunks(batch_size)
        .map(|b| b.iter().filter(|r| r.collided).count() as f64 / b.len() as f64)
        .collect();
    let (mean_collision_rate, std_collision_rate) = mean_std(&rates);
    Ok(EvalSummary {
        label: label.to_string(),
        mean_reward,
        std_reward,
        mean_collision_rate,
        std_collision_rate,
        episodes: records.len(),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

/// Simple moving average. The first `window − 1` points average the
/// available prefix, so the output has the input's length.
pub fn sma(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        let count = (i + 1).min(window);
        out.push(sum / count as f64);
    }
    out
}
