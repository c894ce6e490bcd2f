//! Observation-level defenses and their mean ensemble.
//!
//! Every member of a [`DefenseStack`] receives the same (possibly attacked)
//! observation; the stack returns the coordinate-wise mean of the member
//! outputs. Members never see each other's outputs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envsim::OBS_DIM;
use crate::numerics::{mse_loss, LossTarget, Matrix, MlpParams, MlpSpec, OptimizerState, PcaModel};
use crate::seeds::{derive, derive_indexed};
use crate::{Error, Result};

/// Encoder 25 → 128 → 64, decoder 64 → 128 → 25.
pub const AUTOENCODER_LAYERS: [usize; 5] = [OBS_DIM, 128, 64, 128, OBS_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Half-width of the uniform noise.
    pub eta: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(eta: f64, seed: u64) -> Self {
        NoiseConfig {
            eta,
            clip_lo: -1.0,
            clip_hi: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) {
            return Err(Error::Config(format!("noise eta must be >= 0, got {}", self.eta)));
        }
        if !(self.clip_lo < self.clip_hi) {
            return Err(Error::Config(format!(
                "noise clip bounds must satisfy lo < hi, got [{}, {}]",
                self.clip_lo, self.clip_hi
            )));
        }
        Ok(())
    }
}

/// `clip(s + U(−η, η), lo, hi)` coordinate-wise.
pub fn random_noise_apply<R: Rng + ?Sized>(cfg: &NoiseConfig, state: &[f64], rng: &mut R) -> Vec<f64> {
    state
        .iter()
        .map(|s| {
            let noise = if cfg.eta > 0.0 {
                rng.random_range(-cfg.eta..=cfg.eta)
            } else {
                0.0
            };
            (s + noise).clamp(cfg.clip_lo, cfg.clip_hi)
        })
        .collect()
}

pub fn autoencoder_apply(params: &MlpParams, state: &[f64]) -> Result<Vec<f64>> {
    params.predict(state)
}

pub fn pca_apply(model: &PcaModel, state: &[f64]) -> Result<Vec<f64>> {
    model.reconstruct(state)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DefenseTransform {
    Identity,
    RandomNoise(NoiseConfig),
    Autoencoder(MlpParams),
    Pca(PcaModel),
}

impl DefenseTransform {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DefenseTransform::Identity => "identity",
            DefenseTransform::RandomNoise(_) => "random_noise",
            DefenseTransform::Autoencoder(_) => "autoencoder",
            DefenseTransform::Pca(_) => "pca",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DefenseTransform::RandomNoise(cfg) => cfg.validate(),
            DefenseTransform::Autoencoder(p) => {
                let spec = p.spec();
                if spec.input_size() != OBS_DIM || spec.output_size() != OBS_DIM {
                    return Err(Error::Config("autoencoder must map 25 → 25".into()));
                }
                Ok(())
            }
            DefenseTransform::Pca(m) => {
                if m.dim() != OBS_DIM {
                    return Err(Error::Config(format!("PCA model has dimension {}", m.dim())));
                }
                Ok(())
            }
            DefenseTransform::Identity => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseStack {
    members: Vec<DefenseTransform>,
    fusion: Fusion,
}

impl DefenseStack {
    pub fn new(members: Vec<DefenseTransform>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("defense stack needs at least one member".into()));
        }
        for m in &members {
            m.validate()?;
        }
        Ok(DefenseStack {
            members,
            fusion: Fusion::Mean,
        })
    }

    pub fn single(member: DefenseTransform) -> Result<Self> {
        DefenseStack::new(vec![member])
    }

    /// Random noise, autoencoder and PCA, fused by their mean.
    pub fn ensemble(noise: NoiseConfig, autoencoder: MlpParams, pca: PcaModel) -> Result<Self> {
        DefenseStack::new(vec![
            DefenseTransform::RandomNoise(noise),
            DefenseTransform::Autoencoder(autoencoder),
            DefenseTransform::Pca(pca),
        ])
    }

    pub fn members(&self) -> &[DefenseTransform] {
        &self.members
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    /// Per-episode application state. Noise members draw from a generator
    /// keyed by their own seed and `episode_seed`.
    pub fn session(&self, episode_seed: u64) -> DefenseSession<'_> {
        let rngs = self
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| match m {
                DefenseTransform::RandomNoise(cfg) => Some(ChaCha8Rng::seed_from_u64(
                    derive_indexed(derive(cfg.seed, &format!("noise/{i}")), "episode", episode_seed),
                )),
                _ => None,
            })
            .collect();
        DefenseSession { stack: self, rngs }
    }
}

/// Member inputs and outputs of one fused application.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseTrace {
    pub member_inputs: Vec<Vec<f64>>,
    pub member_outputs: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DefenseSession<'a> {
    stack: &'a DefenseStack,
    rngs: Vec<Option<ChaCha8Rng>>,
}

impl DefenseSession<'_> {
    pub fn apply(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_traced(state)?.fused)
    }

    pub fn apply_traced(&mut self, state: &[f64]) -> Result<DefenseTrace> {
        if state.len() != OBS_DIM {
            return Err(Error::Dimension {
                context: "defense input",
                expected: OBS_DIM,
                got: state.len(),
            });
        }
        let mut member_inputs = Vec::with_capacity(self.stack.members.len());
        let mut member_outputs = Vec::with_capacity(self.stack.members.len());
        for (member, rng) in self.stack.members.iter().zip(&mut self.rngs) {
            let input = state.to_vec();
            let out = match member {
                DefenseTransform::Identity => input.clone(),
                DefenseTransform::RandomNoise(cfg) => {
                    random_noise_apply(cfg, &input, rng.as_mut().expect("noise generator"))
                }
                DefenseTransform::Autoencoder(p) => autoencoder_apply(p, &input)?,
                DefenseTransform::Pca(m) => pca_apply(m, &input)?,
            };
            member_inputs.push(input);
            member_outputs.push(out);
        }
        let fused = match self.stack.fusion {
            Fusion::Mean => mean_of(&member_outputs),
        };
        Ok(DefenseTrace {
            member_inputs,
            member_outputs,
            fused,
        })
    }
}

/// Coordinate-wise mean, accumulated as offsets from the first vector so
/// identical members reproduce their output exactly.
fn mean_of(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len() as f64;
    let base = &vectors[0];
    let mut offsets = vec![0.0; base.len()];
    for v in &vectors[1..] {
        for ((o, x), b) in offsets.iter_mut().zip(v).zip(base) {
            *o += x - b;
        }
    }
    base.iter().zip(offsets).map(|(b, o)| b + o / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoencoderFitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AutoencoderFitConfig {
    fn default() -> Self {
        AutoencoderFitConfig {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedAutoencoder {
    pub params: MlpParams,
    /// Dataset reconstruction MSE before and after fitting.
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Mean per-sample reconstruction MSE of `params` over `data`.
pub fn reconstruction_mse(params: &MlpParams, data: &Matrix) -> Result<f64> {
    if data.rows() == 0 {
        return Ok(0.0);
    }
    let out = params.predict_batch(data)?;
    let mut total = 0.0;
    for (o, x) in out.iter_rows().zip(data.iter_rows()) {
        total += mse_loss(o, x)?;
    }
    Ok(total / data.rows() as f64)
}

/// Trains the autoencoder to reconstruct `clean_data` with minibatch Adam.
pub fn fit_autoencoder(clean_data: &Matrix, cfg: &AutoencoderFitConfig) -> Result<FittedAutoencoder> {
    fit_autoencoder_with_progress(clean_data, cfg, |_, _| {})
}

pub fn fit_autoencoder_with_progress(
    clean_data: &Matrix,
    cfg: &AutoencoderFitConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<FittedAutoencoder> {
    if clean_data.cols() != OBS_DIM {
        return Err(Error::Dimension {
            context: "autoencoder training data",
            expected: OBS_DIM,
            got: clean_data.cols(),
        });
    }
    if cfg.batch_size == 0 || clean_data.rows() < cfg.batch_size {
        return Err(Error::InsufficientData(format!(
            "autoencoder needs at least batch_size = {} samples, got {}",
            cfg.batch_size,
            clean_data.rows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, "autoencoder/init"));
    let mut params = MlpParams::init(MlpSpec::relu(&AUTOENCODER_LAYERS)?, &mut rng);
    let initial_mse = reconstruction_mse(&params, clean_data)?;
    let mut optimizer = OptimizerState::adam(cfg.learning_rate);
    let mut order: Vec<usize> = (0..clean_data.rows()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| clean_data.row(i)).collect();
            let batch = Matrix::from_rows(&rows, OBS_DIM)?;
            let targets: Vec<LossTarget> = rows.iter().map(|r| LossTarget::Mse(r)).collect();
            let (pred, _) = params.forward_batch(&batch)?;
            for (p, r) in pred.iter_rows().zip(&rows) {
                epoch_loss += mse_loss(p, r)?;
            }
            let grads = params.backprop_params_batch(&batch, &targets)?;
            optimizer.step(&mut params, &grads)?;
        }
        let epoch_loss = epoch_loss / clean_data.rows() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence(format!(
                "autoencoder loss became non-finite at epoch {epoch}"
            )));
        }
        on_epoch(epoch, epoch_loss);
    }
    let final_mse = reconstruction_mse(&params, clean_data)?;
    Ok(FittedAutoencoder {
        params,
        initial_mse,
        final_mse,
    })
}
