//! Vanilla DQN: replay buffer, target network, ε-greedy exploration.

mod replay;

pub use replay::ReplayBuffer;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envsim::{Action, DrivingEnv, Observation, ScenarioConfig, OBS_DIM};
use crate::numerics::{Matrix, MlpParams, MlpSpec, OptimizerState};
use crate::seeds::{derive, derive_indexed};
use crate::{Error, Result};

/// |Q| above this aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: [f64; OBS_DIM],
    pub action: Action,
    pub reward: f64,
    pub next_state: [f64; OBS_DIM],
    /// True terminal (crash). Time-limit ends still bootstrap.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps between target-network syncs.
    pub target_sync_steps: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which ε decays linearly.
    pub epsilon_decay_episodes: usize,
    /// Transitions collected before the first update.
    pub learning_starts: usize,
    /// Environment steps per gradient update.
    pub train_every: usize,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            episodes: 6000,
            gamma: 0.9,
            learning_rate: 5e-4,
            batch_size: 64,
            buffer_capacity: 20_000,
            target_sync_steps: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 1500,
            learning_starts: 1000,
            train_every: 1,
            hidden_sizes: vec![128, 128],
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.epsilon_end > self.epsilon_start {
            return Err(Error::Config("epsilon_end must not exceed epsilon_start".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(Error::Config("epsilon bounds must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.train_every == 0 {
            return Err(Error::Config(
                "batch_size, buffer_capacity and train_every must be positive".into(),
            ));
        }
        if self.target_sync_steps == 0 {
            return Err(Error::Config("target_sync_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_decay_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn network_spec(&self) -> Result<MlpSpec> {
        let mut sizes = vec![OBS_DIM];
        sizes.extend(&self.hidden_sizes);
        sizes.push(Action::COUNT);
        MlpSpec::relu(&sizes)
    }
}

/// Q-value network: 25 inputs, one output per [`Action`].
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    params: MlpParams,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        QNetwork::from_params(MlpParams::init(spec, rng))
    }

    pub fn from_params(params: MlpParams) -> Result<Self> {
        let spec = params.spec();
        if spec.input_size() != OBS_DIM || spec.output_size() != Action::COUNT {
            return Err(Error::Dimension {
                context: "Q-network shape (25 inputs, 5 outputs)",
                expected: OBS_DIM * Action::COUNT,
                got: spec.input_size() * spec.output_size(),
            });
        }
        Ok(QNetwork { params })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.params
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.params.predict(state)
    }

    pub fn greedy_action(&self, state: &[f64]) -> Result<Action> {
        Ok(greedy_from_q(&self.q_values(state)?))
    }
}

/// Argmax over Q-values; the lowest index wins ties.
pub fn greedy_from_q(q: &[f64]) -> Action {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("Q-network has one output per action")
}

pub fn epsilon_greedy_action<R: Rng + ?Sized>(
    q: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<Action> {
    if rng.random::<f64>() < epsilon {
        Ok(Action::ALL[rng.random_range(0..Action::COUNT)])
    } else {
        q.greedy_action(state)
    }
}

/// One DQN regression step on `batch`. Returns the batch TD loss.
///
/// Targets are `r + γ (1 − done) max_a Q_target(s′, a)`; only the taken
/// action's Q-value is regressed (mean squared error).
pub fn td_update(
    q: &mut QNetwork,
    q_target: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
    optimizer: &mut OptimizerState,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let n = batch.len();
    let states = Matrix::from_rows(&batch.iter().map(|t| t.state).collect::<Vec<_>>(), OBS_DIM)?;
    let next = Matrix::from_rows(
        &batch.iter().map(|t| t.next_state).collect::<Vec<_>>(),
        OBS_DIM,
    )?;
    let targets = td_targets(q_target, batch, &next, gamma)?;

    let (pred, cache) = q.params.forward_batch(&states)?;
    check_divergence(&pred)?;
    let mut d_out = Matrix::zeros(n, Action::COUNT);
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let a = t.action.index();
        let err = pred[(i, a)] - targets[i];
        loss += err * err;
        d_out[(i, a)] = 2.0 * err / n as f64;
    }
    let (grads, _) = q.params.backward(&cache, &d_out, false)?;
    optimizer.step(&mut q.params, &grads)?;
    Ok(loss / n as f64)
}

/// Bootstrapped regression targets for a batch.
pub fn td_targets(
    q_target: &QNetwork,
    batch: &[&Transition],
    next_states: &Matrix,
    gamma: f64,
) -> Result<Vec<f64>> {
    let next_q = q_target.params.predict_batch(next_states)?;
    check_divergence(&next_q)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.done {
                t.reward
            } else {
                let best = next_q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.reward + gamma * best
            }
        })
        .collect())
}

fn check_divergence(q: &Matrix) -> Result<()> {
    if let Some(v) = q.data().iter().find(|v| v.abs() > DIVERGENCE_LIMIT) {
        return Err(Error::Divergence(format!(
            "|Q| = {v:e} exceeds {DIVERGENCE_LIMIT:e}; lower the learning rate"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub episode_return: f64,
    pub epsilon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.episode_return).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "episode,return,epsilon,steps").unwrap();
        for e in &self.episodes {
            writeln!(
                out,
                "{},{:.6},{:.6},{}",
                e.episode, e.episode_return, e.epsilon, e.steps
            )
            .unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn train(env_config: &ScenarioConfig, config: &DqnConfig) -> Result<(QNetwork, TrainingLog)> {
    train_with_progress(env_config, config, |_| {})
}

/// Online/target network pair with replay and optimizer state.
#[derive(Debug, Clone)]
pub struct DqnTrainer {
    config: DqnConfig,
    q: QNetwork,
    q_target: QNetwork,
    optimizer: OptimizerState,
    buffer: ReplayBuffer,
    action_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    total_steps: usize,
}

impl DqnTrainer {
    pub fn new(config: &DqnConfig) -> Result<Self> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive(config.seed, "dqn/init"));
        let q = QNetwork::new(config.network_spec()?, &mut init_rng)?;
        Ok(DqnTrainer {
            config: config.clone(),
            q_target: q.clone(),
            q,
            optimizer: OptimizerState::adam(config.learning_rate),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            action_rng: ChaCha8Rng::seed_from_u64(derive(config.seed, "dqn/actions")),
            replay_rng: ChaCha8Rng::seed_from_u64(derive(config.seed, "dqn/replay")),
            total_steps: 0,
        })
    }

    pub fn q(&self) -> &QNetwork {
        &self.q
    }

    pub fn q_target(&self) -> &QNetwork {
        &self.q_target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn into_network(self) -> QNetwork {
        self.q
    }

    pub fn act(&mut self, state: &[f64], epsilon: f64) -> Result<Action> {
        epsilon_greedy_action(&self.q, state, epsilon, &mut self.action_rng)
    }

    /// Stores one environment transition, then runs the scheduled update and
    /// target sync for this step.
    pub fn record(&mut self, transition: Transition) -> Result<()> {
        self.buffer.push(transition);
        self.total_steps += 1;
        if self.buffer.len() >= self.config.learning_starts.max(1)
            && self.total_steps % self.config.train_every == 0
        {
            let batch = self.buffer.sample(self.config.batch_size, &mut self.replay_rng);
            td_update(
                &mut self.q,
                &self.q_target,
                &batch,
                self.config.gamma,
                &mut self.optimizer,
            )?;
        }
        if self.total_steps % self.config.target_sync_steps == 0 {
            self.q_target = self.q.clone();
        }
        Ok(())
    }

    /// Runs one ε-greedy training episode.
    pub fn run_episode(&mut self, env: &mut DrivingEnv, episode: usize) -> Result<EpisodeLog> {
        let epsilon = self.config.epsilon_at(episode);
        let mut state = env.reset(derive_indexed(self.config.seed, "dqn/env", episode as u64))?;
        let mut episode_return = 0.0;
        let mut steps = 0;
        loop {
            let action = self.act(state.as_slice(), epsilon)?;
            let result = env.step(action)?;
            self.record(Transition {
                state: state.0,
                action,
                reward: result.reward,
                next_state: result.observation.0,
                done: result.crashed,
            })?;
            episode_return += result.reward;
            steps += 1;
            state = result.observation;
            if result.done {
                break;
            }
        }
        Ok(EpisodeLog {
            episode,
            episode_return,
            epsilon,
            steps,
        })
    }
}

/// [`train`] with a callback after every episode.
pub fn train_with_progress(
    env_config: &ScenarioConfig,
    config: &DqnConfig,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<(QNetwork, TrainingLog)> {
    let mut trainer = DqnTrainer::new(config)?;
    let mut env = DrivingEnv::new(env_config.clone())?;
    let mut log = TrainingLog::default();
    for episode in 0..config.episodes {
        let entry = trainer.run_episode(&mut env, episode)?;
        on_episode(&entry);
        log.episodes.push(entry);
    }
    Ok((trainer.into_network(), log))
}

/// Greedy rollouts on the clean environment; one row per pre-action observation.
pub fn collect_clean_observations(
    q: &QNetwork,
    env_config: &ScenarioConfig,
    n: usize,
    seed: u64,
) -> Result<Matrix> {
    let mut rows: Vec<Observation> = Vec::with_capacity(n);
    let mut env = DrivingEnv::new(env_config.clone())?;
    let mut episode = 0u64;
    while rows.len() < n {
        let mut state = env.reset(derive_indexed(seed, "collect/env", episode))?;
        episode += 1;
        while rows.len() < n {
            rows.push(state);
            let result = env.step(q.greedy_action(state.as_slice())?)?;
            state = result.observation;
            if result.done {
                break;
            }
        }
    }
    let raw: Vec<[f64; OBS_DIM]> = rows.iter().map(|o| o.0).collect();
    Matrix::from_rows(&raw, OBS_DIM)
}

#[cfg(test)]
mod tests;
