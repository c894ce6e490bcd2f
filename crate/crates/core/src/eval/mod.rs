//! Seeded episode evaluation: attack → defense → greedy action, per step.

mod csv;
mod stats;

pub use self::csv::{
    read_episodes_csv, read_summary_csv, write_episodes_csv, write_summary_csv, TrajectoryWriter,
};
pub use stats::{sma, summarize};

use rayon::prelude::*;

use crate::agent::QNetwork;
use crate::attacks::{fgsm_perturb, FgsmConfig};
use crate::defenses::{DefenseStack, DefenseTrace};
use crate::envsim::{Action, DrivingEnv, Observation, ScenarioConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub label: String,
    pub scenario: ScenarioConfig,
    pub episodes: usize,
    pub attack: Option<FgsmConfig>,
    pub defense: Option<DefenseStack>,
    pub base_seed: u64,
    /// Episodes per collision-rate batch.
    pub collision_batch: usize,
    pub sma_window: usize,
}

impl EvalConfig {
    pub fn new(label: impl Into<String>, scenario: ScenarioConfig) -> Self {
        EvalConfig {
            label: label.into(),
            scenario,
            episodes: 100,
            attack: None,
            defense: None,
            base_seed: 0,
            collision_batch: 10,
            sma_window: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("evaluation needs at least one episode".into()));
        }
        if self.collision_batch == 0 || self.episodes % self.collision_batch != 0 {
            return Err(Error::Config(format!(
                "collision batch size {} must divide the episode count {}",
                self.collision_batch, self.episodes
            )));
        }
        if self.label.is_empty() || self.label.contains([',', '\n', '"']) {
            return Err(Error::Config(format!("invalid run label '{}'", self.label)));
        }
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        self.scenario.validate()
    }

    pub fn episode_seed(&self, episode: usize) -> u64 {
        self.base_seed.wrapping_add(episode as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub reward: f64,
    pub collided: bool,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub label: String,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_collision_rate: f64,
    pub std_collision_rate: f64,
    pub episodes: usize,
}

/// Everything that happened at one decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    /// Clean observation from the environment.
    pub observation: Observation,
    /// Observation after the attack (equal to `observation` when unattacked).
    pub attacked: Vec<f64>,
    pub defense: Option<DefenseTrace>,
    /// What the policy acted on.
    pub policy_input: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub crashed: bool,
}

pub fn run_episode(q: &QNetwork, cfg: &EvalConfig, episode: usize) -> Result<EpisodeRecord> {
    run_episode_traced(q, cfg, episode, |_| {})
}

/// Runs one evaluation episode, reporting every step to `on_step`.
pub fn run_episode_traced(
    q: &QNetwork,
    cfg: &EvalConfig,
    episode: usize,
    mut on_step: impl FnMut(&StepTrace),
) -> Result<EpisodeRecord> {
    let wrap = |e: Error| Error::Episode {
        episode,
        source: Box::new(e),
    };
    let seed = cfg.episode_seed(episode);
    let mut env = DrivingEnv::new(cfg.scenario.clone()).map_err(wrap)?;
    let mut defense = cfg.defense.as_ref().map(|d| d.session(seed));
    let mut state = env.reset(seed).map_err(wrap)?;
    let mut total = 0.0;
    let mut collided = false;
    let mut steps = 0;
    loop {
        let attacked = match &cfg.attack {
            Some(a) if a.attacks_step(steps) => fgsm_perturb(q, state.as_slice(), a).map_err(wrap)?,
            _ => state.to_vec(),
        };
        let trace = match defense.as_mut() {
            Some(d) => Some(d.apply_traced(&attacked).map_err(wrap)?),
            None => None,
        };
        let policy_input = trace.as_ref().map_or_else(|| attacked.clone(), |t| t.fused.clone());
        let action = q.greedy_action(&policy_input).map_err(wrap)?;
        let result = env.step(action).map_err(wrap)?;
        total += result.reward;
        collided |= result.crashed;
        on_step(&StepTrace {
            step: steps,
            observation: state,
            attacked,
            defense: trace,
            policy_input,
            action,
            reward: result.reward,
            crashed: result.crashed,
        });
        steps += 1;
        state = result.observation;
        if result.done {
            break;
        }
    }
    Ok(EpisodeRecord {
        episode,
        reward: total,
        collided,
        steps,
        seed,
    })
}

/// Runs all episodes (in parallel) and summarizes them in episode order.
pub fn run_eval(q: &QNetwork, cfg: &EvalConfig) -> Result<(Vec<EpisodeRecord>, EvalSummary)> {
    cfg.validate()?;
    let records = (0..cfg.episodes)
        .into_par_iter()
        .map(|e| run_episode(q, cfg, e))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&cfg.label, &records, cfg.collision_batch)?;
    Ok((records, summary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub epsilon: f64,
    /// `(ε, attacked mean reward)` for every candidate tried, in order.
    pub sweep: Vec<(f64, f64)>,
    /// Whether the chosen ε actually met the target.
    pub reached: bool,
}

/// Picks the smallest candidate ε whose attacked mean reward is at most
/// `target_fraction × baseline_mean`. Falls back to the largest candidate.
pub fn calibrate_epsilon(
    q: &QNetwork,
    attack_cfg: &EvalConfig,
    template: &FgsmConfig,
    candidates: &[f64],
    baseline_mean: f64,
    target_fraction: f64,
) -> Result<Calibration> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate epsilons to calibrate over".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sweep = Vec::new();
    for &eps in &sorted {
        let cfg = EvalConfig {
            attack: Some(FgsmConfig {
                epsilon: eps,
                ..*template
            }),
            defense: None,
            ..attack_cfg.clone()
        };
        let (_, summary) = run_eval(q, &cfg)?;
        sweep.push((eps, summary.mean_reward));
        if summary.mean_reward <= target_fraction * baseline_mean {
            return Ok(Calibration {
                epsilon: eps,
                sweep,
                reached: true,
            });
        }
    }
    Ok(Calibration {
        epsilon: *sorted.last().unwrap(),
        sweep,
        reached: false,
    })
}
