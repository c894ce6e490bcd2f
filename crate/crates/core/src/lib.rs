//! Adversarial robustness workbench for a DQN highway-driving agent.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] dense networks, losses, optimizers and PCA.
//! * [`envsim`] a small kinematic driving simulator (Highway and Merge).
//! * [`agent`] DQN training and greedy inference.
//! * [`attacks`] FGSM state perturbation against a fixed Q-network.
//! * [`defenses`] random-noise, autoencoder and PCA filters plus their mean ensemble.
//! * [`eval`] the seeded episode harness, summary statistics and CSV output.
//! * [`pipeline`] the train → collect → fit-defenses → evaluate → report stages.

pub mod agent;
pub mod attacks;
pub mod config;
pub mod defenses;
pub mod envsim;
mod error;
pub mod eval;
pub mod numerics;
pub mod pipeline;
pub mod report;
pub mod seeds;

pub use agent::{DqnConfig, QNetwork, Transition};
pub use attacks::{AttackLoss, FgsmConfig};
pub use defenses::{DefenseStack, DefenseTransform, NoiseConfig};
pub use envsim::{Action, DrivingEnv, Observation, ScenarioConfig, ScenarioKind, StepResult};
pub use error::{Error, Result};
pub use eval::{EpisodeRecord, EvalConfig, EvalSummary};
pub use numerics::{Matrix, MlpParams, MlpSpec, PcaModel};
