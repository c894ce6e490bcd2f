//! Run configuration: flat `dotted.key = value` text with `#` comments.
//!
//! Precedence is defaults < config file < command-line overrides. Setting
//! `scenario` re-bases every `env.*` key on that scenario's defaults before
//! the remaining settings are applied, regardless of where it appears.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::DqnConfig;
use crate::attacks::{AttackLoss, FgsmConfig};
use crate::defenses::{AutoencoderFitConfig, NoiseConfig};
use crate::envsim::{ScenarioConfig, ScenarioKind};
use crate::seeds::derive;
use crate::{Error, Result};

/// Keys under this prefix are produced by pipeline stages and ignored on input,
/// so a manifest can be fed back as a config file.
pub const RESOLVED_PREFIX: &str = "resolved.";

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSettings {
    /// `None` means calibrate over `candidates`.
    pub epsilon: Option<f64>,
    pub loss: AttackLoss,
    pub apply_every_step: bool,
    pub period: usize,
    pub candidates: Vec<f64>,
    /// Calibration target: attacked reward ≤ this fraction of the baseline.
    pub target_fraction: f64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            epsilon: None,
            loss: AttackLoss::CrossEntropyGreedy,
            apply_every_step: true,
            period: 2,
            candidates: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            target_fraction: 0.25,
        }
    }
}

impl AttackSettings {
    pub fn fgsm(&self, epsilon: f64) -> FgsmConfig {
        FgsmConfig {
            epsilon,
            loss: self.loss,
            apply_every_step: self.apply_every_step,
            period: self.period,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSettings {
    /// `None` means "same as the attack ε".
    pub eta: Option<f64>,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        NoiseSettings {
            eta: None,
            clip_lo: -1.0,
            clip_hi: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    pub collision_batch: usize,
    pub sma_window: usize,
    /// Also write a per-step trajectory CSV for every configuration.
    pub dump_trajectories: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            episodes: 100,
            collision_batch: 10,
            sma_window: 10,
            dump_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Root seed; every stage derives its own seed from it.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub dqn: DqnConfig,
    pub train_sma_window: usize,
    pub collect_observations: usize,
    pub attack: AttackSettings,
    pub noise: NoiseSettings,
    pub autoencoder: AutoencoderFitConfig,
    pub pca_variance: f64,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_scenario(ScenarioKind::Highway)
    }
}

/// One `key = value` assignment and where it came from (for diagnostics).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub origin: String,
}

impl Setting {
    pub fn new(key: impl Into<String>, value: impl Into<String>, origin: impl Into<String>) -> Self {
        Setting {
            key: key.into(),
            value: value.into(),
            origin: origin.into(),
        }
    }

    /// Parses a `key=value` command-line override.
    pub fn parse_override(text: &str) -> Result<Self> {
        match text.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Ok(Setting::new(k.trim(), v.trim(), "--set")),
            _ => Err(Error::Config(format!("override '{text}' is not of the form key=value"))),
        }
    }
}

/// Parses config text into settings, labelling each with `origin:line`.
pub fn parse_settings(text: &str, origin: &str) -> Result<Vec<Setting>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = format!("{origin}:{}", i + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("{at}: expected 'key = value', found '{line}'")));
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Config(format!("{at}: invalid key '{key}'")));
        }
        out.push(Setting::new(key, value.trim(), at));
    }
    Ok(out)
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok().filter(|v: &f64| v.is_finite())
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for usize {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for AttackLoss {
    fn parse_value(s: &str) -> Option<Self> {
        AttackLoss::parse(s)
    }
    fn render(&self) -> String {
        self.name().to_string()
    }
}

impl ConfigValue for Option<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        if s == "auto" {
            Some(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |v| v.render())
    }
}

fn parse_list<T: ConfigValue>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(|p| T::parse_value(p.trim())).collect()
}

fn render_list<T: ConfigValue>(v: &[T]) -> String {
    v.iter().map(T::render).collect::<Vec<_>>().join(",")
}

impl ConfigValue for Vec<usize> {
    fn parse_value(s: &str) -> Option<Self> {
        parse_list(s)
    }
    fn render(&self) -> String {
        render_list(self)
    }
}

impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        parse_list(s).filter(|v: &Vec<f64>| !v.is_empty())
    }
    fn render(&self) -> String {
        render_list(self)
    }
}

impl ConfigValue for (f64, f64) {
    fn parse_value(s: &str) -> Option<Self> {
        match parse_list::<f64>(s)?.as_slice() {
            &[a, b] => Some((a, b)),
            _ => None,
        }
    }
    fn render(&self) -> String {
        format!("{},{}", self.0, self.1)
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        fn set_key(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
            match key {
                $($key => {
                    self.$($field).+ = ConfigValue::parse_value(value)
                        .ok_or_else(|| format!("invalid value '{value}' for '{key}'"))?;
                })*
                _ => return Err(format!("unknown key '{key}'")),
            }
            Ok(())
        }

        /// Every resolved setting as `(key, value)`, in a fixed order.
        pub fn entries(&self) -> Vec<(&'static str, String)> {
            let mut out = vec![("scenario", self.scenario.kind.name().to_string())];
            $(out.push(($key, self.$($field).+.render()));)*
            out
        }
    };
}

impl RunConfig {
    pub fn for_scenario(kind: ScenarioKind) -> Self {
        RunConfig {
            out_dir: PathBuf::from("artifacts"),
            seed: 0,
            scenario: ScenarioConfig::for_kind(kind),
            dqn: DqnConfig::default(),
            train_sma_window: 100,
            collect_observations: 5000,
            attack: AttackSettings::default(),
            noise: NoiseSettings::default(),
            autoencoder: AutoencoderFitConfig::default(),
            pca_variance: 0.95,
            eval: EvalSettings::default(),
        }
    }

    config_keys! {
        "out_dir" => out_dir;
        "seed" => seed;
        "env.lane_count" => scenario.lane_count;
        "env.other_vehicle_count" => scenario.other_vehicle_count;
        "env.duration_steps" => scenario.duration_steps;
        "env.policy_frequency" => scenario.policy_frequency;
        "env.simulation_frequency" => scenario.simulation_frequency;
        "env.v_min" => scenario.v_min;
        "env.v_max" => scenario.v_max;
        "env.speed_step" => scenario.speed_step;
        "env.w_speed" => scenario.w_speed;
        "env.w_right_lane" => scenario.w_right_lane;
        "env.w_collision" => scenario.w_collision;
        "env.lane_width" => scenario.lane_width;
        "env.vehicle_length" => scenario.vehicle_length;
        "env.vehicle_width" => scenario.vehicle_width;
        "env.perception_range" => scenario.perception_range;
        "env.road_length" => scenario.road_length;
        "env.ego_start" => scenario.ego_start;
        "env.spawn_ahead" => scenario.spawn_ahead;
        "env.spawn_behind" => scenario.spawn_behind;
        "env.min_spawn_gap" => scenario.min_spawn_gap;
        "env.ego_clearance" => scenario.ego_clearance;
        "env.traffic_speed" => scenario.traffic_speed;
        "env.merge_distance" => scenario.merge_distance;
        "env.following_time_gap" => scenario.following_time_gap;
        "env.following_gain" => scenario.following_gain;
        "env.ego_gain" => scenario.ego_gain;
        "env.max_accel" => scenario.max_accel;
        "env.max_brake" => scenario.max_brake;
        "dqn.episodes" => dqn.episodes;
        "dqn.gamma" => dqn.gamma;
        "dqn.learning_rate" => dqn.learning_rate;
        "dqn.batch_size" => dqn.batch_size;
        "dqn.buffer_capacity" => dqn.buffer_capacity;
        "dqn.target_sync_steps" => dqn.target_sync_steps;
        "dqn.epsilon_start" => dqn.epsilon_start;
        "dqn.epsilon_end" => dqn.epsilon_end;
        "dqn.epsilon_decay_episodes" => dqn.epsilon_decay_episodes;
        "dqn.learning_starts" => dqn.learning_starts;
        "dqn.train_every" => dqn.train_every;
        "dqn.hidden_sizes" => dqn.hidden_sizes;
        "train.sma_window" => train_sma_window;
        "collect.observations" => collect_observations;
        "attack.epsilon" => attack.epsilon;
        "attack.loss" => attack.loss;
        "attack.apply_every_step" => attack.apply_every_step;
        "attack.period" => attack.period;
        "attack.candidates" => attack.candidates;
        "attack.target_fraction" => attack.target_fraction;
        "noise.eta" => noise.eta;
        "noise.clip_lo" => noise.clip_lo;
        "noise.clip_hi" => noise.clip_hi;
        "autoencoder.epochs" => autoencoder.epochs;
        "autoencoder.learning_rate" => autoencoder.learning_rate;
        "autoencoder.batch_size" => autoencoder.batch_size;
        "pca.variance" => pca_variance;
        "eval.episodes" => eval.episodes;
        "eval.collision_batch" => eval.collision_batch;
        "eval.sma_window" => eval.sma_window;
        "eval.dump_trajectories" => eval.dump_trajectories;
    }

    /// Builds a config from layered settings (later settings win).
    pub fn from_settings(settings: &[Setting]) -> Result<Self> {
        let mut kind = ScenarioKind::Highway;
        for s in settings.iter().filter(|s| s.key == "scenario") {
            kind = ScenarioKind::parse(&s.value).ok_or_else(|| {
                Error::Config(format!("{}: unknown scenario '{}' (highway, merge)", s.origin, s.value))
            })?;
        }
        let mut cfg = RunConfig::for_scenario(kind);
        for s in settings {
            if s.key == "scenario" || s.key.starts_with(RESOLVED_PREFIX) {
                continue;
            }
            cfg.set_key(&s.key, &s.value)
                .map_err(|msg| Error::Config(format!("{}: {msg}", s.origin)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Layers `base` < the file at `path` (if given) < `overrides`. A missing
    /// file yields a warning; a malformed one is an error.
    pub fn load(base: &[Setting], path: Option<&Path>, overrides: &[Setting]) -> Result<(Self, Vec<String>)> {
        let mut warnings = Vec::new();
        let mut settings = base.to_vec();
        if let Some(path) = path {
            match std::fs::read_to_string(path) {
                Ok(text) => settings.extend(parse_settings(&text, &path.display().to_string())?),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    warnings.push(format!("config file {} not found; using defaults", path.display()));
                }
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        settings.extend_from_slice(overrides);
        Ok((RunConfig::from_settings(&settings)?, warnings))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.dqn_config().validate()?;
        if let Some(e) = self.attack.epsilon {
            self.attack.fgsm(e).validate()?;
        }
        if self.attack.candidates.iter().any(|&e| e < 0.0) {
            return Err(Error::Config("attack.candidates must be non-negative".into()));
        }
        NoiseConfig {
            eta: self.noise.eta.unwrap_or(0.0),
            clip_lo: self.noise.clip_lo,
            clip_hi: self.noise.clip_hi,
            seed: 0,
        }
        .validate()?;
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::Config("pca.variance must be in (0, 1]".into()));
        }
        if self.eval.episodes == 0 || self.eval.collision_batch == 0 || self.eval.episodes % self.eval.collision_batch != 0 {
            return Err(Error::Config(
                "eval.collision_batch must be positive and divide eval.episodes".into(),
            ));
        }
        if self.collect_observations == 0 || self.autoencoder.epochs == 0 || self.autoencoder.batch_size == 0 {
            return Err(Error::Config(
                "collect.observations, autoencoder.epochs and autoencoder.batch_size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stage seed derived from the root seed (`train`, `collect`, `autoencoder`, `noise`, `eval`).
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive(self.seed, stage)
    }

    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig {
            seed: self.stage_seed("train"),
            ..self.dqn.clone()
        }
    }

    pub fn autoencoder_config(&self) -> AutoencoderFitConfig {
        AutoencoderFitConfig {
            seed: self.stage_seed("autoencoder"),
            ..self.autoencoder
        }
    }

    pub fn noise_config(&self, attack_epsilon: f64) -> NoiseConfig {
        NoiseConfig {
            eta: self.noise.eta.unwrap_or(attack_epsilon),
            clip_lo: self.noise.clip_lo,
            clip_hi: self.noise.clip_hi,
            seed: self.stage_seed("noise"),
        }
    }

    /// Renders the full resolved configuration in the input format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Ordered `key = value` record of a run: the resolved config followed by
/// values computed by the pipeline stages (`resolved.*`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let mut m = Manifest::default();
        for (k, v) in cfg.entries() {
            m.set(k, v);
        }
        for stage in ["train", "collect", "autoencoder", "noise", "eval"] {
            m.set(format!("{RESOLVED_PREFIX}seed.{stage}"), cfg.stage_seed(stage).to_string());
        }
        m
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for s in parse_settings(text, origin)? {
            m.set(s.key, s.value);
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
