//! Minimal kinematic multi-lane driving simulator.
//!
//! The road is straight; lane 0 is the rightmost lane. Other vehicles keep
//! their lane and follow a two-parameter car-following rule. The ego vehicle
//! is driven by five meta-actions and changes lane within one decision step.

mod observation;
mod scenario;
mod vehicle;

pub use observation::{Observation, OBS_DIM, OBS_FEATURES, OBS_ROWS};
pub use scenario::{ScenarioConfig, ScenarioKind};
pub use vehicle::{collision_check, VehicleState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Discrete meta-action. The integer codes are part of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    LaneLeft = 0,
    Idle = 1,
    LaneRight = 2,
    Faster = 3,
    Slower = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::LaneLeft,
        Action::Idle,
        Action::LaneRight,
        Action::Faster,
        Action::Slower,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub crashed: bool,
}

#[derive(Debug, Clone)]
pub struct DrivingEnv {
    config: ScenarioConfig,
    /// Index 0 is the ego vehicle.
    vehicles: Vec<VehicleState>,
    steps: usize,
    done: bool,
    crashed: bool,
}

const SPAWN_ATTEMPTS: usize = 500;

impl DrivingEnv {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        Ok(DrivingEnv {
            config,
            vehicles: Vec::new(),
            steps: 0,
            done: true,
            crashed: false,
        })
    }

    /// Starts an episode from an explicit vehicle layout (index 0 is ego).
    pub fn from_vehicles(config: ScenarioConfig, vehicles: Vec<VehicleState>) -> Result<Self> {
        config.validate()?;
        if vehicles.is_empty() {
            return Err(Error::Config("vehicle layout needs an ego vehicle".into()));
        }
        for v in &vehicles {
            if v.lane >= config.lane_count {
                return Err(Error::Config(format!(
                    "vehicle {} in lane {} but road has {} lanes",
                    v.id, v.lane, config.lane_count
                )));
            }
        }
        Ok(DrivingEnv {
            config,
            vehicles,
            steps: 0,
            done: false,
            crashed: false,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn ego(&self) -> &VehicleState {
        &self.vehicles[0]
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn crashed(&self) -> bool {
        self.crashed
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ego_start = cfg.ego_start;
        let ego_speed = 0.7 * cfg.v_max;
        let ego_lane = match cfg.kind {
            ScenarioKind::Highway => rng.random_range(0..cfg.lane_count),
            ScenarioKind::Merge => 0,
        };
        let mut vehicles = vec![VehicleState {
            id: 0,
            lane: ego_lane,
            position: ego_start,
            speed: ego_speed,
            length: cfg.vehicle_length,
            width: cfg.vehicle_width,
            target_speed: ego_speed,
            lane_from: None,
        }];
        let first_lane = cfg.first_traffic_lane();
        for id in 1..=cfg.other_vehicle_count {
            let mut placed = None;
            for _ in 0..SPAWN_ATTEMPTS {
                let lane = rng.random_range(first_lane..cfg.lane_count);
                let position =
                    rng.random_range(ego_start - cfg.spawn_behind..=ego_start + cfg.spawn_ahead);
                let clear = vehicles.iter().all(|v| {
                    let gap = if v.id == 0 {
                        cfg.ego_clearance
                    } else {
                        cfg.min_spawn_gap
                    };
                    v.lane != lane || (v.position - position).abs() >= gap
                });
                if clear {
                    placed = Some((lane, position));
                    break;
                }
            }
            let (lane, position) = placed.ok_or_else(|| {
                Error::Config(format!(
                    "cannot place {} vehicles without overlap on this road",
                    cfg.other_vehicle_count
                ))
            })?;
            let target = rng.random_range(cfg.traffic_speed.0..=cfg.traffic_speed.1);
            vehicles.push(VehicleState {
                id,
                lane,
                position,
                speed: target,
                length: cfg.vehicle_length,
                width: cfg.vehicle_width,
                target_speed: target,
                lane_from: None,
            });
        }
        self.vehicles = vehicles;
        self.steps = 0;
        self.done = false;
        self.crashed = false;
        Ok(self.observe())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; call reset".into()));
        }
        self.apply_action(action);

        let substeps = self.config.substeps();
        let dt = 1.0 / self.config.simulation_frequency;
        let mut crashed = false;
        for sub in 0..substeps {
            let accels: Vec<f64> = (0..self.vehicles.len()).map(|i| self.acceleration(i)).collect();
            for (v, a) in self.vehicles.iter_mut().zip(accels) {
                v.speed = (v.speed + a * dt).clamp(0.0, self.config.v_max);
                v.position += v.speed * dt;
            }
            crashed = self.ego_crashed();
            if sub == 0 {
                self.vehicles[0].lane_from = None;
            }
            if crashed {
                break;
            }
        }
        self.vehicles[0].lane_from = None;

        self.steps += 1;
        self.crashed = crashed;
        self.done = crashed || self.steps >= self.config.duration_steps;
        Ok(StepResult {
            observation: self.observe(),
            reward: self.reward(crashed),
            done: self.done,
            crashed,
        })
    }

    fn apply_action(&mut self, action: Action) {
        let cfg = &self.config;
        let lowest = cfg.lowest_lane_at(self.vehicles[0].position);
        let ego = &mut self.vehicles[0];
        let target_lane = match action {
            Action::LaneLeft if ego.lane + 1 < cfg.lane_count => Some(ego.lane + 1),
            Action::LaneRight if ego.lane > lowest => Some(ego.lane - 1),
            _ => None,
        };
        if let Some(lane) = target_lane {
            ego.lane_from = Some(ego.lane);
            ego.lane = lane;
        }
        match action {
            Action::Faster => ego.target_speed = (ego.target_speed + cfg.speed_step).min(cfg.v_max),
            Action::Slower => ego.target_speed = (ego.target_speed - cfg.speed_step).max(cfg.v_min),
            _ => {}
        }
    }

    fn acceleration(&self, i: usize) -> f64 {
        let cfg = &self.config;
        let v = &self.vehicles[i];
        if i == 0 {
            return (cfg.ego_gain * (v.target_speed - v.speed)).clamp(-cfg.max_brake, cfg.max_accel);
        }
        let mut desired = v.target_speed;
        if let Some(gap) = self.gap_to_leader(i) {
            desired = desired.min(gap.max(0.0) / cfg.following_time_gap);
        }
        (cfg.following_gain * (desired - v.speed)).clamp(-cfg.max_brake, cfg.max_accel)
    }

    /// Bumper-to-bumper distance to the nearest vehicle ahead sharing a lane.
    fn gap_to_leader(&self, i: usize) -> Option<f64> {
        let me = &self.vehicles[i];
        self.vehicles
            .iter()
            .filter(|o| o.id != me.id && o.position > me.position && o.occupies(me.lane))
            .map(|o| o.position - me.position - 0.5 * (o.length + me.length))
            .min_by(f64::total_cmp)
    }

    fn ego_crashed(&self) -> bool {
        let ego = &self.vehicles[0];
        if let Some(end) = self.config.ramp_end() {
            if ego.occupies(0) && ego.position + 0.5 * ego.length >= end {
                return true;
            }
        }
        self.vehicles[1..].iter().any(|o| collision_check(ego, o))
    }

    /// Speed and right-lane terms normalized to [0, 1], plus the collision term.
    pub fn reward(&self, crashed: bool) -> f64 {
        let cfg = &self.config;
        let ego = self.ego();
        let speed_frac = ((ego.speed - cfg.v_min) / (cfg.v_max - cfg.v_min)).clamp(0.0, 1.0);
        let right = if ego.lane == cfg.right_lane_index() { 1.0 } else { 0.0 };
        let clean = (cfg.w_speed * speed_frac + cfg.w_right_lane * right)
            / (cfg.w_speed + cfg.w_right_lane);
        clean + if crashed { cfg.w_collision } else { 0.0 }
    }

    pub fn observe(&self) -> Observation {
        Observation::build(&self.config, &self.vehicles)
    }
}
