use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Straight multi-lane highway with dense traffic.
    Highway,
    /// Two through lanes plus an on-ramp (lane 0) that ends at the merge point.
    Merge,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Highway => "highway",
            ScenarioKind::Merge => "merge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "highway" => Some(ScenarioKind::Highway),
            "merge" => Some(ScenarioKind::Merge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Total lane count, including the ramp for Merge.
    pub lane_count: usize,
    pub other_vehicle_count: usize,
    pub duration_steps: usize,
    /// Decisions per second.
    pub policy_frequency: f64,
    /// Integration steps per second.
    pub simulation_frequency: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Target-speed change of FASTER / SLOWER.
    pub speed_step: f64,
    pub w_speed: f64,
    pub w_right_lane: f64,
    pub w_collision: f64,
    pub seed: u64,

    pub lane_width: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub perception_range: f64,
    /// Length used to normalize the ego's absolute position.
    pub road_length: f64,
    pub ego_start: f64,
    pub spawn_ahead: f64,
    pub spawn_behind: f64,
    /// Minimum same-lane spacing between spawned traffic.
    pub min_spawn_gap: f64,
    /// Minimum same-lane spacing between spawned traffic and the ego.
    pub ego_clearance: f64,
    /// Range of traffic cruise speeds.
    pub traffic_speed: (f64, f64),
    /// Ramp length ahead of the ego start (Merge only).
    pub merge_distance: f64,
    /// Car-following: desired time gap (s) and relaxation gain (1/s).
    pub following_time_gap: f64,
    pub following_gain: f64,
    /// Ego speed-controller gain (1/s).
    pub ego_gain: f64,
    pub max_accel: f64,
    pub max_brake: f64,
}

impl ScenarioConfig {
    pub fn highway() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Highway,
            lane_count: 4,
            other_vehicle_count: 20,
            duration_steps: 40,
            policy_frequency: 1.0,
            simulation_frequency: 5.0,
            v_min: 20.0,
            v_max: 30.0,
            speed_step: 2.5,
            w_speed: 0.8,
            w_right_lane: 0.2,
            w_collision: -1.0,
            seed: 0,
            lane_width: 4.0,
            vehicle_length: 5.0,
            vehicle_width: 2.0,
            perception_range: 90.0,
            road_length: 1500.0,
            ego_start: 100.0,
            spawn_ahead: 450.0,
            spawn_behind: 60.0,
            min_spawn_gap: 20.0,
            ego_clearance: 25.0,
            traffic_speed: (20.0, 25.0),
            merge_distance: 0.0,
            following_time_gap: 1.5,
            following_gain: 1.0,
            ego_gain: 2.0,
            max_accel: 4.0,
            max_brake: 6.0,
        }
    }

    pub fn merge() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Merge,
            lane_count: 3,
            other_vehicle_count: 8,
            duration_steps: 15,
            road_length: 800.0,
            spawn_ahead: 250.0,
            merge_distance: 120.0,
            traffic_speed: (20.0, 26.0),
            ..ScenarioConfig::highway()
        }
    }

    pub fn for_kind(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Highway => ScenarioConfig::highway(),
            ScenarioKind::Merge => ScenarioConfig::merge(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.duration_steps < 1 {
            return fail("duration_steps must be at least 1".into());
        }
        if !(self.v_min < self.v_max) || self.v_min < 0.0 {
            return fail(format!("need 0 <= v_min < v_max, got [{}, {}]", self.v_min, self.v_max));
        }
        if self.lane_count < 1 {
            return fail("lane_count must be at least 1".into());
        }
        if self.kind == ScenarioKind::Merge && self.lane_count < 2 {
            return fail("merge needs a ramp plus at least one through lane".into());
        }
        if !(self.policy_frequency > 0.0) || self.simulation_frequency < self.policy_frequency {
            return fail("need 0 < policy_frequency <= simulation_frequency".into());
        }
        if self.w_speed + self.w_right_lane <= 0.0 {
            return fail("w_speed + w_right_lane must be positive".into());
        }
        if !(self.perception_range > 0.0 && self.road_length > 0.0 && self.lane_width > 0.0) {
            return fail("perception_range, road_length and lane_width must be positive".into());
        }
        if self.traffic_speed.0 > self.traffic_speed.1 || self.traffic_speed.1 > self.v_max {
            return fail("traffic speed range must be ordered and within v_max".into());
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.simulation_frequency / self.policy_frequency).round().max(1.0) as usize
    }

    /// Lowest lane that carries traffic (the ramp carries only the ego).
    pub fn first_traffic_lane(&self) -> usize {
        match self.kind {
            ScenarioKind::Highway => 0,
            ScenarioKind::Merge => 1,
        }
    }

    /// Lane that earns the right-lane reward.
    pub fn right_lane_index(&self) -> usize {
        self.first_traffic_lane()
    }

    /// Position where the on-ramp ends.
    pub fn ramp_end(&self) -> Option<f64> {
        match self.kind {
            ScenarioKind::Highway => None,
            ScenarioKind::Merge => Some(self.ego_start + self.merge_distance),
        }
    }

    /// Lowest lane that exists at `position`.
    pub fn lowest_lane_at(&self, position: f64) -> usize {
        match self.ramp_end() {
            Some(end) if position + 0.5 * self.vehicle_length >= end => 1,
            _ => 0,
        }
    }
}
