use super::scenario::ScenarioConfig;
use super::vehicle::VehicleState;

pub const OBS_ROWS: usize = 5;
pub const OBS_FEATURES: usize = 5;
pub const OBS_DIM: usize = OBS_ROWS * OBS_FEATURES;

/// 5 × 5 kinematic observation, flattened row-major.
///
/// Row 0 is the ego vehicle (absolute features), rows 1–4 are the four
/// nearest other vehicles by longitudinal distance (features relative to
/// the ego). Columns are `[presence, x, y, vx, vy]`, with everything except
/// presence normalized into [−1, 1]. Absent rows are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn zeros() -> Self {
        Observation([0.0; OBS_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.to_vec()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.0[r * OBS_FEATURES..(r + 1) * OBS_FEATURES]
    }

    /// Presence flags in {0, 1}, other entries in [−1, 1], absent rows zero.
    pub fn is_clean(&self) -> bool {
        (0..OBS_ROWS).all(|r| {
            let row = self.row(r);
            let bounded = row[1..].iter().all(|v| v.is_finite() && v.abs() <= 1.0);
            match row[0] {
                p if p == 1.0 => bounded,
                p if p == 0.0 => row.iter().all(|v| *v == 0.0),
                _ => false,
            }
        })
    }

    pub(crate) fn build(cfg: &ScenarioConfig, vehicles: &[VehicleState]) -> Self {
        let mut obs = [0.0; OBS_DIM];
        let ego = &vehicles[0];
        let lateral_scale = cfg.lane_width * cfg.lane_count as f64;
        obs[0] = 1.0;
        obs[1] = (2.0 * ego.position / cfg.road_length - 1.0).clamp(-1.0, 1.0);
        obs[2] = (ego.lane as f64 * cfg.lane_width / lateral_scale).clamp(-1.0, 1.0);
        obs[3] = (ego.speed / cfg.v_max).clamp(-1.0, 1.0);
        obs[4] = 0.0;

        let mut nearby: Vec<(f64, usize)> = vehicles[1..]
            .iter()
            .map(|v| ((v.position - ego.position).abs(), v.id))
            .filter(|(d, _)| *d <= cfg.perception_range)
            .collect();
        nearby.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        for (row, (_, id)) in nearby.iter().take(OBS_ROWS - 1).enumerate() {
            let v = vehicles[1..].iter().find(|v| v.id == *id).unwrap();
            let base = (row + 1) * OBS_FEATURES;
            obs[base] = 1.0;
            obs[base + 1] = ((v.position - ego.position) / cfg.perception_range).clamp(-1.0, 1.0);
            obs[base + 2] = ((v.lane as f64 - ego.lane as f64) * cfg.lane_width / lateral_scale)
                .clamp(-1.0, 1.0);
            obs[base + 3] = ((v.speed - ego.speed) / cfg.v_max).clamp(-1.0, 1.0);
            obs[base + 4] = 0.0;
        }
        Observation(obs)
    }
}
