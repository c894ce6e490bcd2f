#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: usize,
    /// 0 is the rightmost lane.
    pub lane: usize,
    /// Longitudinal position of the vehicle centre (m).
    pub position: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub target_speed: f64,
    /// Lane being left during the first integration step of a lane change.
    pub lane_from: Option<usize>,
}

impl VehicleState {
    pub fn occupies(&self, lane: usize) -> bool {
        self.lane == lane || self.lane_from == Some(lane)
    }
}

/// True iff the vehicles share a lane (counting a lane being left) and their
/// longitudinal extents overlap strictly.
pub fn collision_check(a: &VehicleState, b: &VehicleState) -> bool {
    let shared_lane = a.occupies(b.lane) || b.lane_from.is_some_and(|l| a.occupies(l));
    shared_lane && (a.position - b.position).abs() < 0.5 * (a.length + b.length)
}
