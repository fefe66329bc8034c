//! Track records owned by a tracker instance.

use crate::appearance::AppearanceMemory;
use crate::geometry::BoundingBox;
use crate::kalman::KalmanState;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrackStatus {
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub track_id: u64,
    pub class_id: i32,
    pub status: TrackStatus,
    pub kalman: KalmanState,
    /// Frame of the most recent matched detection.
    pub last_frame: u32,
    /// Consecutive frames without a match.
    pub miss_count: u32,
    pub appearance: AppearanceMemory,
    /// Reported `(frame, box)` outputs.
    pub history: Vec<(u32, BoundingBox)>,
}

impl Track {
    /// Box implied by the Kalman mean; height and width floored at zero.
    pub fn state_box(&self) -> BoundingBox {
        let [cx, cy, a, h] = self.kalman.measurement();
        let h = h.max(0.0);
        let w = (a * h).max(0.0);
        BoundingBox::tlwh(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn is_alive(&self) -> bool {
        self.status != TrackStatus::Removed
    }
}
