//! Sliding window of lifted lane points, kept in the newest vehicle frame.

use crate::geometry::Pose;
use nalgebra::Vector3;
use std::collections::VecDeque;

pub const DEFAULT_WINDOW_FRAMES: usize = 10;
pub const DEFAULT_WINDOW_SPAN: f64 = 50.0;

#[derive(Debug, Clone)]
struct Entry {
    points: Vec<Vector3<f64>>,
    /// Pose of this entry's vehicle frame in the newest vehicle frame.
    to_newest: Pose,
    /// Path length from the previous (older) entry to this one.
    step: f64,
}

#[derive(Debug, Clone)]
pub struct LocalLaneMap {
    entries: VecDeque<Entry>,
    capacity: usize,
    max_span: f64,
}

impl Default for LocalLaneMap {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW_FRAMES, DEFAULT_WINDOW_SPAN)
    }
}

impl LocalLaneMap {
    pub fn new(capacity: usize, max_span: f64) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        assert!(max_span >= 0.0, "window span must be non-negative");
        Self {
            entries: VecDeque::new(),
            capacity,
            max_span,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Path length covered by the window, oldest to newest frame.
    pub fn span(&self) -> f64 {
        self.entries.iter().skip(1).map(|e| e.step).sum()
    }

    /// Adds a frame. `motion` is the new vehicle pose expressed in the
    /// previous newest frame; it is ignored for the first push.
    pub fn push(&mut self, points: Vec<Vector3<f64>>, motion: &Pose) {
        let step = if self.entries.is_empty() {
            0.0
        } else {
            motion.translation.norm()
        };
        let back = motion.inverse();
        for e in &mut self.entries {
            e.to_newest = back * e.to_newest;
        }
        self.entries.push_back(Entry {
            points,
            to_newest: Pose::identity(),
            step,
        });
        while self.entries.len() > self.capacity || (self.entries.len() > 1 && self.span() > self.max_span) {
            self.entries.pop_front();
        }
    }

    /// Every point in the newest vehicle frame, newest entry first.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.entries.iter().map(|e| e.points.len()).sum());
        for e in self.entries.iter().rev() {
            out.extend(e.points.iter().map(|p| e.to_newest.transform_point(p)));
        }
        out
    }

    /// Like [`points`](Self::points) but keeps only the first point falling
    /// in each `voxel`-sized horizontal cell, so newer frames win.
    pub fn points_thinned(&self, voxel: f64) -> Vec<Vector3<f64>> {
        let all = self.points();
        if !(voxel > 0.0) {
            return all;
        }
        let mut seen = std::collections::HashSet::with_capacity(all.len());
        all.into_iter()
            .filter(|p| seen.insert(((p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64)))
            .collect()
    }
}
