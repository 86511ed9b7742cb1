//! Global semantic map: lane points, vertical poles, spatial index and
//! grid-zone tiling.

mod io;
pub mod kdtree;

pub use io::{map_load, map_load_file, map_load_with_tile_size, map_save, map_save_file, MAP_HEADER};

use crate::geometry::Pose;
use crate::ipm::{project_pinhole, CameraIntrinsics};
use kdtree::KdTree;
use nalgebra::Vector3;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DEFAULT_TILE_SIZE: f64 = 50.0;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported map version `{0}`")]
    Version(String),
    #[error("map holds {available} lane points, {requested} requested")]
    Insufficient { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePoint {
    pub position: Vector3<f64>,
}

impl LanePoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
        }
    }
}

/// Vertical pole between `(x, y, z_low)` and `(x, y, z_high)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub x: f64,
    pub y: f64,
    pub z_low: f64,
    pub z_high: f64,
}

impl Pole {
    pub fn new(x: f64, y: f64, z_low: f64, z_high: f64) -> Self {
        Self {
            x,
            y,
            z_low,
            z_high,
        }
    }

    pub fn endpoints(&self) -> [Vector3<f64>; 2] {
        [
            Vector3::new(self.x, self.y, self.z_low),
            Vector3::new(self.x, self.y, self.z_high),
        ]
    }

    pub fn midpoint(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 0.5 * (self.z_low + self.z_high))
    }
}

pub type TileId = (i64, i64);

/// Read-only during localization; the index is rebuilt on every mutation.
#[derive(Debug, Clone)]
pub struct SemanticMap {
    lanes: Vec<LanePoint>,
    poles: Vec<Pole>,
    tile_size: f64,
    index: KdTree,
    tiles: BTreeMap<TileId, Tile>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tile {
    pub lanes: Vec<usize>,
    pub poles: Vec<usize>,
}

impl Default for SemanticMap {
    fn default() -> Self {
        Self::new(Vec::new(), Vec::new())
    }
}

impl SemanticMap {
    pub fn new(lanes: Vec<LanePoint>, poles: Vec<Pole>) -> Self {
        Self::with_tile_size(lanes, poles, DEFAULT_TILE_SIZE)
    }

    pub fn with_tile_size(lanes: Vec<LanePoint>, poles: Vec<Pole>, tile_size: f64) -> Self {
        assert!(tile_size > 0.0, "tile size must be positive");
        let mut map = SemanticMap {
            lanes,
            poles,
            tile_size,
            index: KdTree::default(),
            tiles: BTreeMap::new(),
        };
        map.reindex();
        map
    }

    fn reindex(&mut self) {
        let pts: Vec<_> = self.lanes.iter().map(|l| l.position).collect();
        self.index = KdTree::build(&pts);
        self.tiles.clear();
        for (i, l) in self.lanes.iter().enumerate() {
            let id = self.tile_of(l.position.x, l.position.y);
            self.tiles.entry(id).or_default().lanes.push(i);
        }
        for (i, p) in self.poles.iter().enumerate() {
            let id = self.tile_of(p.x, p.y);
            self.tiles.entry(id).or_default().poles.push(i);
        }
    }

    pub fn lanes(&self) -> &[LanePoint] {
        &self.lanes
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    pub fn tile_size(&self) -> f64 {
        self.tile_size
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty() && self.poles.is_empty()
    }

    pub fn push_lanes(&mut self, more: impl IntoIterator<Item = LanePoint>) {
        self.lanes.extend(more);
        self.reindex();
    }

    pub fn push_poles(&mut self, more: impl IntoIterator<Item = Pole>) {
        self.poles.extend(more);
        self.reindex();
    }

    pub fn tile_of(&self, x: f64, y: f64) -> TileId {
        (
            (x / self.tile_size).floor() as i64,
            (y / self.tile_size).floor() as i64,
        )
    }

    pub fn tiles(&self) -> &BTreeMap<TileId, Tile> {
        &self.tiles
    }

    /// Lane points within `radius` (inclusive), nearest first.
    pub fn query_radius(&self, center: &Vector3<f64>, radius: f64) -> Vec<LanePoint> {
        self.index
            .within_radius(center, radius)
            .into_iter()
            .map(|n| self.lanes[n.index])
            .collect()
    }

    /// The `k` nearest lane points in ascending distance; ties broken by
    /// (x, y, z).
    pub fn query_k_nearest(
        &self,
        center: &Vector3<f64>,
        k: usize,
    ) -> Result<Vec<LanePoint>, MapError> {
        if self.lanes.len() < k {
            return Err(MapError::Insufficient {
                requested: k,
                available: self.lanes.len(),
            });
        }
        Ok(self
            .index
            .nearest(center, k)
            .into_iter()
            .map(|n| self.lanes[n.index])
            .collect())
    }

    /// Nearest lane point and its distance.
    pub fn nearest(&self, center: &Vector3<f64>) -> Option<(LanePoint, f64)> {
        self.index
            .nearest(center, 1)
            .first()
            .map(|n| (self.lanes[n.index], n.distance()))
    }

    /// Tiles intersecting the horizontal disc of `radius` around the pose
    /// translation, whether or not they hold content.
    pub fn tiles_in_range(&self, pose: &Pose, radius: f64) -> BTreeSet<TileId> {
        let (cx, cy) = (pose.translation.x, pose.translation.y);
        let s = self.tile_size;
        let lo = self.tile_of(cx - radius, cy - radius);
        let hi = self.tile_of(cx + radius, cy + radius);
        let mut out = BTreeSet::new();
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                let (x0, y0) = (i as f64 * s, j as f64 * s);
                let dx = (x0 - cx).max(0.0).max(cx - (x0 + s));
                let dy = (y0 - cy).max(0.0).max(cy - (y0 + s));
                if dx * dx + dy * dy <= radius * radius {
                    out.insert((i, j));
                }
            }
        }
        out
    }

    /// Submap holding exactly the lane points and poles of the given tiles.
    pub fn load_tiles(&self, ids: &BTreeSet<TileId>) -> SemanticMap {
        let mut lane_idx = Vec::new();
        let mut pole_idx = Vec::new();
        for id in ids {
            if let Some(t) = self.tiles.get(id) {
                lane_idx.extend_from_slice(&t.lanes);
                pole_idx.extend_from_slice(&t.poles);
            }
        }
        lane_idx.sort_unstable();
        pole_idx.sort_unstable();
        SemanticMap::with_tile_size(
            lane_idx.into_iter().map(|i| self.lanes[i]).collect(),
            pole_idx.into_iter().map(|i| self.poles[i]).collect(),
            self.tile_size,
        )
    }

    /// Poles whose midpoint projects inside the image with positive depth no
    /// greater than `max_range`. `camera_pose` maps camera to world.
    pub fn poles_in_view(
        &self,
        camera_pose: &Pose,
        k: &CameraIntrinsics,
        max_range: f64,
    ) -> Vec<(usize, Pole)> {
        self.poles
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let c = camera_pose.inverse_transform_point(&p.midpoint());
                c.z <= max_range
                    && project_pinhole(&c, k).is_ok_and(|px| k.contains(&px))
            })
            .map(|(i, p)| (i, *p))
            .collect()
    }
}
