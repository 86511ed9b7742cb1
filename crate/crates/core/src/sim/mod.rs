//! Deterministic synthetic worlds, trajectories and sensor streams.

mod path;

pub use path::{Path, PathPose, Segment};

use crate::builder::{Label, LabeledCloud, CloudPoint, BuildError};
use crate::config::{Config, ConfigError};
use crate::eval::{EvalError, Trajectory};
use crate::geometry::{fit_line_lsq_2d, PixelPoint, Pose};
use crate::ipm::{project_pinhole, AttitudeAngles, CameraIntrinsics, MountCalibration};
use crate::localizer::{
    load_dataset, write_dataset, DatasetError, DatasetFrame, LocalizerConfig, OdometryFrame, PoleLine, Rig,
    SegmentationObservation,
};
use crate::map::{map_load_file, map_save, kdtree::KdTree, LanePoint, MapError, Pole, SemanticMap};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::path::Path as FsPath;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Cloud(#[from] BuildError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Trajectory(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub seed: u64,
    pub segments: Vec<Segment>,
    /// Path length actually generated.
    pub extent: f64,
    pub lane_width: f64,
    /// Period of the dashed right-hand line; 0 makes it solid.
    pub dash_period: f64,
    pub point_spacing: f64,
    pub pole_spacing: f64,
    /// Distance of poles beyond the lane lines.
    pub pole_offset: f64,
    pub pole_height: (f64, f64),
    /// Lattice spacing of asphalt points in the cloud.
    pub asphalt_spacing: f64,
    /// Asphalt extends this far beyond the lane lines.
    pub shoulder: f64,
    pub clutter_points: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            segments: vec![Segment::Straight { length: 100.0 }],
            extent: 100.0,
            lane_width: 3.5,
            dash_period: 6.0,
            point_spacing: 0.25,
            pole_spacing: 20.0,
            pole_offset: 1.0,
            pole_height: (4.0, 6.0),
            asphalt_spacing: 0.2,
            shoulder: 1.0,
            clutter_points: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub seed: u64,
    pub pixel_sigma: f64,
    pub dropout: f64,
    /// Odometry translation noise per meter travelled, per axis.
    pub odo_trans_sigma: f64,
    /// Odometry scale error, as a fraction of distance.
    pub odo_scale_bias: f64,
    /// Odometry heading noise per frame, radians.
    pub odo_yaw_sigma: f64,
    /// Per-frame attitude jitter applied to the true camera.
    pub attitude_sigma: f64,
    /// Extra noise on the attitude reported to the localizer.
    pub attitude_report_sigma: f64,
    /// Noise on each sample of a projected pole before line fitting.
    pub pole_pixel_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub lane_range: f64,
    pub pole_range: f64,
    pub pole_samples: usize,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            lane_range: 30.0,
            pole_range: 50.0,
            pole_samples: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub world: WorldSpec,
    pub noise: NoiseSpec,
    pub sensor: SensorSpec,
    pub rig: Rig,
    pub speed: f64,
    pub rate: f64,
    /// Frame count; `None` drives the whole path once.
    pub frames: Option<usize>,
}

pub fn benchmark_rig() -> Rig {
    let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0, 1280, 720);
    let mount = MountCalibration::forward_facing(1.5, 1.0, 0.0)
        .with_deviation(AttitudeAngles::from_degrees(0.8, -1.9, -1.2));
    Rig::new(k, mount)
}

impl SimSpec {
    /// One lap of a 1 km stadium loop with two lane lines, the right one
    /// dashed, and poles every 20 m.
    pub fn benchmark(seed: u64) -> Self {
        let r = 400.0 / (2.0 * std::f64::consts::PI);
        let half = Segment::Arc {
            radius: r,
            angle: std::f64::consts::PI,
        };
        let straight = Segment::Straight { length: 300.0 };
        Self {
            world: WorldSpec {
                seed,
                segments: vec![straight, half, straight, half],
                extent: 1000.0,
                ..WorldSpec::default()
            },
            noise: NoiseSpec {
                seed: seed.wrapping_add(1),
                pixel_sigma: 2.0,
                dropout: 0.1,
                odo_trans_sigma: 0.005,
                odo_scale_bias: 0.005,
                odo_yaw_sigma: 0.001,
                attitude_sigma: 0.005,
                attitude_report_sigma: 0.0,
                pole_pixel_sigma: 2.0,
            },
            sensor: SensorSpec::default(),
            rig: benchmark_rig(),
            speed: 10.0,
            rate: 5.0,
            frames: None,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.unwrap_or_else(|| {
            let l = self.world.extent.min(Path::new(&self.world.segments, self.world.extent).length());
            (l * self.rate / self.speed).floor() as usize
        })
    }

    pub fn from_config(c: &Config) -> Result<Self, ConfigError> {
        let d = Self::benchmark(c.get_or("world.seed", 0)?);
        let segments = match c.raw("world.segments") {
            None => d.world.segments.clone(),
            Some(s) => s
                .split_whitespace()
                .map(|t| t.parse::<Segment>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConfigError::Value {
                    key: "world.segments".into(),
                    value: s.into(),
                })?,
        };
        let w = &d.world;
        let n = &d.noise;
        let spec = Self {
            world: WorldSpec {
                seed: c.get_or("world.seed", w.seed)?,
                segments,
                extent: c.get_or("world.extent", w.extent)?,
                lane_width: c.get_or("world.lane_width", w.lane_width)?,
                dash_period: c.get_or("world.dash_period", w.dash_period)?,
                point_spacing: c.get_or("world.point_spacing", w.point_spacing)?,
                pole_spacing: c.get_or("world.pole_spacing", w.pole_spacing)?,
                pole_offset: c.get_or("world.pole_offset", w.pole_offset)?,
                pole_height: (
                    c.get_or("world.pole_height_min", w.pole_height.0)?,
                    c.get_or("world.pole_height_max", w.pole_height.1)?,
                ),
                asphalt_spacing: c.get_or("world.asphalt_spacing", w.asphalt_spacing)?,
                shoulder: c.get_or("world.shoulder", w.shoulder)?,
                clutter_points: c.get_or("world.clutter_points", w.clutter_points)?,
            },
            noise: NoiseSpec {
                seed: c.get_or("noise.seed", n.seed)?,
                pixel_sigma: c.get_or("noise.pixel_sigma", n.pixel_sigma)?,
                dropout: c.get_or("noise.dropout", n.dropout)?,
                odo_trans_sigma: c.get_or("noise.odo_trans_sigma", n.odo_trans_sigma)?,
                odo_scale_bias: c.get_or("noise.odo_scale_bias", n.odo_scale_bias)?,
                odo_yaw_sigma: c.get_or("noise.odo_yaw_sigma", n.odo_yaw_sigma)?,
                attitude_sigma: c.get_or("noise.attitude_sigma", n.attitude_sigma)?,
                attitude_report_sigma: c.get_or("noise.attitude_report_sigma", n.attitude_report_sigma)?,
                pole_pixel_sigma: c.get_or("noise.pole_pixel_sigma", n.pole_pixel_sigma)?,
            },
            sensor: SensorSpec {
                lane_range: c.get_or("sensor.lane_range", d.sensor.lane_range)?,
                pole_range: c.get_or("sensor.pole_range", d.sensor.pole_range)?,
                pole_samples: c.get_or("sensor.pole_samples", d.sensor.pole_samples)?,
            },
            rig: if c.raw("camera.fx").is_some() {
                Rig::from_config(c)?
            } else {
                d.rig
            },
            speed: c.get_or("trajectory.speed", d.speed)?,
            rate: c.get_or("trajectory.rate", d.rate)?,
            frames: c.get("trajectory.frames")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn write_config(&self, c: &mut Config) {
        let w = &self.world;
        c.set("world.seed", w.seed);
        c.set(
            "world.segments",
            w.segments.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
        );
        c.set("world.extent", w.extent);
        c.set("world.lane_width", w.lane_width);
        c.set("world.dash_period", w.dash_period);
        c.set("world.point_spacing", w.point_spacing);
        c.set("world.pole_spacing", w.pole_spacing);
        c.set("world.pole_offset", w.pole_offset);
        c.set("world.pole_height_min", w.pole_height.0);
        c.set("world.pole_height_max", w.pole_height.1);
        c.set("world.asphalt_spacing", w.asphalt_spacing);
        c.set("world.shoulder", w.shoulder);
        c.set("world.clutter_points", w.clutter_points);
        let n = &self.noise;
        c.set("noise.seed", n.seed);
        c.set("noise.pixel_sigma", n.pixel_sigma);
        c.set("noise.dropout", n.dropout);
        c.set("noise.odo_trans_sigma", n.odo_trans_sigma);
        c.set("noise.odo_scale_bias", n.odo_scale_bias);
        c.set("noise.odo_yaw_sigma", n.odo_yaw_sigma);
        c.set("noise.attitude_sigma", n.attitude_sigma);
        c.set("noise.attitude_report_sigma", n.attitude_report_sigma);
        c.set("noise.pole_pixel_sigma", n.pole_pixel_sigma);
        c.set("sensor.lane_range", self.sensor.lane_range);
        c.set("sensor.pole_range", self.sensor.pole_range);
        c.set("sensor.pole_samples", self.sensor.pole_samples);
        c.set("trajectory.speed", self.speed);
        c.set("trajectory.rate", self.rate);
        if let Some(f) = self.frames {
            c.set("trajectory.frames", f);
        }
        self.rig.write_config(c);
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        let n = &self.noise;
        let checks = [
            ("world.point_spacing", w.point_spacing > 0.0),
            ("world.pole_spacing", w.pole_spacing > 0.0),
            ("world.asphalt_spacing", w.asphalt_spacing > 0.0),
            ("world.extent", w.extent >= 0.0),
            ("world.lane_width", w.lane_width > 0.0),
            ("world.dash_period", w.dash_period >= 0.0),
            ("world.pole_height_max", w.pole_height.1 > w.pole_height.0 && w.pole_height.0 > 0.0),
            ("noise.dropout", (0.0..=1.0).contains(&n.dropout)),
            (
                "noise",
                [
                    n.pixel_sigma,
                    n.odo_trans_sigma,
                    n.odo_yaw_sigma,
                    n.attitude_sigma,
                    n.attitude_report_sigma,
                    n.pole_pixel_sigma,
                ]
                .iter()
                .all(|v| *v >= 0.0),
            ),
            ("trajectory.speed", self.speed > 0.0),
            ("trajectory.rate", self.rate > 0.0),
            ("sensor.pole_samples", self.sensor.pole_samples >= 2),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((key, _)) => Err(ConfigError::Value {
                key: (*key).into(),
                value: "out of range".into(),
            }),
            None => Ok(()),
        }
    }
}

fn stations(length: f64, spacing: f64, closed: bool) -> Vec<f64> {
    let n = (length / spacing + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|i| i as f64 * spacing).collect();
    if closed && out.last().is_some_and(|s| (length - s).abs() < 1e-6) && out.len() > 1 {
        out.pop();
    }
    out
}

fn dash_present(s: f64, period: f64) -> bool {
    period <= 0.0 || s.rem_euclid(period) < 0.5 * period
}

/// Lane points (left line solid, right line dashed) and poles.
pub fn generate_map(spec: &WorldSpec) -> SemanticMap {
    let path = Path::new(&spec.segments, spec.extent);
    if path.length() <= 0.0 {
        return SemanticMap::default();
    }
    let closed = path.is_closed();
    let half = 0.5 * spec.lane_width;
    let mut lanes = Vec::new();
    for (offset, dashed) in [(half, false), (-half, true)] {
        for s in stations(path.length(), spec.point_spacing, closed) {
            if dashed && !dash_present(s, spec.dash_period) {
                continue;
            }
            let (x, y) = path.pose_at(s).lateral(offset);
            lanes.push(LanePoint::new(x, y, 0.0));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut poles = Vec::new();
    let mut s = 0.5 * spec.pole_spacing;
    let mut j = 0usize;
    while s < path.length() {
        let side = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        let (x, y) = path.pose_at(s).lateral(side * (half + spec.pole_offset));
        let h = rng.random_range(spec.pole_height.0..spec.pole_height.1);
        poles.push(Pole::new(x, y, 0.0, h));
        s += spec.pole_spacing;
        j += 1;
    }
    SemanticMap::new(lanes, poles)
}

/// Builds the map and a labeled cloud whose painted points reproduce it.
pub fn generate_world(spec: &WorldSpec) -> (SemanticMap, LabeledCloud) {
    let map = generate_map(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let path = Path::new(&spec.segments, spec.extent);
    let mut points = Vec::new();
    if map.is_empty() {
        return (map, LabeledCloud { points });
    }
    let closed = path.is_closed();
    let half = 0.5 * spec.lane_width;
    // Paint: each lane point and its neighbors 5 cm to either side.
    let mut paint = Vec::new();
    for (offset, dashed) in [(half, false), (-half, true)] {
        for s in stations(path.length(), spec.point_spacing, closed) {
            if dashed && !dash_present(s, spec.dash_period) {
                continue;
            }
            let pose = path.pose_at(s);
            for d in [0.0, -0.05, 0.05] {
                let (x, y) = pose.lateral(offset + d);
                paint.push(Vector3::new(x, y, 0.0));
            }
        }
    }
    for p in &paint {
        points.push(CloudPoint {
            position: *p,
            intensity: rng.random_range(180.0..240.0f64).round(),
            label: Label::Ground,
        });
    }
    // Asphalt lattice, kept clear of the paint.
    let paint_index = KdTree::build(&paint);
    let reach = half + spec.shoulder;
    let lateral_steps = (2.0 * reach / spec.asphalt_spacing).floor() as usize;
    for s in stations(path.length(), spec.asphalt_spacing, closed) {
        let pose = path.pose_at(s);
        for j in 0..=lateral_steps {
            let (x, y) = pose.lateral(-reach + j as f64 * spec.asphalt_spacing);
            let p = Vector3::new(x, y, 0.0);
            if !paint_index.within_radius(&p, 0.25).is_empty() {
                continue;
            }
            points.push(CloudPoint {
                position: p,
                intensity: rng.random_range(20.0..60.0f64).round(),
                label: Label::Ground,
            });
        }
    }
    for pole in map.poles() {
        let rings = ((pole.z_high - pole.z_low) / 0.05).round() as usize;
        for i in 0..=rings {
            let z = pole.z_low + (pole.z_high - pole.z_low) * i as f64 / rings as f64;
            for a in 0..8 {
                let t = a as f64 * std::f64::consts::FRAC_PI_4;
                points.push(CloudPoint {
                    position: Vector3::new(pole.x + 0.05 * t.cos(), pole.y + 0.05 * t.sin(), z),
                    intensity: rng.random_range(100.0..150.0f64).round(),
                    label: Label::Pole,
                });
            }
        }
    }
    for _ in 0..spec.clutter_points {
        let pose = path.pose_at(rng.random_range(0.0..path.length()));
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let (x, y) = pose.lateral(side * rng.random_range(reach + 2.0..reach + 10.0));
        points.push(CloudPoint {
            position: Vector3::new(x, y, rng.random_range(0.0..8.0)),
            intensity: rng.random_range(0.0..255.0f64).round(),
            label: Label::Other,
        });
    }
    (map, LabeledCloud { points })
}

/// Ground-truth vehicle pose and true camera attitude for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthFrame {
    pub timestamp: f64,
    pub pose: Pose,
    pub attitude: AttitudeAngles,
}

/// Poses along the path centerline at `speed / rate` spacing, with
/// per-frame attitude jitter.
pub fn generate_trajectory(spec: &SimSpec) -> Vec<TruthFrame> {
    let path = Path::new(&spec.world.segments, spec.world.extent);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise.seed ^ 0x5151_5151);
    let jitter = Normal::new(0.0, spec.noise.attitude_sigma).expect("sigma is non-negative");
    (0..spec.frame_count())
        .map(|k| {
            let s = k as f64 * spec.speed / spec.rate;
            let p = path.pose_at(s);
            let attitude = if spec.noise.attitude_sigma > 0.0 {
                AttitudeAngles::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                AttitudeAngles::default()
            };
            TruthFrame {
                timestamp: k as f64 / spec.rate,
                pose: Pose::planar(p.x, p.y, p.heading),
                attitude,
            }
        })
        .collect()
}

/// Always consumes one variate so streams stay aligned across noise levels.
fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Renders what the segmentation network would report from `pose` with
/// the true camera `attitude`, using exact projection.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_observation(
    map: &SemanticMap,
    pose: &Pose,
    attitude: &AttitudeAngles,
    rig: &Rig,
    sensor: &SensorSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> SegmentationObservation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = &rig.intrinsics;
    let camera = *pose * rig.camera_in_vehicle(attitude);
    let mut obs = SegmentationObservation::default();
    let reach = sensor.lane_range + 5.0;
    for lp in map.query_radius(&pose.translation, reach) {
        let c = camera.inverse_transform_point(&lp.position);
        if !(c.z > 0.0 && c.z <= sensor.lane_range) {
            continue;
        }
        let Ok(px) = project_pinhole(&c, k) else { continue };
        if !k.contains(&px) {
            continue;
        }
        // Draw both variates for every visible point so the stream does not
        // depend on which points are dropped.
        let drop = rng.random::<f64>() < noise.dropout;
        let noisy = PixelPoint::new(
            px.u + gaussian(&mut rng, noise.pixel_sigma),
            px.v + gaussian(&mut rng, noise.pixel_sigma),
        );
        if !drop && k.contains(&noisy) {
            obs.lane_pixels.push(noisy);
        }
    }
    for pole in map.poles() {
        let ends = pole.endpoints();
        let cam: Vec<Vector3<f64>> = ends.iter().map(|e| camera.inverse_transform_point(e)).collect();
        if !cam.iter().all(|c| c.z > 0.0 && c.z <= sensor.pole_range) {
            continue;
        }
        let px: Vec<PixelPoint> = cam.iter().filter_map(|c| project_pinhole(c, k).ok()).collect();
        if px.len() != 2 || !px.iter().all(|p| k.contains(p)) {
            continue;
        }
        let n = sensor.pole_samples;
        let samples: Vec<PixelPoint> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                PixelPoint::new(
                    px[0].u + t * (px[1].u - px[0].u) + gaussian(&mut rng, noise.pole_pixel_sigma),
                    px[0].v + t * (px[1].v - px[0].v) + gaussian(&mut rng, noise.pole_pixel_sigma),
                )
            })
            .collect();
        let Ok(line) = fit_line_lsq_2d(&samples) else { continue };
        let (v_min, v_max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.v), hi.max(p.v)));
        obs.pole_lines.push(PoleLine { line, v_min, v_max });
    }
    obs
}

/// Relative ground-truth motions perturbed and re-chained; frame 0 is
/// anchored at ground truth. Reported attitudes get their own noise.
pub fn synthesize_odometry(truth: &[TruthFrame], noise: &NoiseSpec, seed: u64) -> Vec<OdometryFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<OdometryFrame> = Vec::with_capacity(truth.len());
    for (k, f) in truth.iter().enumerate() {
        let pose = if k == 0 {
            f.pose
        } else {
            let delta = truth[k - 1].pose.inverse() * f.pose;
            let d = delta.translation.norm();
            let sigma = noise.odo_trans_sigma * d;
            let t = delta.translation * (1.0 + noise.odo_scale_bias)
                + Vector3::new(gaussian(&mut rng, sigma), gaussian(&mut rng, sigma), 0.0);
            let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), gaussian(&mut rng, noise.odo_yaw_sigma));
            out[k - 1].pose * Pose::new(delta.rotation * yaw, t)
        };
        let s = noise.attitude_report_sigma;
        let attitude = f.attitude.add(&AttitudeAngles::new(
            gaussian(&mut rng, s),
            gaussian(&mut rng, s),
            gaussian(&mut rng, s),
        ));
        out.push(OdometryFrame {
            timestamp: f.timestamp,
            pose,
            attitude,
        });
    }
    out
}

/// Everything a simulation run produces.
#[derive(Debug, Clone)]
pub struct GroundTruthBundle {
    pub map: SemanticMap,
    pub cloud: LabeledCloud,
    pub rig: Rig,
    pub truth: Vec<TruthFrame>,
    /// Noisy sensor stream for the localizer.
    pub frames: Vec<DatasetFrame>,
}

impl GroundTruthBundle {
    pub fn ground_truth(&self) -> Trajectory {
        let mut t = Trajectory::new();
        for f in &self.truth {
            t.push(f.timestamp, f.pose);
        }
        t
    }

    /// Odometry poses as a trajectory.
    pub fn odometry(&self) -> Trajectory {
        let mut t = Trajectory::new();
        for f in &self.frames {
            t.push(f.odometry.timestamp, f.odometry.pose);
        }
        t
    }
}

fn frame_seed(base: u64, k: usize) -> u64 {
    base ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Full simulation: world, trajectory, observations and odometry.
pub fn simulate(spec: &SimSpec) -> GroundTruthBundle {
    let (map, cloud) = generate_world(&spec.world);
    let truth = generate_trajectory(spec);
    let odometry = synthesize_odometry(&truth, &spec.noise, spec.noise.seed ^ 0x0d0d_0d0d);
    let frames = truth
        .iter()
        .zip(odometry)
        .enumerate()
        .map(|(k, (t, odo))| {
            let mut observation = synthesize_observation(
                &map,
                &t.pose,
                &t.attitude,
                &spec.rig,
                &spec.sensor,
                &spec.noise,
                frame_seed(spec.noise.seed, k),
            );
            observation.frame_id = k as u64;
            observation.timestamp = t.timestamp;
            DatasetFrame {
                observation,
                odometry: odo,
            }
        })
        .collect();
    GroundTruthBundle {
        map,
        cloud,
        rig: spec.rig,
        truth,
        frames,
    }
}

pub const MAP_FILE: &str = "map.semmap";
pub const CLOUD_FILE: &str = "cloud.txt";
pub const DATASET_FILE: &str = "dataset.txt";
pub const GT_FILE: &str = "gt.txt";
pub const ATTITUDE_FILE: &str = "gt_attitude.txt";
pub const RIG_FILE: &str = "localize.cfg";

fn write_file(path: &FsPath, contents: impl AsRef<[u8]>) -> Result<(), SimError> {
    std::fs::write(path, contents).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes map, cloud, dataset, ground truth and a localizer config into `dir`.
pub fn export_dataset(bundle: &GroundTruthBundle, dir: impl AsRef<FsPath>) -> Result<(), SimError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| SimError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join(MAP_FILE), map_save(&bundle.map))?;
    write_file(&dir.join(CLOUD_FILE), bundle.cloud.to_text())?;
    write_file(&dir.join(DATASET_FILE), write_dataset(&bundle.frames))?;
    write_file(&dir.join(GT_FILE), bundle.ground_truth().to_text())?;
    let att: String = bundle
        .truth
        .iter()
        .map(|f| {
            format!(
                "{:.6} {:.12} {:.12} {:.12}\n",
                f.timestamp, f.attitude.roll, f.attitude.pitch, f.attitude.yaw
            )
        })
        .collect();
    write_file(&dir.join(ATTITUDE_FILE), att)?;
    let mut cfg = Config::default();
    bundle.rig.write_config(&mut cfg);
    LocalizerConfig::default().write_config(&mut cfg);
    write_file(&dir.join(RIG_FILE), cfg.to_text())?;
    Ok(())
}

/// Reads back what [`export_dataset`] wrote.
pub fn import_dataset(dir: impl AsRef<FsPath>) -> Result<GroundTruthBundle, SimError> {
    let dir = dir.as_ref();
    let map = map_load_file(dir.join(MAP_FILE))?;
    let cloud = LabeledCloud::load(dir.join(CLOUD_FILE))?;
    let frames = load_dataset(dir.join(DATASET_FILE))?;
    let gt = Trajectory::load(dir.join(GT_FILE))?;
    let att_path = dir.join(ATTITUDE_FILE);
    let att_text = std::fs::read_to_string(&att_path).map_err(|source| SimError::Io {
        path: att_path.display().to_string(),
        source,
    })?;
    let mut attitudes = Vec::new();
    for (no, line) in att_text.lines().enumerate() {
        let v: Vec<f64> = line.split_whitespace().filter_map(|f| f.parse().ok()).collect();
        if v.len() != 4 {
            return Err(SimError::Trajectory(EvalError::Format {
                line: no + 1,
                message: "expected `<timestamp> <roll> <pitch> <yaw>`".into(),
            }));
        }
        attitudes.push(AttitudeAngles::new(v[1], v[2], v[3]));
    }
    if attitudes.len() != gt.len() {
        return Err(SimError::Trajectory(EvalError::Format {
            line: attitudes.len() + 1,
            message: format!("{} attitudes for {} poses", attitudes.len(), gt.len()),
        }));
    }
    let truth = gt
        .stamps
        .iter()
        .zip(&gt.poses)
        .zip(attitudes)
        .map(|((t, p), a)| TruthFrame {
            timestamp: *t,
            pose: *p,
            attitude: a,
        })
        .collect();
    let rig = Rig::from_config(&Config::load(dir.join(RIG_FILE))?)?;
    Ok(GroundTruthBundle {
        map,
        cloud,
        rig,
        truth,
        frames,
    })
}
