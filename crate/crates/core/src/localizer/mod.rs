//! Map-based localization: odometry prior, lane lifting, sliding window,
//! association and Levenberg-Marquardt pose refinement.

mod dataset;
mod window;

pub use dataset::{load_dataset, parse_dataset, save_dataset, write_dataset, DatasetError, DatasetFrame};
pub use window::{LocalLaneMap, DEFAULT_WINDOW_FRAMES, DEFAULT_WINDOW_SPAN};

use crate::config::{Config, ConfigError};
use crate::eval::Trajectory;
use crate::geometry::{fit_line_lsq_3d, ImageLine, Line3D, PixelPoint, Pose};
use crate::ipm::{ipm_enhanced, AttitudeAngles, CameraIntrinsics, IpmOptions, MountCalibration, RollPivot};
use crate::map::{Pole, SemanticMap, TileId};
use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen, Vector3, Vector6};
use std::collections::BTreeSet;

/// Observed pole: a fitted image line and the vertical extent it covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleLine {
    pub line: ImageLine,
    pub v_min: f64,
    pub v_max: f64,
}

/// Segmentation output for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentationObservation {
    pub frame_id: u64,
    pub timestamp: f64,
    pub lane_pixels: Vec<PixelPoint>,
    pub pole_lines: Vec<PoleLine>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryFrame {
    pub timestamp: f64,
    pub pose: Pose,
    pub attitude: AttitudeAngles,
}

/// Camera intrinsics, mounting and lifting options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rig {
    pub intrinsics: CameraIntrinsics,
    pub mount: MountCalibration,
    pub ipm: IpmOptions,
}

impl Rig {
    pub fn new(intrinsics: CameraIntrinsics, mount: MountCalibration) -> Self {
        Self {
            intrinsics,
            mount,
            ipm: IpmOptions::default(),
        }
    }

    pub fn from_config(c: &Config) -> Result<Self, ConfigError> {
        let mut k = CameraIntrinsics::new(
            c.require("camera.fx")?,
            c.require("camera.fy")?,
            c.require("camera.cx")?,
            c.require("camera.cy")?,
            c.require("camera.width")?,
            c.require("camera.height")?,
        );
        k.skew = c.get_or("camera.skew", 0.0)?;
        let mount = MountCalibration::forward_facing(
            c.require("mount.height")?,
            c.get_or("mount.forward", 0.0)?,
            c.get_or("mount.left", 0.0)?,
        )
        .with_deviation(AttitudeAngles::new(
            c.get_or("mount.roll", 0.0)?,
            c.get_or("mount.pitch", 0.0)?,
            c.get_or("mount.yaw", 0.0)?,
        ));
        let defaults = IpmOptions::default();
        let roll_pivot = match c.raw("ipm.roll_pivot").unwrap_or("principal") {
            "principal" => RollPivot::PrincipalPoint,
            "origin" => RollPivot::ImageOrigin,
            other => {
                return Err(ConfigError::Value {
                    key: "ipm.roll_pivot".into(),
                    value: other.into(),
                })
            }
        };
        Ok(Self {
            intrinsics: k,
            mount,
            ipm: IpmOptions {
                horizon_eps: c.get_or("ipm.horizon_eps", defaults.horizon_eps)?,
                max_range: c.get_or("ipm.max_range", defaults.max_range)?,
                roll_pivot,
            },
        })
    }

    pub fn write_config(&self, c: &mut Config) {
        let k = &self.intrinsics;
        c.set("camera.fx", k.fx);
        c.set("camera.fy", k.fy);
        c.set("camera.cx", k.cx);
        c.set("camera.cy", k.cy);
        c.set("camera.skew", k.skew);
        c.set("camera.width", k.width);
        c.set("camera.height", k.height);
        let m = &self.mount;
        c.set("mount.height", m.height);
        c.set("mount.forward", m.extrinsic.translation.x);
        c.set("mount.left", m.extrinsic.translation.y);
        c.set("mount.roll", m.deviation.roll);
        c.set("mount.pitch", m.deviation.pitch);
        c.set("mount.yaw", m.deviation.yaw);
        c.set("ipm.horizon_eps", self.ipm.horizon_eps);
        c.set("ipm.max_range", self.ipm.max_range);
        c.set(
            "ipm.roll_pivot",
            match self.ipm.roll_pivot {
                RollPivot::PrincipalPoint => "principal",
                RollPivot::ImageOrigin => "origin",
            },
        );
    }

    pub fn camera_in_vehicle(&self, attitude: &AttitudeAngles) -> Pose {
        self.mount.camera_in_vehicle(attitude)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
    /// Lane association gate in meters.
    pub gate: f64,
    /// Map points used for each local line fit.
    pub line_neighbors: usize,
    /// Huber scale on each correspondence's residual norm; `None` is plain
    /// least squares.
    pub huber: Option<f64>,
    /// Pole association gate in pixels.
    pub pole_gate: f64,
    /// Scales pixel residuals against meter residuals.
    pub pole_weight: f64,
    pub pole_max_range: f64,
    pub use_point_point: bool,
    pub use_point_line: bool,
    pub use_poles: bool,
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            initial_damping: 1e-4,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-10,
            gate: 1.0,
            line_neighbors: 5,
            huber: None,
            pole_gate: 30.0,
            pole_weight: 1.0,
            pole_max_range: 50.0,
            use_point_point: true,
            use_point_line: true,
            use_poles: true,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizerConfig {
    pub solver: SolverConfig,
    pub window_frames: usize,
    pub window_span: f64,
    /// Horizontal cell size for thinning the window; 0 keeps every point.
    pub window_voxel: f64,
    pub tile_radius: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            window_frames: DEFAULT_WINDOW_FRAMES,
            window_span: DEFAULT_WINDOW_SPAN,
            window_voxel: 0.0,
            tile_radius: 100.0,
        }
    }
}

impl LocalizerConfig {
    pub fn from_config(c: &Config) -> Result<Self, ConfigError> {
        let d = Self::default();
        let s = d.solver;
        let huber: f64 = c.get_or("solver.huber", 0.0)?;
        let cfg = Self {
            solver: SolverConfig {
                max_iterations: c.get_or("solver.max_iterations", s.max_iterations)?,
                initial_damping: c.get_or("solver.damping", s.initial_damping)?,
                cost_tolerance: c.get_or("solver.cost_tol", s.cost_tolerance)?,
                step_tolerance: c.get_or("solver.step_tol", s.step_tolerance)?,
                gate: c.get_or("solver.gate", s.gate)?,
                line_neighbors: c.get_or("solver.line_neighbors", s.line_neighbors)?,
                huber: (huber > 0.0).then_some(huber),
                pole_gate: c.get_or("solver.pole_gate", s.pole_gate)?,
                pole_weight: c.get_or("solver.pole_weight", s.pole_weight)?,
                pole_max_range: c.get_or("solver.pole_max_range", s.pole_max_range)?,
                use_point_point: c.get_or("solver.point_point", s.use_point_point)?,
                use_point_line: c.get_or("solver.point_line", s.use_point_line)?,
                use_poles: c.get_or("solver.poles", s.use_poles)?,
                fd_step: c.get_or("solver.fd_step", s.fd_step)?,
            },
            window_frames: c.get_or("window.frames", d.window_frames)?,
            window_span: c.get_or("window.span", d.window_span)?,
            window_voxel: c.get_or("window.voxel", d.window_voxel)?,
            tile_radius: c.get_or("map.tile_radius", d.tile_radius)?,
        };
        let positive = [
            ("solver.damping", cfg.solver.initial_damping),
            ("solver.gate", cfg.solver.gate),
            ("solver.pole_gate", cfg.solver.pole_gate),
            ("solver.fd_step", cfg.solver.fd_step),
            ("window.span", cfg.window_span),
            ("map.tile_radius", cfg.tile_radius),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(ConfigError::Value {
                    key: key.into(),
                    value: v.to_string(),
                });
            }
        }
        if cfg.window_frames == 0 || cfg.solver.line_neighbors < 2 || cfg.solver.pole_weight < 0.0 {
            return Err(ConfigError::Value {
                key: "window.frames / solver.line_neighbors / solver.pole_weight".into(),
                value: "out of range".into(),
            });
        }
        Ok(cfg)
    }

    pub fn write_config(&self, c: &mut Config) {
        let s = &self.solver;
        c.set("solver.max_iterations", s.max_iterations);
        c.set("solver.damping", s.initial_damping);
        c.set("solver.cost_tol", s.cost_tolerance);
        c.set("solver.step_tol", s.step_tolerance);
        c.set("solver.gate", s.gate);
        c.set("solver.line_neighbors", s.line_neighbors);
        c.set("solver.huber", s.huber.unwrap_or(0.0));
        c.set("solver.pole_gate", s.pole_gate);
        c.set("solver.pole_weight", s.pole_weight);
        c.set("solver.pole_max_range", s.pole_max_range);
        c.set("solver.point_point", s.use_point_point);
        c.set("solver.point_line", s.use_point_line);
        c.set("solver.poles", s.use_poles);
        c.set("solver.fd_step", s.fd_step);
        c.set("window.frames", self.window_frames);
        c.set("window.span", self.window_span);
        c.set("window.voxel", self.window_voxel);
        c.set("map.tile_radius", self.tile_radius);
    }
}

/// Odometry-chained prior: `T_prev * inv(odo_prev) * odo_k`.
pub fn prior_pose(t_prev: &Pose, odo_prev: &Pose, odo_k: &Pose) -> Pose {
    *t_prev * (odo_prev.inverse() * *odo_k)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LiftResult {
    /// Lane points in the vehicle frame.
    pub points: Vec<Vector3<f64>>,
    /// Pixels dropped as above the horizon or beyond range.
    pub rejected: usize,
}

/// Lifts each lane pixel to the ground and expresses it in the vehicle frame.
pub fn lift_lane_pixels(
    obs: &SegmentationObservation,
    k: &CameraIntrinsics,
    calib: &MountCalibration,
    attitude: &AttitudeAngles,
    opts: &IpmOptions,
) -> LiftResult {
    let mut out = LiftResult::default();
    for px in &obs.lane_pixels {
        match ipm_enhanced(px, k, calib, attitude, opts) {
            Ok(g) => out.points.push(calib.extrinsic.transform_point(&g.to_vector())),
            Err(_) => out.rejected += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CorrespondenceKind {
    LanePointPoint,
    LanePointLine,
    PoleEndpointLine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    MapPoint(Vector3<f64>),
    MapLine(Line3D),
    Image(ImageLine),
}

/// One residual term. Lane sources are in the vehicle frame; pole sources
/// are world endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub kind: CorrespondenceKind,
    pub source: Vector3<f64>,
    pub target: Target,
    pub gate: f64,
}

impl Correspondence {
    pub fn dim(&self) -> usize {
        match self.kind {
            CorrespondenceKind::PoleEndpointLine => 1,
            _ => 3,
        }
    }
}

/// What residual evaluation needs besides the correspondences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualModel {
    pub intrinsics: CameraIntrinsics,
    pub camera_in_vehicle: Pose,
    pub pole_weight: f64,
    pub huber: Option<f64>,
}

impl ResidualModel {
    pub fn new(rig: &Rig, attitude: &AttitudeAngles, cfg: &SolverConfig) -> Self {
        Self {
            intrinsics: rig.intrinsics,
            camera_in_vehicle: rig.camera_in_vehicle(attitude),
            pole_weight: cfg.pole_weight,
            huber: cfg.huber,
        }
    }
}

fn project_point(p_c: &Vector3<f64>, k: &CameraIntrinsics) -> PixelPoint {
    PixelPoint::new(
        (k.fx * p_c.x + k.skew * p_c.y) / p_c.z + k.cx,
        k.fy * p_c.y / p_c.z + k.cy,
    )
}

fn push_residual(c: &Correspondence, pose: &Pose, camera: &Pose, m: &ResidualModel, out: &mut Vec<f64>) {
    let start = out.len();
    match (c.kind, &c.target) {
        (CorrespondenceKind::LanePointPoint, Target::MapPoint(q)) => {
            out.extend_from_slice((pose.transform_point(&c.source) - q).as_slice())
        }
        (CorrespondenceKind::LanePointLine, Target::MapLine(line)) => {
            out.extend_from_slice(line.perpendicular(&pose.transform_point(&c.source)).as_slice())
        }
        (CorrespondenceKind::PoleEndpointLine, Target::Image(line)) => {
            let p_c = camera.inverse_transform_point(&c.source);
            // Behind the camera the residual saturates at the gate.
            let d = if p_c.z > 1e-9 {
                line.signed_distance(&project_point(&p_c, &m.intrinsics))
            } else {
                c.gate
            };
            out.push(m.pole_weight * d);
        }
        _ => panic!("correspondence kind does not match its target"),
    }
    if let Some(delta) = m.huber {
        let block = &mut out[start..];
        let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > delta {
            let s = ((2.0 * delta * n - delta * delta) / (n * n)).sqrt();
            block.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn residuals(corrs: &[Correspondence], pose: &Pose, m: &ResidualModel) -> Vec<f64> {
    let camera = *pose * m.camera_in_vehicle;
    let mut out = Vec::with_capacity(corrs.iter().map(Correspondence::dim).sum());
    for c in corrs {
        push_residual(c, pose, &camera, m, &mut out);
    }
    out
}

/// Sum of squared residuals at `pose` and the stacked residual vector, in
/// correspondence order.
pub fn total_cost(corrs: &[Correspondence], pose: &Pose, m: &ResidualModel) -> (f64, DVector<f64>) {
    let r = DVector::from_vec(residuals(corrs, pose, m));
    (r.norm_squared(), r)
}

/// Central-difference Jacobian of the residuals with respect to a right
/// twist `[omega; rho]` applied to `pose`.
pub fn numeric_jacobian(corrs: &[Correspondence], pose: &Pose, m: &ResidualModel, step: f64) -> DMatrix<f64> {
    let n = corrs.iter().map(Correspondence::dim).sum();
    let mut jac = DMatrix::zeros(n, 6);
    for j in 0..6 {
        let mut d = Vector6::zeros();
        d[j] = step;
        let plus = residuals(corrs, &pose.retract(&d), m);
        let minus = residuals(corrs, &pose.retract(&-d), m);
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    jac
}

/// Gauss-Newton Hessian `J^T J` from the rows of the given kinds.
pub fn gauss_newton_hessian(
    corrs: &[Correspondence],
    pose: &Pose,
    m: &ResidualModel,
    step: f64,
    kinds: &[CorrespondenceKind],
) -> Matrix6<f64> {
    let subset: Vec<Correspondence> = corrs.iter().filter(|c| kinds.contains(&c.kind)).copied().collect();
    let j = numeric_jacobian(&subset, pose, m, step);
    let h = j.transpose() * &j;
    Matrix6::from_iterator(h.iter().copied())
}

fn associate_lanes_counted(
    points: &[Vector3<f64>],
    pose: &Pose,
    map: &SemanticMap,
    cfg: &SolverConfig,
) -> (Vec<Correspondence>, usize) {
    let mut out = Vec::new();
    let mut matched = 0;
    if map.lanes().is_empty() || !(cfg.use_point_point || cfg.use_point_line) {
        return (out, 0);
    }
    let k = cfg.line_neighbors.min(map.lanes().len());
    for p in points {
        let w = pose.transform_point(p);
        let Some((nearest, d)) = map.nearest(&w) else { continue };
        if d > cfg.gate {
            continue;
        }
        let mut any = false;
        if cfg.use_point_point {
            out.push(Correspondence {
                kind: CorrespondenceKind::LanePointPoint,
                source: *p,
                target: Target::MapPoint(nearest.position),
                gate: cfg.gate,
            });
            any = true;
        }
        if cfg.use_point_line && k >= 2 {
            let nbrs: Vec<Vector3<f64>> = map
                .query_k_nearest(&w, k)
                .map(|v| v.into_iter().map(|l| l.position).collect())
                .unwrap_or_default();
            if let Ok(line) = fit_line_lsq_3d(&nbrs) {
                out.push(Correspondence {
                    kind: CorrespondenceKind::LanePointLine,
                    source: *p,
                    target: Target::MapLine(line),
                    gate: cfg.gate,
                });
                any = true;
            }
        }
        matched += usize::from(any);
    }
    (out, matched)
}

/// Gated nearest-neighbor lane correspondences for vehicle-frame points
/// placed in the world by `pose`.
pub fn associate_lanes(points: &[Vector3<f64>], pose: &Pose, map: &SemanticMap, cfg: &SolverConfig) -> Vec<Correspondence> {
    associate_lanes_counted(points, pose, map, cfg).0
}

/// A map pole whose endpoints both project into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPole {
    pub id: usize,
    pub world: [Vector3<f64>; 2],
    pub pixels: [PixelPoint; 2],
}

/// Projects pole endpoints through the camera at `pose`. A pole is kept
/// only when both endpoints have depth in `(0, max_range]` and land inside
/// the image.
pub fn project_poles(
    poles: &[Pole],
    pose: &Pose,
    camera_in_vehicle: &Pose,
    k: &CameraIntrinsics,
    max_range: f64,
) -> Vec<ProjectedPole> {
    let camera = *pose * *camera_in_vehicle;
    poles
        .iter()
        .enumerate()
        .filter_map(|(id, pole)| {
            let world = pole.endpoints();
            let mut pixels = [PixelPoint::new(0.0, 0.0); 2];
            for (px, w) in pixels.iter_mut().zip(&world) {
                let c = camera.inverse_transform_point(w);
                if !(c.z > 0.0 && c.z <= max_range) {
                    return None;
                }
                *px = project_point(&c, k);
                if !k.contains(px) {
                    return None;
                }
            }
            Some(ProjectedPole { id, world, pixels })
        })
        .collect()
}

fn nearest_line(p: &PixelPoint, lines: &[PoleLine]) -> Option<(usize, f64)> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i, l.line.signed_distance(p).abs()))
        .fold(None, |best, cur| match best {
            Some((_, d)) if d <= cur.1 => best,
            _ => Some(cur),
        })
}

fn pole_correspondences(p: &ProjectedPole, line: &ImageLine, gate: f64) -> [Correspondence; 2] {
    p.world.map(|w| Correspondence {
        kind: CorrespondenceKind::PoleEndpointLine,
        source: w,
        target: Target::Image(*line),
        gate,
    })
}

/// Solver-side pairing where each observed line serves at most one pole.
/// Pairs with both endpoints inside the gate are taken greedily by summed
/// endpoint distance. Poles standing one behind the other project to
/// nearly the same column; nearest-line pairing would give both the same
/// line and leave the other unmatched.
fn associate_poles_exclusive(
    projected: &[ProjectedPole],
    lines: &[PoleLine],
    gate: f64,
) -> (Vec<Correspondence>, Vec<bool>) {
    let mut pairs = Vec::new();
    for (pi, p) in projected.iter().enumerate() {
        for (li, l) in lines.iter().enumerate() {
            let da = l.line.signed_distance(&p.pixels[0]).abs();
            let db = l.line.signed_distance(&p.pixels[1]).abs();
            if da < gate && db < gate {
                pairs.push((da + db, pi, li));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken = vec![false; projected.len()];
    let mut used = vec![false; lines.len()];
    let mut chosen = Vec::new();
    for (_, pi, li) in pairs {
        if !taken[pi] && !used[li] {
            taken[pi] = true;
            used[li] = true;
            chosen.push((pi, li));
        }
    }
    chosen.sort_unstable();
    let out = chosen
        .into_iter()
        .flat_map(|(pi, li)| pole_correspondences(&projected[pi], &lines[li].line, gate))
        .collect();
    (out, used)
}

/// Pairs each projected endpoint with its closest observed line; both
/// endpoints of a pole must pick the same line within `gate` pixels.
pub fn associate_poles(projected: &[ProjectedPole], lines: &[PoleLine], gate: f64) -> Vec<Correspondence> {
    let mut out = Vec::new();
    for p in projected {
        let a = nearest_line(&p.pixels[0], lines);
        let b = nearest_line(&p.pixels[1], lines);
        if let (Some((ia, da)), Some((ib, db))) = (a, b) {
            if ia == ib && da < gate && db < gate {
                out.extend(pole_correspondences(p, &lines[ia].line, gate));
            }
        }
    }
    out
}

/// Observations of one frame as seen by the solver.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    /// Window lane points in the current vehicle frame.
    pub lane_points: &'a [Vector3<f64>],
    pub pole_lines: &'a [PoleLine],
    pub attitude: AttitudeAngles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// No correspondence at the prior; the prior is returned.
    NoConstraints,
    /// Residuals became non-finite; the prior is returned.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Objective after each accepted step, starting with the prior.
    pub cost_trace: Vec<f64>,
    pub lane_point_point: usize,
    pub lane_point_line: usize,
    pub pole_endpoints: usize,
    /// Smallest over largest eigenvalue of the Hessian built from
    /// point-line and pole rows.
    pub conditioning: f64,
    /// Set when `conditioning` is below 1e-6: some direction (typically
    /// along a straight lane) is not pinned by line-type constraints.
    pub degenerate: bool,
}

struct Evaluation {
    objective: f64,
    corrs: Vec<Correspondence>,
}

struct Problem<'a> {
    input: &'a FrameInput<'a>,
    map: &'a SemanticMap,
    rig: &'a Rig,
    cfg: &'a SolverConfig,
    model: ResidualModel,
}

impl Problem<'_> {
    fn lane_terms(&self) -> usize {
        usize::from(self.cfg.use_point_point) + usize::from(self.cfg.use_point_line)
    }

    /// Associates at `pose` and scores it. Unassociated lane points and
    /// unmatched pole lines cost as much as a residual at the gate, so the
    /// objective cannot drop by pushing data out of the gate.
    fn evaluate(&self, pose: &Pose) -> Evaluation {
        let cfg = self.cfg;
        let (mut corrs, matched) = associate_lanes_counted(self.input.lane_points, pose, self.map, cfg);
        let lane_penalty =
            (self.input.lane_points.len() - matched) as f64 * self.lane_terms() as f64 * cfg.gate * cfg.gate;
        let mut pole_penalty = 0.0;
        if cfg.use_poles && !self.input.pole_lines.is_empty() {
            let projected = project_poles(
                self.map.poles(),
                pose,
                &self.model.camera_in_vehicle,
                &self.rig.intrinsics,
                cfg.pole_max_range,
            );
            let (pc, used) = associate_poles_exclusive(&projected, self.input.pole_lines, cfg.pole_gate);
            corrs.extend(pc);
            let w = cfg.pole_weight * cfg.pole_gate;
            pole_penalty = used.iter().filter(|u| !**u).count() as f64 * 2.0 * w * w;
        }
        let (cost, _) = total_cost(&corrs, pose, &self.model);
        Evaluation {
            objective: cost + lane_penalty + pole_penalty,
            corrs,
        }
    }
}

fn count_kind(corrs: &[Correspondence], kind: CorrespondenceKind) -> usize {
    corrs.iter().filter(|c| c.kind == kind).count()
}

/// Levenberg-Marquardt refinement of `prior` with re-association at every
/// step. Steps are accepted only when the association-aware objective
/// decreases, so the returned pose never scores worse than the prior.
pub fn optimize_pose(
    prior: &Pose,
    input: &FrameInput,
    map: &SemanticMap,
    rig: &Rig,
    cfg: &SolverConfig,
) -> (Pose, SolveStats) {
    let problem = Problem {
        input,
        map,
        rig,
        cfg,
        model: ResidualModel::new(rig, &input.attitude, cfg),
    };
    let mut eval = problem.evaluate(prior);
    let mut stats = SolveStats {
        status: SolveStatus::Converged,
        iterations: 0,
        initial_cost: eval.objective,
        final_cost: eval.objective,
        cost_trace: vec![eval.objective],
        lane_point_point: 0,
        lane_point_line: 0,
        pole_endpoints: 0,
        conditioning: 0.0,
        degenerate: true,
    };
    if !eval.objective.is_finite() {
        stats.status = SolveStatus::NonFinite;
        return (*prior, stats);
    }
    if eval.corrs.is_empty() {
        stats.status = SolveStatus::NoConstraints;
        return (*prior, stats);
    }
    let mut pose = *prior;
    let mut lambda = cfg.initial_damping;
    let mut status = SolveStatus::MaxIterations;
    for _ in 0..cfg.max_iterations {
        let (_, r) = total_cost(&eval.corrs, &pose, &problem.model);
        let jac = numeric_jacobian(&eval.corrs, &pose, &problem.model, cfg.fd_step);
        if !jac.iter().all(|v| v.is_finite()) {
            stats.status = SolveStatus::NonFinite;
            return (*prior, stats);
        }
        let h = Matrix6::from_iterator((jac.transpose() * &jac).iter().copied());
        let g = Vector6::from_iterator((jac.transpose() * &r).iter().copied());
        if g.norm() <= 1e-15 * (1.0 + eval.objective) {
            status = SolveStatus::Converged;
            break;
        }
        let floor = 1e-9 * h.diagonal().max().max(1e-12);
        let mut accepted = None;
        for _ in 0..12 {
            let mut a = h;
            for i in 0..6 {
                a[(i, i)] += lambda * h[(i, i)].max(floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -chol.solve(&g);
            let cand = pose.retract(&step);
            let ce = problem.evaluate(&cand);
            if ce.objective.is_finite() && ce.objective < eval.objective {
                lambda = (lambda / 3.0).max(1e-12);
                accepted = Some((cand, ce, step.norm()));
                break;
            }
            lambda *= 4.0;
        }
        let Some((cand, ce, step_norm)) = accepted else {
            status = SolveStatus::Converged;
            break;
        };
        let decrease = eval.objective - ce.objective;
        let before = eval.objective;
        pose = cand;
        eval = ce;
        stats.iterations += 1;
        stats.cost_trace.push(eval.objective);
        if eval.corrs.is_empty() || decrease <= cfg.cost_tolerance * before || step_norm <= cfg.step_tolerance {
            status = SolveStatus::Converged;
            break;
        }
    }
    stats.status = status;
    stats.final_cost = eval.objective;
    stats.lane_point_point = count_kind(&eval.corrs, CorrespondenceKind::LanePointPoint);
    stats.lane_point_line = count_kind(&eval.corrs, CorrespondenceKind::LanePointLine);
    stats.pole_endpoints = count_kind(&eval.corrs, CorrespondenceKind::PoleEndpointLine);
    let structural = gauss_newton_hessian(
        &eval.corrs,
        &pose,
        &problem.model,
        cfg.fd_step,
        &[CorrespondenceKind::LanePointLine, CorrespondenceKind::PoleEndpointLine],
    );
    let eig = SymmetricEigen::new(structural).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    stats.conditioning = if hi > 0.0 { (lo / hi).max(0.0) } else { 0.0 };
    stats.degenerate = stats.conditioning < 1e-6;
    (pose, stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub frame_id: u64,
    pub timestamp: f64,
    pub prior: Pose,
    pub lifted: usize,
    pub rejected_pixels: usize,
    pub window_points: usize,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub trajectory: Trajectory,
    pub frames: Vec<FrameDiagnostics>,
}

impl SequenceResult {
    pub fn degraded_frames(&self) -> usize {
        self.frames
            .iter()
            .filter(|f| matches!(f.stats.status, SolveStatus::NoConstraints | SolveStatus::NonFinite))
            .count()
    }
}

/// Frame-by-frame localization state: the lane window, the loaded map
/// tiles and the last estimate.
#[derive(Debug, Clone)]
pub struct SequenceLocalizer {
    rig: Rig,
    cfg: LocalizerConfig,
    window: LocalLaneMap,
    loaded: Option<(BTreeSet<TileId>, SemanticMap)>,
    last: Option<(Pose, Pose)>,
}

impl SequenceLocalizer {
    pub fn new(rig: Rig, cfg: LocalizerConfig) -> Self {
        Self {
            rig,
            cfg,
            window: LocalLaneMap::new(cfg.window_frames, cfg.window_span),
            loaded: None,
            last: None,
        }
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.cfg
    }

    /// Processes the next frame. Frames that cannot be constrained keep
    /// their odometry prior and are marked in the diagnostics.
    pub fn step(&mut self, frame: &DatasetFrame, map: &SemanticMap) -> (Pose, FrameDiagnostics) {
        let odo = &frame.odometry;
        let (prior, motion) = match &self.last {
            None => (odo.pose, Pose::identity()),
            Some((t_prev, odo_prev)) => (prior_pose(t_prev, odo_prev, &odo.pose), odo_prev.inverse() * odo.pose),
        };
        let rig = &self.rig;
        let lift = lift_lane_pixels(&frame.observation, &rig.intrinsics, &rig.mount, &odo.attitude, &rig.ipm);
        let lifted = lift.points.len();
        self.window.push(lift.points, &motion);
        let points = self.window.points_thinned(self.cfg.window_voxel);
        let tiles = map.tiles_in_range(&prior, self.cfg.tile_radius);
        if self.loaded.as_ref().is_none_or(|(ids, _)| *ids != tiles) {
            let sub = map.load_tiles(&tiles);
            self.loaded = Some((tiles, sub));
        }
        let submap = &self.loaded.as_ref().expect("submap loaded above").1;
        let input = FrameInput {
            lane_points: &points,
            pole_lines: &frame.observation.pole_lines,
            attitude: odo.attitude,
        };
        let (pose, stats) = optimize_pose(&prior, &input, submap, rig, &self.cfg.solver);
        self.last = Some((pose, odo.pose));
        let diag = FrameDiagnostics {
            frame_id: frame.observation.frame_id,
            timestamp: frame.observation.timestamp,
            prior,
            lifted,
            rejected_pixels: lift.rejected,
            window_points: points.len(),
            stats,
        };
        (pose, diag)
    }
}

/// Runs [`SequenceLocalizer`] over a time-ordered dataset.
pub fn localize_sequence(frames: &[DatasetFrame], map: &SemanticMap, rig: &Rig, cfg: &LocalizerConfig) -> SequenceResult {
    let mut loc = SequenceLocalizer::new(*rig, *cfg);
    let mut trajectory = Trajectory::new();
    let mut diags = Vec::with_capacity(frames.len());
    for f in frames {
        let (pose, diag) = loc.step(f, map);
        trajectory.push(f.observation.timestamp, pose);
        diags.push(diag);
    }
    SequenceResult {
        trajectory,
        frames: diags,
    }
}

#[cfg(test)]
mod tests;
