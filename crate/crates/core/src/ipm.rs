//! Pixel-to-ground reconstruction.
//!
//! Frames: the camera frame has x right, y down, z along the optical axis.
//! The ground-aligned camera frame shares the camera origin but is levelled:
//! y points straight down to a flat ground plane at `y = h`, z points forward
//! horizontally. [`GroundPoint`] coordinates live in that frame.
//!
//! Angle conventions (all radians):
//! * roll > 0 rotates the image content clockwise,
//! * pitch > 0 tilts the optical axis upward,
//! * yaw > 0 turns the optical axis to the left.

use crate::geometry::{PixelPoint, Pose};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

pub const DEFAULT_HORIZON_EPS: f64 = 1.0;
pub const DEFAULT_MAX_RANGE: f64 = 30.0;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum IpmError {
    #[error("point is behind the camera")]
    BehindCamera,
    #[error("pixel is at or above the horizon")]
    AboveHorizon,
    #[error("ground point at {0:.3} m exceeds the maximum range")]
    RangeExceeded(f64),
    #[error("ray does not intersect the ground plane")]
    NoIntersection,
}

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub skew: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            skew: 0.0,
            cx,
            cy,
            width,
            height,
        }
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.cx, self.cy)
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u <= self.width as f64 && p.v <= self.height as f64
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0,
        )
    }

    /// Direction `[x/z, y/z, 1]` of the ray through a pixel.
    pub fn unproject(&self, p: &PixelPoint) -> Vector3<f64> {
        let yn = (p.v - self.cy) / self.fy;
        let xn = (p.u - self.cx - self.skew * yn) / self.fx;
        Vector3::new(xn, yn, 1.0)
    }

    pub fn is_valid(&self) -> bool {
        self.fx > 0.0 && self.fy > 0.0 && self.width > 0 && self.height > 0
    }
}

/// Per-axis camera deflection from the levelled ground-aligned frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl AttitudeAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    pub fn add(&self, o: &AttitudeAngles) -> AttitudeAngles {
        AttitudeAngles::new(self.roll + o.roll, self.pitch + o.pitch, self.yaw + o.yaw)
    }

    pub fn is_zero(&self) -> bool {
        self.roll == 0.0 && self.pitch == 0.0 && self.yaw == 0.0
    }

    /// Rotation taking real-camera coordinates into the ground-aligned frame:
    /// yaw about the vertical, then pitch, then roll about the optical axis.
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -self.yaw);
        let pitch = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.pitch);
        let roll = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -self.roll);
        yaw * pitch * roll
    }
}

/// Camera mounting: height above ground, fixed angular deviations from the
/// nominal mount, and the nominal camera-to-vehicle extrinsic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountCalibration {
    pub height: f64,
    pub deviation: AttitudeAngles,
    pub extrinsic: Pose,
}

impl MountCalibration {
    /// Level, forward-looking camera in a vehicle frame with x forward,
    /// y left and z up, origin on the ground.
    pub fn forward_facing(height: f64, forward: f64, left: f64) -> Self {
        let r = Rotation3::from_matrix_unchecked(Matrix3::new(
            0.0, 0.0, 1.0, //
            -1.0, 0.0, 0.0, //
            0.0, -1.0, 0.0,
        ));
        Self {
            height,
            deviation: AttitudeAngles::default(),
            extrinsic: Pose::new(
                UnitQuaternion::from_rotation_matrix(&r),
                Vector3::new(forward, left, height),
            ),
        }
    }

    pub fn with_deviation(mut self, deviation: AttitudeAngles) -> Self {
        self.deviation = deviation;
        self
    }

    /// Deviations plus per-frame attitude, summed per axis.
    pub fn total_angles(&self, attitude: &AttitudeAngles) -> AttitudeAngles {
        self.deviation.add(attitude)
    }

    /// Pose of the real (deflected) camera in the vehicle frame.
    pub fn camera_in_vehicle(&self, attitude: &AttitudeAngles) -> Pose {
        let dev = Pose::new(self.total_angles(attitude).rotation(), Vector3::zeros());
        self.extrinsic.compose(&dev)
    }
}

/// Ground-plane point in the ground-aligned camera frame; `y == h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GroundPoint {
    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Pivot for the image-plane roll rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RollPivot {
    /// Rotate about the principal point (rotation about the optical axis).
    #[default]
    PrincipalPoint,
    /// Rotate about pixel (0, 0), literally as the compensation is usually written.
    ImageOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub horizon_eps: f64,
    pub max_range: f64,
    pub roll_pivot: RollPivot,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            horizon_eps: DEFAULT_HORIZON_EPS,
            max_range: DEFAULT_MAX_RANGE,
            roll_pivot: RollPivot::PrincipalPoint,
        }
    }
}

/// Projects a camera-frame point through the pinhole model.
pub fn project_pinhole(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<PixelPoint, IpmError> {
    if !(p.z > 0.0) {
        return Err(IpmError::BehindCamera);
    }
    Ok(PixelPoint::new(
        (k.fx * p.x + k.skew * p.y) / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

/// Projects a point given in the ground-aligned frame through a camera
/// deflected by `rotation` (real camera to ground-aligned).
pub fn project_rotated(
    p: &Vector3<f64>,
    k: &CameraIntrinsics,
    rotation: &UnitQuaternion<f64>,
) -> Result<PixelPoint, IpmError> {
    project_pinhole(&(rotation.inverse() * p), k)
}

/// Flat-ground IPM for a level camera at height `h`.
pub fn ipm_vanilla(px: &PixelPoint, k: &CameraIntrinsics, h: f64) -> Result<GroundPoint, IpmError> {
    ground_from_pixel(px, k, h, 0.0, 0.0, DEFAULT_HORIZON_EPS)
}

/// Rotates `px` about `center` by the roll compensation matrix
/// `[[cos, sin], [-sin, cos]]`.
pub fn compensate_roll(px: &PixelPoint, roll: f64, center: &PixelPoint) -> PixelPoint {
    if roll == 0.0 {
        return *px;
    }
    let (s, c) = roll.sin_cos();
    let (du, dv) = (px.u - center.u, px.v - center.v);
    PixelPoint::new(center.u + c * du + s * dv, center.v - s * du + c * dv)
}

/// Rotation-compensated IPM.
///
/// The pixel is first de-rolled in the image plane, then depth follows from
/// the tangent-addition form with the total pitch and the lateral offset from
/// the tangent-addition form with the total yaw. Mount deviations and the
/// per-frame attitude are summed per axis. With all angles zero this is
/// exactly [`ipm_vanilla`].
pub fn ipm_enhanced(
    px: &PixelPoint,
    k: &CameraIntrinsics,
    calib: &MountCalibration,
    attitude: &AttitudeAngles,
    opts: &IpmOptions,
) -> Result<GroundPoint, IpmError> {
    let total = calib.total_angles(attitude);
    let center = match opts.roll_pivot {
        RollPivot::PrincipalPoint => k.principal_point(),
        RollPivot::ImageOrigin => PixelPoint::new(0.0, 0.0),
    };
    let rolled = compensate_roll(px, total.roll, &center);
    // The tangent-addition formulas add angles that grow downward (pitch)
    // and rightward (yaw); our conventions are the opposite.
    let tan_pitch = (-total.pitch).tan();
    let tan_yaw = (-total.yaw).tan();
    let g = ground_from_pixel(&rolled, k, calib.height, tan_pitch, tan_yaw, opts.horizon_eps)?;
    if g.z > opts.max_range {
        return Err(IpmError::RangeExceeded(g.z));
    }
    Ok(g)
}

fn ground_from_pixel(
    px: &PixelPoint,
    k: &CameraIntrinsics,
    h: f64,
    tan_pitch: f64,
    tan_yaw: f64,
    horizon_eps: f64,
) -> Result<GroundPoint, IpmError> {
    let dv = px.v - k.cy;
    // Depression of the ray below the optical axis, as a tangent.
    let depression = dv / k.fy;
    if dv + tan_pitch * k.fy <= horizon_eps {
        return Err(IpmError::AboveHorizon);
    }
    let z = h * (1.0 - depression * tan_pitch) / (depression + tan_pitch);
    if !(z > 0.0) || !z.is_finite() {
        return Err(IpmError::AboveHorizon);
    }
    let tan_u = (k.fy * (px.u - k.cx) - k.skew * dv) / (k.fx * k.fy);
    let denom = 1.0 - tan_yaw * tan_u;
    if !(denom > 0.0) {
        return Err(IpmError::AboveHorizon);
    }
    let x = z * (tan_yaw + tan_u) / denom;
    Ok(GroundPoint { x, y: h, z })
}

/// Exact ray/ground-plane intersection for a camera deflected by `rotation`
/// (real camera to ground-aligned frame).
pub fn ipm_exact_oracle(
    px: &PixelPoint,
    k: &CameraIntrinsics,
    h: f64,
    rotation: &UnitQuaternion<f64>,
) -> Result<GroundPoint, IpmError> {
    let ray = rotation * k.unproject(px);
    if !(ray.y > 0.0) {
        return Err(IpmError::NoIntersection);
    }
    let t = h / ray.y;
    if !(ray.z * t > 0.0) {
        return Err(IpmError::NoIntersection);
    }
    Ok(GroundPoint {
        x: ray.x * t,
        y: h,
        z: ray.z * t,
    })
}

/// Maximum deviations of [`ipm_enhanced`] from its references.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepReport {
    /// Zero angles against [`ipm_vanilla`], meters.
    pub zero_abs: f64,
    /// Single-axis sweeps against [`ipm_exact_oracle`], relative to the
    /// oracle's distance from the camera foot point.
    pub roll_rel: f64,
    pub pitch_rel: f64,
    pub yaw_rel: f64,
    /// Combined small angles, ground points 20 m ahead within 5 m of the
    /// optical axis, as a fraction of that range.
    pub combined_rel: f64,
    /// Same angles, points 20 m from the camera across the whole field of
    /// view.
    pub combined_wide_rel: f64,
    /// Pixel/angle pairs where both models produced a point.
    pub samples: usize,
}

/// Runs the enhanced model over a pixel grid and angle sweeps. `grid` is
/// the number of samples per image axis, `single` the largest single-axis
/// angle and `combined` the largest per-axis angle of the mixed sweep.
pub fn oracle_sweep(k: &CameraIntrinsics, h: f64, grid: usize, single: f64, combined: f64) -> SweepReport {
    let opts = IpmOptions {
        max_range: f64::INFINITY,
        ..IpmOptions::default()
    };
    let mut r = SweepReport::default();
    let n = grid.max(2);
    let pixels: Vec<PixelPoint> = (0..n)
        .flat_map(|i| {
            (0..n).map(move |j| {
                let u = (k.width as f64 - 1.0) * i as f64 / (n - 1) as f64;
                let v = k.cy + 1.0 + (k.height as f64 - 2.0 - k.cy) * j as f64 / (n - 1) as f64;
                PixelPoint::new(u, v)
            })
        })
        .collect();
    let level = MountCalibration::forward_facing(h, 0.0, 0.0);
    for px in &pixels {
        if let (Ok(a), Ok(b)) = (
            ipm_enhanced(px, k, &level, &AttitudeAngles::default(), &opts),
            ipm_vanilla(px, k, h),
        ) {
            r.zero_abs = r.zero_abs.max((a.to_vector() - b.to_vector()).norm());
            r.samples += 1;
        }
    }
    let steps = 20;
    for axis in 0..3 {
        for s in 0..=steps {
            let angle = -single + 2.0 * single * s as f64 / steps as f64;
            let mut a = [0.0; 3];
            a[axis] = angle;
            let att = AttitudeAngles::new(a[0], a[1], a[2]);
            let rot = att.rotation();
            let errs: Vec<f64> = pixels
                .iter()
                .filter_map(|px| {
                    let e = ipm_enhanced(px, k, &level, &att, &opts).ok()?;
                    let o = ipm_exact_oracle(px, k, h, &rot).ok()?;
                    let range = o.x.hypot(o.z);
                    Some((e.x - o.x).hypot(e.z - o.z) / range)
                })
                .collect();
            r.samples += errs.len();
            let worst = errs.into_iter().fold(0.0, f64::max);
            let slot = [&mut r.roll_rel, &mut r.pitch_rel, &mut r.yaw_rel];
            *slot[axis] = slot[axis].max(worst);
        }
    }
    let range = 20.0;
    let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let road: Vec<Vector3<f64>> = (-20..=20).map(|i| Vector3::new(0.25 * i as f64, h, range)).collect();
    let wide: Vec<Vector3<f64>> = (-40..=40)
        .map(|b| {
            let bearing = (b as f64).to_radians();
            Vector3::new(range * bearing.sin(), h, range * bearing.cos())
        })
        .collect();
    for &ar in &levels {
        for &ap in &levels {
            for &ay in &levels {
                let att = AttitudeAngles::new(ar * combined, ap * combined, ay * combined);
                let rot = att.rotation();
                for (points, out) in [(&road, &mut r.combined_rel), (&wide, &mut r.combined_wide_rel)] {
                    for truth in points {
                        let Ok(px) = project_rotated(truth, k, &rot) else { continue };
                        if !k.contains(&px) {
                            continue;
                        }
                        if let Ok(e) = ipm_enhanced(&px, k, &level, &att, &opts) {
                            *out = out.max((e.x - truth.x).hypot(e.z - truth.z) / range);
                            r.samples += 1;
                        }
                    }
                }
            }
        }
    }
    r
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Binary PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Top-down raster of ground points covering `[-extent, extent]` on both
/// axes; the origin is the center pixel and the top row is the farthest range.
pub fn render_bev(points: &[GroundPoint], resolution: f64, extent: f64) -> GrayImage {
    assert!(resolution > 0.0, "resolution must be positive");
    let half = (extent / resolution).ceil().max(0.0) as i64;
    let n = (2 * half + 1) as usize;
    let mut img = GrayImage::new(n, n);
    for p in points {
        let col = (p.x / resolution).round() as i64 + half;
        let row = half - (p.z / resolution).round() as i64;
        if (0..n as i64).contains(&col) && (0..n as i64).contains(&row) {
            img.pixels[row as usize * n + col as usize] = 255;
        }
    }
    img
}
