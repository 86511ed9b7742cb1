//! C interface to the semloc toolkit.
//!
//! Every fallible function returns a [`SemlocStatus`]. On failure a
//! description is kept per thread and can be copied out with
//! [`semloc_last_error_message`]. Handles are opaque; each `*_new` or
//! `*_load` has a matching `*_free`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::Vector3;
use semloc::config::Config;
use semloc::eval::{MetricsReport, Trajectory};
use semloc::geometry::{ImageLine, PixelPoint, Pose};
use semloc::ipm::{ipm_enhanced, ipm_vanilla, AttitudeAngles, CameraIntrinsics, IpmOptions, MountCalibration};
use semloc::localizer::{
    DatasetFrame, LocalizerConfig, OdometryFrame, PoleLine, Rig, SegmentationObservation, SequenceLocalizer,
    SolveStatus,
};
use semloc::map::{map_load, map_load_file, SemanticMap};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemlocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// The computation produced no usable result (pixel above the horizon,
    /// empty map, non-finite residuals).
    NoResult = 5,
    /// Caller buffer too small; the required size was still reported.
    BufferTooSmall = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: SemlocStatus, msg: impl Into<String>) -> SemlocStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> SemlocStatus) -> SemlocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SemlocStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, SemlocStatus> {
    if p.is_null() {
        return Err(fail(SemlocStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(SemlocStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn io_or_format(msg: String, io: bool) -> SemlocStatus {
    fail(if io { SemlocStatus::Io } else { SemlocStatus::Format }, msg)
}

/// Length in bytes of the last error message on this thread, excluding
/// the terminator.
#[no_mangle]
pub extern "C" fn semloc_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the number of bytes copied.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn semloc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len().min(len - 1);
        std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
        n
    })
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn semloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemlocIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
    pub width: u32,
    pub height: u32,
}

impl From<&SemlocIntrinsics> for CameraIntrinsics {
    fn from(k: &SemlocIntrinsics) -> Self {
        let mut out = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height);
        out.skew = k.skew;
        out
    }
}

/// Radians.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SemlocAttitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl From<&SemlocAttitude> for AttitudeAngles {
    fn from(a: &SemlocAttitude) -> Self {
        AttitudeAngles::new(a.roll, a.pitch, a.yaw)
    }
}

/// Translation and unit quaternion (x, y, z, w).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemlocPose {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub qw: f64,
}

impl From<&Pose> for SemlocPose {
    fn from(p: &Pose) -> Self {
        let q = p.quaternion_xyzw();
        Self {
            tx: p.translation.x,
            ty: p.translation.y,
            tz: p.translation.z,
            qx: q[0],
            qy: q[1],
            qz: q[2],
            qw: q[3],
        }
    }
}

impl From<&SemlocPose> for Pose {
    fn from(p: &SemlocPose) -> Self {
        Pose::from_components([p.tx, p.ty, p.tz], [p.qx, p.qy, p.qz, p.qw])
    }
}

/// Point in the levelled camera frame: x right, y down (equal to the
/// camera height), z forward.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SemlocGroundPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Flat-ground lifting for a level camera at height `h`.
///
/// # Safety
/// `k` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn semloc_ipm_vanilla(
    k: *const SemlocIntrinsics,
    h: f64,
    u: f64,
    v: f64,
    out: *mut SemlocGroundPoint,
) -> SemlocStatus {
    guard(|| {
        let (Some(k), Some(out)) = (k.as_ref(), out.as_mut()) else {
            return fail(SemlocStatus::NullPointer, "null argument");
        };
        match ipm_vanilla(&PixelPoint::new(u, v), &k.into(), h) {
            Ok(g) => {
                *out = SemlocGroundPoint { x: g.x, y: g.y, z: g.z };
                SemlocStatus::Ok
            }
            Err(e) => fail(SemlocStatus::NoResult, e.to_string()),
        }
    })
}

/// Attitude-compensated lifting. `deviation` is the fixed mount offset,
/// `attitude` the per-frame angles; `max_range` <= 0 disables the range
/// cut.
///
/// # Safety
/// `k`, `deviation`, `attitude` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn semloc_ipm_enhanced(
    k: *const SemlocIntrinsics,
    h: f64,
    deviation: *const SemlocAttitude,
    attitude: *const SemlocAttitude,
    max_range: f64,
    u: f64,
    v: f64,
    out: *mut SemlocGroundPoint,
) -> SemlocStatus {
    guard(|| {
        let (Some(k), Some(dev), Some(att), Some(out)) = (k.as_ref(), deviation.as_ref(), attitude.as_ref(), out.as_mut())
        else {
            return fail(SemlocStatus::NullPointer, "null argument");
        };
        if !(h > 0.0) {
            return fail(SemlocStatus::InvalidArgument, "camera height must be positive");
        }
        let calib = MountCalibration::forward_facing(h, 0.0, 0.0).with_deviation(dev.into());
        let opts = IpmOptions {
            max_range: if max_range > 0.0 { max_range } else { f64::INFINITY },
            ..IpmOptions::default()
        };
        match ipm_enhanced(&PixelPoint::new(u, v), &k.into(), &calib, &att.into(), &opts) {
            Ok(g) => {
                *out = SemlocGroundPoint { x: g.x, y: g.y, z: g.z };
                SemlocStatus::Ok
            }
            Err(e) => fail(SemlocStatus::NoResult, e.to_string()),
        }
    })
}

/// Opaque semantic map.
pub struct SemlocMap {
    map: SemanticMap,
}

fn store<T>(out: *mut *mut T, value: T) -> SemlocStatus {
    // SAFETY: callers check `out` for null before building `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    SemlocStatus::Ok
}

/// Loads a map file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semloc_map_load(path: *const c_char, out: *mut *mut SemlocMap) -> SemlocStatus {
    guard(|| {
        if out.is_null() {
            return fail(SemlocStatus::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match map_load_file(&path) {
            Ok(map) => store(out, SemlocMap { map }),
            Err(e) => {
                let io = matches!(e, semloc::map::MapError::Io { .. });
                io_or_format(e.to_string(), io)
            }
        }
    })
}

/// Parses a map from NUL-terminated text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semloc_map_parse(text: *const c_char, out: *mut *mut SemlocMap) -> SemlocStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(SemlocStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(SemlocStatus::InvalidArgument, "map text is not valid UTF-8");
        };
        match map_load(text) {
            Ok(map) => store(out, SemlocMap { map }),
            Err(e) => fail(SemlocStatus::Format, e.to_string()),
        }
    })
}

/// # Safety
/// `map` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn semloc_map_free(map: *mut SemlocMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semloc_map_lane_count(map: *const SemlocMap) -> usize {
    map.as_ref().map_or(0, |m| m.map.lanes().len())
}

/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semloc_map_pole_count(map: *const SemlocMap) -> usize {
    map.as_ref().map_or(0, |m| m.map.poles().len())
}

/// Nearest lane point to `(x, y, z)`. `out_xyz` receives three doubles.
///
/// # Safety
/// `map` must be a live handle, `out_xyz` valid for three doubles and
/// `out_distance` valid or null.
#[no_mangle]
pub unsafe extern "C" fn semloc_map_nearest(
    map: *const SemlocMap,
    x: f64,
    y: f64,
    z: f64,
    out_xyz: *mut f64,
    out_distance: *mut f64,
) -> SemlocStatus {
    guard(|| {
        let Some(m) = map.as_ref() else {
            return fail(SemlocStatus::NullPointer, "map is null");
        };
        if out_xyz.is_null() {
            return fail(SemlocStatus::NullPointer, "out_xyz is null");
        }
        match m.map.nearest(&nalgebra_point(x, y, z)) {
            Some((p, d)) => {
                let dst = std::slice::from_raw_parts_mut(out_xyz, 3);
                dst.copy_from_slice(p.position.as_slice());
                if let Some(od) = out_distance.as_mut() {
                    *od = d;
                }
                SemlocStatus::Ok
            }
            None => fail(SemlocStatus::NoResult, "map has no lane points"),
        }
    })
}

/// Lane points within `radius` of `(x, y, z)`, nearest first, written as
/// xyz triples into `out_xyz` (room for `capacity` points). `out_count`
/// always receives the total number found.
///
/// # Safety
/// `map` must be a live handle, `out_xyz` valid for `3 * capacity` doubles
/// (or null when `capacity` is 0) and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semloc_map_query_radius(
    map: *const SemlocMap,
    x: f64,
    y: f64,
    z: f64,
    radius: f64,
    out_xyz: *mut f64,
    capacity: usize,
    out_count: *mut usize,
) -> SemlocStatus {
    guard(|| {
        let (Some(m), Some(count)) = (map.as_ref(), out_count.as_mut()) else {
            return fail(SemlocStatus::NullPointer, "null argument");
        };
        if !(radius >= 0.0) {
            return fail(SemlocStatus::InvalidArgument, "radius must be non-negative");
        }
        let found = m.map.query_radius(&nalgebra_point(x, y, z), radius);
        *count = found.len();
        if capacity > 0 {
            if out_xyz.is_null() {
                return fail(SemlocStatus::NullPointer, "out_xyz is null");
            }
            let dst = std::slice::from_raw_parts_mut(out_xyz, 3 * capacity);
            for (slot, p) in dst.chunks_exact_mut(3).zip(&found) {
                slot.copy_from_slice(p.position.as_slice());
            }
        }
        if found.len() > capacity {
            return fail(SemlocStatus::BufferTooSmall, format!("{} points found", found.len()));
        }
        SemlocStatus::Ok
    })
}

fn nalgebra_point(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

/// Opaque online localizer bound to one map.
pub struct SemlocLocalizer {
    map: SemanticMap,
    inner: SequenceLocalizer,
    next_id: u64,
}

/// Creates a localizer from a config file holding `camera.*`, `mount.*`
/// and optional solver keys. The map is copied.
///
/// # Safety
/// `map` must be a live handle, `config_path` NUL-terminated and `out`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn semloc_localizer_new(
    map: *const SemlocMap,
    config_path: *const c_char,
    out: *mut *mut SemlocLocalizer,
) -> SemlocStatus {
    guard(|| {
        let Some(m) = map.as_ref() else {
            return fail(SemlocStatus::NullPointer, "map is null");
        };
        if out.is_null() {
            return fail(SemlocStatus::NullPointer, "out is null");
        }
        let path = match path_arg(config_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let cfg = match Config::load(&path) {
            Ok(c) => c,
            Err(e) => {
                let io = matches!(e, semloc::config::ConfigError::Io { .. });
                return io_or_format(format!("{}: {e}", path.display()), io);
            }
        };
        let built = Rig::from_config(&cfg).and_then(|rig| Ok((rig, LocalizerConfig::from_config(&cfg)?)));
        match built {
            Ok((rig, loc)) => store(
                out,
                SemlocLocalizer {
                    map: m.map.clone(),
                    inner: SequenceLocalizer::new(rig, loc),
                    next_id: 0,
                },
            ),
            Err(e) => fail(SemlocStatus::Format, format!("{}: {e}", path.display())),
        }
    })
}

/// # Safety
/// `loc` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn semloc_localizer_free(loc: *mut SemlocLocalizer) {
    if !loc.is_null() {
        drop(Box::from_raw(loc));
    }
}

/// Localizes one frame. `pixels` holds `n_pixels` (u, v) pairs of lane
/// pixels; `pole_lines` holds `n_lines` records of (a, b, c, v_min, v_max)
/// with a·u + b·v + c = 0. Returns `NoResult` with the odometry prior in
/// `out` when the frame could not be constrained.
///
/// # Safety
/// `loc`, `odometry`, `attitude` and `out` must be valid; `pixels` and
/// `pole_lines` valid for the stated counts (may be null when zero).
#[no_mangle]
pub unsafe extern "C" fn semloc_localizer_step(
    loc: *mut SemlocLocalizer,
    timestamp: f64,
    odometry: *const SemlocPose,
    attitude: *const SemlocAttitude,
    pixels: *const f64,
    n_pixels: usize,
    pole_lines: *const f64,
    n_lines: usize,
    out: *mut SemlocPose,
) -> SemlocStatus {
    guard(|| {
        let (Some(loc), Some(odo), Some(att), Some(out)) = (loc.as_mut(), odometry.as_ref(), attitude.as_ref(), out.as_mut())
        else {
            return fail(SemlocStatus::NullPointer, "null argument");
        };
        if (n_pixels > 0 && pixels.is_null()) || (n_lines > 0 && pole_lines.is_null()) {
            return fail(SemlocStatus::NullPointer, "null observation buffer");
        }
        let lane_pixels = if n_pixels == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(pixels, 2 * n_pixels)
                .chunks_exact(2)
                .map(|c| PixelPoint::new(c[0], c[1]))
                .collect()
        };
        let mut lines = Vec::with_capacity(n_lines);
        if n_lines > 0 {
            for r in std::slice::from_raw_parts(pole_lines, 5 * n_lines).chunks_exact(5) {
                match ImageLine::from_coefficients(r[0], r[1], r[2]) {
                    Ok(line) => lines.push(PoleLine {
                        line,
                        v_min: r[3],
                        v_max: r[4],
                    }),
                    Err(e) => return fail(SemlocStatus::InvalidArgument, e.to_string()),
                }
            }
        }
        let frame = DatasetFrame {
            observation: SegmentationObservation {
                frame_id: loc.next_id,
                timestamp,
                lane_pixels,
                pole_lines: lines,
            },
            odometry: OdometryFrame {
                timestamp,
                pose: odo.into(),
                attitude: att.into(),
            },
        };
        loc.next_id += 1;
        let (pose, diag) = loc.inner.step(&frame, &loc.map);
        *out = (&pose).into();
        match diag.stats.status {
            SolveStatus::NoConstraints => fail(SemlocStatus::NoResult, "no correspondences; prior returned"),
            SolveStatus::NonFinite => fail(SemlocStatus::NoResult, "non-finite residuals; prior returned"),
            _ => SemlocStatus::Ok,
        }
    })
}

/// Trajectory metrics as written by the command-line `evaluate`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SemlocMetrics {
    pub frames: usize,
    pub ate_trans: f64,
    pub ate_rot_deg: f64,
    pub ate_yaw_deg: f64,
    pub rpe_trans: f64,
    /// Percent of frames within (0.25 m, 2 deg), (0.5 m, 5 deg), (5 m, 10 deg).
    pub recall: [f64; 3],
    pub lateral_rmse: f64,
    pub longitudinal_rmse: f64,
    pub heading_rmse_deg: f64,
}

impl From<&MetricsReport> for SemlocMetrics {
    fn from(m: &MetricsReport) -> Self {
        Self {
            frames: m.frames,
            ate_trans: m.ate_trans,
            ate_rot_deg: m.ate_rot_deg,
            ate_yaw_deg: m.ate_yaw_deg,
            rpe_trans: m.rpe_trans,
            recall: m.recall,
            lateral_rmse: m.lateral_rmse,
            longitudinal_rmse: m.longitudinal_rmse,
            heading_rmse_deg: m.heading_rmse_deg,
        }
    }
}

/// Compares two trajectory files.
///
/// # Safety
/// Paths must be NUL-terminated strings and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn semloc_evaluate_files(
    est_path: *const c_char,
    gt_path: *const c_char,
    out: *mut SemlocMetrics,
) -> SemlocStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return fail(SemlocStatus::NullPointer, "out is null");
        };
        let (est, gt) = match (path_arg(est_path), path_arg(gt_path)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let mut loaded = Vec::with_capacity(2);
        for p in [&est, &gt] {
            match Trajectory::load(p) {
                Ok(t) => loaded.push(t),
                Err(e) => {
                    let io = matches!(e, semloc::eval::EvalError::Io { .. });
                    return io_or_format(format!("{}: {e}", p.display()), io);
                }
            }
        }
        match MetricsReport::compute(&loaded[0], &loaded[1]) {
            Ok(m) => {
                *out = (&m).into();
                SemlocStatus::Ok
            }
            Err(e) => fail(SemlocStatus::NoResult, e.to_string()),
        }
    })
}
