//! Trajectory metrics: ATE, RPE, recall at thresholds and error
//! decomposition in the ground-truth vehicle frame.

use crate::geometry::Pose;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Timestamps closer than this are treated as the same frame.
pub const MATCH_TOLERANCE: f64 = 1e-3;

/// Recall thresholds as (meters, degrees), loosest last.
pub const RECALL_THRESHOLDS: [(f64, f64); 3] = [(0.25, 2.0), (0.5, 5.0), (5.0, 10.0)];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectories share no timestamps")]
    NoOverlap,
    #[error("trajectory of {len} frames is too short for delta {delta}")]
    TooShort { len: usize, delta: usize },
    #[error("timestamps must be strictly increasing (line {line})")]
    NotIncreasing { line: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub stamps: Vec<f64>,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(stamps: Vec<f64>, poses: Vec<Pose>) -> Result<Self, EvalError> {
        assert_eq!(stamps.len(), poses.len(), "stamp and pose counts differ");
        if let Some(i) = stamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(EvalError::NotIncreasing { line: i + 2 });
        }
        Ok(Self { stamps, poses })
    }

    pub fn push(&mut self, stamp: f64, pose: Pose) {
        if let Some(&last) = self.stamps.last() {
            assert!(stamp > last, "timestamps must increase");
        }
        self.stamps.push(stamp);
        self.poses.push(pose);
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(96 * self.len());
        for (t, p) in self.stamps.iter().zip(&self.poses) {
            let q = p.quaternion_xyzw();
            let tr = p.translation;
            let _ = writeln!(
                out,
                "{t:.6} {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}",
                tr.x, tr.y, tr.z, q[0], q[1], q[2], q[3]
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EvalError> {
        let mut stamps = Vec::new();
        let mut poses = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| EvalError::Format {
                    line: no + 1,
                    message: format!("invalid number in `{line}`"),
                })?;
            if v.len() != 8 {
                return Err(EvalError::Format {
                    line: no + 1,
                    message: format!("expected 8 fields, found {}", v.len()),
                });
            }
            if stamps.last().is_some_and(|&last| !(v[0] > last)) {
                return Err(EvalError::NotIncreasing { line: no + 1 });
            }
            stamps.push(v[0]);
            poses.push(Pose::from_components([v[1], v[2], v[3]], [v[4], v[5], v[6], v[7]]));
        }
        Ok(Self { stamps, poses })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Index pairs `(est, gt)` with timestamps within [`MATCH_TOLERANCE`].
pub fn match_frames(est: &Trajectory, gt: &Trajectory) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < est.len() && j < gt.len() {
        let d = est.stamps[i] - gt.stamps[j];
        if d.abs() <= MATCH_TOLERANCE {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if d < 0.0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn matched(est: &Trajectory, gt: &Trajectory) -> Result<Vec<(Pose, Pose)>, EvalError> {
    let pairs = match_frames(est, gt);
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    Ok(pairs.into_iter().map(|(i, j)| (est.poses[i], gt.poses[j])).collect())
}

fn rmse(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Per-frame (translation error m, geodesic rotation error deg).
pub fn frame_errors(est: &Trajectory, gt: &Trajectory) -> Result<Vec<(f64, f64)>, EvalError> {
    Ok(matched(est, gt)?
        .iter()
        .map(|(e, g)| ((e.translation - g.translation).norm(), e.rotation_angle_to(g).to_degrees()))
        .collect())
}

/// Absolute trajectory error without alignment: (translation RMSE m,
/// rotation RMSE deg).
pub fn ate(est: &Trajectory, gt: &Trajectory) -> Result<(f64, f64), EvalError> {
    let errs = frame_errors(est, gt)?;
    Ok((rmse(errs.iter().map(|e| e.0)), rmse(errs.iter().map(|e| e.1))))
}

/// RMSE of yaw differences in degrees.
pub fn ate_yaw(est: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    Ok(rmse(
        matched(est, gt)?
            .iter()
            .map(|(e, g)| wrap_angle(e.yaw() - g.yaw()).to_degrees()),
    ))
}

/// Translation RMSE of relative motions over `delta` matched frames.
pub fn rpe(est: &Trajectory, gt: &Trajectory, delta: usize) -> Result<f64, EvalError> {
    assert!(delta >= 1, "delta must be positive");
    let m = matched(est, gt)?;
    if m.len() <= delta {
        return Err(EvalError::TooShort { len: m.len(), delta });
    }
    Ok(rmse((0..m.len() - delta).map(|k| {
        let de = m[k].0.inverse() * m[k + delta].0;
        let dg = m[k].1.inverse() * m[k + delta].1;
        (dg.inverse() * de).translation.norm()
    })))
}

/// Percentage of frames within each (meters, degrees) threshold.
pub fn recall_at(est: &Trajectory, gt: &Trajectory, thresholds: &[(f64, f64)]) -> Result<Vec<f64>, EvalError> {
    let errs = frame_errors(est, gt)?;
    Ok(thresholds
        .iter()
        .map(|&(m, deg)| {
            let hits = errs.iter().filter(|&&(t, r)| t <= m && r <= deg).count();
            100.0 * hits as f64 / errs.len() as f64
        })
        .collect())
}

/// Error of one frame in the ground-truth vehicle frame. Lateral is
/// positive to the left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposedError {
    pub lateral: f64,
    pub longitudinal: f64,
    pub heading_deg: f64,
}

pub fn error_decomposition(est: &Trajectory, gt: &Trajectory) -> Result<Vec<DecomposedError>, EvalError> {
    Ok(matched(est, gt)?
        .iter()
        .map(|(e, g)| {
            let yaw = g.yaw();
            let d = e.translation - g.translation;
            let (s, c) = yaw.sin_cos();
            DecomposedError {
                longitudinal: c * d.x + s * d.y,
                lateral: -s * d.x + c * d.y,
                heading_deg: wrap_angle(e.yaw() - yaw).to_degrees(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub frames: usize,
    pub ate_trans: f64,
    pub ate_rot_deg: f64,
    pub ate_yaw_deg: f64,
    pub rpe_trans: f64,
    pub recall: [f64; 3],
    pub lateral_rmse: f64,
    pub longitudinal_rmse: f64,
    pub heading_rmse_deg: f64,
    pub decomposition: Vec<DecomposedError>,
}

impl MetricsReport {
    /// RPE uses delta 1; it is reported as 0 for single-frame inputs.
    pub fn compute(est: &Trajectory, gt: &Trajectory) -> Result<Self, EvalError> {
        let (ate_trans, ate_rot_deg) = ate(est, gt)?;
        let frames = match_frames(est, gt).len();
        let rpe_trans = match rpe(est, gt, 1) {
            Ok(v) => v,
            Err(EvalError::TooShort { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        let r = recall_at(est, gt, &RECALL_THRESHOLDS)?;
        let decomposition = error_decomposition(est, gt)?;
        Ok(Self {
            frames,
            ate_trans,
            ate_rot_deg,
            ate_yaw_deg: ate_yaw(est, gt)?,
            rpe_trans,
            recall: [r[0], r[1], r[2]],
            lateral_rmse: rmse(decomposition.iter().map(|d| d.lateral)),
            longitudinal_rmse: rmse(decomposition.iter().map(|d| d.longitudinal)),
            heading_rmse_deg: rmse(decomposition.iter().map(|d| d.heading_deg)),
            decomposition,
        })
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("frames", self.frames.to_string()),
            ("ate_trans_m", format!("{:.6}", self.ate_trans)),
            ("ate_rot_deg", format!("{:.6}", self.ate_rot_deg)),
            ("ate_yaw_deg", format!("{:.6}", self.ate_yaw_deg)),
            ("rpe_trans_m", format!("{:.6}", self.rpe_trans)),
            ("recall_0.25m_2deg", format!("{:.2}", self.recall[0])),
            ("recall_0.5m_5deg", format!("{:.2}", self.recall[1])),
            ("recall_5m_10deg", format!("{:.2}", self.recall[2])),
            ("lateral_rmse_m", format!("{:.6}", self.lateral_rmse)),
            ("longitudinal_rmse_m", format!("{:.6}", self.longitudinal_rmse)),
            ("heading_rmse_deg", format!("{:.6}", self.heading_rmse_deg)),
        ]
    }

    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w$}  value", "metric");
        let _ = writeln!(out, "{}", "-".repeat(w + 12));
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<w$}  {v}");
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        self.rows().into_iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
    }

    /// Table followed by a blank line and the tab-separated block.
    pub fn render(&self) -> String {
        format!("{}\n{}", self.to_table(), self.to_tsv())
    }
}
