//! Localizer dataset text format.
//!
//! ```text
//! FRAME <id> <timestamp>
//! ODO <tx> <ty> <tz> <qx> <qy> <qz> <qw>
//! ATT <roll> <pitch> <yaw>
//! C <u> <v>
//! PL <a> <b> <c> <v_min> <v_max>
//! ```
//! Every record after `FRAME` belongs to that frame. `ODO` is required,
//! `ATT` defaults to zero.

use super::{OdometryFrame, PoleLine, SegmentationObservation};
use crate::geometry::{ImageLine, PixelPoint, Pose};
use crate::ipm::AttitudeAngles;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One frame: the segmentation output and the odometry reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFrame {
    pub observation: SegmentationObservation,
    pub odometry: OdometryFrame,
}

pub fn write_dataset(frames: &[DatasetFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        let o = &f.observation;
        let q = f.odometry.pose.quaternion_xyzw();
        let t = f.odometry.pose.translation;
        let a = f.odometry.attitude;
        let _ = writeln!(out, "FRAME {} {:.6}", o.frame_id, o.timestamp);
        let _ = writeln!(
            out,
            "ODO {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}",
            t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        );
        let _ = writeln!(out, "ATT {:.12} {:.12} {:.12}", a.roll, a.pitch, a.yaw);
        for p in &o.lane_pixels {
            let _ = writeln!(out, "C {:.6} {:.6}", p.u, p.v);
        }
        for l in &o.pole_lines {
            let _ = writeln!(
                out,
                "PL {:.12} {:.12} {:.6} {:.6} {:.6}",
                l.line.a, l.line.b, l.line.c, l.v_min, l.v_max
            );
        }
    }
    out
}

struct Partial {
    id: u64,
    timestamp: f64,
    odo: Option<Pose>,
    att: AttitudeAngles,
    pixels: Vec<PixelPoint>,
    lines: Vec<PoleLine>,
    line: usize,
}

impl Partial {
    fn finish(self) -> Result<DatasetFrame, DatasetError> {
        let pose = self.odo.ok_or_else(|| DatasetError::Format {
            line: self.line,
            message: format!("frame {} has no ODO record", self.id),
        })?;
        Ok(DatasetFrame {
            observation: SegmentationObservation {
                frame_id: self.id,
                timestamp: self.timestamp,
                lane_pixels: self.pixels,
                pole_lines: self.lines,
            },
            odometry: OdometryFrame {
                timestamp: self.timestamp,
                pose,
                attitude: self.att,
            },
        })
    }
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetFrame>, DatasetError> {
    let mut frames = Vec::new();
    let mut cur: Option<Partial> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| DatasetError::Format { line: no + 1, message };
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        if tag == "FRAME" {
            if rest.len() != 2 {
                return Err(err("FRAME needs an id and a timestamp".into()));
            }
            let id = rest[0].parse::<u64>().map_err(|_| err(format!("invalid frame id `{}`", rest[0])))?;
            let timestamp = rest[1]
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| err(format!("invalid timestamp `{}`", rest[1])))?;
            if let Some(prev) = cur.take() {
                if !(timestamp > prev.timestamp) {
                    return Err(err("timestamps must be strictly increasing".into()));
                }
                frames.push(prev.finish()?);
            }
            cur = Some(Partial {
                id,
                timestamp,
                odo: None,
                att: AttitudeAngles::default(),
                pixels: Vec::new(),
                lines: Vec::new(),
                line: no + 1,
            });
            continue;
        }
        let f = cur.as_mut().ok_or_else(|| err(format!("`{tag}` record before any FRAME")))?;
        let v = rest
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| err(format!("invalid number in `{line}`")))?;
        let want = match tag {
            "ODO" => 7,
            "ATT" => 3,
            "C" => 2,
            "PL" => 5,
            _ => return Err(err(format!("unknown record `{tag}`"))),
        };
        if v.len() != want {
            return Err(err(format!("`{tag}` expects {want} values, found {}", v.len())));
        }
        match tag {
            "ODO" => f.odo = Some(Pose::from_components([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])),
            "ATT" => f.att = AttitudeAngles::new(v[0], v[1], v[2]),
            "C" => f.pixels.push(PixelPoint::new(v[0], v[1])),
            _ => {
                let line = ImageLine::from_coefficients(v[0], v[1], v[2]).map_err(|e| err(e.to_string()))?;
                f.lines.push(PoleLine {
                    line,
                    v_min: v[3],
                    v_max: v[4],
                });
            }
        }
    }
    if let Some(last) = cur {
        frames.push(last.finish()?);
    }
    Ok(frames)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetFrame>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

pub fn save_dataset(frames: &[DatasetFrame], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, write_dataset(frames)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<DatasetFrame> {
        (0..3)
            .map(|i| DatasetFrame {
                observation: SegmentationObservation {
                    frame_id: i,
                    timestamp: i as f64 * 0.2,
                    lane_pixels: vec![PixelPoint::new(100.5, 600.25), PixelPoint::new(700.0, 500.125)],
                    pole_lines: vec![PoleLine {
                        line: ImageLine::new(1.0, 0.01, -800.0).unwrap(),
                        v_min: 100.0,
                        v_max: 400.0,
                    }],
                },
                odometry: OdometryFrame {
                    timestamp: i as f64 * 0.2,
                    pose: Pose::planar(2.0 * i as f64, 0.1, 0.05 * i as f64),
                    attitude: AttitudeAngles::new(0.001, -0.002, 0.003),
                },
            })
            .collect()
    }

    #[test]
    fn round_trip_is_stable() {
        let text = write_dataset(&sample());
        let back = parse_dataset(&text).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(write_dataset(&back), text);
        assert_eq!(back[1].observation.lane_pixels, sample()[1].observation.lane_pixels);
        let e = back[2].odometry.pose.translation - sample()[2].odometry.pose.translation;
        assert!(e.norm() < 1e-9);
    }

    #[test]
    fn empty_dataset() {
        assert_eq!(write_dataset(&[]), "");
        assert!(parse_dataset("# nothing\n").unwrap().is_empty());
    }

    #[test]
    fn format_errors() {
        assert!(matches!(parse_dataset("C 1 2\n"), Err(DatasetError::Format { line: 1, .. })));
        assert!(matches!(parse_dataset("FRAME 0 0\nC 1\n"), Err(DatasetError::Format { line: 2, .. })));
        assert!(matches!(parse_dataset("FRAME 0 0\nATT 0 0 0\n"), Err(DatasetError::Format { line: 1, .. })));
        assert!(matches!(
            parse_dataset("FRAME 0 1\nODO 0 0 0 0 0 0 1\nFRAME 1 1\n"),
            Err(DatasetError::Format { line: 3, .. })
        ));
        assert!(matches!(parse_dataset("FRAME 0 0\nXX 1\n"), Err(DatasetError::Format { line: 2, .. })));
    }
}
