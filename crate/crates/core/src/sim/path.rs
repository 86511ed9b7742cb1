//! Planar reference paths built from straight and circular segments.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Straight { length: f64 },
    /// Circular arc; positive `angle` (radians) turns left.
    Arc { radius: f64, angle: f64 },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle } => radius * angle.abs(),
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Segment::Straight { length } => write!(f, "S{length}"),
            Segment::Arc { radius, angle } => write!(f, "A{radius}:{}", angle.to_degrees()),
        }
    }
}

impl FromStr for Segment {
    type Err = String;

    /// `S<length>` or `A<radius>:<degrees>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("invalid segment `{s}`");
        let num = |t: &str| t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
        if let Some(rest) = s.strip_prefix('S') {
            let length = num(rest)?;
            if length < 0.0 {
                return Err(bad());
            }
            Ok(Segment::Straight { length })
        } else if let Some(rest) = s.strip_prefix('A') {
            let (r, a) = rest.split_once(':').ok_or_else(bad)?;
            let radius = num(r)?;
            if !(radius > 0.0) {
                return Err(bad());
            }
            Ok(Segment::Arc {
                radius,
                angle: num(a)?.to_radians(),
            })
        } else {
            Err(bad())
        }
    }
}

/// Planar pose on the path: position and heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl PathPose {
    /// Point `offset` meters to the left of the path.
    pub fn lateral(&self, offset: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.x - offset * s, self.y + offset * c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<Segment>,
    starts: Vec<(f64, PathPose)>,
    length: f64,
}

impl Path {
    /// Path starting at the origin heading along +x, truncated to `extent`.
    pub fn new(segments: &[Segment], extent: f64) -> Self {
        let mut starts = Vec::new();
        let mut pose = PathPose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        let mut s = 0.0;
        let mut kept = Vec::new();
        for seg in segments {
            if s >= extent {
                break;
            }
            let len = seg.length().min(extent - s);
            let seg = match *seg {
                Segment::Straight { .. } => Segment::Straight { length: len },
                Segment::Arc { radius, angle } => Segment::Arc {
                    radius,
                    angle: angle.signum() * len / radius,
                },
            };
            starts.push((s, pose));
            pose = advance(&pose, &seg, len);
            kept.push(seg);
            s += len;
        }
        Self {
            segments: kept,
            starts,
            length: s,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// True when the end pose coincides with the start.
    pub fn is_closed(&self) -> bool {
        if self.segments.is_empty() {
            return false;
        }
        let a = self.pose_at(0.0);
        let b = self.pose_at(self.length);
        let dh = (b.heading - a.heading).rem_euclid(std::f64::consts::TAU);
        (a.x - b.x).hypot(a.y - b.y) < 1e-6 && (dh < 1e-9 || std::f64::consts::TAU - dh < 1e-9)
    }

    /// Pose at arc length `s`, clamped to the path.
    pub fn pose_at(&self, s: f64) -> PathPose {
        let s = s.clamp(0.0, self.length);
        let i = self.starts.partition_point(|(s0, _)| *s0 <= s).saturating_sub(1);
        match self.starts.get(i) {
            None => PathPose {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
            Some((s0, p0)) => advance(p0, &self.segments[i], s - s0),
        }
    }
}

fn advance(p: &PathPose, seg: &Segment, d: f64) -> PathPose {
    match *seg {
        Segment::Straight { .. } => PathPose {
            x: p.x + d * p.heading.cos(),
            y: p.y + d * p.heading.sin(),
            heading: p.heading,
        },
        Segment::Arc { radius, angle } => {
            let k = angle.signum() / radius;
            let h = p.heading + k * d;
            PathPose {
                x: p.x + (h.sin() - p.heading.sin()) / k,
                y: p.y - (h.cos() - p.heading.cos()) / k,
                heading: h,
            }
        }
    }
}
