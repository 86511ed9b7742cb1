//! `SEMMAP 1` text format.
//!
//! ```text
//! SEMMAP 1
//! # comment
//! L <x> <y> <z>
//! P <x> <y> <z_low> <z_high>
//! ```
//! Coordinates are written with six decimals; records may appear in any order.

use super::{LanePoint, MapError, Pole, SemanticMap, DEFAULT_TILE_SIZE};
use std::fmt::Write as _;
use std::path::Path;

pub const MAP_HEADER: &str = "SEMMAP 1";

pub fn map_save(map: &SemanticMap) -> String {
    let mut out = String::with_capacity(16 + 40 * (map.lanes().len() + map.poles().len()));
    out.push_str(MAP_HEADER);
    out.push('\n');
    for l in map.lanes() {
        let p = l.position;
        let _ = writeln!(out, "L {:.6} {:.6} {:.6}", p.x, p.y, p.z);
    }
    for p in map.poles() {
        let _ = writeln!(out, "P {:.6} {:.6} {:.6} {:.6}", p.x, p.y, p.z_low, p.z_high);
    }
    out
}

pub fn map_load(text: &str) -> Result<SemanticMap, MapError> {
    map_load_with_tile_size(text, DEFAULT_TILE_SIZE)
}

pub fn map_load_with_tile_size(text: &str, tile_size: f64) -> Result<SemanticMap, MapError> {
    let mut lines = text.lines().enumerate();
    let header = lines.by_ref().find(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    match header {
        None => {
            return Err(MapError::Format {
                line: 1,
                message: "missing SEMMAP header".into(),
            })
        }
        Some((no, h)) => {
            let mut parts = h.split_whitespace();
            if parts.next() != Some("SEMMAP") {
                return Err(MapError::Format {
                    line: no + 1,
                    message: format!("expected `{MAP_HEADER}`, found `{h}`"),
                });
            }
            let version = parts.next().unwrap_or("");
            if version != "1" || parts.next().is_some() {
                return Err(MapError::Version(version.to_string()));
            }
        }
    }
    let mut lanes = Vec::new();
    let mut poles = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| MapError::Format {
                        line: no + 1,
                        message: format!("invalid number `{f}`"),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        match (tag, values.as_slice()) {
            ("L", &[x, y, z]) => lanes.push(LanePoint::new(x, y, z)),
            ("P", &[x, y, lo, hi]) => {
                if !(hi > lo) {
                    return Err(MapError::Format {
                        line: no + 1,
                        message: "pole z_high must exceed z_low".into(),
                    });
                }
                poles.push(Pole::new(x, y, lo, hi))
            }
            ("L", _) | ("P", _) => {
                return Err(MapError::Format {
                    line: no + 1,
                    message: format!("wrong field count for `{tag}` record"),
                })
            }
            _ => {
                return Err(MapError::Format {
                    line: no + 1,
                    message: format!("unknown record `{tag}`"),
                })
            }
        }
    }
    Ok(SemanticMap::with_tile_size(lanes, poles, tile_size))
}

pub fn map_save_file(map: &SemanticMap, path: impl AsRef<Path>) -> Result<(), MapError> {
    let path = path.as_ref();
    std::fs::write(path, map_save(map)).map_err(|source| MapError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn map_load_file(path: impl AsRef<Path>) -> Result<SemanticMap, MapError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MapError::Io {
        path: path.display().to_string(),
        source,
    })?;
    map_load(&text)
}
