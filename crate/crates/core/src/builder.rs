//! Offline map construction from a registered, labeled point cloud.
//!
//! Lane markings: ground points are binned into a bird's-eye-view grid, the
//! mean reflectivity per cell is thresholded with Otsu's method, and the
//! source points of bright cells become lane points. Poles: pole-labeled
//! points are clustered by Euclidean linkage and each cluster is fitted with
//! a RANSAC line, then replaced by a strictly vertical segment.

use crate::geometry::{ransac_line_3d, GeometryError};
use crate::map::kdtree::KdTree;
use crate::map::{LanePoint, Pole, SemanticMap};
use nalgebra::Vector3;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const CLOUD_HEADER: &str = "CLOUD 1";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("cloud has no ground-labeled points")]
    EmptyGround,
    #[error("histogram has a single populated bin")]
    Degenerate,
    #[error("not a pole: {0}")]
    NotAPole(String),
    #[error("cluster has {0} points, fewer than required")]
    TooFewPoints(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ground,
    Pole,
    Other,
}

impl Label {
    pub fn code(&self) -> char {
        match self {
            Label::Ground => 'G',
            Label::Pole => 'P',
            Label::Other => 'O',
        }
    }

    pub fn from_code(s: &str) -> Option<Label> {
        match s {
            "G" => Some(Label::Ground),
            "P" => Some(Label::Pole),
            "O" => Some(Label::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Vector3<f64>,
    pub intensity: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCloud {
    pub points: Vec<CloudPoint>,
}

impl LabeledCloud {
    pub fn with_label(&self, label: Label) -> impl Iterator<Item = (usize, &CloudPoint)> {
        self.points.iter().enumerate().filter(move |(_, p)| p.label == label)
    }

    /// `CLOUD 1` text: header, then `<x> <y> <z> <intensity> <label>` records.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 + 48 * self.points.len());
        out.push_str(CLOUD_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.6} {:.6} {:.6} {:.3} {}",
                p.position.x,
                p.position.y,
                p.position.z,
                p.intensity,
                p.label.code()
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, BuildError> {
        let mut points = Vec::new();
        let mut saw_header = false;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| BuildError::Format {
                line: no + 1,
                message,
            };
            if !saw_header {
                if line != CLOUD_HEADER {
                    return Err(err(format!("expected `{CLOUD_HEADER}`, found `{line}`")));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", f.len())));
            }
            let mut nums = [0.0; 4];
            for (slot, s) in nums.iter_mut().zip(&f[..4]) {
                *slot = s
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("invalid number `{s}`")))?;
            }
            if !(0.0..=255.0).contains(&nums[3]) {
                return Err(err(format!("intensity {} outside [0, 255]", nums[3])));
            }
            let label = Label::from_code(f[4]).ok_or_else(|| err(format!("unknown label `{}`", f[4])))?;
            points.push(CloudPoint {
                position: Vector3::new(nums[0], nums[1], nums[2]),
                intensity: nums[3],
                label,
            });
        }
        if !saw_header {
            return Err(BuildError::Format {
                line: 1,
                message: "missing CLOUD header".into(),
            });
        }
        Ok(LabeledCloud { points })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BuildError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BuildError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BuildError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| BuildError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BevCell {
    pub intensity: f64,
    pub sources: Vec<usize>,
}

/// Sparse BEV raster keyed by `(floor(x / res), floor(y / res))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub resolution: f64,
    pub cells: BTreeMap<(i64, i64), BevCell>,
}

impl BevGrid {
    pub fn origin(&self) -> Option<(f64, f64)> {
        let ((i, _), _) = self.cells.first_key_value()?;
        let j = self.cells.keys().map(|k| k.1).min()?;
        Some((*i as f64 * self.resolution, j as f64 * self.resolution))
    }

    pub fn histogram(&self) -> Histogram256 {
        let mut h = Histogram256::default();
        for c in self.cells.values() {
            h.counts[intensity_bin(c.intensity)] += 1;
        }
        h
    }
}

/// Floor-quantized, clamped 8-bit bin.
pub fn intensity_bin(intensity: f64) -> usize {
    intensity.clamp(0.0, 255.0).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    pub counts: [u64; 256],
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self { counts: [0; 256] }
    }
}

/// Bins ground points by (x, y); each cell keeps the mean intensity and the
/// indices of its source points.
pub fn project_to_bev(cloud: &LabeledCloud, resolution: f64) -> Result<BevGrid, BuildError> {
    assert!(resolution > 0.0, "resolution must be positive");
    let mut sums: BTreeMap<(i64, i64), (f64, Vec<usize>)> = BTreeMap::new();
    for (i, p) in cloud.with_label(Label::Ground) {
        let key = (
            (p.position.x / resolution).floor() as i64,
            (p.position.y / resolution).floor() as i64,
        );
        let e = sums.entry(key).or_default();
        e.0 += p.intensity.clamp(0.0, 255.0);
        e.1.push(i);
    }
    if sums.is_empty() {
        return Err(BuildError::EmptyGround);
    }
    let cells = sums
        .into_iter()
        .map(|(k, (sum, sources))| {
            let intensity = sum / sources.len() as f64;
            (k, BevCell { intensity, sources })
        })
        .collect();
    Ok(BevGrid { resolution, cells })
}

/// Otsu's threshold: the `t` maximizing between-class variance of bins
/// `<= t` versus `> t`. Ties resolve to the smallest `t`.
pub fn otsu_threshold(h: &Histogram256) -> Result<u8, BuildError> {
    if h.counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(BuildError::Degenerate);
    }
    let total: u64 = h.counts.iter().sum();
    let total_sum: u64 = h.counts.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let mut count0 = 0u64;
    let mut sum0 = 0u64;
    let mut best: Option<(Score, u8)> = None;
    for t in 0..255usize {
        count0 += h.counts[t];
        sum0 += t as u64 * h.counts[t];
        let count1 = total - count0;
        if count0 == 0 || count1 == 0 {
            continue;
        }
        let score = Score::new(count0, sum0, count1, total_sum - sum0);
        // Strictly greater keeps the lowest of tied thresholds.
        if best.as_ref().is_none_or(|(b, _)| score.cmp(b) == Ordering::Greater) {
            best = Some((score, t as u8));
        }
    }
    Ok(best.expect("two occupied bins give a split").1)
}

/// Between-class variance as the exact fraction
/// `(sum0 * count1 - sum1 * count0)^2 / (count0 * count1)`, with a float
/// fallback when the square does not fit.
enum Score {
    Exact(u128, u128),
    Approx(f64),
}

impl Score {
    fn new(count0: u64, sum0: u64, count1: u64, sum1: u64) -> Self {
        let (a, b) = (sum0 as u128 * count1 as u128, sum1 as u128 * count0 as u128);
        let d = a.abs_diff(b);
        match (d.checked_mul(d), (count0 as u128).checked_mul(count1 as u128)) {
            (Some(num), Some(den)) => Score::Exact(num, den),
            _ => Score::Approx(between_class_variance(count0, sum0, count1, sum1)),
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Score::Exact(n, d) => n as f64 / d as f64,
            Score::Approx(v) => v,
        }
    }

    fn cmp(&self, other: &Score) -> Ordering {
        match (self, other) {
            (&Score::Exact(a, b), &Score::Exact(c, d)) => cmp_fraction(a, b, c, d),
            _ => self.value().total_cmp(&other.value()),
        }
    }
}

/// Compares `a/b` with `c/d` by continued-fraction expansion, so no
/// products are formed.
fn cmp_fraction(a: u128, b: u128, c: u128, d: u128) -> Ordering {
    let (qa, qc) = (a / b, c / d);
    if qa != qc {
        return qa.cmp(&qc);
    }
    match (a % b, c % d) {
        (0, 0) => Ordering::Equal,
        (0, _) => Ordering::Less,
        (_, 0) => Ordering::Greater,
        (ra, rc) => cmp_fraction(d, rc, b, ra),
    }
}

/// `w0 * w1 * (mu0 - mu1)^2` in unnormalized counts.
pub fn between_class_variance(count0: u64, sum0: u64, count1: u64, sum1: u64) -> f64 {
    let mu0 = sum0 as f64 / count0 as f64;
    let mu1 = sum1 as f64 / count1 as f64;
    count0 as f64 * count1 as f64 * (mu0 - mu1) * (mu0 - mu1)
}

/// Source points of cells whose quantized intensity exceeds `threshold`.
pub fn extract_lane_points(grid: &BevGrid, cloud: &LabeledCloud, threshold: f64) -> Vec<LanePoint> {
    let mut idx: Vec<usize> = grid
        .cells
        .values()
        .filter(|c| intensity_bin(c.intensity) as f64 > threshold)
        .flat_map(|c| c.sources.iter().copied())
        .collect();
    idx.sort_unstable();
    idx.into_iter()
        .map(|i| LanePoint {
            position: cloud.points[i].position,
        })
        .collect()
}

/// Connected components under "within `link_distance`". Clusters are
/// ordered by their smallest member; members are ascending.
pub fn cluster_euclidean(points: &[Vector3<f64>], link_distance: f64) -> Vec<Vec<usize>> {
    assert!(link_distance > 0.0, "link distance must be positive");
    let tree = KdTree::build(points);
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, p) in points.iter().enumerate() {
        for n in tree.within_radius(p, link_distance) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, n.index));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..points.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub resolution: f64,
    pub link_distance: f64,
    pub min_pole_points: usize,
    pub min_pole_height: f64,
    pub max_pole_tilt_deg: f64,
    pub ransac_iterations: usize,
    pub ransac_threshold: f64,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            link_distance: 0.5,
            min_pole_points: 10,
            min_pole_height: 1.0,
            max_pole_tilt_deg: 10.0,
            ransac_iterations: 100,
            ransac_threshold: 0.1,
            seed: 0,
        }
    }
}

/// Fits a vertical pole to one cluster.
pub fn extract_pole(cluster: &[Vector3<f64>], params: &BuildParams, seed: u64) -> Result<Pole, BuildError> {
    if cluster.len() < params.min_pole_points.max(2) {
        return Err(BuildError::TooFewPoints(cluster.len()));
    }
    let (line, inliers) = ransac_line_3d(cluster, params.ransac_iterations, params.ransac_threshold, seed)?;
    let tilt = line.direction.z.abs().min(1.0).acos().to_degrees();
    if tilt > params.max_pole_tilt_deg {
        return Err(BuildError::NotAPole(format!("axis tilted {tilt:.1} deg from vertical")));
    }
    let n = inliers.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &inliers {
        let p = cluster[i];
        sx += p.x;
        sy += p.y;
        lo = lo.min(p.z);
        hi = hi.max(p.z);
    }
    if hi - lo < params.min_pole_height {
        return Err(BuildError::NotAPole(format!("height {:.2} m below minimum", hi - lo)));
    }
    Ok(Pole::new(sx / n, sy / n, lo, hi))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub ground_cells: usize,
    pub threshold: Option<u8>,
    pub pole_clusters: usize,
    pub rejected_clusters: Vec<String>,
}

/// Full pipeline. Stage failures that only affect one feature class (no
/// ground, flat histogram, rejected clusters) are recorded in the report.
pub fn build_semantic_map(
    cloud: &LabeledCloud,
    params: &BuildParams,
) -> Result<(SemanticMap, BuildReport), BuildError> {
    let mut report = BuildReport::default();
    let lanes = match project_to_bev(cloud, params.resolution) {
        Ok(grid) => {
            report.ground_cells = grid.cells.len();
            match otsu_threshold(&grid.histogram()) {
                Ok(t) => {
                    report.threshold = Some(t);
                    extract_lane_points(&grid, cloud, t as f64)
                }
                Err(BuildError::Degenerate) => Vec::new(),
                Err(e) => return Err(e),
            }
        }
        Err(BuildError::EmptyGround) => Vec::new(),
        Err(e) => return Err(e),
    };

    let pole_pts: Vec<Vector3<f64>> = cloud.with_label(Label::Pole).map(|(_, p)| p.position).collect();
    let clusters = cluster_euclidean(&pole_pts, params.link_distance);
    report.pole_clusters = clusters.len();
    let mut poles = Vec::new();
    for (ci, members) in clusters.iter().enumerate() {
        let pts: Vec<_> = members.iter().map(|&i| pole_pts[i]).collect();
        match extract_pole(&pts, params, params.seed.wrapping_add(ci as u64)) {
            Ok(p) => poles.push(p),
            Err(e) => report.rejected_clusters.push(format!("cluster {ci}: {e}")),
        }
    }
    Ok((SemanticMap::new(lanes, poles), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ground(x: f64, y: f64, intensity: f64) -> CloudPoint {
        CloudPoint {
            position: Vector3::new(x, y, 0.0),
            intensity,
            label: Label::Ground,
        }
    }

    /// Exhaustive maximizer evaluated independently per threshold.
    fn otsu_oracle(h: &Histogram256) -> Option<u8> {
        let mut best: Option<((u128, u128), u8)> = None;
        for t in 0..255usize {
            let c0: u64 = h.counts[..=t].iter().sum();
            let c1: u64 = h.counts[t + 1..].iter().sum();
            if c0 == 0 || c1 == 0 {
                continue;
            }
            let s0: u64 = (0..=t).map(|i| i as u64 * h.counts[i]).sum();
            let s1: u64 = (t + 1..256).map(|i| i as u64 * h.counts[i]).sum();
            let d = (s0 as u128 * c1 as u128).abs_diff(s1 as u128 * c0 as u128);
            let v = (d * d, c0 as u128 * c1 as u128);
            if best.is_none_or(|(b, _)| v.0 * b.1 > b.0 * v.1) {
                best = Some((v, t as u8));
            }
        }
        best.map(|b| b.1)
    }

    #[test]
    fn bev_examples() {
        let cloud = LabeledCloud { points: vec![ground(0.05, 0.05, 77.0)] };
        let g = project_to_bev(&cloud, 0.1).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.cells.values().next().unwrap().intensity, 77.0);
        let cloud = LabeledCloud { points: vec![ground(0.01, 0.01, 100.0), ground(0.09, 0.02, 200.0)] };
        let g = project_to_bev(&cloud, 0.1).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.cells.values().next().unwrap().intensity, 150.0);
        let grid_pts: Vec<_> = (0..20)
            .flat_map(|i| (0..30).map(move |j| ground(i as f64 * 0.1 + 0.05, j as f64 * 0.1 + 0.05, 10.0)))
            .collect();
        let g = project_to_bev(&LabeledCloud { points: grid_pts }, 0.1).unwrap();
        assert_eq!(g.cells.len(), 600);
        assert!(matches!(project_to_bev(&LabeledCloud::default(), 0.1), Err(BuildError::EmptyGround)));
    }

    #[test]
    fn otsu_examples() {
        let mut h = Histogram256::default();
        h.counts[10] = 50;
        h.counts[200] = 50;
        assert_eq!(otsu_threshold(&h).unwrap(), 10);
        assert_eq!(otsu_oracle(&h), Some(10));
        let mut h = Histogram256::default();
        h.counts[42] = 1000;
        assert!(matches!(otsu_threshold(&h), Err(BuildError::Degenerate)));
    }

    #[test]
    fn otsu_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let mut h = Histogram256::default();
            let bins = rng.random_range(2..40);
            for _ in 0..bins {
                h.counts[rng.random_range(0..256)] += rng.random_range(1..500);
            }
            match otsu_threshold(&h) {
                Ok(t) => assert_eq!(Some(t), otsu_oracle(&h)),
                Err(_) => assert!(h.counts.iter().filter(|&&c| c > 0).count() < 2),
            }
        }
    }

    #[test]
    fn lane_extraction_thresholds() {
        let cloud = LabeledCloud {
            points: vec![ground(0.0, 0.0, 20.0), ground(1.0, 0.0, 220.0), ground(2.0, 0.0, 40.0)],
        };
        let g = project_to_bev(&cloud, 0.1).unwrap();
        assert!(extract_lane_points(&g, &cloud, 255.0).is_empty());
        assert_eq!(extract_lane_points(&g, &cloud, 19.0).len(), 3);
        assert_eq!(extract_lane_points(&g, &cloud, 100.0), vec![LanePoint::new(1.0, 0.0, 0.0)]);
    }

    #[test]
    fn striped_road_precision_recall() {
        // 10 m x 6 m road sampled every 2 cm; 20 cm bright stripes on cell boundaries at y = ±1.8.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut pts = Vec::new();
        let mut is_stripe = Vec::new();
        for i in 0..500 {
            for j in 0..300 {
                let (x, y) = (i as f64 * 0.02 + 0.01, -3.0 + j as f64 * 0.02 + 0.01);
                let stripe = ((y.abs() - 1.8).abs()) < 0.1;
                let intensity = if stripe {
                    rng.random_range(180.0..240.0)
                } else {
                    rng.random_range(10.0..60.0)
                };
                pts.push(ground(x, y, intensity));
                is_stripe.push(stripe);
            }
        }
        let cloud = LabeledCloud { points: pts };
        let grid = project_to_bev(&cloud, 0.1).unwrap();
        let t = otsu_threshold(&grid.histogram()).unwrap();
        let lanes = extract_lane_points(&grid, &cloud, t as f64);
        let truth: usize = is_stripe.iter().filter(|&&s| s).count();
        let hits = lanes
            .iter()
            .filter(|l| ((l.position.y.abs() - 1.8).abs()) < 0.1)
            .count();
        let recall = hits as f64 / truth as f64;
        let precision = hits as f64 / lanes.len() as f64;
        assert!(recall >= 0.99 && precision >= 0.99, "recall {recall} precision {precision}");
    }

    fn union_find_oracle(points: &[Vector3<f64>], link: f64) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut label: Vec<usize> = (0..n).collect();
        // Repeated relaxation over the full distance matrix.
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if (points[i] - points[j]).norm_squared() <= link * link && label[j] < label[i] {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in label.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        groups.into_values().collect()
    }

    #[test]
    fn clustering_examples_and_oracle() {
        let two = [Vector3::zeros(), Vector3::new(10.0, 0.0, 0.0)];
        assert_eq!(cluster_euclidean(&two, 0.5).len(), 2);
        let chain: Vec<_> = (0..20).map(|i| Vector3::new(i as f64 * 0.3, 0.0, 0.0)).collect();
        assert_eq!(cluster_euclidean(&chain, 0.5).len(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let mut pts = Vec::new();
            for _ in 0..rng.random_range(1..6) {
                let c = Vector3::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), 0.0);
                for _ in 0..rng.random_range(1..30) {
                    pts.push(c + Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..3.0)));
                }
            }
            assert_eq!(cluster_euclidean(&pts, 0.5), union_find_oracle(&pts, 0.5));
        }
    }

    #[test]
    fn clustering_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let pts: Vec<_> = (0..200)
            .map(|_| Vector3::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), 0.0))
            .collect();
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.reverse();
        perm.rotate_left(37);
        let shuffled: Vec<_> = perm.iter().map(|&i| pts[i]).collect();
        let to_sets = |cl: Vec<Vec<usize>>, map: &dyn Fn(usize) -> usize| {
            let mut s: Vec<Vec<usize>> = cl
                .into_iter()
                .map(|c| {
                    let mut c: Vec<_> = c.into_iter().map(map).collect();
                    c.sort();
                    c
                })
                .collect();
            s.sort();
            s
        };
        let a = to_sets(cluster_euclidean(&pts, 0.6), &|i| i);
        let b = to_sets(cluster_euclidean(&shuffled, 0.6), &|i| perm[i]);
        assert_eq!(a, b);
    }

    #[test]
    fn pole_extraction() {
        let params = BuildParams::default();
        let vertical: Vec<_> = (0..50).map(|i| Vector3::new(3.0, 4.0, 4.0 * i as f64 / 49.0)).collect();
        let p = extract_pole(&vertical, &params, 1).unwrap();
        assert!((p.z_low).abs() < 1e-12 && (p.z_high - 4.0).abs() < 1e-12);
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 4.0).abs() < 1e-12);

        let row: Vec<_> = (0..50).map(|i| Vector3::new(i as f64 * 0.1, 0.0, 1.0)).collect();
        assert!(matches!(extract_pole(&row, &params, 1), Err(BuildError::NotAPole(_))));
        let short: Vec<_> = (0..20).map(|i| Vector3::new(0.0, 0.0, i as f64 * 0.02)).collect();
        assert!(matches!(extract_pole(&short, &params, 1), Err(BuildError::NotAPole(_))));
        assert!(matches!(extract_pole(&vertical[..5], &params, 1), Err(BuildError::TooFewPoints(5))));
    }

    #[test]
    fn pole_with_outliers_keeps_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut pts: Vec<_> = (0..90).map(|i| Vector3::new(-2.0, 1.0, 0.5 + 3.5 * i as f64 / 89.0)).collect();
        while pts.len() < 100 {
            let p = Vector3::new(rng.random_range(-2.5..-1.5), rng.random_range(0.5..1.5), rng.random_range(0.0..4.5));
            if (p.xy() - nalgebra::Vector2::new(-2.0, 1.0)).norm() > 0.15 {
                pts.push(p);
            }
        }
        let pole = extract_pole(&pts, &BuildParams::default(), 9).unwrap();
        assert!((pole.z_low - 0.5).abs() < 0.05 && (pole.z_high - 4.0).abs() < 0.05);
        assert!((pole.x + 2.0).abs() < 0.05 && (pole.y - 1.0).abs() < 0.05);
    }

    #[test]
    fn pipeline_cases() {
        let (m, _) = build_semantic_map(&LabeledCloud::default(), &BuildParams::default()).unwrap();
        assert!(m.is_empty());
        let pole_only = LabeledCloud {
            points: (0..40)
                .map(|i| CloudPoint {
                    position: Vector3::new(5.0, 5.0, i as f64 * 0.1),
                    intensity: 90.0,
                    label: Label::Pole,
                })
                .collect(),
        };
        let (m, report) = build_semantic_map(&pole_only, &BuildParams::default()).unwrap();
        assert!(m.lanes().is_empty());
        assert_eq!(m.poles().len(), 1);
        assert_eq!(report.pole_clusters, 1);
    }

    #[test]
    fn cloud_text_round_trip_and_errors() {
        let cloud = LabeledCloud {
            points: vec![
                ground(1.0, 2.0, 12.5),
                CloudPoint { position: Vector3::new(0.0, 0.0, 3.0), intensity: 255.0, label: Label::Pole },
                CloudPoint { position: Vector3::new(-1.0, 0.5, 0.2), intensity: 0.0, label: Label::Other },
            ],
        };
        let text = cloud.to_text();
        assert_eq!(LabeledCloud::from_text(&text).unwrap(), cloud);
        assert!(matches!(LabeledCloud::from_text("CLOUD 1\n1 2 3 300 G\n"), Err(BuildError::Format { line: 2, .. })));
        assert!(matches!(LabeledCloud::from_text("CLOUD 1\n1 2 3 30 X\n"), Err(BuildError::Format { line: 2, .. })));
        assert!(matches!(LabeledCloud::from_text("SEMMAP 1\n"), Err(BuildError::Format { line: 1, .. })));
    }
}
