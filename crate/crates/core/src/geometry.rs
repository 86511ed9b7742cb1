//! Rigid transforms, line primitives and line fitting.

use nalgebra::{Matrix2, Matrix3, Matrix4, SymmetricEigen, UnitQuaternion, Vector3, Vector6};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::ops::Mul;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

/// Rigid 3D transform. Maps points from its local frame into its parent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    /// Planar pose: position on the z = 0 plane with a heading about +z.
    pub fn planar(x: f64, y: f64, heading: f64) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), heading),
            Vector3::new(x, y, 0.0),
        )
    }

    /// Builds a pose from `(x, y, z, w)` quaternion components; the
    /// quaternion is renormalized.
    pub fn from_components(t: [f64; 3], q: [f64; 4]) -> Self {
        let quat = nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]);
        // Printed unit quaternions are kept as read so text round trips are stable.
        let rotation = if (quat.norm() - 1.0).abs() < 1e-9 {
            UnitQuaternion::new_unchecked(quat)
        } else {
            UnitQuaternion::from_quaternion(quat)
        };
        Self::new(
            rotation,
            Vector3::new(t[0], t[1], t[2]),
        )
    }

    /// Quaternion as `[x, y, z, w]`.
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Heading about +z of the rotated x axis, in radians.
    pub fn yaw(&self) -> f64 {
        let x = self.rotation * Vector3::x();
        x.y.atan2(x.x)
    }

    /// Geodesic angle of the relative rotation, radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// SE(3) exponential of a twist `[ω; ρ]` (rotation first, then translation).
    pub fn exp(twist: &Vector6<f64>) -> Pose {
        let omega = Vector3::new(twist[0], twist[1], twist[2]);
        let rho = Vector3::new(twist[3], twist[4], twist[5]);
        let theta = omega.norm();
        let rotation = UnitQuaternion::from_scaled_axis(omega);
        let w = skew(&omega);
        let v = if theta < 1e-9 {
            Matrix3::identity() + 0.5 * w
        } else {
            let t2 = theta * theta;
            Matrix3::identity()
                + (1.0 - theta.cos()) / t2 * w
                + (theta - theta.sin()) / (t2 * theta) * (w * w)
        };
        Pose::new(rotation, v * rho)
    }

    /// Right-multiplied perturbation `self * exp(twist)`.
    pub fn retract(&self, twist: &Vector6<f64>) -> Pose {
        self.compose(&Pose::exp(twist))
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Pixel coordinates with sub-pixel precision.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Infinite 3D line through `point` along unit `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line3D {
    pub point: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Line3D {
    pub fn new(point: Vector3<f64>, direction: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(GeometryError::DegenerateInput("zero line direction"));
        }
        Ok(Self {
            point,
            direction: direction / n,
        })
    }

    pub fn through(a: &Vector3<f64>, b: &Vector3<f64>) -> Result<Self, GeometryError> {
        Self::new(*a, b - a)
    }

    /// Component of `p - point` orthogonal to the line.
    pub fn perpendicular(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = p - self.point;
        d - self.direction * self.direction.dot(&d)
    }
}

/// Image line `a*u + b*v + c = 0` with `a^2 + b^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ImageLine {
    /// Normalizes arbitrary coefficients so that `a^2 + b^2 = 1`.
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, GeometryError> {
        let n = a.hypot(b);
        if !(n > 1e-300) || !n.is_finite() {
            return Err(GeometryError::DegenerateInput("zero line normal"));
        }
        Ok(Self {
            a: a / n,
            b: b / n,
            c: c / n,
        })
    }

    /// Like `new`, but keeps coefficients that are already unit-normal as
    /// given so printed lines round trip exactly.
    pub fn from_coefficients(a: f64, b: f64, c: f64) -> Result<Self, GeometryError> {
        if (a.hypot(b) - 1.0).abs() < 1e-9 && c.is_finite() {
            Ok(Self { a, b, c })
        } else {
            Self::new(a, b, c)
        }
    }

    pub fn through(p: &PixelPoint, q: &PixelPoint) -> Result<Self, GeometryError> {
        let (du, dv) = (q.u - p.u, q.v - p.v);
        Self::new(dv, -du, du * p.v - dv * p.u)
    }

    pub fn signed_distance(&self, p: &PixelPoint) -> f64 {
        self.a * p.u + self.b * p.v + self.c
    }
}

/// Perpendicular distance from `p` to `line`.
pub fn point_to_line_distance_3d(p: &Vector3<f64>, line: &Line3D) -> f64 {
    line.perpendicular(p).norm()
}

pub fn point_to_line_distance_2d(p: &PixelPoint, line: &ImageLine) -> f64 {
    line.signed_distance(p).abs()
}

/// Total-least-squares line through 2D points.
pub fn fit_line_lsq_2d(points: &[PixelPoint]) -> Result<ImageLine, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegenerateInput("need at least two points"));
    }
    let n = points.len() as f64;
    let (su, sv) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.u, b + p.v));
    let (mu, mv) = (su / n, sv / n);
    let mut cov = Matrix2::zeros();
    for p in points {
        let (du, dv) = (p.u - mu, p.v - mv);
        cov[(0, 0)] += du * du;
        cov[(0, 1)] += du * dv;
        cov[(1, 1)] += dv * dv;
    }
    cov[(1, 0)] = cov[(0, 1)];
    if cov.trace() <= f64::EPSILON * (mu * mu + mv * mv).max(1.0) {
        return Err(GeometryError::DegenerateInput("all points coincide"));
    }
    let eig = SymmetricEigen::new(cov);
    // Normal = eigenvector of the smallest eigenvalue.
    let i = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let normal = eig.eigenvectors.column(i);
    ImageLine::new(normal[0], normal[1], -(normal[0] * mu + normal[1] * mv))
}

/// Line through the centroid along the principal axis of the point spread.
pub fn fit_line_lsq_3d(points: &[Vector3<f64>]) -> Result<Line3D, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegenerateInput("need at least two points"));
    }
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    if cov.trace() <= f64::EPSILON * centroid.norm_squared().max(1.0) {
        return Err(GeometryError::DegenerateInput("all points coincide"));
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imax();
    Line3D::new(centroid, eig.eigenvectors.column(i).into_owned())
}

/// RANSAC over two-point line hypotheses, refined by a least-squares fit on
/// the winning inlier set. Returns the refined line and those inliers.
pub fn ransac_line_3d(
    points: &[Vector3<f64>],
    iterations: usize,
    inlier_threshold: f64,
    seed: u64,
) -> Result<(Line3D, Vec<usize>), GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegenerateInput("need at least two points"));
    }
    if !(inlier_threshold > 0.0) {
        return Err(GeometryError::DegenerateInput("threshold must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Vec<usize>> = None;
    for _ in 0..iterations.max(1) {
        let i = rng.random_range(0..points.len());
        let mut j = rng.random_range(0..points.len() - 1);
        if j >= i {
            j += 1;
        }
        let Ok(line) = Line3D::through(&points[i], &points[j]) else {
            continue;
        };
        let inliers: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| point_to_line_distance_3d(p, &line) <= inlier_threshold)
            .map(|(k, _)| k)
            .collect();
        if best.as_ref().is_none_or(|b| inliers.len() > b.len()) {
            best = Some(inliers);
        }
    }
    let inliers = match best {
        Some(b) if b.len() >= 2 => b,
        _ => {
            // Every sampled pair coincided; fall back to all points.
            (0..points.len()).collect()
        }
    };
    let subset: Vec<Vector3<f64>> = inliers.iter().map(|&k| points[k]).collect();
    let line = fit_line_lsq_3d(&subset)?;
    Ok((line, inliers))
}
