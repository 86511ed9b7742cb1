//! Monocular semantic localization against a tiled map of lane points and
//! poles.
//!
//! The pipeline lifts lane-marking pixels onto the ground with a
//! rotation-compensated inverse perspective mapping ([`ipm`]), accumulates
//! them in a sliding window, associates them and projected poles with the
//! [`map`], and refines the vehicle pose with Levenberg–Marquardt
//! ([`localizer`]). [`builder`] turns labeled point clouds into maps and
//! [`sim`] synthesizes worlds, observations and odometry for closed-loop
//! evaluation with [`eval`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod config;
pub mod eval;
pub mod geometry;
pub mod ipm;
pub mod localizer;
pub mod map;
pub mod sim;

pub use geometry::{ImageLine, Line3D, PixelPoint, Pose};
pub use ipm::{AttitudeAngles, CameraIntrinsics, GroundPoint, MountCalibration};
pub use map::{LanePoint, Pole, SemanticMap};
