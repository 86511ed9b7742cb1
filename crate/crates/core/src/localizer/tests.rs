use super::*;
use crate::geometry::point_to_line_distance_3d;
use crate::ipm::project_pinhole;
use crate::map::LanePoint;
use crate::sim::{generate_map, synthesize_observation, NoiseSpec, Segment, SensorSpec, WorldSpec};
use nalgebra::{Matrix3x4, UnitQuaternion, Vector4};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) fn level_rig() -> Rig {
    Rig::new(
        CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0, 1280, 720),
        MountCalibration::forward_facing(1.5, 1.0, 0.0),
    )
}

fn road(segments: Vec<Segment>, poles: bool) -> SemanticMap {
    generate_map(&WorldSpec {
        segments,
        extent: f64::INFINITY,
        dash_period: 0.0,
        pole_spacing: if poles { 20.0 } else { 1e9 },
        ..WorldSpec::default()
    })
}

fn straight(poles: bool) -> SemanticMap {
    road(vec![Segment::Straight { length: 200.0 }], poles)
}

/// Noise-free lifted lane points and pole lines seen from `pose`.
fn perfect(map: &SemanticMap, pose: &Pose, rig: &Rig, att: &AttitudeAngles) -> (Vec<Vector3<f64>>, Vec<PoleLine>) {
    let obs = synthesize_observation(map, pose, att, rig, &SensorSpec::default(), &NoiseSpec::default(), 0);
    let lift = lift_lane_pixels(&obs, &rig.intrinsics, &rig.mount, att, &rig.ipm);
    (lift.points, obs.pole_lines)
}

fn solve(prior: &Pose, pts: &[Vector3<f64>], lines: &[PoleLine], map: &SemanticMap, cfg: &SolverConfig) -> (Pose, SolveStats) {
    let input = FrameInput {
        lane_points: pts,
        pole_lines: lines,
        attitude: AttitudeAngles::default(),
    };
    optimize_pose(prior, &input, map, &level_rig(), cfg)
}

fn model() -> ResidualModel {
    ResidualModel::new(&level_rig(), &AttitudeAngles::default(), &SolverConfig::default())
}

fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> Pose {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Pose::new(
        UnitQuaternion::from_scaled_axis(axis * rng.random_range(0.0..3.0)),
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        ),
    )
}

#[test]
fn prior_pose_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, c) = (random_pose(&mut rng, 10.0), random_pose(&mut rng, 10.0));
    assert!((prior_pose(&a, &a, &c).to_matrix() - c.to_matrix()).amax() < 1e-12);
    let i = Pose::identity();
    assert_eq!(prior_pose(&i, &i, &i).to_matrix(), i.to_matrix());
    for _ in 0..100 {
        let (t, p, k) = (random_pose(&mut rng, 50.0), random_pose(&mut rng, 50.0), random_pose(&mut rng, 50.0));
        let oracle = t.to_matrix() * p.to_matrix().try_inverse().unwrap() * k.to_matrix();
        assert!((prior_pose(&t, &p, &k).to_matrix() - oracle).amax() < 1e-9);
    }
}

#[test]
fn lift_cases() {
    let rig = level_rig();
    let att = AttitudeAngles::default();
    let empty = SegmentationObservation::default();
    assert_eq!(lift_lane_pixels(&empty, &rig.intrinsics, &rig.mount, &att, &rig.ipm), LiftResult::default());
    let sky = SegmentationObservation {
        lane_pixels: vec![PixelPoint::new(640.0, 100.0)],
        ..Default::default()
    };
    let r = lift_lane_pixels(&sky, &rig.intrinsics, &rig.mount, &att, &rig.ipm);
    assert_eq!((r.points.len(), r.rejected), (0, 1));
}

#[test]
fn lift_recovers_simulated_ground_points() {
    let map = road(vec![Segment::Straight { length: 20.0 }, Segment::Arc { radius: 40.0, angle: 1.0 }], false);
    let rig = level_rig();
    let pose = Pose::planar(5.0, 0.3, 0.05);
    for att in [AttitudeAngles::default(), AttitudeAngles::from_degrees(2.0, 0.0, 0.0)] {
        let (pts, _) = perfect(&map, &pose, &rig, &att);
        assert!(pts.len() > 100);
        for p in &pts {
            let (_, d) = map.nearest(&pose.transform_point(p)).unwrap();
            assert!(d < 1e-6, "lifted point {d} m from the map");
        }
    }
}

#[test]
fn association_at_truth_has_zero_residuals() {
    let map = straight(false);
    let truth = Pose::planar(50.0, 0.0, 0.0);
    let (pts, _) = perfect(&map, &truth, &level_rig(), &AttitudeAngles::default());
    let corrs = associate_lanes(&pts, &truth, &map, &SolverConfig::default());
    assert_eq!(corrs.len(), 2 * pts.len());
    let (cost, r) = total_cost(&corrs, &truth, &model());
    assert!(cost < 1e-20, "{cost}");
    assert!(r.amax() < 1e-10);
}

#[test]
fn association_gate_excludes_far_lane() {
    let map = straight(false);
    let truth = Pose::planar(50.0, 0.0, 0.0);
    let (pts, _) = perfect(&map, &truth, &level_rig(), &AttitudeAngles::default());
    let shifted = truth * Pose::from_translation(0.0, 2.0, 0.0);
    assert!(associate_lanes(&pts, &shifted, &map, &SolverConfig::default()).is_empty());
}

#[test]
fn association_targets_match_linear_scan() {
    let map = road(vec![Segment::Arc { radius: 80.0, angle: 1.5 }], false);
    let rig = level_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let truth = crate::sim::Path::new(&[Segment::Arc { radius: 80.0, angle: 1.5 }], f64::INFINITY)
            .pose_at(rng.random_range(5.0..60.0));
        let truth = Pose::planar(truth.x, truth.y, truth.heading);
        let (pts, _) = perfect(&map, &truth, &rig, &AttitudeAngles::default());
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let prior = Pose::from_translation(0.3 * a.cos(), 0.3 * a.sin(), 0.0) * truth;
        let cfg = SolverConfig {
            use_point_line: false,
            ..SolverConfig::default()
        };
        let corrs = associate_lanes(&pts, &prior, &map, &cfg);
        let mut it = corrs.iter();
        for p in &pts {
            let w = prior.transform_point(p);
            let best = map
                .lanes()
                .iter()
                .min_by(|x, y| {
                    (x.position - w)
                        .norm_squared()
                        .total_cmp(&(y.position - w).norm_squared())
                        .then(x.position.x.total_cmp(&y.position.x))
                        .then(x.position.y.total_cmp(&y.position.y))
                })
                .unwrap();
            if (best.position - w).norm() <= cfg.gate {
                let c = it.next().expect("gated point has a correspondence");
                assert_eq!(c.target, Target::MapPoint(best.position));
            }
        }
        assert!(it.next().is_none());
    }
}

#[test]
fn project_poles_cases() {
    let rig = level_rig();
    let civ = rig.camera_in_vehicle(&AttitudeAngles::default());
    let k = rig.intrinsics;
    let behind = [Pole::new(-10.0, 0.0, 0.0, 1.0)];
    assert!(project_poles(&behind, &Pose::identity(), &civ, &k, 100.0).is_empty());
    // Camera center sits 1 m ahead of the vehicle origin, on the x axis.
    let ahead = [Pole::new(20.0, 0.0, 1.0, 2.0)];
    let p = project_poles(&ahead, &Pose::identity(), &civ, &k, 100.0);
    assert_eq!(p.len(), 1);
    for px in &p[0].pixels {
        assert!((px.u - k.cx).abs() < 1e-12);
    }
    assert!(project_poles(&ahead, &Pose::identity(), &civ, &k, 10.0).is_empty());
}

#[test]
fn project_poles_matches_homogeneous_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rig = level_rig();
    let k = rig.intrinsics;
    for _ in 0..50 {
        let att = AttitudeAngles::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let civ = rig.camera_in_vehicle(&att);
        let pose = Pose::planar(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-3.0..3.0));
        let poles: Vec<Pole> = (0..30)
            .map(|_| {
                let local = Vector3::new(rng.random_range(5.0..60.0), rng.random_range(-20.0..20.0), 0.0);
                let w = pose.transform_point(&local);
                Pole::new(w.x, w.y, rng.random_range(-0.5..0.5), rng.random_range(1.0..4.0))
            })
            .collect();
        let world_to_cam = (pose * civ).to_matrix().try_inverse().unwrap();
        let p = k.matrix() * Matrix3x4::identity() * world_to_cam;
        for pp in project_poles(&poles, &pose, &civ, &k, 100.0) {
            for (w, px) in pp.world.iter().zip(&pp.pixels) {
                let x = p * Vector4::new(w.x, w.y, w.z, 1.0);
                assert!((x[0] / x[2] - px.u).abs() < 1e-9 && (x[1] / x[2] - px.v).abs() < 1e-9);
            }
        }
    }
}

fn pl(line: ImageLine) -> PoleLine {
    PoleLine {
        line,
        v_min: 0.0,
        v_max: 720.0,
    }
}

#[test]
fn associate_poles_cases() {
    let rig = level_rig();
    let civ = rig.camera_in_vehicle(&AttitudeAngles::default());
    let poles = [Pole::new(20.0, 3.0, 0.0, 4.0)];
    let proj = project_poles(&poles, &Pose::identity(), &civ, &rig.intrinsics, 100.0);
    let line = ImageLine::through(&proj[0].pixels[0], &proj[0].pixels[1]).unwrap();
    let corrs = associate_poles(&proj, &[pl(line)], 30.0);
    assert_eq!(corrs.len(), 2);
    assert!(total_cost(&corrs, &Pose::identity(), &model()).0 < 1e-20);
    let far = ImageLine::new(1.0, 0.0, -(proj[0].pixels[0].u + 100.0)).unwrap();
    assert!(associate_poles(&proj, &[pl(far)], 30.0).is_empty());
}

#[test]
fn associate_poles_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let projected: Vec<ProjectedPole> = (0..3)
            .map(|id| {
                let u = rng.random_range(100.0..1100.0);
                ProjectedPole {
                    id,
                    world: [Vector3::new(id as f64, 0.0, 0.0), Vector3::new(id as f64, 0.0, 1.0)],
                    pixels: [
                        PixelPoint::new(u + rng.random_range(-20.0..20.0), 400.0),
                        PixelPoint::new(u + rng.random_range(-20.0..20.0), 100.0),
                    ],
                }
            })
            .collect();
        let lines: Vec<PoleLine> = (0..3)
            .map(|_| pl(ImageLine::new(1.0, rng.random_range(-0.1..0.1), -rng.random_range(100.0..1100.0)).unwrap()))
            .collect();
        let corrs = associate_poles(&projected, &lines, 30.0);
        let mut want = Vec::new();
        for p in &projected {
            let mut pick = [(usize::MAX, f64::INFINITY); 2];
            for (e, px) in p.pixels.iter().enumerate() {
                for (i, l) in lines.iter().enumerate() {
                    let d = (l.line.a * px.u + l.line.b * px.v + l.line.c).abs();
                    if d < pick[e].1 {
                        pick[e] = (i, d);
                    }
                }
            }
            if pick[0].0 == pick[1].0 && pick[0].1 < 30.0 && pick[1].1 < 30.0 {
                want.push((p.world[0], lines[pick[0].0].line));
                want.push((p.world[1], lines[pick[0].0].line));
            }
        }
        let got: Vec<_> = corrs
            .iter()
            .map(|c| match c.target {
                Target::Image(l) => (c.source, l),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, want);
    }
}

#[test]
fn total_cost_cases() {
    let c = Correspondence {
        kind: CorrespondenceKind::LanePointPoint,
        source: Vector3::new(1.0, 0.0, 0.0),
        target: Target::MapPoint(Vector3::new(1.5, 0.0, 0.0)),
        gate: 1.0,
    };
    assert!((total_cost(&[c], &Pose::identity(), &model()).0 - 0.25).abs() < 1e-15);
    assert_eq!(total_cost(&[], &Pose::identity(), &model()).0, 0.0);
}

#[test]
fn total_cost_equals_termwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = model();
    for _ in 0..20 {
        let pose = Pose::planar(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-1.0..1.0));
        let mut corrs = Vec::new();
        let mut want = 0.0;
        let camera = (pose * m.camera_in_vehicle).to_matrix().try_inverse().unwrap();
        for _ in 0..30 {
            let src = Vector3::new(rng.random_range(0.0..30.0), rng.random_range(-5.0..5.0), 0.0);
            let w = (pose.to_matrix() * src.push(1.0)).xyz();
            let q = w + Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.1..0.1));
            corrs.push(Correspondence {
                kind: CorrespondenceKind::LanePointPoint,
                source: src,
                target: Target::MapPoint(q),
                gate: 1.0,
            });
            want += (w - q).norm_squared();
            let line = Line3D::new(q, Vector3::new(1.0, rng.random_range(-1.0..1.0), 0.0)).unwrap();
            corrs.push(Correspondence {
                kind: CorrespondenceKind::LanePointLine,
                source: src,
                target: Target::MapLine(line),
                gate: 1.0,
            });
            want += point_to_line_distance_3d(&w, &line).powi(2);
            let pw = (pose.to_matrix() * Vector3::new(rng.random_range(10.0..40.0), rng.random_range(-5.0..5.0), 2.0).push(1.0)).xyz();
            let img = ImageLine::new(1.0, rng.random_range(-0.2..0.2), -rng.random_range(200.0..1000.0)).unwrap();
            corrs.push(Correspondence {
                kind: CorrespondenceKind::PoleEndpointLine,
                source: pw,
                target: Target::Image(img),
                gate: 30.0,
            });
            let pc = (camera * pw.push(1.0)).xyz();
            let px = project_pinhole(&pc, &m.intrinsics).unwrap();
            want += (m.pole_weight * (img.a * px.u + img.b * px.v + img.c)).powi(2);
        }
        let (got, r) = total_cost(&corrs, &pose, &m);
        assert_eq!(r.len(), 30 * 7);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn optimizer_keeps_optimal_prior() {
    let map = straight(true);
    let truth = Pose::planar(50.0, 0.0, 0.0);
    let (pts, lines) = perfect(&map, &truth, &level_rig(), &AttitudeAngles::default());
    assert!(!lines.is_empty());
    let (pose, stats) = solve(&truth, &pts, &lines, &map, &SolverConfig::default());
    assert!(stats.iterations <= 1);
    assert!((pose.translation - truth.translation).norm() < 1e-9);
    assert_eq!(stats.status, SolveStatus::Converged);
}

#[test]
fn optimizer_recovers_perturbed_pose() {
    let map = straight(true);
    for (i, sign) in [1.0, -1.0].iter().enumerate() {
        let truth = Pose::planar(40.0 + 7.3 * i as f64, 0.0, 0.0);
        let (pts, lines) = perfect(&map, &truth, &level_rig(), &AttitudeAngles::default());
        let prior = truth * Pose::planar(0.0, 0.5 * sign, (2.0f64 * sign).to_radians());
        let (pose, stats) = solve(&prior, &pts, &lines, &map, &SolverConfig::default());
        assert!((pose.translation - truth.translation).norm() < 1e-3, "{:?}", pose.translation - truth.translation);
        assert!(pose.rotation_angle_to(&truth).to_degrees() < 0.01);
        assert!(stats.iterations <= 20 && stats.pole_endpoints > 0);
    }
}

#[test]
fn lane_only_straight_road_is_flagged() {
    let map = straight(false);
    let truth = Pose::planar(60.0, 0.0, 0.0);
    let (pts, _) = perfect(&map, &truth, &level_rig(), &AttitudeAngles::default());
    let prior = truth * Pose::planar(0.1, 0.3, 0.01);
    let (pose, stats) = solve(&prior, &pts, &[], &map, &SolverConfig::default());
    let err = truth.inverse() * pose;
    assert!(err.translation.y.abs() < 0.05);
    assert!(stats.degenerate);
}

#[test]
fn hessian_null_direction_follows_lane_and_poles_remove_it() {
    let map = straight(true);
    let truth = Pose::planar(50.0, 0.0, 0.0);
    let (pts, lines) = perfect(&map, &truth, &level_rig(), &AttitudeAngles::default());
    let cfg = SolverConfig {
        use_point_point: false,
        ..SolverConfig::default()
    };
    let m = model();
    let lane = associate_lanes(&pts, &truth, &map, &cfg);
    let kinds = [CorrespondenceKind::LanePointLine, CorrespondenceKind::PoleEndpointLine];
    let h = gauss_newton_hessian(&lane, &truth, &m, cfg.fd_step, &kinds);
    let eig = SymmetricEigen::new(h);
    let i = eig.eigenvalues.imin();
    let (lo, hi) = (eig.eigenvalues[i], eig.eigenvalues.max());
    assert!(lo < 1e-6 * hi, "{lo} {hi}");
    // Twist layout is [omega; rho]; the lane runs along vehicle x.
    assert!(eig.eigenvectors.column(i)[3].abs() > 0.99);
    let civ = level_rig().camera_in_vehicle(&AttitudeAngles::default());
    let proj = project_poles(map.poles(), &truth, &civ, &level_rig().intrinsics, cfg.pole_max_range);
    let poles = associate_poles(&proj[..1], &lines, cfg.pole_gate);
    assert_eq!(poles.len(), 2);
    let mut all = lane.clone();
    all.extend(poles);
    let h2 = gauss_newton_hessian(&all, &truth, &m, cfg.fd_step, &kinds);
    let lo2 = SymmetricEigen::new(h2).eigenvalues.min();
    assert!(lo2 >= 1e3 * lo.max(0.0) && lo2 > 0.0, "{lo2} vs {lo}");
}

#[test]
fn cost_never_increases_and_runs_are_repeatable() {
    let map = road(vec![Segment::Straight { length: 30.0 }, Segment::Arc { radius: 50.0, angle: 1.2 }], true);
    let rig = level_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let obs_noise = NoiseSpec {
        pixel_sigma: 2.0,
        pole_pixel_sigma: 1.0,
        dropout: 0.2,
        ..NoiseSpec::default()
    };
    for trial in 0..15 {
        let p = crate::sim::Path::new(&[Segment::Straight { length: 30.0 }, Segment::Arc { radius: 50.0, angle: 1.2 }], f64::INFINITY)
            .pose_at(rng.random_range(0.0..50.0));
        let truth = Pose::planar(p.x, p.y, p.heading);
        let obs = synthesize_observation(&map, &truth, &AttitudeAngles::default(), &rig, &SensorSpec::default(), &obs_noise, trial);
        let lift = lift_lane_pixels(&obs, &rig.intrinsics, &rig.mount, &AttitudeAngles::default(), &rig.ipm);
        let prior = truth
            * Pose::planar(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-0.1..0.1));
        let (a, sa) = solve(&prior, &lift.points, &obs.pole_lines, &map, &SolverConfig::default());
        assert!(sa.final_cost <= sa.initial_cost);
        assert!(sa.cost_trace.windows(2).all(|w| w[1] <= w[0]));
        let (b, sb) = solve(&prior, &lift.points, &obs.pole_lines, &map, &SolverConfig::default());
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}

#[test]
fn empty_map_returns_prior() {
    let map = SemanticMap::default();
    let pts = vec![Vector3::new(5.0, 1.0, 0.0)];
    let prior = Pose::planar(1.0, 2.0, 0.3);
    let (pose, stats) = solve(&prior, &pts, &[], &map, &SolverConfig::default());
    assert_eq!(pose, prior);
    assert_eq!(stats.status, SolveStatus::NoConstraints);
}

#[test]
fn huber_caps_large_residuals() {
    let mut m = model();
    let c = Correspondence {
        kind: CorrespondenceKind::LanePointPoint,
        source: Vector3::zeros(),
        target: Target::MapPoint(Vector3::new(3.0, 0.0, 0.0)),
        gate: 1.0,
    };
    m.huber = Some(1.0);
    // rho(9) = 2 * 1 * 3 - 1.
    assert!((total_cost(&[c], &Pose::identity(), &m).0 - 5.0).abs() < 1e-12);
}

#[test]
fn gauge_transform_moves_solution_rigidly() {
    let map = road(vec![Segment::Straight { length: 30.0 }, Segment::Arc { radius: 60.0, angle: 1.0 }], true);
    let g = Pose::planar(1234.5, -987.25, 0.7);
    let moved = SemanticMap::new(
        map.lanes().iter().map(|l| LanePoint { position: g.transform_point(&l.position) }).collect(),
        map.poles()
            .iter()
            .map(|p| {
                let c = g.transform_point(&Vector3::new(p.x, p.y, 0.0));
                Pole::new(c.x, c.y, p.z_low, p.z_high)
            })
            .collect(),
    );
    let truth = Pose::planar(35.0, 1.0, 0.15);
    let rig = level_rig();
    let noise = NoiseSpec {
        pixel_sigma: 1.0,
        ..NoiseSpec::default()
    };
    let obs = synthesize_observation(&map, &truth, &AttitudeAngles::default(), &rig, &SensorSpec::default(), &noise, 5);
    let lift = lift_lane_pixels(&obs, &rig.intrinsics, &rig.mount, &AttitudeAngles::default(), &rig.ipm);
    let prior = truth * Pose::planar(0.2, -0.3, 0.02);
    let (a, _) = solve(&prior, &lift.points, &obs.pole_lines, &map, &SolverConfig::default());
    let (b, _) = solve(&(g * prior), &lift.points, &obs.pole_lines, &moved, &SolverConfig::default());
    let ga = g * a;
    assert!((ga.translation - b.translation).norm() < 1e-6);
    assert!(ga.rotation_angle_to(&b) < 1e-6);
}

fn sequence_spec(noise: NoiseSpec) -> crate::sim::SimSpec {
    let mut spec = crate::sim::SimSpec::benchmark(3);
    spec.world.segments = vec![Segment::Straight { length: 60.0 }, Segment::Arc { radius: 150.0, angle: 0.5 }];
    spec.world.extent = 130.0;
    spec.rig = level_rig();
    spec.noise = noise;
    spec
}

#[test]
fn perfect_sequence_tracks_ground_truth() {
    let spec = sequence_spec(NoiseSpec::default());
    let bundle = crate::sim::simulate(&spec);
    let out = localize_sequence(&bundle.frames, &bundle.map, &bundle.rig, &LocalizerConfig::default());
    let gt = bundle.ground_truth();
    assert_eq!(out.trajectory.len(), gt.len());
    for (e, g) in out.trajectory.poses.iter().zip(&gt.poses) {
        assert!((e.translation - g.translation).norm() < 1e-3);
    }
    assert_eq!(out.degraded_frames(), 0);
}

#[test]
fn empty_map_sequence_is_composed_odometry() {
    let spec = sequence_spec(NoiseSpec {
        seed: 9,
        odo_trans_sigma: 0.01,
        odo_yaw_sigma: 0.002,
        pixel_sigma: 1.0,
        ..NoiseSpec::default()
    });
    let bundle = crate::sim::simulate(&spec);
    let out = localize_sequence(&bundle.frames, &SemanticMap::default(), &bundle.rig, &LocalizerConfig::default());
    let odo: Vec<Pose> = bundle.frames.iter().map(|f| f.odometry.pose).collect();
    let mut chain = vec![odo[0]];
    for k in 1..odo.len() {
        chain.push(prior_pose(&chain[k - 1], &odo[k - 1], &odo[k]));
    }
    assert_eq!(out.trajectory.poses, chain);
    assert_eq!(out.degraded_frames(), odo.len());
    for (c, o) in chain.iter().zip(&odo) {
        assert!((c.translation - o.translation).norm() < 1e-9);
    }
}

#[test]
fn config_round_trip() {
    let mut c = Config::default();
    let cfg = LocalizerConfig {
        window_voxel: 0.3,
        ..LocalizerConfig::default()
    };
    cfg.write_config(&mut c);
    level_rig().write_config(&mut c);
    assert_eq!(LocalizerConfig::from_config(&c).unwrap(), cfg);
    assert_eq!(Rig::from_config(&c).unwrap(), level_rig());
    c.set("solver.gate", -1.0);
    assert!(LocalizerConfig::from_config(&c).is_err());
}
