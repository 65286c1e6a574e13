use proptest::prelude::*;

use super::*;

fn cfg() -> SimConfig {
    SimConfig::default()
}

/// Connected components of the particle adjacency graph, by union-find.
fn component_count(points: &[[f64; 3]], link: f64) -> usize {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
            if d2 < link * link {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

fn pose(kind: ToolKind, v: &[f64]) -> ToolPose {
    ToolPose::new(kind, v).unwrap()
}

#[test]
fn reset_is_deterministic() {
    let a = reset(Task::Rolling, Shape::Ball, 7, &cfg()).unwrap();
    let b = reset(Task::Rolling, Shape::Ball, 7, &cfg()).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    let c = reset(Task::Rolling, Shape::Ball, 8, &cfg()).unwrap();
    assert_ne!(a.0.positions, c.0.positions);
}

#[test]
fn desk_scale_particle_count() {
    for task in Task::ALL {
        for shape in task.shapes() {
            let (state, pose, _) = reset(task, shape, 1, &cfg()).unwrap();
            assert!((300..=2048).contains(&state.len()), "{task}/{shape}: {}", state.len());
            assert_eq!(pose.kind, task.tool());
            // The tool starts clear of the dough.
            let tool = ToolSpec::standard(task.tool());
            assert!(state.positions.iter().all(|&p| tool.sdf(&pose, p).0 > state.rest_spacing));
        }
    }
}

#[test]
fn two_balls_are_two_clusters() {
    let c = cfg();
    let (state, _, _) = reset(Task::Gathering, Shape::TwoBalls, 3, &c).unwrap();
    assert_eq!(component_count(&state.positions, 1.5 * c.lattice_spacing), 2);
}

#[test]
fn knife_rejects_random_dough() {
    assert!(matches!(reset(Task::Cutting, Shape::Random, 0, &cfg()), Err(Error::Config(_))));
}

#[test]
fn empty_waypoints_are_a_no_op() {
    let c = cfg();
    let (mut state, p, _) = reset(Task::Rolling, Shape::Ball, 1, &c).unwrap();
    let before = state.clone();
    let contact = step(&mut state, &ToolSpec::standard(ToolKind::RollingPin), &p, &[], &c).unwrap();
    assert!(!contact);
    assert_eq!(state, before);
}

#[test]
fn resting_dough_without_gravity_stays_put() {
    let c = SimConfig { gravity: 0.0, ..cfg() };
    let (mut state, p, _) = reset(Task::Shaping, Shape::Cuboid, 2, &c).unwrap();
    let before = state.positions.clone();
    let far = pose(ToolKind::RollingBall, &[0.3, 0.3, 0.3]);
    let contact = step(&mut state, &ToolSpec::standard(ToolKind::RollingBall), &p, &[far; 5], &c).unwrap();
    assert!(!contact);
    let drift = state.positions.iter().zip(&before).map(|(a, b)| dist2(*a, *b).sqrt()).fold(0.0, f64::max);
    // Initial jitter never brings lattice neighbors inside the rest spacing.
    assert!(drift < 1e-12, "drift {drift}");
}

/// Linear waypoint path from the current pose.
fn path(from: ToolPose, to: &[f64], n: usize) -> Vec<ToolPose> {
    let to = ToolPose::new(from.kind, to).unwrap();
    (1..=n).map(|k| from.lerp(&to, k as f64 / n as f64)).collect()
}

#[test]
fn pin_compresses_ball_without_losing_particles() {
    let c = cfg();
    let mut env = DoughEnv::new(Task::Rolling, Shape::Ball, 5, c, RewardWeights::default()).unwrap();
    let n = env.state.len();
    let h0 = env.state.max_height();
    env.step(&path(env.pose, &[0.5, 0.5, 0.05], 30)).unwrap();
    assert_eq!(env.state.len(), n);
    assert!(env.state.max_height() < h0);
    let r0 = env.metrics().unwrap().reward;
    // Passes at decreasing height flatten the dough.
    for z in [0.16, 0.12, 0.09, 0.06] {
        env.step(&path(env.pose, &[0.3, 0.5, 0.3], 10)).unwrap();
        env.step(&path(env.pose, &[0.3, 0.5, z], 10)).unwrap();
        env.step(&path(env.pose, &[0.7, 0.5, z], 40)).unwrap();
    }
    assert_eq!(env.state.len(), n);
    assert!(env.state.max_height() < h0 - 0.05, "{} vs {h0}", env.state.max_height());
    assert!(env.metrics().unwrap().reward > r0);
}

#[test]
fn compressed_dough_does_not_spring_back() {
    let c = cfg();
    let mut env = DoughEnv::new(Task::Rolling, Shape::Ball, 9, c, RewardWeights::default()).unwrap();
    let down: Vec<ToolPose> = (1..=30).map(|k| pose(ToolKind::RollingPin, &[0.5, 0.5, 0.3 - 0.24 * k as f64 / 30.0])).collect();
    env.step(&down).unwrap();
    let up: Vec<ToolPose> = (1..=20).map(|k| pose(ToolKind::RollingPin, &[0.5, 0.5, 0.06 + 0.24 * k as f64 / 20.0])).collect();
    env.step(&up).unwrap();
    let h = env.state.max_height();
    let idle = vec![env.pose; 40];
    for _ in 0..3 {
        env.step(&idle).unwrap();
        assert!(env.state.max_height() <= h + env.state.rest_spacing);
    }
}

#[test]
fn unsupported_dough_falls() {
    let c = cfg();
    let (mut state, p, _) = reset(Task::Shaping, Shape::Ball, 4, &c).unwrap();
    for q in &mut state.positions {
        q[2] += 0.2;
    }
    let z0: f64 = state.positions.iter().map(|q| q[2]).sum::<f64>() / state.len() as f64;
    step(&mut state, &ToolSpec::standard(ToolKind::RollingBall), &p, &[p; 10], &c).unwrap();
    let z1: f64 = state.positions.iter().map(|q| q[2]).sum::<f64>() / state.len() as f64;
    assert!(z1 < z0 - 0.01, "{z0} -> {z1}");
}

#[test]
fn nan_is_reported_with_its_step() {
    let c = cfg();
    let (mut state, p, _) = reset(Task::Rolling, Shape::Ball, 1, &c).unwrap();
    state.velocities[3] = [f64::NAN, 0.0, 0.0];
    state.positions[3][2] = 0.5;
    let err = step(&mut state, &ToolSpec::standard(ToolKind::RollingPin), &p, &[p], &c).unwrap_err();
    assert!(matches!(err, Error::Simulation { step: 0, .. }), "{err:?}");
}

#[test]
fn target_state_scores_perfectly() {
    let c = cfg();
    for task in Task::ALL {
        let (state, _, target) = reset(task, task.shapes()[0], 2, &c).unwrap();
        let at_target =
            ParticleSystem { velocities: vec![[0.0; 3]; target.points.len()], positions: target.points.clone(), ..state.clone() };
        let w = RewardWeights::default();
        let best = compute_metrics(&at_target, &target, &w).unwrap();
        assert_eq!(best.iou, 1.0);
        assert_eq!(best.density_score, 0.0);
        // Boundary particles can sit just outside the thresholded occupancy.
        assert!(best.sdf_score <= 0.0 && best.sdf_score > -0.25 / c.grid_resolution as f64, "{task}: {best:?}");
        let start = compute_metrics(&state, &target, &w).unwrap();
        assert!(start.iou < 1.0 && start.reward < best.reward, "{task}: {start:?}");
        // Shifted copies of the target are worse too.
        for dx in [0.03, -0.05, 0.1] {
            let moved = ParticleSystem { positions: target.points.iter().map(|p| [p[0] + dx, p[1], p[2]]).collect(), ..at_target.clone() };
            assert!(compute_metrics(&moved, &target, &w).unwrap().reward < best.reward);
        }
    }
}

#[test]
fn empty_target_is_rejected() {
    let c = cfg();
    let (state, _, mut target) = reset(Task::Rolling, Shape::Ball, 2, &c).unwrap();
    target.occupancy.iter_mut().for_each(|o| *o = false);
    assert!(matches!(compute_metrics(&state, &target, &RewardWeights::default()), Err(Error::Config(_))));
    assert!(matches!(TargetState::from_points(vec![[0.5; 3]], 1e-9, 32), Err(Error::Config(_))));
}

#[test]
fn target_sdf_boundary_matches_occupancy() {
    let (_, _, t) = reset(Task::Gathering, Shape::TwoBalls, 2, &cfg()).unwrap();
    let g = t.resolution;
    assert_eq!(t.occupancy, occupancy(&t.density));
    for z in 0..g {
        for y in 0..g {
            for x in 0..g - 1 {
                let i = (z * g + y) * g + x;
                assert_eq!(t.sdf[i] < 0.0, t.occupancy[i]);
                if t.occupancy[i] != t.occupancy[i + 1] {
                    assert!(t.sdf[i].abs() <= 0.5 / g as f64 + 1e-12);
                }
            }
        }
    }
}

#[test]
fn surface_excludes_the_core() {
    let (state, _, _) = reset(Task::Rolling, Shape::Ball, 3, &cfg()).unwrap();
    let surface = surface_particles(&state).unwrap();
    assert!(surface.len() >= MIN_SURFACE_POINTS && surface.len() < state.len());
    let n = state.len() as f64;
    let centroid = [0, 1, 2].map(|a| state.positions.iter().map(|p| p[a]).sum::<f64>() / n);
    let core = *state.positions.iter().min_by(|a, b| dist2(**a, centroid).total_cmp(&dist2(**b, centroid))).unwrap();
    assert!(!surface.contains(&core));
}

#[test]
fn cube_corners_are_all_surface() {
    let positions: Vec<[f64; 3]> =
        (0..8).map(|i| [0.3 + 0.2 * (i & 1) as f64, 0.3 + 0.2 * ((i >> 1) & 1) as f64, 0.1 + 0.2 * (i >> 2) as f64]).collect();
    let state = ParticleSystem { velocities: vec![[0.0; 3]; 8], positions: positions.clone(), rest_spacing: 0.01, particle_volume: 1e-6 };
    assert_eq!(surface_particles(&state).unwrap(), positions);
    let tiny = ParticleSystem { positions: positions[..7].to_vec(), velocities: vec![[0.0; 3]; 7], ..state };
    assert!(matches!(surface_particles(&tiny), Err(Error::DegenerateState(_))));
}

#[test]
fn surface_covers_both_blobs() {
    let (state, _, _) = reset(Task::Gathering, Shape::TwoBalls, 3, &cfg()).unwrap();
    let surface = surface_particles(&state).unwrap();
    assert!(surface.iter().any(|p| p[0] < 0.5));
    assert!(surface.iter().any(|p| p[0] > 0.5));
}

#[test]
fn dump_roundtrip_is_f32_exact() {
    let dir = tempfile::tempdir().unwrap();
    let frames = vec![vec![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]], vec![[0.7, 0.8, 0.9], [0.25, 0.5, 0.125]]];
    let m = write_trajectory_dump(dir.path(), &frames).unwrap();
    assert_eq!((m.frames, m.particles), (2, 2));
    let (m2, back) = read_trajectory_dump(dir.path()).unwrap();
    assert_eq!(m, m2);
    for (f, g) in frames.iter().zip(&back) {
        for (p, q) in f.iter().zip(g) {
            assert_eq!(p.map(|v| v as f32), *q);
        }
    }
}

fn waypoint_strategy() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn stepping_conserves_mass_and_stays_in_the_box(units in waypoint_strategy(), seed in 0u64..50) {
        let c = cfg();
        let mut env = DoughEnv::new(Task::Shaping, Shape::Ball, seed, c, RewardWeights::default()).unwrap();
        let n = env.state.len();
        let tool = env.tool.clone();
        let waypoints: Vec<ToolPose> = units.iter().map(|u| tool.pose_from_unit(u)).collect();
        let mut twin = env.clone();
        for w in &waypoints {
            let path: Vec<ToolPose> = (1..=8).map(|k| env.pose.lerp(w, k as f64 / 8.0)).collect();
            env.step(&path).unwrap();
            twin.step(&path).unwrap();
            prop_assert_eq!(env.state.len(), n);
            let r = 0.5 * env.state.rest_spacing;
            for p in &env.state.positions {
                prop_assert!(p.iter().all(|v| *v >= r - 1e-12 && *v <= 1.0 - r + 1e-12));
            }
        }
        prop_assert_eq!(&env.state, &twin.state);
        let m = env.metrics().unwrap();
        prop_assert!((0.0..=1.0).contains(&m.iou));
        prop_assert!(m.density_score <= 0.0 && m.sdf_score <= 0.0 && m.reward.is_finite());
    }
}
