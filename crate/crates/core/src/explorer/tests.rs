use super::*;
use crate::sim::SimConfig;
use crate::skeleton::SkeletonNode;

fn desk(policy: ExplorerPolicy) -> ExplorationConfig {
    ExplorationConfig {
        pairs: vec![PairConfig { tool: ToolKind::RollingPin, shape: Shape::Ball, episodes: 2 }],
        steps_per_episode: 3,
        seed: 5,
        policy,
        agent: AgentConfig { hidden: 16, batch: 4, buffer_capacity: 64, ..AgentConfig::default() },
        update_every: 2,
        updates_per_event: 1,
        sim: SimConfig { lattice_spacing: 0.035, substeps: 4, ..SimConfig::default() },
        ..ExplorationConfig::default()
    }
}

fn env(cfg: &ExplorationConfig, seed: u64) -> DoughEnv {
    DoughEnv::new(Task::Rolling, Shape::Ball, seed, cfg.sim.clone(), cfg.weights).unwrap()
}

fn initial_target(e: &DoughEnv) -> TargetState {
    TargetState::from_points(e.state.positions.clone(), e.state.particle_volume, e.config.grid_resolution).unwrap()
}

#[test]
fn exploration_reward_grows_with_deformation() {
    let cfg = desk(ExplorerPolicy::Random);
    let mut e = env(&cfg, 1);
    let initial = initial_target(&e);
    assert_eq!(exploration_reward(&e.state, &initial, &e.weights).unwrap(), 0.0);

    // Shifted copies with decreasing overlap to the start.
    let mut last = (f64::INFINITY, 0.0);
    for shift in [0.03, 0.08, 0.2] {
        let mut moved = e.state.clone();
        moved.positions.iter_mut().for_each(|p| p[0] += shift);
        let iou = compute_metrics(&moved, &initial, &e.weights).unwrap().iou;
        let r = exploration_reward(&moved, &initial, &e.weights).unwrap();
        assert!(iou < last.0 && r > last.1, "shift {shift}: iou {iou}, reward {r}");
        last = (iou, r);
    }

    // Press the pin into the ball.
    let pin = |z: f64| ToolPose::new(ToolKind::RollingPin, &[0.5, 0.5, z]).unwrap();
    let path: Vec<ToolPose> = (0..40).map(|i| pin(0.3 - 0.25 * i as f64 / 39.0)).collect();
    assert!(e.step(&path).unwrap());
    assert!(exploration_reward(&e.state, &initial, &e.weights).unwrap() > 0.0);
}

#[test]
fn zero_steps_give_an_empty_body() {
    let cfg = desk(ExplorerPolicy::Sac);
    let mut x = Explorer::new(ToolKind::RollingPin, cfg.policy, &cfg, 0).unwrap();
    let t = x.explore_episode(&mut env(&cfg, 2), 0, 2, &cfg, false).unwrap();
    assert!(t.steps.is_empty());
    assert_eq!(t.header, TrajectoryHeader { tool: ToolKind::RollingPin, shape: Shape::Ball, seed: 2, skeleton_nodes: 30 });
    assert!(t.kept().is_empty());
    let mut knife = Explorer::new(ToolKind::Knife, cfg.policy, &cfg, 0).unwrap();
    assert!(matches!(knife.explore_episode(&mut env(&cfg, 2), 1, 2, &cfg, false), Err(Error::Config(_))));
}

#[test]
fn random_exploration_is_reproducible_and_quantized() {
    let cfg = desk(ExplorerPolicy::Random);
    let run = || {
        let mut x = Explorer::new(ToolKind::RollingPin, cfg.policy, &cfg, 3).unwrap();
        x.explore_episode(&mut env(&cfg, 4), 4, 4, &cfg, false).unwrap()
    };
    let t = run();
    assert_eq!(t, run());
    assert_eq!(t.steps.len(), 5);
    assert!(!t.steps[0].contact);
    for s in &t.steps {
        assert_eq!(s.skeleton.len(), 30);
        assert_eq!(s.skeleton, s.skeleton.quantized());
        assert_eq!(s.pose, s.pose.quantized());
    }
    assert_eq!(decode_shard(&encode_shard(&t)).unwrap(), t);
}

fn record(contact: bool, x: f64) -> StepRecord {
    let sk = SkeletonGraph {
        nodes: vec![SkeletonNode { position: [x, 0.25, 0.5], radius: 0.125 }, SkeletonNode { position: [0.5, x, 0.25], radius: 0.0625 }],
        edges: vec![(0, 1)],
    };
    StepRecord::new(&sk, &ToolPose::new(ToolKind::DualFlats, &[x, 0.2, 0.1, 0.7, 0.6, 0.1, -0.5]).unwrap(), contact, x)
}

fn trajectory(contacts: &[bool]) -> Trajectory {
    Trajectory {
        header: TrajectoryHeader { tool: ToolKind::DualFlats, shape: Shape::Random, seed: 9, skeleton_nodes: 2 },
        steps: contacts.iter().enumerate().map(|(i, &c)| record(c, 0.1 * i as f64)).collect(),
    }
}

#[test]
fn contact_filter_splits_runs() {
    let t = trajectory(&[false, false, true, false, false, false, true]);
    assert_eq!(t.kept(), [false, true, true, false, false, true]);
    let seqs = t.sequences().unwrap();
    assert_eq!(seqs.iter().map(Vec::len).collect::<Vec<_>>(), [2, 1]);
    assert_eq!(seqs[0][0].skeleton, t.steps[1].skeleton);
    assert_eq!(seqs[0][0].pose_next, t.steps[2].pose);
    assert_eq!(seqs[1][0].skeleton_next, t.steps[6].skeleton);

    let untouched = trajectory(&[false; 5]);
    assert!(untouched.kept().iter().all(|k| !k));
    assert!(untouched.sequences().unwrap().is_empty());
}

#[test]
fn shards_roundtrip_exactly_and_reject_damage() {
    let t = trajectory(&[false, true, true]);
    let bytes = encode_shard(&t);
    assert_eq!(decode_shard(&bytes).unwrap(), t);
    assert!(decode_shard(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_shard(&extra).is_err());
    let mut bad = bytes;
    bad[0] = b'X';
    assert!(decode_shard(&bad).is_err());
}

#[test]
fn pairings_follow_the_corpus_table() {
    let mut cfg = desk(ExplorerPolicy::Random);
    cfg.pairs = vec![PairConfig { tool: ToolKind::Knife, shape: Shape::TwoBalls, episodes: 1 }];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let pairs = ExplorationConfig::desk_scale_pairs(10);
    assert_eq!(pairs.len(), 8);
    assert_eq!(pairs[0], PairConfig { tool: ToolKind::RollingPin, shape: Shape::Ball, episodes: 23 });
    assert!(pairs.iter().all(|p| check_pairing(Task::for_tool(p.tool), p.shape).is_ok()));
}

#[test]
fn dataset_accounting_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk(ExplorerPolicy::Sac);
    let m = generate_dataset(&cfg, dir.path()).unwrap();
    let p = &m.pairs[0];
    assert_eq!(p.total, 2 * 3);
    assert_eq!(p.kept + p.dropped, p.total);
    assert_eq!(m.shards.len(), 2);
    let ds = Dataset::load(dir.path()).unwrap();
    assert_eq!(ds.manifest, m);
    assert_eq!(ds.kept_transitions(), p.kept);
    let samples: usize = ds.sequences(None).unwrap().iter().map(Vec::len).sum();
    assert_eq!(samples, p.kept);
    assert!(ds.sequences(Some(ToolKind::Knife)).unwrap().is_empty());

    // Same config, same bytes.
    let again = tempfile::tempdir().unwrap();
    generate_dataset(&cfg, again.path()).unwrap();
    for name in m.shards.iter().map(String::as_str).chain([MANIFEST]) {
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(again.path().join(name)).unwrap(), "{name}");
    }

    let empty = tempfile::tempdir().unwrap();
    let m = generate_dataset(&ExplorationConfig { steps_per_episode: 0, ..cfg }, empty.path()).unwrap();
    assert_eq!((m.pairs[0].total, m.pairs[0].kept), (0, 0));
    assert_eq!(m.warnings.len(), 1);
}
