use super::*;
use crate::model::{JointKind, JointSpec, LinkSpec, TreeParts};

fn robot() -> KinematicTree {
    let mut p = TreeParts::new("bot", "base_link");
    p.links.push(LinkSpec::new("base_link").with_geom(
        Shape::Box { half_extents: Vec3::new(0.25, 0.2, 0.15) },
        Transform::from_translation(Vec3::new(0.0, 0.0, 0.15)),
    ));
    p.links.push(
        LinkSpec::new("arm")
            .with_geom(Shape::Capsule { radius: 0.04, half_length: 0.2 }, Transform::from_translation(Vec3::new(0.0, 0.0, 0.25))),
    );
    p.links.push(LinkSpec::new("ee"));
    p.joints.push(
        JointSpec::new("j1", JointKind::Revolute, "base_link", "arm", Transform::from_translation(Vec3::new(0.0, 0.0, 0.3)))
            .with_axis(Vec3::Z)
            .with_limits(-3.0, 3.0),
    );
    p.joints.push(JointSpec::new(
        "ee_fixed",
        JointKind::Fixed,
        "arm",
        "ee",
        Transform::from_translation(Vec3::new(0.0, 0.0, 0.5)),
    ));
    KinematicTree::new(p).unwrap()
}

fn hinge_object() -> ObjectInstance {
    let mut p = TreeParts::new("door", "frame");
    p.links.push(LinkSpec::new("frame"));
    p.links.push(LinkSpec::new("panel"));
    p.joints.push(
        JointSpec::new("hinge", JointKind::Revolute, "frame", "panel", Transform::IDENTITY)
            .with_axis(Vec3::Z)
            .with_limits(0.0, 1.5),
    );
    let model = KinematicTree::new(p).unwrap().with_anchor(Transform::from_translation(Vec3::new(3.0, 0.0, 0.0)));
    ObjectInstance::new("door", model, "panel", Transform::IDENTITY, AttachJoint::Revolute { axis: Vec3::Z }, true).unwrap()
}

fn scenario(phases: Vec<TaskPhase>) -> Scenario {
    Scenario {
        name: "test".into(),
        robot: robot(),
        ee_link: "ee".into(),
        arm_start: vec![0.0],
        objects: Vec::new(),
        obstacles: Vec::new(),
        phases,
        start_region: Region::new([-1.0, -1.0, -0.5], [1.0, 1.0, 0.5]).unwrap(),
        seed: 7,
        settings: PlannerSettings::default(),
        baseline_regions: None,
    }
}

fn world_traj(sc: &Scenario, rows: &[[f64; 4]]) -> Trajectory {
    let names = World::new(sc).unwrap().names().to_vec();
    Trajectory::new(names, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn world_layout_puts_base_then_arm_then_objects() {
    let mut sc = scenario(vec![TaskPhase::reach("door")]);
    sc.objects.push(hinge_object());
    let w = World::new(&sc).unwrap();
    assert_eq!(w.names(), ["base_x", "base_y", "base_theta", "j1", "door/attach", "door/hinge"]);
    assert_eq!(w.object_columns(0).attach, Some(4));
    assert_eq!(w.object_columns(0).joints, vec![5]);
    assert_eq!(w.arm_columns(), &[3]);
}

#[test]
fn unknown_object_reference_is_rejected() {
    let sc = scenario(vec![TaskPhase::reach("cupboard")]);
    let e = sc.validate().unwrap_err().to_string();
    assert!(e.contains("cupboard"), "{e}");
}

#[test]
fn arm_start_length_is_checked() {
    let mut sc = scenario(vec![TaskPhase::reach_joints(vec![("base_x".into(), 1.0)])]);
    sc.arm_start = vec![0.0, 0.0];
    assert!(sc.validate().is_err());
}

#[test]
fn reach_without_goal_is_rejected() {
    let mut sc = scenario(vec![]);
    sc.phases.push(TaskPhase { goal: PhaseGoal::None, ..TaskPhase::reach_joints(Vec::new()) });
    assert!(sc.validate().is_err());
}

#[test]
fn start_configuration_fills_object_initial_values() {
    let mut sc = scenario(vec![TaskPhase::reach("door")]);
    sc.objects.push(hinge_object().with_initial(vec![0.25]));
    let row = sc.start_configuration([1.0, 2.0, 0.5]).unwrap();
    assert_eq!(row, vec![1.0, 2.0, 0.5, 0.0, 0.0, 0.25]);
}

#[test]
fn teleporting_base_is_a_rate_violation() {
    let sc = scenario(vec![TaskPhase::reach_joints(vec![("base_x".into(), 2.0)])]);
    let t = world_traj(&sc, &[[0.0; 4], [1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]]);
    let r = check_trajectory(&sc, &[t]);
    assert!(!r.passed);
    assert!(r.violations.iter().any(|v| v.contains("velocity violation")), "{:?}", r.violations);
    assert!((r.phases[0].residuals.velocity - 0.8).abs() < 1e-12);
}

#[test]
fn interpenetration_names_the_pair() {
    let mut sc = scenario(vec![TaskPhase::reach_joints(vec![("base_x".into(), 0.0)])]);
    sc.obstacles.push(Obstacle {
        name: "crate".into(),
        shape: Shape::Box { half_extents: Vec3::new(0.2, 0.2, 0.2) },
        pose: Transform::from_translation(Vec3::new(0.1, 0.0, 0.2)),
    });
    let t = world_traj(&sc, &[[0.0; 4], [0.0; 4]]);
    let r = check_trajectory(&sc, &[t]);
    assert!(!r.passed);
    let line = r.violations.iter().find(|v| v.contains("collision")).expect("collision line");
    assert!(line.contains("base_link") && line.contains("crate"), "{line}");
}

#[test]
fn stationary_feasible_trajectory_passes() {
    let sc = scenario(vec![TaskPhase::reach_joints(vec![("j1".into(), 0.0)])]);
    let t = world_traj(&sc, &[[0.0; 4], [0.0; 4], [0.0; 4]]);
    let r = check_trajectory(&sc, &[t]);
    assert!(r.passed, "{:?}", r.violations);
    assert_eq!(r.phases[0].residuals.collision.to_bits(), 0.0f64.to_bits());
}

#[test]
fn wrong_trajectory_count_is_reported() {
    let sc = scenario(vec![TaskPhase::reach_joints(vec![("j1".into(), 0.0)])]);
    let t = world_traj(&sc, &[[0.0; 4], [0.0; 4]]);
    assert!(!check_trajectory(&sc, &[t.clone(), t]).passed);
    assert!(!check_trajectory(&sc, &[]).passed);
}

#[test]
fn metrics_sum_base_path_length() {
    let sc = scenario(vec![]);
    let t = world_traj(&sc, &[[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.5], [1.0, 1.0, 0.0, 0.25]]);
    let m = evaluate_metrics(&sc.robot, &[t], &[0.5, 0.25], true);
    assert!((m.base_effort - 2.0).abs() < 1e-12);
    assert!((m.arm_effort - 0.75).abs() < 1e-12);
    assert_eq!(m.planning_time, 0.75);
    assert!(m.success);
}

#[test]
fn refinement_is_a_no_op_without_collisions() {
    let sc = scenario(vec![TaskPhase::reach_joints(vec![("j1".into(), 0.5)])]);
    let ctx = Ctx::new(&sc).unwrap();
    let st = ctx.state(sc.start_configuration([0.0, 0.0, 0.0]).unwrap());
    let chain = ctx.chain(&st).unwrap();
    let p = ctx.problem(&chain, &st, None, 5).unwrap();
    let q = vec![0.3, -0.2, 0.1, 1.0];
    assert_eq!(refine_waypoint(&p, &q, &[3], 0.2).unwrap(), q);
}

#[test]
fn refinement_never_increases_collision() {
    let mut sc = scenario(vec![TaskPhase::reach_joints(vec![("j1".into(), 0.5)])]);
    sc.obstacles.push(Obstacle {
        name: "post".into(),
        shape: Shape::Sphere { radius: 0.1 },
        pose: Transform::from_translation(Vec3::new(0.05, 0.0, 0.7)),
    });
    let ctx = Ctx::new(&sc).unwrap();
    let st = ctx.state(sc.start_configuration([0.0, 0.0, 0.0]).unwrap());
    let chain = ctx.chain(&st).unwrap();
    let p = ctx.problem(&chain, &st, None, 5).unwrap();
    for j in [-1.0, 0.0, 0.4, 2.0] {
        let q = vec![0.0, 0.0, 0.0, j];
        let before = crate::trajopt::collision_constraint(&p.tree, &q, &p.collision).unwrap();
        let r = refine_waypoint(&p, &q, &[3], 0.2).unwrap();
        let after = crate::trajopt::collision_constraint(&p.tree, &r, &p.collision).unwrap();
        assert!(after <= before, "{after} > {before}");
        assert!((r[3] - j).abs() <= 0.2 + 1e-12);
        assert_eq!(&r[..3], &q[..3]);
    }
}

#[test]
fn vkc_drives_base_to_a_joint_goal() {
    let sc = scenario(vec![TaskPhase::reach_joints(vec![("base_x".into(), 1.0), ("j1".into(), 0.5)])]);
    let out = plan_task_vkc(&sc, [0.0, 0.0, 0.0], InitStrategy::Stationary, &crate::NullClock).unwrap();
    assert!(out.metrics.success, "{:?}", out.failure);
    let last = out.phases[0].trajectory.last();
    assert!((last[0] - 1.0).abs() <= 1e-2 && (last[3] - 0.5).abs() <= 1e-2);
    assert_eq!(out.phases[0].trajectory.first(), &[0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn baselines_need_one_goal_per_motion_phase() {
    let sc = scenario(vec![TaskPhase::reach_joints(vec![("base_x".into(), 1.0)])]);
    assert!(matches!(plan_task_b1(&sc, [0.0; 3], &[], &crate::NullClock), Err(Error::InvalidArgument(_))));
    let out = plan_task_b1(&sc, [0.0; 3], &[[1.0, 0.0, 0.0]], &crate::NullClock).unwrap();
    assert!(out.metrics.success, "{:?}", out.failure);
}

#[test]
fn planner_names_round_trip() {
    for p in PlannerKind::ALL {
        assert_eq!(PlannerKind::parse(p.as_str()), Some(p));
    }
    assert_eq!(PhaseKind::parse("detach"), Some(PhaseKind::Detach));
    assert!(PhaseKind::parse("jump").is_none());
}
