mod common;

use common::{max_diff, random_tree, M4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vkc_core::kinematics::{
    add_virtual_base, attach, attachment_joint_name, chain_jacobian, detach, forward_kinematics, invert_subtree,
    map_configuration, prefixed, AttachJoint,
};
use vkc_core::{KinematicTree, Transform, Vec3};

fn fk_matrix(tree: &KinematicTree, q: &[f64], link: &str) -> M4 {
    forward_kinematics(tree, q).unwrap().get(link).unwrap().to_matrix()
}

#[test]
fn fk_matches_matrix_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..10);
        let rt = random_tree(&mut rng, n);
        let q = rt.random_q(&mut rng);
        let oracle = rt.oracle(&q);
        for (k, m) in oracle.iter().enumerate() {
            worst = worst.max(max_diff(&fk_matrix(&rt.tree, &q, &format!("l{k}")), m));
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..10);
        let rt = random_tree(&mut rng, n);
        let q = rt.random_q(&mut rng);
        let link = format!("l{}", rng.gen_range(0..n));
        let point = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let jac = chain_jacobian(&rt.tree, &q, &link, point).unwrap();
        let base = fk_matrix(&rt.tree, &q, &link);
        for d in 0..rt.tree.dof() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[d] += h;
            qm[d] -= h;
            let (mp, mm) = (fk_matrix(&rt.tree, &qp, &link), fk_matrix(&rt.tree, &qm, &link));
            let world = |m: &M4| -> [f64; 3] {
                core::array::from_fn(|i| m[i][0] * point.x + m[i][1] * point.y + m[i][2] * point.z + m[i][3])
            };
            let (pp, pm) = (world(&mp), world(&mm));
            // dR R^T is skew with the angular velocity as its axial vector
            let mut w = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    w[i][j] = (0..3).map(|k| (mp[i][k] - mm[i][k]) / (2.0 * h) * base[j][k]).sum();
                }
            }
            let fd = [
                (pp[0] - pm[0]) / (2.0 * h),
                (pp[1] - pm[1]) / (2.0 * h),
                (pp[2] - pm[2]) / (2.0 * h),
                w[2][1],
                w[0][2],
                w[1][0],
            ];
            for (r, v) in fd.iter().enumerate() {
                worst = worst.max((jac.get(r, d) - v).abs());
            }
        }
    }
    assert!(worst <= 1e-5, "max deviation {worst:e}");
}

fn same_world_poses(a: &KinematicTree, qa: &[f64], b: &KinematicTree, qb: &[f64]) -> f64 {
    let fa = forward_kinematics(a, qa).unwrap();
    let fb = forward_kinematics(b, qb).unwrap();
    let mut worst = 0.0f64;
    for (name, pa) in fa.iter() {
        let pb = fb.get(name).expect("link kept");
        worst = worst.max(max_diff(&pa.to_matrix(), &pb.to_matrix()));
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn inversion_preserves_world_poses(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..8);
        let rt = random_tree(&mut rng, n);
        let root = format!("l{}", rng.gen_range(0..n));
        let inv = invert_subtree(&rt.tree, &root).unwrap();
        prop_assert_eq!(inv.root_name(), root.as_str());
        prop_assert_eq!(inv.dof(), rt.tree.dof());
        let q = rt.random_q(&mut rng);
        let qi = map_configuration(&rt.tree, &q, &inv, f64::NAN);
        let at = *forward_kinematics(&rt.tree, &q).unwrap().get(&root).unwrap();
        prop_assert!(same_world_poses(&rt.tree, &q, &inv.with_anchor(at), &qi) <= 1e-9);
        // limits carry over joint by joint
        let (lo, hi) = rt.tree.position_bounds();
        let (li, hi2) = inv.position_bounds();
        prop_assert_eq!(map_configuration(&rt.tree, &lo, &inv, 0.0), li);
        prop_assert_eq!(map_configuration(&rt.tree, &hi, &inv, 0.0), hi2);
    }

    #[test]
    fn double_inversion_is_an_involution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..8);
        let rt = random_tree(&mut rng, n);
        let root = format!("l{}", rng.gen_range(0..n));
        let back = invert_subtree(&invert_subtree(&rt.tree, &root).unwrap(), "l0").unwrap();
        let q = rt.random_q(&mut rng);
        let qb = map_configuration(&rt.tree, &q, &back, f64::NAN);
        prop_assert!(same_world_poses(&rt.tree, &q, &back, &qb) <= 1e-9);
    }

    #[test]
    fn fixed_attachment_keeps_relative_pose(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nr, no) = (rng.gen_range(2..6), rng.gen_range(2..5));
        let robot = add_virtual_base(&random_tree(&mut rng, nr).tree).unwrap();
        let mut object = random_tree(&mut rng, no);
        let mut parts = object.tree.into_parts();
        parts.name = "box".into();
        object.tree = KinematicTree::new(parts).unwrap();
        let grip = format!("l{}", rng.gen_range(0..object.joints.len() + 1));
        let inv = invert_subtree(&object.tree, &grip).unwrap();
        let grasp = Transform::from_xyz_rpy([0.1, -0.2, 0.05], [0.3, -0.2, 1.0]);
        let ee = robot.links().last().unwrap().name.clone();
        let vkc = attach(&robot, &inv, &ee, grasp, AttachJoint::Fixed).unwrap();
        prop_assert_eq!(vkc.dof(), robot.dof() + object.tree.dof());
        let held = prefixed("box", &grip);
        for _ in 0..5 {
            let q: Vec<f64> = (0..vkc.dof()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let f = forward_kinematics(&vkc, &q).unwrap();
            let rel = f.get(&ee).unwrap().inverse() * *f.get(&held).unwrap();
            prop_assert!(max_diff(&rel.to_matrix(), &grasp.to_matrix()) <= 1e-9);
        }
    }

    #[test]
    fn detach_restores_the_object_where_it_was(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let robot = add_virtual_base(&random_tree(&mut rng, 3).tree).unwrap();
        let mut parts = random_tree(&mut rng, 4).tree.into_parts();
        parts.name = "obj".into();
        let object = KinematicTree::new(parts).unwrap();
        let inv = invert_subtree(&object, "l2").unwrap();
        let vkc = attach(&robot, &inv, "l2", Transform::IDENTITY, AttachJoint::Revolute { axis: Vec3::Z }).unwrap();
        let q: Vec<f64> = (0..vkc.dof()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (r, o) = detach(&vkc, &attachment_joint_name("obj"), &q).unwrap();
        prop_assert_eq!(r.dof() + o.dof() + 1, vkc.dof());
        let fv = forward_kinematics(&vkc, &q).unwrap();
        let qo = map_configuration(&vkc, &q, &o, f64::NAN);
        let qo: Vec<f64> = o
            .dof_names()
            .iter()
            .zip(qo)
            .map(|(n, v)| vkc.dof_index_by_name(&prefixed("obj", n)).map_or(v, |d| q[d]))
            .collect();
        let fo = forward_kinematics(&o, &qo).unwrap();
        for (name, p) in fo.iter() {
            let pv = fv.get(&prefixed("obj", name)).unwrap();
            prop_assert!(max_diff(&p.to_matrix(), &pv.to_matrix()) <= 1e-9);
        }
    }
}

#[test]
fn virtual_base_adds_three_planar_coordinates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rt = random_tree(&mut rng, 5);
    let based = add_virtual_base(&rt.tree).unwrap();
    assert_eq!(based.dof(), rt.tree.dof() + 3);
    assert_eq!(&based.dof_names()[..3], ["base_x", "base_y", "base_theta"]);
    let mut q = vec![0.0; based.dof()];
    q[0] = 1.5;
    q[1] = -0.5;
    q[2] = 0.7;
    let base = forward_kinematics(&based, &q).unwrap();
    let expect = rt.tree.anchor() * Transform::planar(1.5, -0.5, 0.7);
    assert!(max_diff(&base.get("l0").unwrap().to_matrix(), &expect.to_matrix()) <= 1e-12);
}
