//! Forward kinematics, Jacobians and the structural operations that build a
//! virtual kinematic chain: re-rooting, attachment, and the virtual planar base.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{mat3_vec, so3_left_jacobian_inverse, Transform, Vec3, PI};
use crate::model::{JointKind, JointRole, JointSpec, KinematicTree, Limits, LinkSpec, TreeParts};
use crate::{Error, Result};

pub const VIRTUAL_BASE_LINK: &str = "virtual_base";
pub const BASE_X_JOINT: &str = "base_x";
pub const BASE_Y_JOINT: &str = "base_y";
pub const BASE_THETA_JOINT: &str = "base_theta";

/// Joint positions ordered by the tree's canonical joint ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigurationState {
    values: Vec<f64>,
}

impl ConfigurationState {
    pub fn new(tree: &KinematicTree, values: Vec<f64>) -> Result<Self> {
        check_dims(tree, &values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(String::from("configuration contains a non-finite value")));
        }
        Ok(ConfigurationState { values })
    }

    pub fn zeros(tree: &KinematicTree) -> Self {
        ConfigurationState { values: vec![0.0; tree.dof()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_dims(tree: &KinematicTree, q: &[f64]) -> Result<()> {
    if q.len() != tree.dof() {
        return Err(Error::DimensionMismatch { expected: tree.dof(), actual: q.len() });
    }
    Ok(())
}

/// World poses of every link for one configuration.
#[derive(Clone, Debug)]
pub struct FrameSet<'a> {
    tree: &'a KinematicTree,
    poses: Vec<Transform>,
    /// World pose of each joint frame before its motion is applied.
    joint_frames: Vec<Transform>,
}

impl<'a> FrameSet<'a> {
    pub fn tree(&self) -> &'a KinematicTree {
        self.tree
    }

    pub fn pose(&self, link: usize) -> &Transform {
        &self.poses[link]
    }

    pub fn get(&self, link_name: &str) -> Option<&Transform> {
        self.tree.link_index(link_name).map(|i| &self.poses[i])
    }

    pub fn poses(&self) -> &[Transform] {
        &self.poses
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a str, &Transform)> + '_ {
        self.tree.links().iter().map(|l| l.name.as_str()).zip(self.poses.iter())
    }

    /// World axis direction and a point on it for joint `joint`.
    pub fn joint_axis(&self, joint: usize) -> (Vec3, Vec3) {
        let f = &self.joint_frames[joint];
        (f.translation, f.transform_vector(self.tree.joint(joint).axis))
    }

    /// Geometric Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, link: usize, point: Vec3) -> Jacobian {
        let mut jac = Jacobian::zeros(self.tree.dof());
        for &d in self.tree.ancestor_dofs(link) {
            let j = self.tree.dof_joints()[d];
            let (origin, axis) = self.joint_axis(j);
            match self.tree.joint(j).kind {
                JointKind::Revolute => {
                    let lin = axis.cross(point - origin);
                    jac.cols[d] = [lin.x, lin.y, lin.z, axis.x, axis.y, axis.z];
                }
                JointKind::Prismatic => {
                    jac.cols[d] = [axis.x, axis.y, axis.z, 0.0, 0.0, 0.0];
                }
                JointKind::Fixed => {}
            }
        }
        jac
    }
}

/// Evaluate the world pose of every link.
pub fn forward_kinematics<'a>(tree: &'a KinematicTree, q: &[f64]) -> Result<FrameSet<'a>> {
    check_dims(tree, q)?;
    let mut poses = vec![Transform::IDENTITY; tree.links().len()];
    let mut joint_frames = vec![Transform::IDENTITY; tree.joints().len()];
    poses[tree.root_index()] = tree.anchor();
    for &j in tree.joint_order() {
        let joint = tree.joint(j);
        let parent = poses[tree.parent_link_of(j)];
        let value = tree.dof_index(j).map_or(0.0, |d| q[d]);
        joint_frames[j] = parent.compose(&joint.origin);
        poses[tree.child_link_of(j)] = parent.compose(&joint.local_transform(value));
    }
    Ok(FrameSet { tree, poses, joint_frames })
}

/// A 6 x n matrix stored by columns: rows 0..3 linear, 3..6 angular velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    pub cols: Vec<[f64; 6]>,
}

impl Jacobian {
    pub fn zeros(n: usize) -> Self {
        Jacobian { cols: vec![[0.0; 6]; n] }
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cols[col][row]
    }

    pub fn linear(&self, col: usize) -> Vec3 {
        let c = &self.cols[col];
        Vec3::new(c[0], c[1], c[2])
    }

    pub fn angular(&self, col: usize) -> Vec3 {
        let c = &self.cols[col];
        Vec3::new(c[3], c[4], c[5])
    }
}

/// Jacobian of `ref_point` (in the frame of `target_link`), world frame.
pub fn chain_jacobian(tree: &KinematicTree, q: &[f64], target_link: &str, ref_point: Vec3) -> Result<Jacobian> {
    let link = tree.require_link(target_link)?;
    let frames = forward_kinematics(tree, q)?;
    let p = frames.pose(link).transform_point(ref_point);
    Ok(frames.point_jacobian(link, p))
}

/// Six-vector `[t_a - t_b, log(R_b^-1 R_a)]`.
pub fn pose_residual(a: &Transform, b: &Transform) -> [f64; 6] {
    let dt = a.translation - b.translation;
    let dr = (b.rotation.conjugate() * a.rotation).to_rotation_vector();
    [dt.x, dt.y, dt.z, dr.x, dr.y, dr.z]
}

/// Derivative of [`pose_residual`]`(pose(link), target)` with respect to `q`,
/// one 6-array per configuration coordinate.
pub fn pose_residual_jacobian(frames: &FrameSet<'_>, link: usize, target: &Transform) -> Vec<[f64; 6]> {
    let pose = frames.pose(link);
    let jac = frames.point_jacobian(link, pose.translation);
    let r = (target.rotation.conjugate() * pose.rotation).to_rotation_vector();
    let jl_inv = so3_left_jacobian_inverse(r);
    let rb_t = target.rotation.conjugate();
    jac.cols
        .iter()
        .map(|c| {
            let w = Vec3::new(c[3], c[4], c[5]);
            let dr = mat3_vec(&jl_inv, rb_t.rotate(w));
            [c[0], c[1], c[2], dr.x, dr.y, dr.z]
        })
        .collect()
}

/// Re-root `tree` at `new_root`, preserving every link's world pose.
///
/// Joints on the old-root -> new-root path swap parent and child. Each keeps
/// its value: `origin` and `child_offset` are exchanged and inverted, and the
/// axis is negated, so the admissible set of relative poses and the limits are
/// unchanged. The result is anchored at the world pose of `new_root` in the
/// zero configuration of the original tree.
pub fn invert_subtree(tree: &KinematicTree, new_root: &str) -> Result<KinematicTree> {
    let target = tree.require_link(new_root)?;
    let zero = vec![0.0; tree.dof()];
    let anchor = *forward_kinematics(tree, &zero)?.pose(target);

    let mut path = BTreeSet::new();
    let mut cur = target;
    while let Some(j) = tree.parent_joint(cur) {
        path.insert(j);
        cur = tree.parent_link_of(j);
    }

    let mut parts = tree.parts().clone();
    for &j in &path {
        let joint = &mut parts.joints[j];
        core::mem::swap(&mut joint.parent, &mut joint.child);
        let origin = joint.origin;
        joint.origin = joint.child_offset.inverse();
        joint.child_offset = origin.inverse();
        if joint.kind.is_movable() {
            joint.axis = -joint.axis;
        }
    }
    parts.root = String::from(new_root);
    parts.anchor = Some(anchor);
    KinematicTree::new(parts)
}

/// How the end effector holds the object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttachJoint {
    Fixed,
    /// Revolute about `axis` expressed in the attachment frame.
    Revolute {
        axis: Vec3,
    },
}

pub fn attachment_joint_name(object_name: &str) -> String {
    format!("{object_name}/attach")
}

pub fn prefixed(object_name: &str, name: &str) -> String {
    format!("{object_name}/{name}")
}

/// Splice a re-rooted object onto the robot end effector.
///
/// Object links and joints are renamed `<object>/<name>`. The new attachment
/// joint connects `ee_link` to the object root with origin `grasp` (the pose of
/// the object root in the end-effector frame).
pub fn attach(
    robot: &KinematicTree,
    object_inverted: &KinematicTree,
    ee_link: &str,
    grasp: Transform,
    joint: AttachJoint,
) -> Result<KinematicTree> {
    robot.require_link(ee_link)?;
    let obj = object_inverted.name();
    let mut parts = robot.parts().clone();
    for link in object_inverted.links() {
        parts.links.push(LinkSpec { name: prefixed(obj, &link.name), geoms: link.geoms.clone() });
    }
    let mut attach =
        JointSpec::new(attachment_joint_name(obj), JointKind::Fixed, ee_link, prefixed(obj, object_inverted.root_name()), grasp)
            .with_role(JointRole::Attachment);
    if let AttachJoint::Revolute { axis } = joint {
        attach.kind = JointKind::Revolute;
        attach.axis = axis.normalize();
        attach.limits = Some(Limits::new(-PI, PI));
    }
    parts.joints.push(attach);
    for j in object_inverted.joints() {
        let mut j = j.clone();
        j.name = prefixed(obj, &j.name);
        j.parent = prefixed(obj, &j.parent);
        j.child = prefixed(obj, &j.child);
        parts.joints.push(j);
    }
    for (a, b) in &object_inverted.parts().allowed_collisions {
        parts.allowed_collisions.push((prefixed(obj, a), prefixed(obj, b)));
    }
    KinematicTree::new(parts)
}

/// Split an attached object off a chain.
///
/// Returns the robot without the object and the object subtree with original
/// (unprefixed) names, anchored at its world pose for configuration `q`.
pub fn detach(vkc: &KinematicTree, virtual_joint: &str, q: &[f64]) -> Result<(KinematicTree, KinematicTree)> {
    let j = vkc.require_joint(virtual_joint)?;
    if vkc.joint(j).role != JointRole::Attachment {
        return Err(Error::NotVirtual(String::from(virtual_joint)));
    }
    let frames = forward_kinematics(vkc, q)?;
    let obj_root = vkc.child_link_of(j);
    let obj_name = virtual_joint.split('/').next().unwrap_or(virtual_joint);
    let strip = |s: &str| -> String {
        let p = format!("{obj_name}/");
        String::from(s.strip_prefix(p.as_str()).unwrap_or(s))
    };
    let subtree: BTreeSet<usize> = vkc.subtree_links(obj_root).into_iter().collect();
    let sub_names: BTreeSet<&str> = subtree.iter().map(|&l| vkc.link(l).name.as_str()).collect();

    let mut robot = TreeParts::new(vkc.name(), vkc.root_name());
    robot.anchor = vkc.parts().anchor;
    let mut object = TreeParts::new(obj_name, strip(&vkc.link(obj_root).name));
    object.anchor = Some(*frames.pose(obj_root));
    for (i, link) in vkc.links().iter().enumerate() {
        if subtree.contains(&i) {
            object.links.push(LinkSpec { name: strip(&link.name), geoms: link.geoms.clone() });
        } else {
            robot.links.push(link.clone());
        }
    }
    for (k, joint) in vkc.joints().iter().enumerate() {
        if k == j {
            continue;
        }
        if sub_names.contains(joint.child.as_str()) {
            let mut jj = joint.clone();
            jj.name = strip(&jj.name);
            jj.parent = strip(&jj.parent);
            jj.child = strip(&jj.child);
            object.joints.push(jj);
        } else {
            robot.joints.push(joint.clone());
        }
    }
    for (a, b) in &vkc.parts().allowed_collisions {
        let (ia, ib) = (sub_names.contains(a.as_str()), sub_names.contains(b.as_str()));
        if ia && ib {
            object.allowed_collisions.push((strip(a), strip(b)));
        } else if !ia && !ib {
            robot.allowed_collisions.push((a.clone(), b.clone()));
        }
    }
    Ok((KinematicTree::new(robot)?, KinematicTree::new(object)?))
}

/// Add the planar base: prismatic x, prismatic y, revolute z, rooted at a new
/// `virtual_base` link that takes over the robot's anchor.
pub fn add_virtual_base(robot: &KinematicTree) -> Result<KinematicTree> {
    let mut parts = robot.parts().clone();
    let old_root = parts.root.clone();
    let x_link = String::from("virtual_base_x");
    let y_link = String::from("virtual_base_y");
    let mut links = vec![LinkSpec::new(VIRTUAL_BASE_LINK), LinkSpec::new(x_link.clone()), LinkSpec::new(y_link.clone())];
    links.append(&mut parts.links);
    parts.links = links;
    let bound = 50.0;
    let mut joints = vec![
        JointSpec::new(BASE_X_JOINT, JointKind::Prismatic, VIRTUAL_BASE_LINK, x_link.clone(), Transform::IDENTITY)
            .with_axis(Vec3::X)
            .with_limits(-bound, bound)
            .with_role(JointRole::VirtualBase),
        JointSpec::new(BASE_Y_JOINT, JointKind::Prismatic, x_link, y_link.clone(), Transform::IDENTITY)
            .with_axis(Vec3::Y)
            .with_limits(-bound, bound)
            .with_role(JointRole::VirtualBase),
        JointSpec::new(BASE_THETA_JOINT, JointKind::Revolute, y_link, old_root, Transform::IDENTITY)
            .with_axis(Vec3::Z)
            .with_limits(-2.0 * PI, 2.0 * PI)
            .with_role(JointRole::VirtualBase),
    ];
    joints.append(&mut parts.joints);
    parts.joints = joints;
    parts.root = String::from(VIRTUAL_BASE_LINK);
    KinematicTree::new(parts)
}

/// Copy values between trees by joint name; joints missing in `from` take `fill`.
pub fn map_configuration(from: &KinematicTree, q: &[f64], to: &KinematicTree, fill: f64) -> Vec<f64> {
    to.dof_joints()
        .iter()
        .map(|&j| {
            let name = &to.joint(j).name;
            from.dof_index_by_name(name).map_or(fill, |d| q[d])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;
    use crate::model::Shape;

    fn planar_two_link() -> KinematicTree {
        let mut p = TreeParts::new("arm", "base");
        for n in ["base", "l1", "l2", "tip"] {
            p.links.push(LinkSpec::new(n));
        }
        p.joints.push(JointSpec::new("j1", JointKind::Revolute, "base", "l1", Transform::IDENTITY).with_limits(-PI, PI));
        p.joints.push(
            JointSpec::new("j2", JointKind::Revolute, "l1", "l2", Transform::from_translation(Vec3::X)).with_limits(-PI, PI),
        );
        p.joints.push(JointSpec::new("jt", JointKind::Fixed, "l2", "tip", Transform::from_translation(Vec3::X)));
        KinematicTree::new(p).unwrap()
    }

    fn door() -> KinematicTree {
        let mut p = TreeParts::new("door", "frame");
        p.links.push(LinkSpec::new("frame"));
        p.links.push(LinkSpec::new("panel").with_geom(
            Shape::Box { half_extents: Vec3::new(0.02, 0.4, 0.9) },
            Transform::from_translation(Vec3::new(0.0, 0.4, 0.9)),
        ));
        p.links.push(LinkSpec::new("handle"));
        p.joints.push(
            JointSpec::new("hinge", JointKind::Revolute, "frame", "panel", Transform::from_translation(Vec3::new(0.1, 0.0, 0.0)))
                .with_axis(Vec3::Z)
                .with_limits(0.0, 1.57),
        );
        p.joints.push(JointSpec::new(
            "handle_joint",
            JointKind::Fixed,
            "panel",
            "handle",
            Transform::from_xyz_rpy([-0.06, 0.7, 0.9], [0.0, 0.3, 0.0]),
        ));
        p.anchor = Some(Transform::from_xyz_rpy([2.0, 1.0, 0.0], [0.0, 0.0, 0.5]));
        KinematicTree::new(p).unwrap()
    }

    #[test]
    fn prismatic_at_zero_is_identity() {
        let mut p = TreeParts::new("p", "a");
        p.links.push(LinkSpec::new("a"));
        p.links.push(LinkSpec::new("b"));
        p.joints.push(JointSpec::new("s", JointKind::Prismatic, "a", "b", Transform::IDENTITY).with_limits(-1.0, 1.0));
        let t = KinematicTree::new(p).unwrap();
        let f = forward_kinematics(&t, &[0.0]).unwrap();
        assert_eq!(*f.get("b").unwrap(), Transform::IDENTITY);
    }

    #[test]
    fn planar_arm_tip_position() {
        let t = planar_two_link();
        let f = forward_kinematics(&t, &[PI / 2.0, 0.0]).unwrap();
        let p = f.get("tip").unwrap().translation;
        assert!((p - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn planar_arm_jacobian_lever_arms() {
        let t = planar_two_link();
        let j = chain_jacobian(&t, &[0.0, 0.0], "tip", Vec3::ZERO).unwrap();
        assert_eq!(j.ncols(), 2);
        assert!((j.linear(0) - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
        assert!((j.linear(1) - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let t = planar_two_link();
        assert!(matches!(forward_kinematics(&t, &[0.0]), Err(Error::DimensionMismatch { expected: 2, actual: 1 })));
    }

    #[test]
    fn pose_residual_examples() {
        let a = Transform::from_xyz_rpy([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
        assert!(pose_residual(&a, &a).iter().all(|v| v.abs() < 1e-12));
        let b = Transform::from_translation(Vec3::new(0.1, 0.0, 0.0));
        let r = pose_residual(&b, &Transform::IDENTITY);
        assert!((r[0] - 0.1).abs() < 1e-15 && r[1..].iter().all(|v| v.abs() < 1e-15));
        let c = Transform::from_rotation(Quat::from_axis_angle(Vec3::Z, PI / 3.0));
        let r = pose_residual(&c, &Transform::IDENTITY);
        assert!((r[5] - PI / 3.0).abs() < 1e-12);
        assert!(r[..5].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn door_inversion_swaps_roles() {
        let d = door();
        let inv = invert_subtree(&d, "panel").unwrap();
        assert_eq!(inv.root_name(), "panel");
        assert_eq!(inv.dof(), 1);
        let hinge = inv.joint(inv.joint_index("hinge").unwrap());
        assert_eq!(hinge.parent, "panel");
        assert_eq!(hinge.child, "frame");
    }

    #[test]
    fn door_inversion_preserves_world_poses() {
        let d = door();
        let inv = invert_subtree(&d, "handle").unwrap();
        for k in 0..100 {
            let theta = 1.57 * (k as f64) / 99.0;
            let orig = forward_kinematics(&d, &[theta]).unwrap();
            let anchored = inv.with_anchor(*orig.get("handle").unwrap());
            let q = map_configuration(&d, &[theta], &anchored, 0.0);
            assert_eq!(q, vec![theta]);
            let f = forward_kinematics(&anchored, &q).unwrap();
            for (name, pose) in orig.iter() {
                let (dt, dr) = pose.distance_to(f.get(name).unwrap());
                assert!(dt < 1e-9 && dr < 1e-9, "{name} at {theta}: {dt} {dr}");
            }
        }
    }

    #[test]
    fn double_inversion_is_structurally_identity() {
        let d = door();
        let back = invert_subtree(&invert_subtree(&d, "handle").unwrap(), "frame").unwrap();
        for theta in [0.0, 0.4, 1.2] {
            let a = forward_kinematics(&d, &[theta]).unwrap();
            let b = forward_kinematics(&back, &[theta]).unwrap();
            for (name, pose) in a.iter() {
                let (dt, dr) = pose.distance_to(b.get(name).unwrap());
                assert!(dt < 1e-9 && dr < 1e-9);
            }
        }
    }

    #[test]
    fn virtual_base_pose() {
        let arm = planar_two_link();
        let v = add_virtual_base(&arm).unwrap();
        assert_eq!(v.dof(), arm.dof() + 3);
        let kinds: Vec<JointKind> = v.joints()[..3].iter().map(|j| j.kind).collect();
        assert_eq!(kinds, [JointKind::Prismatic, JointKind::Prismatic, JointKind::Revolute]);
        let f = forward_kinematics(&v, &[1.5, -2.0, PI / 2.0, 0.0, 0.0]).unwrap();
        let base = f.get("base").unwrap();
        assert!((base.translation - Vec3::new(1.5, -2.0, 0.0)).norm() < 1e-12);
        assert!((base.rotation.yaw() - PI / 2.0).abs() < 1e-12);
        let f0 = forward_kinematics(&v, &[0.0; 5]).unwrap();
        assert_eq!(*f0.get("base").unwrap(), Transform::IDENTITY);
    }

    #[test]
    fn attach_then_detach_round_trips() {
        let robot = add_virtual_base(&planar_two_link()).unwrap();
        let inv = invert_subtree(&door(), "handle").unwrap();
        let vkc = attach(&robot, &inv, "tip", Transform::IDENTITY, AttachJoint::Fixed).unwrap();
        assert_eq!(vkc.dof(), robot.dof() + 1);
        let q = [0.3, -0.2, 0.4, 0.1, -0.5, 0.7];
        let f = forward_kinematics(&vkc, &q).unwrap();
        let (dt, dr) = f.get("tip").unwrap().distance_to(f.get("door/handle").unwrap());
        assert!(dt < 1e-12 && dr < 1e-12);
        let (r, o) = detach(&vkc, "door/attach", &q).unwrap();
        assert_eq!(r, robot);
        assert_eq!(o.root_name(), "handle");
        assert_eq!(o.anchor(), *f.get("door/handle").unwrap());
        assert!(matches!(detach(&vkc, "j1", &q), Err(Error::NotVirtual(_))));
    }
}
