//! Kinematic descriptions of robots, objects and environments.
//!
//! A description is assembled as [`TreeParts`], checked with [`validate_tree`]
//! and frozen into a [`KinematicTree`], which caches the topology used by the
//! kinematics and collision code.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{Transform, Vec3};
use crate::Error;

/// Convex collision primitive, expressed in its own local frame.
///
/// Capsules are aligned with the local `z` axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Capsule { radius: f64, half_length: f64 },
    Box { half_extents: Vec3 },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Shape::Sphere { radius } => pos(radius),
            Shape::Capsule { radius, half_length } => pos(radius) && pos(half_length),
            Shape::Box { half_extents: h } => pos(h.x) && pos(h.y) && pos(h.z),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "sphere",
            Shape::Capsule { .. } => "capsule",
            Shape::Box { .. } => "box",
        }
    }
}

/// A shape rigidly attached to a link at `origin` (link frame -> shape frame).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub shape: Shape,
    pub origin: Transform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    pub name: String,
    pub geoms: Vec<Geometry>,
}

impl LinkSpec {
    pub fn new(name: impl Into<String>) -> Self {
        LinkSpec { name: name.into(), geoms: Vec::new() }
    }

    pub fn with_geom(mut self, shape: Shape, origin: Transform) -> Self {
        self.geoms.push(Geometry { shape, origin });
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn is_movable(self) -> bool {
        !matches!(self, JointKind::Fixed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        }
    }
}

/// Where a joint comes from. Virtual joints are added when building a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JointRole {
    #[default]
    Physical,
    /// One of the planar base joints added by `add_virtual_base`.
    VirtualBase,
    /// The end-effector -> object joint added by `attach`.
    Attachment,
}

impl JointRole {
    pub fn is_virtual(self) -> bool {
        !matches!(self, JointRole::Physical)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl Limits {
    pub fn new(lower: f64, upper: f64) -> Self {
        Limits { lower, upper, velocity: f64::INFINITY, acceleration: f64::INFINITY }
    }
}

/// A joint between two links.
///
/// The child frame is `parent * origin * motion(q) * child_offset`, where the
/// motion rotates about (revolute) or translates along (prismatic) `axis`,
/// expressed in the joint frame. `child_offset` is the identity for ordinary
/// joints and only becomes non-trivial after re-rooting a tree.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub role: JointRole,
    pub parent: String,
    pub child: String,
    pub origin: Transform,
    pub child_offset: Transform,
    pub axis: Vec3,
    pub limits: Option<Limits>,
}

impl JointSpec {
    pub fn new(
        name: impl Into<String>,
        kind: JointKind,
        parent: impl Into<String>,
        child: impl Into<String>,
        origin: Transform,
    ) -> Self {
        JointSpec {
            name: name.into(),
            kind,
            role: JointRole::Physical,
            parent: parent.into(),
            child: child.into(),
            origin,
            child_offset: Transform::IDENTITY,
            axis: Vec3::Z,
            limits: None,
        }
    }

    pub fn with_axis(mut self, axis: Vec3) -> Self {
        self.axis = axis;
        self
    }

    pub fn with_limits(mut self, lower: f64, upper: f64) -> Self {
        self.limits = Some(Limits::new(lower, upper));
        self
    }

    pub fn with_role(mut self, role: JointRole) -> Self {
        self.role = role;
        self
    }

    /// Joint-local transform `origin * motion(q) * child_offset`.
    pub fn local_transform(&self, q: f64) -> Transform {
        let motion = match self.kind {
            JointKind::Revolute => Transform::from_rotation(crate::math::Quat::from_axis_angle(self.axis, q)),
            JointKind::Prismatic => Transform::from_translation(self.axis * q),
            JointKind::Fixed => Transform::IDENTITY,
        };
        self.origin.compose(&motion).compose(&self.child_offset)
    }
}

/// Unvalidated kinematic description.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeParts {
    pub name: String,
    pub root: String,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    /// World pose of the root link; identity when absent.
    pub anchor: Option<Transform>,
    /// Link pairs excluded from collision checking.
    pub allowed_collisions: Vec<(String, String)>,
}

impl TreeParts {
    pub fn new(name: impl Into<String>, root: impl Into<String>) -> Self {
        TreeParts {
            name: name.into(),
            root: root.into(),
            links: Vec::new(),
            joints: Vec::new(),
            anchor: None,
            allowed_collisions: Vec::new(),
        }
    }
}

/// One structural problem found by [`validate_tree`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    DuplicateLink { name: String },
    DuplicateJoint { name: String },
    UnknownRoot { name: String },
    UnknownLink { joint: String, link: String },
    MultipleParents { link: String, joints: Vec<String> },
    RootHasParent { root: String, joint: String },
    Cycle { links: Vec<String> },
    Orphan { link: String },
    InvalidAxis { joint: String },
    InvalidLimits { joint: String },
    FixedJointWithLimits { joint: String },
    InvalidShape { link: String },
    NonFinite { element: String },
    UnknownAllowedPair { link: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateLink { name } => write!(f, "duplicate link name \"{name}\""),
            Diagnostic::DuplicateJoint { name } => write!(f, "duplicate joint name \"{name}\""),
            Diagnostic::UnknownRoot { name } => write!(f, "root link \"{name}\" is not defined"),
            Diagnostic::UnknownLink { joint, link } => {
                write!(f, "joint \"{joint}\" references unknown link \"{link}\"")
            }
            Diagnostic::MultipleParents { link, joints } => {
                write!(f, "link \"{link}\" has several parent joints: {}", joints.join(", "))
            }
            Diagnostic::RootHasParent { root, joint } => {
                write!(f, "root link \"{root}\" is the child of joint \"{joint}\"")
            }
            Diagnostic::Cycle { links } => write!(f, "joint cycle through links {}", links.join(" -> ")),
            Diagnostic::Orphan { link } => write!(f, "link \"{link}\" is not connected to the root"),
            Diagnostic::InvalidAxis { joint } => write!(f, "joint \"{joint}\" axis is not a unit vector"),
            Diagnostic::InvalidLimits { joint } => write!(f, "joint \"{joint}\" has lower limit above upper limit"),
            Diagnostic::FixedJointWithLimits { joint } => write!(f, "fixed joint \"{joint}\" carries limits"),
            Diagnostic::InvalidShape { link } => {
                write!(f, "link \"{link}\" has a shape with non-positive size")
            }
            Diagnostic::NonFinite { element } => write!(f, "\"{element}\" contains a non-finite value"),
            Diagnostic::UnknownAllowedPair { link } => {
                write!(f, "allowed-collision pair references unknown link \"{link}\"")
            }
        }
    }
}

const AXIS_TOL: f64 = 1e-9;

/// Structural check of a description. Empty iff it may become a [`KinematicTree`].
pub fn validate_tree(parts: &TreeParts) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let mut link_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, link) in parts.links.iter().enumerate() {
        if link_index.insert(link.name.as_str(), i).is_some() {
            diags.push(Diagnostic::DuplicateLink { name: link.name.clone() });
        }
        if link.geoms.iter().any(|g| !g.shape.is_valid()) {
            diags.push(Diagnostic::InvalidShape { link: link.name.clone() });
        }
        if link.geoms.iter().any(|g| !g.origin.is_finite()) {
            diags.push(Diagnostic::NonFinite { element: link.name.clone() });
        }
    }
    let mut joint_names: BTreeMap<&str, ()> = BTreeMap::new();
    for joint in &parts.joints {
        if joint_names.insert(joint.name.as_str(), ()).is_some() {
            diags.push(Diagnostic::DuplicateJoint { name: joint.name.clone() });
        }
        for link in [&joint.parent, &joint.child] {
            if !link_index.contains_key(link.as_str()) {
                diags.push(Diagnostic::UnknownLink { joint: joint.name.clone(), link: link.clone() });
            }
        }
        if !joint.origin.is_finite() || !joint.child_offset.is_finite() || !joint.axis.is_finite() {
            diags.push(Diagnostic::NonFinite { element: joint.name.clone() });
        }
        match joint.kind {
            JointKind::Fixed => {
                if joint.limits.is_some() {
                    diags.push(Diagnostic::FixedJointWithLimits { joint: joint.name.clone() });
                }
            }
            JointKind::Revolute | JointKind::Prismatic => {
                if (joint.axis.norm() - 1.0).abs() > AXIS_TOL {
                    diags.push(Diagnostic::InvalidAxis { joint: joint.name.clone() });
                }
                if let Some(l) = joint.limits {
                    if l.lower.is_nan() || l.upper.is_nan() || l.lower > l.upper {
                        diags.push(Diagnostic::InvalidLimits { joint: joint.name.clone() });
                    }
                }
            }
        }
    }
    if !link_index.contains_key(parts.root.as_str()) {
        diags.push(Diagnostic::UnknownRoot { name: parts.root.clone() });
    }
    if let Some(a) = &parts.anchor {
        if !a.is_finite() {
            diags.push(Diagnostic::NonFinite { element: String::from("anchor") });
        }
    }
    for (a, b) in &parts.allowed_collisions {
        for l in [a, b] {
            if !link_index.contains_key(l.as_str()) {
                diags.push(Diagnostic::UnknownAllowedPair { link: l.clone() });
            }
        }
    }

    // Parent pointers, using the first declared parent joint when several exist.
    let n = parts.links.len();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, joint) in parts.joints.iter().enumerate() {
        if let (Some(&_p), Some(&c)) = (link_index.get(joint.parent.as_str()), link_index.get(joint.child.as_str())) {
            parents[c].push(j);
        }
    }
    let parent_link: Vec<Option<usize>> =
        parents.iter().map(|js| js.first().map(|&j| link_index[parts.joints[j].parent.as_str()])).collect();
    for (i, js) in parents.iter().enumerate() {
        if js.len() > 1 {
            diags.push(Diagnostic::MultipleParents {
                link: parts.links[i].name.clone(),
                joints: js.iter().map(|&j| parts.joints[j].name.clone()).collect(),
            });
        }
    }

    // Cycles: follow parent pointers; a walk that revisits a link inside the
    // current walk has found a cycle.
    let mut state = vec![0u8; n]; // 0 unvisited, 1 on current walk, 2 done
    let mut in_cycle = vec![false; n];
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut walk = Vec::new();
        let mut cur = Some(start);
        while let Some(c) = cur {
            match state[c] {
                0 => {
                    state[c] = 1;
                    walk.push(c);
                    cur = parent_link[c];
                }
                1 => {
                    let pos = walk.iter().position(|&w| w == c).unwrap_or(0);
                    let members: Vec<usize> = walk[pos..].to_vec();
                    for &m in &members {
                        in_cycle[m] = true;
                    }
                    diags.push(Diagnostic::Cycle { links: members.iter().map(|&m| parts.links[m].name.clone()).collect() });
                    break;
                }
                _ => break,
            }
        }
        for w in walk {
            state[w] = 2;
        }
    }

    let root = link_index.get(parts.root.as_str()).copied();
    if let Some(r) = root {
        if let Some(&j) = parents[r].first() {
            if !in_cycle[r] {
                diags.push(Diagnostic::RootHasParent { root: parts.root.clone(), joint: parts.joints[j].name.clone() });
            }
        }
    }
    for i in 0..n {
        let duplicate = link_index.get(parts.links[i].name.as_str()) != Some(&i);
        if Some(i) != root && parent_link[i].is_none() && !duplicate {
            diags.push(Diagnostic::Orphan { link: parts.links[i].name.clone() });
        }
    }
    diags
}

/// A validated, immutable kinematic tree with cached topology.
#[derive(Clone, Debug)]
pub struct KinematicTree {
    parts: TreeParts,
    link_index: BTreeMap<String, usize>,
    joint_index: BTreeMap<String, usize>,
    root: usize,
    parent_joint: Vec<Option<usize>>,
    child_joints: Vec<Vec<usize>>,
    /// Joints in canonical order: depth-first from the root, children in declaration order.
    joint_order: Vec<usize>,
    /// Configuration index of each movable joint.
    dof_index: Vec<Option<usize>>,
    dof_joints: Vec<usize>,
    /// Movable joints on the root -> link path, as configuration indices, for each link.
    ancestors: Vec<Vec<usize>>,
    link_depth: Vec<usize>,
}

impl PartialEq for KinematicTree {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl KinematicTree {
    pub fn new(parts: TreeParts) -> Result<Self, Error> {
        let diags = validate_tree(&parts);
        if !diags.is_empty() {
            return Err(Error::InvalidModel(diags));
        }
        let link_index: BTreeMap<String, usize> = parts.links.iter().enumerate().map(|(i, l)| (l.name.clone(), i)).collect();
        let joint_index: BTreeMap<String, usize> = parts.joints.iter().enumerate().map(|(i, j)| (j.name.clone(), i)).collect();
        let n = parts.links.len();
        let root = link_index[&parts.root];
        let mut parent_joint = vec![None; n];
        let mut child_joints = vec![Vec::new(); n];
        for (j, joint) in parts.joints.iter().enumerate() {
            parent_joint[link_index[&joint.child]] = Some(j);
            child_joints[link_index[&joint.parent]].push(j);
        }
        let mut joint_order = Vec::with_capacity(parts.joints.len());
        let mut link_depth = vec![0; n];
        let mut stack = vec![root];
        while let Some(l) = stack.pop() {
            // push in reverse so the first declared child is visited first
            for &j in child_joints[l].iter().rev() {
                stack.push(link_index[&parts.joints[j].child]);
            }
            if let Some(j) = parent_joint[l] {
                joint_order.push(j);
                link_depth[l] = link_depth[link_index[&parts.joints[j].parent]] + 1;
            }
        }
        let mut dof_index = vec![None; parts.joints.len()];
        let mut dof_joints = Vec::new();
        for &j in &joint_order {
            if parts.joints[j].kind.is_movable() {
                dof_index[j] = Some(dof_joints.len());
                dof_joints.push(j);
            }
        }
        let mut ancestors = vec![Vec::new(); n];
        for &j in &joint_order {
            let joint = &parts.joints[j];
            let p = link_index[&joint.parent];
            let c = link_index[&joint.child];
            let mut a = ancestors[p].clone();
            if let Some(d) = dof_index[j] {
                a.push(d);
            }
            ancestors[c] = a;
        }
        Ok(KinematicTree {
            parts,
            link_index,
            joint_index,
            root,
            parent_joint,
            child_joints,
            joint_order,
            dof_index,
            dof_joints,
            ancestors,
            link_depth,
        })
    }

    pub fn parts(&self) -> &TreeParts {
        &self.parts
    }

    pub fn into_parts(self) -> TreeParts {
        self.parts
    }

    pub fn name(&self) -> &str {
        &self.parts.name
    }

    pub fn root_name(&self) -> &str {
        &self.parts.root
    }

    pub fn root_index(&self) -> usize {
        self.root
    }

    pub fn anchor(&self) -> Transform {
        self.parts.anchor.unwrap_or(Transform::IDENTITY)
    }

    /// Same tree with a different world anchor.
    pub fn with_anchor(&self, anchor: Transform) -> KinematicTree {
        let mut t = self.clone();
        t.parts.anchor = Some(anchor);
        t
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.parts.links
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.parts.joints
    }

    pub fn link(&self, index: usize) -> &LinkSpec {
        &self.parts.links[index]
    }

    pub fn joint(&self, index: usize) -> &JointSpec {
        &self.parts.joints[index]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_index.get(name).copied()
    }

    pub fn require_link(&self, name: &str) -> Result<usize, Error> {
        self.link_index(name).ok_or_else(|| Error::UnknownLink(String::from(name)))
    }

    pub fn require_joint(&self, name: &str) -> Result<usize, Error> {
        self.joint_index(name).ok_or_else(|| Error::UnknownJoint(String::from(name)))
    }

    pub fn parent_joint(&self, link: usize) -> Option<usize> {
        self.parent_joint[link]
    }

    pub fn child_joints(&self, link: usize) -> &[usize] {
        &self.child_joints[link]
    }

    pub fn parent_link(&self, link: usize) -> Option<usize> {
        self.parent_joint[link].map(|j| self.link_index[&self.parts.joints[j].parent])
    }

    pub fn child_link_of(&self, joint: usize) -> usize {
        self.link_index[&self.parts.joints[joint].child]
    }

    pub fn parent_link_of(&self, joint: usize) -> usize {
        self.link_index[&self.parts.joints[joint].parent]
    }

    /// Joints in canonical (depth-first, declaration-ordered) order.
    pub fn joint_order(&self) -> &[usize] {
        &self.joint_order
    }

    /// Number of movable joints.
    pub fn dof(&self) -> usize {
        self.dof_joints.len()
    }

    /// Joint index for each configuration coordinate.
    pub fn dof_joints(&self) -> &[usize] {
        &self.dof_joints
    }

    pub fn dof_index(&self, joint: usize) -> Option<usize> {
        self.dof_index[joint]
    }

    pub fn dof_index_by_name(&self, joint_name: &str) -> Option<usize> {
        self.joint_index(joint_name).and_then(|j| self.dof_index[j])
    }

    pub fn dof_names(&self) -> Vec<String> {
        self.dof_joints.iter().map(|&j| self.parts.joints[j].name.clone()).collect()
    }

    /// Configuration indices of the movable joints between the root and `link`.
    pub fn ancestor_dofs(&self, link: usize) -> &[usize] {
        &self.ancestors[link]
    }

    pub fn depth(&self, link: usize) -> usize {
        self.link_depth[link]
    }

    /// Lower/upper position limits per configuration coordinate (infinite when absent).
    pub fn position_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.dof());
        let mut hi = Vec::with_capacity(self.dof());
        for &j in &self.dof_joints {
            match self.parts.joints[j].limits {
                Some(l) => {
                    lo.push(l.lower);
                    hi.push(l.upper);
                }
                None => {
                    lo.push(f64::NEG_INFINITY);
                    hi.push(f64::INFINITY);
                }
            }
        }
        (lo, hi)
    }

    /// Is `descendant` in the subtree rooted at `ancestor` (inclusive)?
    pub fn is_descendant(&self, descendant: usize, ancestor: usize) -> bool {
        let mut cur = Some(descendant);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.parent_link(c);
        }
        false
    }

    /// Links of the subtree rooted at `link`, including it.
    pub fn subtree_links(&self, link: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![link];
        while let Some(l) = stack.pop() {
            out.push(l);
            for &j in self.child_joints[l].iter().rev() {
                stack.push(self.child_link_of(j));
            }
        }
        out
    }
}

/// Ordered joints from a base link to a tip link.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub base: String,
    pub tip: String,
    pub joints: Vec<JointSpec>,
}

impl Chain {
    pub fn dof(&self) -> usize {
        self.joints.iter().filter(|j| j.kind.is_movable()).count()
    }
}

/// The joints connecting `base_link` to its descendant `tip_link`, base first.
pub fn extract_chain(tree: &KinematicTree, base_link: &str, tip_link: &str) -> Result<Chain, Error> {
    let base = tree.require_link(base_link)?;
    let tip = tree.require_link(tip_link)?;
    let mut joints = Vec::new();
    let mut cur = tip;
    while cur != base {
        match tree.parent_joint(cur) {
            Some(j) => {
                joints.push(tree.joint(j).clone());
                cur = tree.parent_link_of(j);
            }
            None => return Err(Error::NotDescendant { base: String::from(base_link), tip: String::from(tip_link) }),
        }
    }
    joints.reverse();
    Ok(Chain { base: String::from(base_link), tip: String::from(tip_link), joints })
}

/// Human-readable summary of a diagnostics list.
pub fn describe(diags: &[Diagnostic]) -> String {
    let v: Vec<String> = diags.iter().map(|d| format!("{d}")).collect();
    v.join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn serial(n: usize) -> TreeParts {
        let mut p = TreeParts::new("serial", "l0");
        p.links.push(LinkSpec::new("l0"));
        for i in 0..n {
            p.links.push(LinkSpec::new(format!("l{}", i + 1)));
            p.joints.push(
                JointSpec::new(
                    format!("j{}", i + 1),
                    JointKind::Revolute,
                    format!("l{i}"),
                    format!("l{}", i + 1),
                    Transform::from_translation(Vec3::new(0.0, 0.0, 0.5)),
                )
                .with_limits(-1.0, 1.0),
            );
        }
        p
    }

    #[test]
    fn valid_serial_tree_has_no_diagnostics() {
        assert!(validate_tree(&serial(2)).is_empty());
        let t = KinematicTree::new(serial(2)).unwrap();
        assert_eq!(t.dof(), 2);
        assert_eq!(t.links().len(), 3);
    }

    #[test]
    fn duplicate_link_is_reported() {
        let mut p = TreeParts::new("t", "base");
        p.links.push(LinkSpec::new("base"));
        p.links.push(LinkSpec::new("base"));
        let d = validate_tree(&p);
        assert_eq!(d, vec![Diagnostic::DuplicateLink { name: "base".to_string() }]);
    }

    #[test]
    fn joint_cycle_is_reported_once() {
        let mut p = TreeParts::new("t", "a");
        p.links.push(LinkSpec::new("a"));
        p.links.push(LinkSpec::new("b"));
        p.joints.push(JointSpec::new("ab", JointKind::Fixed, "a", "b", Transform::IDENTITY));
        p.joints.push(JointSpec::new("ba", JointKind::Fixed, "b", "a", Transform::IDENTITY));
        let d = validate_tree(&p);
        assert_eq!(d.len(), 1, "{d:?}");
        assert!(matches!(d[0], Diagnostic::Cycle { .. }));
    }

    #[test]
    fn unknown_link_is_named() {
        let mut p = serial(1);
        p.joints[0].child = "armX".to_string();
        let d = validate_tree(&p);
        assert!(d.iter().any(|x| matches!(x, Diagnostic::UnknownLink { link, .. } if link == "armX")));
        let msg = describe(&d);
        assert!(msg.contains("armX"));
    }

    #[test]
    fn orphan_and_bad_axis() {
        let mut p = serial(1);
        p.links.push(LinkSpec::new("floating"));
        p.joints[0].axis = Vec3::new(0.0, 0.0, 2.0);
        let d = validate_tree(&p);
        assert!(d.contains(&Diagnostic::Orphan { link: "floating".to_string() }));
        assert!(d.contains(&Diagnostic::InvalidAxis { joint: "j1".to_string() }));
    }

    #[test]
    fn fixed_joint_with_limits_is_rejected() {
        let mut p = serial(1);
        p.joints[0].kind = JointKind::Fixed;
        assert_eq!(validate_tree(&p), vec![Diagnostic::FixedJointWithLimits { joint: "j1".to_string() }]);
    }

    #[test]
    fn extract_chain_orders_from_base() {
        let t = KinematicTree::new(serial(3)).unwrap();
        let c = extract_chain(&t, "l0", "l3").unwrap();
        let names: Vec<&str> = c.joints.iter().map(|j| j.name.as_str()).collect();
        assert_eq!(names, ["j1", "j2", "j3"]);
        assert_eq!(c.dof(), 3);
        assert!(matches!(extract_chain(&t, "l3", "l0"), Err(Error::NotDescendant { .. })));
        assert!(matches!(extract_chain(&t, "l0", "nope"), Err(Error::UnknownLink(_))));
    }

    #[test]
    fn canonical_order_is_depth_first_in_declaration_order() {
        let mut p = TreeParts::new("t", "r");
        for n in ["r", "a", "b", "a1"] {
            p.links.push(LinkSpec::new(n));
        }
        let j = |n: &str, par: &str, ch: &str| {
            JointSpec::new(n, JointKind::Revolute, par, ch, Transform::IDENTITY).with_limits(-1.0, 1.0)
        };
        p.joints.push(j("rb", "r", "b"));
        p.joints.push(j("aa1", "a", "a1"));
        p.joints.push(j("ra", "r", "a"));
        let t = KinematicTree::new(p).unwrap();
        assert_eq!(t.dof_names(), ["rb", "ra", "aa1"]);
    }
}
