//! Signed distance between convex primitives and its configuration-space gradient.
//!
//! Every primitive is a polytope "core" (point, segment or box) inflated by a
//! radius: spheres are points, capsules are segments, boxes have radius zero.
//! Separated cores are handled exactly by GJK (or in closed form when neither
//! core is a box); overlapping cores get their penetration depth from the
//! separating-axis candidates of the Minkowski difference, which for these
//! polytopes is exact.

use alloc::vec;
use alloc::vec::Vec;

use crate::kinematics::{forward_kinematics, FrameSet};
use crate::math::{Transform, Vec3};
use crate::model::{JointKind, KinematicTree, Shape};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosedShape {
    pub shape: Shape,
    pub pose: Transform,
}

impl PosedShape {
    pub fn new(shape: Shape, pose: Transform) -> Self {
        PosedShape { shape, pose }
    }

    /// Axis-aligned bounds, inflated by `margin`.
    pub fn aabb(&self, margin: f64) -> (Vec3, Vec3) {
        let c = self.pose.translation;
        let ext = match self.shape {
            Shape::Sphere { radius } => Vec3::new(radius, radius, radius),
            Shape::Capsule { radius, half_length } => {
                let a = self.pose.transform_vector(Vec3::Z * half_length).abs();
                a + Vec3::new(radius, radius, radius)
            }
            Shape::Box { half_extents: h } => {
                let m = self.pose.rotation.to_matrix();
                Vec3::new(
                    m[0][0].abs() * h.x + m[0][1].abs() * h.y + m[0][2].abs() * h.z,
                    m[1][0].abs() * h.x + m[1][1].abs() * h.y + m[1][2].abs() * h.z,
                    m[2][0].abs() * h.x + m[2][1].abs() * h.y + m[2][2].abs() * h.z,
                )
            }
        };
        let m = Vec3::new(margin, margin, margin);
        (c - ext - m, c + ext + m)
    }

    fn core(&self) -> Core {
        match self.shape {
            Shape::Sphere { radius } => Core { kind: CoreKind::Point, radius, pose: self.pose },
            Shape::Capsule { radius, half_length } => Core { kind: CoreKind::Segment(half_length), radius, pose: self.pose },
            Shape::Box { half_extents } => Core { kind: CoreKind::Box(half_extents), radius: 0.0, pose: self.pose },
        }
    }
}

pub fn aabb_overlap(a: &(Vec3, Vec3), b: &(Vec3, Vec3)) -> bool {
    a.0.x <= b.1.x && b.0.x <= a.1.x && a.0.y <= b.1.y && b.0.y <= a.1.y && a.0.z <= b.1.z && b.0.z <= a.1.z
}

/// Result of a signed-distance query. `normal` points from `b` toward `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceResult {
    pub distance: f64,
    pub witness_a: Vec3,
    pub witness_b: Vec3,
    pub normal: Vec3,
}

impl DistanceResult {
    fn swapped(self) -> DistanceResult {
        DistanceResult { distance: self.distance, witness_a: self.witness_b, witness_b: self.witness_a, normal: -self.normal }
    }
}

/// `max(x, 0)`.
#[inline]
pub fn hinge(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug)]
enum CoreKind {
    Point,
    Segment(f64),
    Box(Vec3),
}

#[derive(Clone, Copy, Debug)]
struct Core {
    kind: CoreKind,
    radius: f64,
    pose: Transform,
}

impl Core {
    fn support(&self, d: Vec3) -> Vec3 {
        match self.kind {
            CoreKind::Point => self.pose.translation,
            CoreKind::Segment(hl) => {
                let axis = self.pose.transform_vector(Vec3::Z);
                let s = if d.dot(axis) >= 0.0 { hl } else { -hl };
                self.pose.translation + axis * s
            }
            CoreKind::Box(h) => {
                let local = self.pose.rotation.conjugate().rotate(d);
                let pick = |v: f64, e: f64| if v >= 0.0 { e } else { -e };
                let p = Vec3::new(pick(local.x, h.x), pick(local.y, h.y), pick(local.z, h.z));
                self.pose.transform_point(p)
            }
        }
    }

    fn is_box(&self) -> bool {
        matches!(self.kind, CoreKind::Box(_))
    }

    /// Segment endpoints (a point is a degenerate segment).
    fn segment(&self) -> (Vec3, Vec3) {
        match self.kind {
            CoreKind::Point => (self.pose.translation, self.pose.translation),
            CoreKind::Segment(hl) => {
                let axis = self.pose.transform_vector(Vec3::Z) * hl;
                (self.pose.translation - axis, self.pose.translation + axis)
            }
            CoreKind::Box(_) => unreachable!("box core has no segment form"),
        }
    }

    /// Edge directions usable in separating-axis candidates.
    fn edge_dirs(&self) -> Vec<Vec3> {
        match self.kind {
            CoreKind::Point => Vec::new(),
            CoreKind::Segment(_) => vec![self.pose.transform_vector(Vec3::Z)],
            CoreKind::Box(_) => {
                vec![
                    self.pose.transform_vector(Vec3::X),
                    self.pose.transform_vector(Vec3::Y),
                    self.pose.transform_vector(Vec3::Z),
                ]
            }
        }
    }
}

/// Signed distance between two posed primitives.
pub fn signed_distance(a: &PosedShape, b: &PosedShape) -> DistanceResult {
    let (ca, cb) = (a.core(), b.core());
    // Keep the computation order-independent: always query with the
    // "smaller" core first and swap the result back.
    if core_rank(&cb) < core_rank(&ca) {
        return core_distance(&cb, &ca).swapped();
    }
    core_distance(&ca, &cb)
}

fn core_rank(c: &Core) -> u8 {
    match c.kind {
        CoreKind::Point => 0,
        CoreKind::Segment(_) => 1,
        CoreKind::Box(_) => 2,
    }
}

/// Closed-form distance between two spheres.
pub fn sphere_sphere(ca: Vec3, ra: f64, cb: Vec3, rb: f64) -> DistanceResult {
    let d = ca - cb;
    let len = d.norm();
    let normal = d.try_normalize(1e-15).unwrap_or(Vec3::X);
    DistanceResult { distance: len - ra - rb, witness_a: ca - normal * ra, witness_b: cb + normal * rb, normal }
}

fn core_distance(a: &Core, b: &Core) -> DistanceResult {
    if let (CoreKind::Point, CoreKind::Point) = (a.kind, b.kind) {
        return sphere_sphere(a.pose.translation, a.radius, b.pose.translation, b.radius);
    }
    let (pa, pb, overlap_normal) = if !a.is_box() && !b.is_box() {
        let (a0, a1) = a.segment();
        let (b0, b1) = b.segment();
        let (pa, pb) = closest_segment_segment(a0, a1, b0, b1);
        let n = if (pa - pb).norm() > 1e-12 {
            None
        } else {
            let dirs: Vec<Vec3> = a.edge_dirs().into_iter().chain(b.edge_dirs()).collect();
            let n = match dirs.len() {
                2 => dirs[0].cross(dirs[1]).try_normalize(1e-9).unwrap_or_else(|| dirs[0].any_orthogonal()),
                1 => dirs[0].any_orthogonal(),
                _ => Vec3::X,
            };
            Some((n, 0.0))
        };
        (pa, pb, n)
    } else {
        match gjk(a, b) {
            Gjk::Separated { pa, pb } => (pa, pb, None),
            Gjk::Overlap => {
                let (n, s) = sat_penetration(a, b);
                (a.support(-n), b.support(n), Some((n, s)))
            }
        }
    };
    match overlap_normal {
        None => {
            let d = pa - pb;
            let len = d.norm();
            let normal = d / len;
            DistanceResult {
                distance: len - a.radius - b.radius,
                witness_a: pa - normal * a.radius,
                witness_b: pb + normal * b.radius,
                normal,
            }
        }
        Some((normal, s)) => DistanceResult {
            distance: s - a.radius - b.radius,
            witness_a: pa - normal * a.radius,
            witness_b: pb + normal * b.radius,
            normal,
        },
    }
}

/// Closest points between segments `p0p1` and `q0q1` (degenerate segments allowed).
pub fn closest_segment_segment(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> (Vec3, Vec3) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(d1);
    let e = d2.dot(d2);
    let f = d2.dot(r);
    let eps = 1e-18;
    let (s, t);
    if a <= eps && e <= eps {
        return (p0, q0);
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > eps * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (p0 + d1 * s, q0 + d2 * t)
}

#[derive(Clone, Copy, Debug)]
struct SupportPoint {
    w: Vec3,
    a: Vec3,
    b: Vec3,
}

enum Gjk {
    Separated { pa: Vec3, pb: Vec3 },
    Overlap,
}

fn mink_support(a: &Core, b: &Core, d: Vec3) -> SupportPoint {
    let pa = a.support(d);
    let pb = b.support(-d);
    SupportPoint { w: pa - pb, a: pa, b: pb }
}

/// Distance between polytope cores by GJK with an exhaustive sub-simplex search.
fn gjk(a: &Core, b: &Core) -> Gjk {
    let mut d0 = a.pose.translation - b.pose.translation;
    if d0.norm_squared() < 1e-24 {
        d0 = Vec3::X;
    }
    let first = mink_support(a, b, -d0);
    let mut simplex: Vec<SupportPoint> = vec![first];
    let mut lambdas = vec![1.0];
    let mut v = first.w;
    let overlap_tol = 1e-20;
    for _ in 0..128 {
        let vv = v.norm_squared();
        if vv < overlap_tol {
            return Gjk::Overlap;
        }
        let w = mink_support(a, b, -v);
        if vv - v.dot(w.w) <= 1e-13 * vv || simplex.iter().any(|s| (s.w - w.w).norm_squared() < 1e-26) {
            break;
        }
        simplex.push(w);
        let (point, reduced, lam) = closest_on_simplex(&simplex);
        if reduced.len() == 4 || point.norm_squared() < overlap_tol {
            return Gjk::Overlap;
        }
        if point.norm_squared() >= vv * (1.0 - 1e-14) {
            // no progress, keep the previous simplex
            simplex.pop();
            break;
        }
        simplex = reduced.iter().map(|&i| simplex[i]).collect();
        lambdas = lam;
        v = point;
    }
    let mut pa = Vec3::ZERO;
    let mut pb = Vec3::ZERO;
    for (s, l) in simplex.iter().zip(lambdas.iter()) {
        pa += s.a * *l;
        pb += s.b * *l;
    }
    Gjk::Separated { pa, pb }
}

/// Closest point of the simplex hull to the origin: returns the point, the
/// indices of the supporting sub-simplex, and its barycentric weights.
fn closest_on_simplex(s: &[SupportPoint]) -> (Vec3, Vec<usize>, Vec<f64>) {
    let m = s.len();
    let mut best: Option<(f64, Vec3, Vec<usize>, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if let Some((p, lam)) = affine_projection(s, &idx) {
            if lam.iter().all(|&l| l > -1e-12) {
                let n = p.norm_squared();
                let better = match &best {
                    None => true,
                    Some((bn, _, bidx, _)) => n < *bn - 1e-30 || (n <= *bn && idx.len() < bidx.len()),
                };
                if better {
                    best = Some((n, p, idx, lam));
                }
            }
        }
    }
    let (_, p, idx, lam) = best.expect("a single vertex is always a valid candidate");
    (p, idx, lam)
}

/// Projection of the origin onto the affine hull of `s[idx]`.
fn affine_projection(s: &[SupportPoint], idx: &[usize]) -> Option<(Vec3, Vec<f64>)> {
    let p0 = s[idx[0]].w;
    let k = idx.len() - 1;
    if k == 0 {
        return Some((p0, vec![1.0]));
    }
    let e: Vec<Vec3> = idx[1..].iter().map(|&i| s[i].w - p0).collect();
    let mut g = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for i in 0..k {
        for j in 0..k {
            g[i][j] = e[i].dot(e[j]);
        }
        rhs[i] = -e[i].dot(p0);
    }
    let mu = solve_small(&g, &rhs, k)?;
    let mut p = p0;
    let mut lam = vec![0.0; k + 1];
    let mut sum = 0.0;
    for i in 0..k {
        p += e[i] * mu[i];
        lam[i + 1] = mu[i];
        sum += mu[i];
    }
    lam[0] = 1.0 - sum;
    Some((p, lam))
}

/// Gaussian elimination with partial pivoting on a k x k (k <= 3) system.
fn solve_small(g: &[[f64; 3]; 3], rhs: &[f64; 3], k: usize) -> Option<[f64; 3]> {
    let mut a = *g;
    let mut b = *rhs;
    let scale = (0..k).map(|i| g[i][i]).fold(0.0f64, f64::max);
    if scale <= 0.0 {
        return None;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..k {
            let f = a[r][col] / a[col][col];
            for c in col..k {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..k).rev() {
        let mut acc = b[r];
        for c in (r + 1)..k {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

/// Best separating axis for overlapping cores: returns the unit normal (from b
/// toward a) and the (non-positive) separation along it.
fn sat_penetration(a: &Core, b: &Core) -> (Vec3, f64) {
    let ea = a.edge_dirs();
    let eb = b.edge_dirs();
    let mut axes: Vec<Vec3> = Vec::new();
    if a.is_box() {
        axes.extend(ea.iter().copied());
    }
    if b.is_box() {
        axes.extend(eb.iter().copied());
    }
    for u in &ea {
        for v in &eb {
            if let Some(n) = u.cross(*v).try_normalize(1e-9) {
                axes.push(n);
            }
        }
    }
    // segment cores contribute the planes containing their direction and each box axis
    let mut best: Option<(Vec3, f64)> = None;
    for axis in axes {
        for n in [axis, -axis] {
            let s = -(n.dot(a.support(-n))) * -1.0 - n.dot(b.support(n));
            // s = min_a n.a - max_b n.b
            let better = match best {
                None => true,
                Some((bn, bs)) => s > bs + 1e-15 || (s >= bs - 1e-15 && n.lex_less(bn)),
            };
            if better {
                best = Some((n, s));
            }
        }
    }
    best.unwrap_or((Vec3::X, 0.0))
}

/// A collision participant: a link of the chain or an environment shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Body {
    Link(usize),
    Environment(usize),
}

/// Pairs eligible for collision checking. The first member is always a link.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollisionPairSet {
    pub pairs: Vec<(usize, Body)>,
    /// Links whose pose is treated as fixed in distance gradients (for example
    /// an object base held in place by the closure constraint).
    pub pinned: Vec<usize>,
}

impl CollisionPairSet {
    pub fn link_object_count(&self) -> usize {
        self.pairs.iter().filter(|p| matches!(p.1, Body::Environment(_))).count()
    }

    pub fn link_link_count(&self) -> usize {
        self.pairs.len() - self.link_object_count()
    }

    pub fn contains_links(&self, a: usize, b: usize) -> bool {
        self.pairs.iter().any(|&(x, y)| (x == a && y == Body::Link(b)) || (x == b && y == Body::Link(a)))
    }
}

/// Rigid groups: links connected through fixed joints only share a group id.
pub fn rigid_groups(tree: &KinematicTree) -> Vec<usize> {
    let mut group: Vec<usize> = (0..tree.links().len()).collect();
    for &j in tree.joint_order() {
        if tree.joint(j).kind == JointKind::Fixed {
            group[tree.child_link_of(j)] = group[tree.parent_link_of(j)];
        }
    }
    group
}

/// All link-environment pairs and all link-link pairs except links sharing a
/// joint, links rigidly connected through fixed joints, and allowed pairs.
/// Links without geometry take no part.
pub fn build_collision_pairs(tree: &KinematicTree, environment: &[PosedShape]) -> CollisionPairSet {
    let links: Vec<usize> = (0..tree.links().len()).filter(|&l| !tree.link(l).geoms.is_empty()).collect();
    let group = rigid_groups(tree);
    let allowed: Vec<(usize, usize)> =
        tree.parts().allowed_collisions.iter().filter_map(|(a, b)| Some((tree.link_index(a)?, tree.link_index(b)?))).collect();
    let mut pairs = Vec::new();
    for &l in &links {
        for e in 0..environment.len() {
            pairs.push((l, Body::Environment(e)));
        }
    }
    for (i, &a) in links.iter().enumerate() {
        for &b in &links[i + 1..] {
            let adjacent = tree.parent_link(a) == Some(b) || tree.parent_link(b) == Some(a);
            let rigid = group[a] == group[b];
            let allowed = allowed.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a));
            if !adjacent && !rigid && !allowed {
                pairs.push((a, Body::Link(b)));
            }
        }
    }
    CollisionPairSet { pairs, pinned: Vec::new() }
}

/// World-posed collision shapes of a link.
pub fn link_shapes<'a>(frames: &FrameSet<'a>, link: usize) -> impl Iterator<Item = PosedShape> + 'a {
    let pose = *frames.pose(link);
    frames.tree().link(link).geoms.iter().map(move |g| PosedShape::new(g.shape, pose.compose(&g.origin)))
}

/// Distance between one shape of a pair.
#[derive(Clone, Copy, Debug)]
pub struct Contact {
    pub link: usize,
    pub other: Body,
    pub result: DistanceResult,
}

/// Shape-level distances for every pair whose bounds come within `max_distance`.
pub fn contacts(frames: &FrameSet<'_>, pairs: &CollisionPairSet, environment: &[PosedShape], max_distance: f64) -> Vec<Contact> {
    let tree = frames.tree();
    let shapes: Vec<Vec<(PosedShape, (Vec3, Vec3))>> =
        (0..tree.links().len()).map(|l| link_shapes(frames, l).map(|s| (s, s.aabb(0.5 * max_distance))).collect()).collect();
    let env: Vec<(PosedShape, (Vec3, Vec3))> = environment.iter().map(|s| (*s, s.aabb(0.5 * max_distance))).collect();
    let mut out = Vec::new();
    for &(link, other) in &pairs.pairs {
        let others: &[(PosedShape, (Vec3, Vec3))] = match other {
            Body::Link(b) => &shapes[b],
            Body::Environment(e) => core::slice::from_ref(&env[e]),
        };
        for (sa, ba) in &shapes[link] {
            for (sb, bb) in others {
                if !aabb_overlap(ba, bb) {
                    continue;
                }
                let result = signed_distance(sa, sb);
                if result.distance < max_distance {
                    out.push(Contact { link, other, result });
                }
            }
        }
    }
    out
}

/// d(distance)/dq for one contact: `normal . (J_a(witness_a) - J_b(witness_b))`.
pub fn contact_gradient(frames: &FrameSet<'_>, contact: &Contact, pinned: &[usize]) -> Vec<f64> {
    let n = frames.tree().dof();
    let mut grad = vec![0.0; n];
    let normal = contact.result.normal;
    if !pinned.contains(&contact.link) {
        let ja = frames.point_jacobian(contact.link, contact.result.witness_a);
        for (g, c) in grad.iter_mut().zip(ja.cols.iter()) {
            *g += normal.x * c[0] + normal.y * c[1] + normal.z * c[2];
        }
    }
    if let Body::Link(b) = contact.other {
        if !pinned.contains(&b) {
            let jb = frames.point_jacobian(b, contact.result.witness_b);
            for (g, c) in grad.iter_mut().zip(jb.cols.iter()) {
                *g -= normal.x * c[0] + normal.y * c[1] + normal.z * c[2];
            }
        }
    }
    grad
}

/// Minimum signed distance of a link pair at `q` (infinite if either side has no shapes).
pub fn pair_distance(
    tree: &KinematicTree,
    q: &[f64],
    pair: (usize, Body),
    environment: &[PosedShape],
) -> Result<Option<Contact>> {
    let frames = forward_kinematics(tree, q)?;
    Ok(closest_contact(&frames, pair, environment))
}

fn closest_contact(frames: &FrameSet<'_>, pair: (usize, Body), environment: &[PosedShape]) -> Option<Contact> {
    let set = CollisionPairSet { pairs: vec![pair], pinned: Vec::new() };
    contacts(frames, &set, environment, f64::INFINITY).into_iter().min_by(|a, b| a.result.distance.total_cmp(&b.result.distance))
}

/// Gradient of a pair's signed distance with respect to the configuration.
pub fn distance_gradient(tree: &KinematicTree, q: &[f64], pair: (usize, Body), environment: &[PosedShape]) -> Result<Vec<f64>> {
    let frames = forward_kinematics(tree, q)?;
    Ok(match closest_contact(&frames, pair, environment) {
        Some(c) => contact_gradient(&frames, &c, &[]),
        None => vec![0.0; tree.dof()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;

    fn sphere(r: f64, c: Vec3) -> PosedShape {
        PosedShape::new(Shape::Sphere { radius: r }, Transform::from_translation(c))
    }

    #[test]
    fn separated_spheres() {
        let d = signed_distance(&sphere(1.0, Vec3::ZERO), &sphere(1.0, Vec3::new(3.0, 0.0, 0.0)));
        assert!((d.distance - 1.0).abs() < 1e-15);
        assert!((d.witness_a - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((d.witness_b - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((d.normal - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn penetrating_spheres() {
        let d = signed_distance(&sphere(1.0, Vec3::ZERO), &sphere(1.0, Vec3::new(1.5, 0.0, 0.0)));
        assert!((d.distance + 0.5).abs() < 1e-15);
    }

    #[test]
    fn hinge_values() {
        assert_eq!(hinge(-0.5), 0.0);
        assert_eq!(hinge(0.0), 0.0);
        assert_eq!(hinge(0.3), 0.3);
    }

    #[test]
    fn point_box_distance() {
        let b = PosedShape::new(Shape::Box { half_extents: Vec3::new(1.0, 1.0, 1.0) }, Transform::IDENTITY);
        let s = sphere(0.5, Vec3::new(3.0, 0.0, 0.0));
        let d = signed_distance(&s, &b);
        assert!((d.distance - 1.5).abs() < 1e-12, "{d:?}");
        assert!((d.normal - Vec3::X).norm() < 1e-12);
        let inside = sphere(0.1, Vec3::new(0.8, 0.0, 0.0));
        let d = signed_distance(&inside, &b);
        assert!((d.distance + 0.3).abs() < 1e-12, "{d:?}");
        assert!((d.normal - Vec3::X).norm() < 1e-12);
    }

    #[test]
    fn box_box_face_contact() {
        let a = PosedShape::new(Shape::Box { half_extents: Vec3::new(1.0, 1.0, 1.0) }, Transform::IDENTITY);
        let b = PosedShape::new(
            Shape::Box { half_extents: Vec3::new(0.5, 0.5, 0.5) },
            Transform::new(Quat::from_axis_angle(Vec3::Z, 0.3), Vec3::new(0.0, 0.0, 2.0)),
        );
        let d = signed_distance(&a, &b);
        assert!((d.distance - 0.5).abs() < 1e-12, "{d:?}");
        let b2 = PosedShape::new(b.shape, Transform::new(b.pose.rotation, Vec3::new(0.0, 0.0, 1.3)));
        let d = signed_distance(&a, &b2);
        assert!((d.distance + 0.2).abs() < 1e-12, "{d:?}");
        assert!((d.normal + Vec3::Z).norm() < 1e-12);
    }

    #[test]
    fn capsule_capsule_crossing() {
        let a = PosedShape::new(Shape::Capsule { radius: 0.1, half_length: 1.0 }, Transform::IDENTITY);
        let b = PosedShape::new(
            Shape::Capsule { radius: 0.1, half_length: 1.0 },
            Transform::new(Quat::from_axis_angle(Vec3::X, PI_2), Vec3::new(0.5, 0.0, 0.0)),
        );
        let d = signed_distance(&a, &b);
        assert!((d.distance - 0.3).abs() < 1e-12);
    }

    const PI_2: f64 = core::f64::consts::FRAC_PI_2;

    #[test]
    fn symmetric_distance() {
        let a = PosedShape::new(
            Shape::Capsule { radius: 0.2, half_length: 0.5 },
            Transform::from_xyz_rpy([0.3, 0.1, 0.2], [0.3, 0.2, 0.1]),
        );
        let b = PosedShape::new(
            Shape::Box { half_extents: Vec3::new(0.4, 0.3, 0.2) },
            Transform::from_xyz_rpy([1.3, 0.4, -0.2], [0.0, 0.5, 1.0]),
        );
        let ab = signed_distance(&a, &b);
        let ba = signed_distance(&b, &a);
        assert!((ab.distance - ba.distance).abs() < 1e-12);
        assert!((ab.normal + ba.normal).norm() < 1e-12);
    }

    #[test]
    fn three_link_chain_pairs() {
        use crate::model::{JointSpec, LinkSpec, TreeParts};
        let mut p = TreeParts::new("c", "l0");
        for i in 0..3 {
            p.links.push(LinkSpec::new(alloc::format!("l{i}")).with_geom(Shape::Sphere { radius: 0.1 }, Transform::IDENTITY));
        }
        for i in 0..2 {
            p.joints.push(
                JointSpec::new(
                    alloc::format!("j{i}"),
                    JointKind::Revolute,
                    alloc::format!("l{i}"),
                    alloc::format!("l{}", i + 1),
                    Transform::from_translation(Vec3::X),
                )
                .with_limits(-1.0, 1.0),
            );
        }
        let t = KinematicTree::new(p.clone()).unwrap();
        let env = [sphere(0.1, Vec3::new(0.0, 5.0, 0.0)), sphere(0.1, Vec3::new(0.0, -5.0, 0.0))];
        let set = build_collision_pairs(&t, &env);
        assert_eq!(set.link_object_count(), 6);
        assert_eq!(set.link_link_count(), 1);
        assert!(set.contains_links(0, 2));
        p.allowed_collisions.push(("l0".into(), "l2".into()));
        let t = KinematicTree::new(p).unwrap();
        assert_eq!(build_collision_pairs(&t, &env).link_link_count(), 0);
    }

    #[test]
    fn sphere_on_prismatic_link_gradient() {
        use crate::model::{JointSpec, LinkSpec, TreeParts};
        let mut p = TreeParts::new("s", "root");
        p.links.push(LinkSpec::new("root"));
        p.links.push(LinkSpec::new("ball").with_geom(Shape::Sphere { radius: 0.1 }, Transform::IDENTITY));
        p.joints.push(
            JointSpec::new("x", JointKind::Prismatic, "root", "ball", Transform::IDENTITY)
                .with_axis(Vec3::X)
                .with_limits(-5.0, 5.0),
        );
        let t = KinematicTree::new(p).unwrap();
        let wall = [PosedShape::new(
            Shape::Box { half_extents: Vec3::new(0.1, 1.0, 1.0) },
            Transform::from_translation(Vec3::new(2.0, 0.0, 0.0)),
        )];
        let g = distance_gradient(&t, &[0.5], (1, Body::Environment(0)), &wall).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-12);
    }
}
