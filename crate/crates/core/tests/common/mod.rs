//! Independent oracles: homogeneous 4x4 matrices built from scratch,
//! randomly generated kinematic trees and sampled convex distances.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vkc_core::geometry::PosedShape;
use vkc_core::{JointKind, JointSpec, KinematicTree, LinkSpec, Shape, Transform, TreeParts, Vec3};

pub type M4 = [[f64; 4]; 4];

pub const IDENTITY: M4 = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

pub fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn translation(t: [f64; 3]) -> M4 {
    let mut m = IDENTITY;
    for i in 0..3 {
        m[i][3] = t[i];
    }
    m
}

/// Rodrigues' formula for a unit axis.
pub fn axis_angle(k: [f64; 3], a: f64) -> M4 {
    let (s, c) = a.sin_cos();
    let v = 1.0 - c;
    let [x, y, z] = k;
    [
        [c + x * x * v, x * y * v - z * s, x * z * v + y * s, 0.0],
        [y * x * v + z * s, c + y * y * v, y * z * v - x * s, 0.0],
        [z * x * v - y * s, z * y * v + x * s, c + z * z * v, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// `T(xyz) * Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> M4 {
    let r = mul(
        &axis_angle([0.0, 0.0, 1.0], rpy[2]),
        &mul(&axis_angle([0.0, 1.0, 0.0], rpy[1]), &axis_angle([1.0, 0.0, 0.0], rpy[0])),
    );
    mul(&translation(xyz), &r)
}

pub fn max_diff(a: &M4, b: &M4) -> f64 {
    (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max((a[i][j] - b[i][j]).abs()))
}

/// One generated joint, recorded independently of the tree under test.
#[derive(Clone, Debug)]
pub struct JointRecord {
    pub name: String,
    pub kind: JointKind,
    pub parent: usize,
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
    pub axis: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct RandomTree {
    pub tree: KinematicTree,
    pub joints: Vec<JointRecord>,
    pub anchor: ([f64; 3], [f64; 3]),
}

fn unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.2 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// A random tree with `links` links named `l0..`; link `k + 1` hangs off a
/// random earlier link through joint `j{k}`.
pub fn random_tree(rng: &mut impl Rng, links: usize) -> RandomTree {
    let mut parts = TreeParts::new("random", "l0");
    let anchor = (
        [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)],
        [rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0)],
    );
    parts.anchor = Some(Transform::from_xyz_rpy(anchor.0, anchor.1));
    parts.links.push(LinkSpec::new("l0").with_geom(Shape::Sphere { radius: 0.1 }, Transform::IDENTITY));
    let mut joints = Vec::new();
    for k in 0..links - 1 {
        let kind = match rng.gen_range(0..5) {
            0 => JointKind::Fixed,
            1 => JointKind::Prismatic,
            _ => JointKind::Revolute,
        };
        let rec = JointRecord {
            name: format!("j{k}"),
            kind,
            parent: rng.gen_range(0..=k),
            xyz: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            rpy: [rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0)],
            axis: unit(rng),
        };
        let child = format!("l{}", k + 1);
        parts.links.push(
            LinkSpec::new(child.clone()).with_geom(
                Shape::Capsule { radius: 0.05, half_length: 0.2 },
                Transform::from_translation(Vec3::new(0.0, 0.0, 0.1)),
            ),
        );
        let mut js =
            JointSpec::new(rec.name.clone(), kind, format!("l{}", rec.parent), child, Transform::from_xyz_rpy(rec.xyz, rec.rpy))
                .with_axis(Vec3::from_array(rec.axis));
        if kind != JointKind::Fixed {
            js = js.with_limits(-3.0, 3.0);
        }
        parts.joints.push(js);
        joints.push(rec);
    }
    RandomTree { tree: KinematicTree::new(parts).expect("generated tree is valid"), joints, anchor }
}

impl RandomTree {
    pub fn random_q(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.tree.dof()).map(|_| rng.gen_range(-3.0..3.0)).collect()
    }

    /// World matrix of every link `l0..`, composed link by link.
    pub fn oracle(&self, q: &[f64]) -> Vec<M4> {
        let mut world = vec![xyz_rpy(self.anchor.0, self.anchor.1)];
        for rec in &self.joints {
            let v = self.tree.dof_index_by_name(&rec.name).map_or(0.0, |d| q[d]);
            let motion = match rec.kind {
                JointKind::Revolute => axis_angle(rec.axis, v),
                JointKind::Prismatic => translation([rec.axis[0] * v, rec.axis[1] * v, rec.axis[2] * v]),
                JointKind::Fixed => IDENTITY,
            };
            let local = mul(&xyz_rpy(rec.xyz, rec.rpy), &motion);
            world.push(mul(&world[rec.parent], &local));
        }
        world
    }
}

/// Support function of a posed shape, written against the raw pose matrix.
pub fn support(s: &PosedShape, d: [f64; 3]) -> f64 {
    let m = s.pose.to_matrix();
    let c = [m[0][3], m[1][3], m[2][3]];
    let col = |j: usize| [m[0][j], m[1][j], m[2][j]];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    match s.shape {
        Shape::Sphere { radius } => dot(c, d) + radius,
        Shape::Capsule { radius, half_length } => dot(c, d) + half_length * dot(col(2), d).abs() + radius,
        Shape::Box { half_extents: h } => {
            dot(c, d) + h.x * dot(col(0), d).abs() + h.y * dot(col(1), d).abs() + h.z * dot(col(2), d).abs()
        }
    }
}

/// Signed distance of convex sets as the best separating-direction gap,
/// `max_d -h_a(-d) - h_b(d)`, found by dense sampling plus local search.
pub fn sampled_distance(a: &PosedShape, b: &PosedShape) -> f64 {
    let gap = |d: [f64; 3]| {
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let d = [d[0] / n, d[1] / n, d[2] / n];
        -support(a, [-d[0], -d[1], -d[2]]) - support(b, d)
    };
    let n = 4000;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut samples: Vec<([f64; 3], f64)> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            let d = [r * t.cos(), r * t.sin(), z];
            (d, gap(d))
        })
        .collect();
    samples.sort_by(|a, b| b.1.total_cmp(&a.1));
    // the gap has one local maximum per face-like feature; climb from several starts
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut overall = f64::NEG_INFINITY;
    for &start in samples.iter().take(24) {
        let mut best = start;
        let mut step = 0.05;
        while step > 1e-9 {
            let mut improved = false;
            for _ in 0..40 {
                let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let d = [best.0[0] + step * p[0], best.0[1] + step * p[1], best.0[2] + step * p[2]];
                let g = gap(d);
                if g > best.1 {
                    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    best = ([d[0] / n, d[1] / n, d[2] / n], g);
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        overall = overall.max(best.1);
    }
    overall
}

pub fn random_shape(rng: &mut impl Rng) -> PosedShape {
    let shape = match rng.gen_range(0..3) {
        0 => Shape::Sphere { radius: rng.gen_range(0.05..0.5) },
        1 => Shape::Capsule { radius: rng.gen_range(0.05..0.3), half_length: rng.gen_range(0.05..0.5) },
        _ => Shape::Box { half_extents: Vec3::new(rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5)) },
    };
    let xyz = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
    let rpy = [rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0)];
    PosedShape::new(shape, Transform::from_xyz_rpy(xyz, rpy))
}
