mod common;

use common::{random_shape, sampled_distance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vkc_core::geometry::{distance_gradient, pair_distance, signed_distance, sphere_sphere, Body, PosedShape};
use vkc_core::{Shape, Transform, Vec3};

#[test]
fn sphere_pair_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let ca = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let cb = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let (ra, rb) = (rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0));
        let exact = (ca - cb).norm() - ra - rb;
        assert!((sphere_sphere(ca, ra, cb, rb).distance - exact).abs() <= 1e-12);
        let a = PosedShape::new(Shape::Sphere { radius: ra }, Transform::from_translation(ca));
        let b = PosedShape::new(Shape::Sphere { radius: rb }, Transform::from_translation(cb));
        assert!((signed_distance(&a, &b).distance - exact).abs() <= 1e-12);
    }
}

#[test]
fn distance_matches_support_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    let mut overlapping = 0;
    for _ in 0..1000 {
        let (a, b) = (random_shape(&mut rng), random_shape(&mut rng));
        let d = signed_distance(&a, &b);
        let oracle = sampled_distance(&a, &b);
        if oracle < 0.0 {
            overlapping += 1;
        }
        worst = worst.max((d.distance - oracle).abs());
        // witnesses are consistent with the reported distance when separated
        if d.distance > 1e-6 {
            assert!(((d.witness_a - d.witness_b).norm() - d.distance).abs() <= 1e-6);
        }
    }
    assert!(overlapping > 100 && overlapping < 900, "{overlapping} overlapping pairs");
    assert!(worst <= 1e-3, "max deviation {worst:e}");
}

#[test]
fn distance_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..500 {
        let (a, b) = (random_shape(&mut rng), random_shape(&mut rng));
        let (ab, ba) = (signed_distance(&a, &b), signed_distance(&b, &a));
        assert!((ab.distance - ba.distance).abs() <= 1e-9);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let h = 1e-6;
    let (mut checked, mut worst) = (0, 0.0f64);
    for _ in 0..200 {
        let n = rng.gen_range(3..7);
        let rt = common::random_tree(&mut rng, n);
        let env = [random_shape(&mut rng)];
        let link = rng.gen_range(1..n);
        let pair = (link, Body::Environment(0));
        let q = rt.random_q(&mut rng);
        let dist = |q: &[f64]| pair_distance(&rt.tree, q, pair, &env).unwrap().map(|c| c.result.distance);
        let Some(d0) = dist(&q) else { continue };
        if d0 < 0.0 {
            continue;
        }
        let g = distance_gradient(&rt.tree, &q, pair, &env).unwrap();
        for k in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let (dp, dm) = (dist(&qp).unwrap(), dist(&qm).unwrap());
            // skip points where the closest features switch
            let (fwd, bwd) = ((dp - d0) / h, (d0 - dm) / h);
            if (fwd - bwd).abs() > 1e-3 {
                continue;
            }
            worst = worst.max((g[k] - (dp - dm) / (2.0 * h)).abs());
            checked += 1;
        }
    }
    assert!(checked > 200, "only {checked} derivatives checked");
    assert!(worst <= 1e-4, "max deviation {worst:e}");
}
