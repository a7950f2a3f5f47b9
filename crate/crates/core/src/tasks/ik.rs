//! Damped least-squares inverse kinematics.

use alloc::vec;
use alloc::vec::Vec;

use crate::kinematics::{forward_kinematics, pose_residual, pose_residual_jacobian};
use crate::math::{sqrt, Transform};
use crate::model::KinematicTree;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IkOptions {
    /// Configuration coordinates the solver may move; `None` means all.
    pub active: Option<Vec<usize>>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Extra attempts from deterministic low-discrepancy seeds.
    pub restarts: usize,
    /// Largest change of any coordinate in one iteration.
    pub max_step: f64,
    pub damping: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions { active: None, tolerance: 1e-5, max_iterations: 150, restarts: 8, max_step: 0.2, damping: 1e-3 }
    }
}

/// Solve `pose(link) = target` starting from `seed`, with default options.
pub fn ik_solve(tree: &KinematicTree, link: &str, target: &Transform, seed: &[f64]) -> Result<Vec<f64>> {
    ik_solve_with(tree, link, target, seed, &IkOptions::default())
}

/// Damped least squares on the pose residual, clamped to joint limits.
///
/// The first attempt starts at `seed` (elbow continuity when tracking a
/// path); later attempts start at Halton points inside the joint limits.
/// Fails with [`Error::IkNoConvergence`] carrying the best residual norm.
pub fn ik_solve_with(tree: &KinematicTree, link: &str, target: &Transform, seed: &[f64], opts: &IkOptions) -> Result<Vec<f64>> {
    let l = tree.require_link(link)?;
    if seed.len() != tree.dof() {
        return Err(Error::DimensionMismatch { expected: tree.dof(), actual: seed.len() });
    }
    let active: Vec<usize> = match &opts.active {
        Some(a) => a.clone(),
        None => (0..tree.dof()).collect(),
    };
    if active.iter().any(|&d| d >= tree.dof()) {
        return Err(Error::InvalidArgument("active coordinate out of range".into()));
    }
    let (lo, hi) = tree.position_bounds();
    let mut best = f64::INFINITY;
    for attempt in 0..=opts.restarts {
        let mut q = seed.to_vec();
        if attempt > 0 {
            for (k, &d) in active.iter().enumerate() {
                let (a, b) = (lo[d].max(-core::f64::consts::PI), hi[d].min(core::f64::consts::PI));
                q[d] = a + (b - a) * halton(attempt as u64, k);
            }
        }
        for &d in &active {
            q[d] = q[d].clamp(lo[d], hi[d]);
        }
        let (q, r) = descend(tree, l, target, q, &active, &lo, &hi, opts)?;
        if r <= opts.tolerance {
            return Ok(q);
        }
        best = best.min(r);
    }
    Err(Error::IkNoConvergence { residual: best })
}

#[allow(clippy::too_many_arguments)]
fn descend(
    tree: &KinematicTree,
    link: usize,
    target: &Transform,
    mut q: Vec<f64>,
    active: &[usize],
    lo: &[f64],
    hi: &[f64],
    opts: &IkOptions,
) -> Result<(Vec<f64>, f64)> {
    let m = active.len();
    let norm = |r: &[f64; 6]| sqrt(r.iter().map(|v| v * v).sum::<f64>());
    let mut frames = forward_kinematics(tree, &q)?;
    let mut r = pose_residual(frames.pose(link), target);
    let mut rn = norm(&r);
    let mut lambda = opts.damping;
    for _ in 0..opts.max_iterations {
        if rn <= opts.tolerance {
            break;
        }
        let cols = pose_residual_jacobian(&frames, link, target);
        // (J J^T + lambda^2 I) y = r, dq = -J^T y
        let mut a = [[0.0; 6]; 6];
        for &d in active {
            let c = &cols[d];
            for i in 0..6 {
                for j in 0..6 {
                    a[i][j] += c[i] * c[j];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += lambda * lambda;
        }
        let Some(y) = solve6(a, r) else {
            lambda *= 10.0;
            continue;
        };
        let mut dq = vec![0.0; m];
        for (k, &d) in active.iter().enumerate() {
            dq[k] = -(0..6).map(|i| cols[d][i] * y[i]).sum::<f64>();
        }
        let big = dq.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if big > opts.max_step {
            dq.iter_mut().for_each(|v| *v *= opts.max_step / big);
        }
        let mut improved = false;
        let mut alpha = 1.0;
        for _ in 0..6 {
            let mut qn = q.clone();
            for (k, &d) in active.iter().enumerate() {
                qn[d] = (q[d] + alpha * dq[k]).clamp(lo[d], hi[d]);
            }
            let fr = forward_kinematics(tree, &qn)?;
            let rr = pose_residual(fr.pose(link), target);
            let rrn = norm(&rr);
            if rrn < rn {
                q = qn;
                r = rr;
                rn = rrn;
                frames = fr;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if improved {
            lambda = (lambda * 0.5).max(1e-6);
        } else {
            lambda *= 10.0;
            if lambda > 1e3 {
                break;
            }
        }
    }
    Ok((q, rn))
}

/// Cholesky solve of a symmetric positive definite 6x6 system.
pub(crate) fn solve6(mut a: [[f64; 6]; 6], b: [f64; 6]) -> Option<[f64; 6]> {
    for j in 0..6 {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = sqrt(d);
        a[j][j] = d;
        for i in j + 1..6 {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    let mut y = b;
    for i in 0..6 {
        for k in 0..i {
            y[i] -= a[i][k] * y[k];
        }
        y[i] /= a[i][i];
    }
    for i in (0..6).rev() {
        for k in i + 1..6 {
            y[i] -= a[k][i] * y[k];
        }
        y[i] /= a[i][i];
    }
    Some(y)
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in the base of the `dim`-th prime.
pub(crate) fn halton(index: u64, dim: usize) -> f64 {
    let base = PRIMES[dim % PRIMES.len()];
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}
