//! Whole-body trajectory optimization on a kinematic chain.
//!
//! The objective is the weighted squared travel of the chain: first and second
//! finite differences of the waypoints. Goal, closure, joint-limit, rate and
//! collision constraints are handled by a penalty method: each outer iteration
//! fixes a penalty weight and runs trust-region sequential convex optimization,
//! convexifying every nonlinear term to first order into a banded QP.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{contact_gradient, contacts, hinge, Body, CollisionPairSet, Contact, PosedShape};
use crate::kinematics::{forward_kinematics, pose_residual, pose_residual_jacobian, FrameSet};
use crate::math::Transform;
use crate::model::{JointRole, KinematicTree};
use crate::qp::{BandedQp, QpOptions};
use crate::{Clock, Error, Result};

/// `T` waypoints of an `n`-dimensional configuration, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    names: Vec<String>,
    dof: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dof = names.len();
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("a trajectory needs at least two waypoints".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dof);
        for r in rows {
            if r.len() != dof {
                return Err(Error::DimensionMismatch { expected: dof, actual: r.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite trajectory entry".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Trajectory { names, dof, data })
    }

    pub fn for_tree(tree: &KinematicTree, rows: &[Vec<f64>]) -> Result<Self> {
        Trajectory::new(tree.dof_names(), rows)
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dof).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dof..(t + 1) * self.dof]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dof..(t + 1) * self.dof]
    }

    pub fn first(&self) -> &[f64] {
        self.row(0)
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dof)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Column of one joint over time.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// Diagonal weights of the velocity and acceleration terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
}

impl Weights {
    pub fn uniform(n: usize, vel: f64, acc: f64) -> Self {
        Weights { vel: vec![vel; n], acc: vec![acc; n] }
    }

    /// Base joints get `base_vel`, everything else `vel`; acceleration weight `acc` throughout.
    pub fn for_tree(tree: &KinematicTree, base_vel: f64, vel: f64, acc: f64) -> Self {
        let v = tree
            .dof_joints()
            .iter()
            .map(|&j| if tree.joint(j).role == JointRole::VirtualBase { base_vel } else { vel })
            .collect();
        Weights { vel: v, acc: vec![acc; tree.dof()] }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Weights { vel: self.vel.iter().map(|w| w * k).collect(), acc: self.acc.iter().map(|w| w * k).collect() }
    }
}

/// What the final waypoint must achieve.
#[derive(Clone, Debug, PartialEq)]
pub enum GoalKind {
    /// World pose of a link.
    Pose { link: String, target: Transform },
    /// Values of one or more joints.
    Joints { targets: Vec<(String, f64)> },
}

/// A goal on the last waypoint: `||f_task(q_T) - g||^2 <= tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalSpec {
    pub kind: GoalKind,
    pub tolerance: f64,
}

impl GoalSpec {
    pub fn pose(link: impl Into<String>, target: Transform, tolerance: f64) -> Self {
        GoalSpec { kind: GoalKind::Pose { link: link.into(), target }, tolerance }
    }

    pub fn joint(joint: impl Into<String>, value: f64, tolerance: f64) -> Self {
        GoalSpec { kind: GoalKind::Joints { targets: vec![(joint.into(), value)] }, tolerance }
    }

    pub fn joints(targets: Vec<(String, f64)>, tolerance: f64) -> Self {
        GoalSpec { kind: GoalKind::Joints { targets }, tolerance }
    }

    /// Goal residual vector `f_task(q) - g`.
    pub fn residual(&self, tree: &KinematicTree, q: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            GoalKind::Pose { link, target } => {
                let l = tree.require_link(link)?;
                let frames = forward_kinematics(tree, q)?;
                Ok(pose_residual(frames.pose(l), target).to_vec())
            }
            GoalKind::Joints { targets } => targets
                .iter()
                .map(|(name, g)| {
                    let d = goal_dof(tree, name)?;
                    if q.len() != tree.dof() {
                        return Err(Error::DimensionMismatch { expected: tree.dof(), actual: q.len() });
                    }
                    Ok(q[d] - g)
                })
                .collect(),
        }
    }

    /// Residual and its Jacobian (one row per residual component, dense in `q`).
    fn linearize(&self, frames: &FrameSet<'_>, q: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let tree = frames.tree();
        match &self.kind {
            GoalKind::Pose { link, target } => {
                let l = tree.require_link(link)?;
                let r = pose_residual(frames.pose(l), target);
                let cols = pose_residual_jacobian(frames, l, target);
                let rows = (0..6).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
                Ok((r.to_vec(), rows))
            }
            GoalKind::Joints { targets } => {
                let mut r = Vec::new();
                let mut rows = Vec::new();
                for (name, g) in targets {
                    let d = goal_dof(tree, name)?;
                    r.push(q[d] - g);
                    let mut row = vec![0.0; tree.dof()];
                    row[d] = 1.0;
                    rows.push(row);
                }
                Ok((r, rows))
            }
        }
    }
}

fn goal_dof(tree: &KinematicTree, name: &str) -> Result<usize> {
    tree.dof_index_by_name(name).ok_or_else(|| Error::UnknownJoint(name.to_string()))
}

/// `||f_task(q_T) - g||^2 - tolerance`; satisfied iff `<= 0`.
pub fn goal_constraint(tree: &KinematicTree, q_last: &[f64], goal: &GoalSpec) -> Result<f64> {
    let r = goal.residual(tree, q_last)?;
    Ok(r.iter().map(|v| v * v).sum::<f64>() - goal.tolerance)
}

/// A link whose world pose must stay at `anchor`.
#[derive(Clone, Debug, PartialEq)]
pub struct Closure {
    pub link: String,
    pub anchor: Transform,
}

/// Pose residual of the closure link against its anchor.
pub fn chain_closure_constraint(tree: &KinematicTree, q: &[f64], anchor: &Transform, link: &str) -> Result<[f64; 6]> {
    let l = tree.require_link(link)?;
    let frames = forward_kinematics(tree, q)?;
    Ok(pose_residual(frames.pose(l), anchor))
}

/// Weighted squared travel: velocity terms over consecutive waypoints plus
/// acceleration terms over interior waypoints.
pub fn objective_value(traj: &Trajectory, w: &Weights) -> Result<f64> {
    let n = traj.dof();
    if w.vel.len() != n || w.acc.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: w.vel.len().min(w.acc.len()) });
    }
    let mut f = 0.0;
    for t in 0..traj.len() - 1 {
        let (a, b) = (traj.row(t), traj.row(t + 1));
        for j in 0..n {
            let d = b[j] - a[j];
            f += w.vel[j] * d * d;
        }
    }
    for t in 1..traj.len().saturating_sub(1) {
        let (a, b, c) = (traj.row(t - 1), traj.row(t), traj.row(t + 1));
        for j in 0..n {
            let d = a[j] - 2.0 * b[j] + c[j];
            f += w.acc[j] * d * d;
        }
    }
    Ok(f)
}

/// Per `(t, joint)` violations `max(lo - q, 0) + max(q - hi, 0)`, row-major.
pub fn joint_limit_constraint(traj: &Trajectory, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    traj.rows().flat_map(|r| r.iter().enumerate().map(|(j, &q)| hinge(lower[j] - q) + hinge(q - upper[j]))).collect()
}

/// Rate violations: `max(|dq_t|_inf - vel, 0)` for every step, then
/// `max(|ddq_t|_inf - acc, 0)` for every interior waypoint.
pub fn rate_constraint(traj: &Trajectory, vel: f64, acc: f64) -> (Vec<f64>, Vec<f64>) {
    let n = traj.dof();
    let mut v = Vec::new();
    for t in 0..traj.len() - 1 {
        let (a, b) = (traj.row(t), traj.row(t + 1));
        let m = (0..n).map(|j| (b[j] - a[j]).abs()).fold(0.0, f64::max);
        v.push(hinge(m - vel));
    }
    let mut ac = Vec::new();
    for t in 1..traj.len().saturating_sub(1) {
        let (a, b, c) = (traj.row(t - 1), traj.row(t), traj.row(t + 1));
        let m = (0..n).map(|j| (a[j] - 2.0 * b[j] + c[j]).abs()).fold(0.0, f64::max);
        ac.push(hinge(m - acc));
    }
    (v, ac)
}

/// Collision model of a problem.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionConfig {
    pub pairs: CollisionPairSet,
    pub environment: Vec<PosedShape>,
    pub environment_names: Vec<String>,
    pub dist_safe: f64,
    /// Bound on the per-waypoint sum of hinge violations.
    pub tolerance: f64,
}

impl CollisionConfig {
    pub fn none() -> Self {
        CollisionConfig {
            pairs: CollisionPairSet::default(),
            environment: Vec::new(),
            environment_names: Vec::new(),
            dist_safe: 0.02,
            tolerance: 1e-4,
        }
    }

    pub fn body_name(&self, tree: &KinematicTree, body: Body) -> String {
        match body {
            Body::Link(l) => tree.link(l).name.clone(),
            Body::Environment(e) => self.environment_names.get(e).cloned().unwrap_or_else(|| alloc::format!("obstacle{e}")),
        }
    }
}

/// `sum over pairs of max(dist_safe - d, 0)` at one configuration.
pub fn collision_constraint(tree: &KinematicTree, q: &[f64], config: &CollisionConfig) -> Result<f64> {
    let frames = forward_kinematics(tree, q)?;
    Ok(collision_sum(&frames, config, config.dist_safe).0)
}

fn collision_sum(frames: &FrameSet<'_>, config: &CollisionConfig, threshold: f64) -> (f64, Option<Contact>) {
    let cs = contacts(frames, &config.pairs, &config.environment, threshold);
    let sum = cs.iter().fold(0.0, |s, c| s + hinge(threshold - c.result.distance));
    let worst = cs.into_iter().min_by(|a, b| a.result.distance.total_cmp(&b.result.distance));
    (sum, worst)
}

/// The full optimization problem for one phase.
#[derive(Clone, Debug)]
pub struct TrajectoryProblem {
    pub tree: KinematicTree,
    pub steps: usize,
    pub weights: Weights,
    pub start: Vec<f64>,
    pub goal: Option<GoalSpec>,
    pub closures: Vec<Closure>,
    pub closure_tolerance: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub vel_limit: f64,
    pub acc_limit: f64,
    pub collision: CollisionConfig,
    /// Slack on joint-limit and rate residuals when judging feasibility.
    pub feasibility_tolerance: f64,
}

impl TrajectoryProblem {
    /// A problem with default weights and tolerances and no goal, closure or collisions.
    pub fn new(tree: KinematicTree, start: Vec<f64>, steps: usize) -> Result<Self> {
        if start.len() != tree.dof() {
            return Err(Error::DimensionMismatch { expected: tree.dof(), actual: start.len() });
        }
        if steps < 2 {
            return Err(Error::InvalidArgument("at least two waypoints are required".into()));
        }
        let (lower, upper) = tree.position_bounds();
        let weights = Weights::for_tree(&tree, 5.0, 1.0, 1.0);
        Ok(TrajectoryProblem {
            tree,
            steps,
            weights,
            start,
            goal: None,
            closures: Vec::new(),
            closure_tolerance: 1e-4,
            lower,
            upper,
            vel_limit: 0.2,
            acc_limit: 0.1,
            collision: CollisionConfig::none(),
            feasibility_tolerance: 1e-6,
        })
    }

    pub fn dof(&self) -> usize {
        self.tree.dof()
    }

    fn closure_links(&self) -> Result<Vec<(usize, Transform)>> {
        self.closures.iter().map(|c| Ok((self.tree.require_link(&c.link)?, c.anchor))).collect()
    }

    /// Exact residuals of every constraint family on `traj`.
    pub fn residuals(&self, traj: &Trajectory) -> Result<Residuals> {
        self.check_dims(traj)?;
        let closures = self.closure_links()?;
        let mut res = Residuals::default();
        if let Some(goal) = &self.goal {
            res.goal = goal_constraint(&self.tree, traj.last(), goal)? + goal.tolerance;
        }
        res.joint_limit = joint_limit_constraint(traj, &self.lower, &self.upper).into_iter().fold(0.0, f64::max);
        let (v, a) = rate_constraint(traj, self.vel_limit, self.acc_limit);
        res.velocity = v.into_iter().fold(0.0, f64::max);
        res.acceleration = a.into_iter().fold(0.0, f64::max);
        for t in 0..traj.len() {
            let frames = forward_kinematics(&self.tree, traj.row(t))?;
            for (l, anchor) in &closures {
                let r = pose_residual(frames.pose(*l), anchor);
                res.closure = r.iter().fold(res.closure, |m, v| m.max(v.abs()));
            }
            let (sum, worst) = collision_sum(&frames, &self.collision, self.collision.dist_safe);
            if sum > res.collision || (res.worst_contact.is_none() && worst.is_some()) {
                if let Some(c) = worst {
                    res.worst_contact = Some(CollisionHit {
                        step: t,
                        link: self.tree.link(c.link).name.clone(),
                        other: self.collision.body_name(&self.tree, c.other),
                        distance: c.result.distance,
                    });
                }
            }
            res.collision = res.collision.max(sum);
        }
        Ok(res)
    }

    pub fn satisfied(&self, r: &Residuals) -> bool {
        let goal_ok = self.goal.as_ref().is_none_or(|g| r.goal <= g.tolerance);
        goal_ok
            && r.closure <= self.closure_tolerance
            && r.joint_limit <= self.feasibility_tolerance
            && r.velocity <= self.feasibility_tolerance
            && r.acceleration <= self.feasibility_tolerance
            && r.collision <= self.collision.tolerance
    }

    fn check_dims(&self, traj: &Trajectory) -> Result<()> {
        if traj.dof() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), actual: traj.dof() });
        }
        if traj.len() != self.steps {
            return Err(Error::DimensionMismatch { expected: self.steps, actual: traj.len() });
        }
        Ok(())
    }
}

/// Closest approach in a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionHit {
    pub step: usize,
    pub link: String,
    pub other: String,
    pub distance: f64,
}

/// Constraint residuals. `goal` is `||f_task(q_T) - g||^2`, `closure` the largest
/// closure component, `collision` the largest per-waypoint hinge sum; the rest
/// are the largest hinge violations of their family.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Residuals {
    pub goal: f64,
    pub closure: f64,
    pub joint_limit: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub collision: f64,
    pub worst_contact: Option<CollisionHit>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub mu0: f64,
    pub penalty_scale: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub trust_init: f64,
    pub trust_shrink: f64,
    pub trust_expand: f64,
    pub trust_max: f64,
    pub accept_ratio: f64,
    pub xtol: f64,
    pub ftol: f64,
    /// Extra clearance demanded by the convexified collision terms.
    pub collision_buffer: f64,
    /// Pairs closer than `dist_safe + buffer + margin` are linearized.
    pub collision_margin: f64,
    pub qp: QpOptions,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            mu0: 10.0,
            penalty_scale: 10.0,
            max_outer: 5,
            max_inner: 100,
            trust_init: 0.1,
            trust_shrink: 0.5,
            trust_expand: 1.5,
            trust_max: 1.0,
            accept_ratio: 0.2,
            xtol: 1e-5,
            ftol: 1e-6,
            collision_buffer: 0.01,
            collision_margin: 0.08,
            qp: QpOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    ConstraintViolation,
    MaxIter,
    SubproblemFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::ConstraintViolation => "constraint_violation",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::SubproblemFailure => "subproblem_failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub trajectory: Trajectory,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub wall_time: f64,
}

/// Interior waypoints are the decision variables; the first waypoint is pinned.
struct Layout {
    n: usize,
    steps: usize,
}

impl Layout {
    fn var(&self, t: usize, j: usize) -> Option<usize> {
        (t > 0).then(|| (t - 1) * self.n + j)
    }

    fn len(&self) -> usize {
        (self.steps - 1) * self.n
    }
}

/// Penalized terms evaluated at one trajectory.
struct Evaluation {
    objective: f64,
    penalty: f64,
}

impl Evaluation {
    fn merit(&self, mu: f64) -> f64 {
        self.objective + mu * self.penalty
    }
}

struct Context<'a> {
    problem: &'a TrajectoryProblem,
    params: &'a SolverParams,
    layout: Layout,
    closures: Vec<(usize, Transform)>,
}

impl<'a> Context<'a> {
    fn collision_threshold(&self) -> f64 {
        self.problem.collision.dist_safe + self.params.collision_buffer
    }

    fn evaluate(&self, traj: &Trajectory) -> Result<Evaluation> {
        let p = self.problem;
        let objective = objective_value(traj, &p.weights)?;
        let mut penalty = 0.0;
        if let Some(goal) = &p.goal {
            penalty += goal.residual(&p.tree, traj.last())?.iter().map(|v| v.abs()).sum::<f64>();
        }
        let n = p.dof();
        for t in 0..traj.len() - 1 {
            let (a, b) = (traj.row(t), traj.row(t + 1));
            for j in 0..n {
                penalty += hinge((b[j] - a[j]).abs() - p.vel_limit);
            }
        }
        for t in 1..traj.len() - 1 {
            let (a, b, c) = (traj.row(t - 1), traj.row(t), traj.row(t + 1));
            for j in 0..n {
                penalty += hinge((a[j] - 2.0 * b[j] + c[j]).abs() - p.acc_limit);
            }
        }
        let threshold = self.collision_threshold();
        for t in 1..traj.len() {
            let frames = forward_kinematics(&p.tree, traj.row(t))?;
            for (l, anchor) in &self.closures {
                penalty += pose_residual(frames.pose(*l), anchor).iter().map(|v| v.abs()).sum::<f64>();
            }
            penalty += collision_sum(&frames, &p.collision, threshold).0;
        }
        Ok(Evaluation { objective, penalty })
    }

    fn has_equalities(&self) -> bool {
        self.problem.goal.is_some() || !self.closures.is_empty()
    }

    /// Second-order correction: a least-norm Gauss-Newton step per waypoint
    /// back onto the goal and closure equalities. A linearized step moves
    /// along the tangent of these manifolds and leaves a second-order error
    /// that the exact penalty would otherwise reject.
    fn correct(&self, traj: &Trajectory) -> Result<Trajectory> {
        let p = self.problem;
        let mut out = traj.clone();
        for t in 1..self.layout.steps {
            let q = traj.row(t).to_vec();
            let frames = forward_kinematics(&p.tree, &q)?;
            let mut r = Vec::new();
            let mut rows: Vec<Vec<f64>> = Vec::new();
            if t == self.layout.steps - 1 {
                if let Some(goal) = &p.goal {
                    let (gr, grows) = goal.linearize(&frames, &q)?;
                    r.extend(gr);
                    rows.extend(grows);
                }
            }
            for (l, anchor) in &self.closures {
                let res = pose_residual(frames.pose(*l), anchor);
                let cols = pose_residual_jacobian(&frames, *l, anchor);
                for k in 0..6 {
                    r.push(res[k]);
                    rows.push(cols.iter().map(|c| c[k]).collect());
                }
            }
            if r.is_empty() {
                continue;
            }
            let Some(dq) = least_norm_step(&rows, &r) else { continue };
            let row = out.row_mut(t);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v + dq[j]).clamp(p.lower[j], p.upper[j]);
            }
        }
        Ok(out)
    }

    /// Convex model around `traj`: a QP over the step `d`, without bounds.
    fn convexify(&self, traj: &Trajectory, mu: f64) -> Result<(BandedQp, f64)> {
        let p = self.problem;
        let n = p.dof();
        let lay = &self.layout;
        let mut qp = BandedQp::new(lay.len(), 2 * n);
        let mut objective = 0.0;

        // quadratic objective, exact
        let add_square = |qp: &mut BandedQp, w: f64, terms: &[(usize, usize, f64)]| {
            if w == 0.0 {
                return 0.0;
            }
            let v: f64 = terms.iter().map(|&(t, j, c)| c * traj.row(t)[j]).sum();
            for &(ta, ja, ca) in terms {
                if let Some(ia) = lay.var(ta, ja) {
                    qp.linear[ia] += 2.0 * w * v * ca;
                    for &(tb, jb, cb) in terms {
                        if let Some(ib) = lay.var(tb, jb) {
                            if ib <= ia {
                                qp.add_hessian(ia, ib, 2.0 * w * ca * cb);
                            }
                        }
                    }
                }
            }
            w * v * v
        };
        for t in 0..lay.steps - 1 {
            for j in 0..n {
                objective += add_square(&mut qp, p.weights.vel[j], &[(t, j, -1.0), (t + 1, j, 1.0)]);
            }
        }
        for t in 1..lay.steps - 1 {
            for j in 0..n {
                objective += add_square(&mut qp, p.weights.acc[j], &[(t - 1, j, 1.0), (t, j, -2.0), (t + 1, j, 1.0)]);
            }
        }
        let mut penalty0 = 0.0;

        // rate limits are linear: exact hinges
        let add_rate = |qp: &mut BandedQp, terms: &[(usize, usize, f64)], limit: f64| {
            let v: f64 = terms.iter().map(|&(t, j, c)| c * traj.row(t)[j]).sum();
            let coeffs: Vec<(usize, f64)> = terms.iter().filter_map(|&(t, j, c)| lay.var(t, j).map(|i| (i, c))).collect();
            let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(i, c)| (i, -c)).collect();
            qp.add_hinge(coeffs, v - limit, mu);
            qp.add_hinge(neg, -v - limit, mu);
            hinge(v.abs() - limit)
        };
        for t in 0..lay.steps - 1 {
            for j in 0..n {
                penalty0 += add_rate(&mut qp, &[(t, j, -1.0), (t + 1, j, 1.0)], p.vel_limit);
            }
        }
        for t in 1..lay.steps - 1 {
            for j in 0..n {
                penalty0 += add_rate(&mut qp, &[(t - 1, j, 1.0), (t, j, -2.0), (t + 1, j, 1.0)], p.acc_limit);
            }
        }

        let threshold = self.collision_threshold();
        let reach = threshold + self.params.collision_margin;
        for t in 1..lay.steps {
            let q = traj.row(t);
            let frames = forward_kinematics(&p.tree, q)?;
            let sparse = |row: &[f64]| -> Vec<(usize, f64)> {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (lay.var(t, j).expect("interior waypoint"), *v))
                    .collect()
            };
            if t == lay.steps - 1 {
                if let Some(goal) = &p.goal {
                    let (r, rows) = goal.linearize(&frames, q)?;
                    for (rk, row) in r.iter().zip(rows.iter()) {
                        qp.add_abs(sparse(row), *rk, mu);
                        penalty0 += rk.abs();
                    }
                }
            }
            for (l, anchor) in &self.closures {
                let r = pose_residual(frames.pose(*l), anchor);
                let cols = pose_residual_jacobian(&frames, *l, anchor);
                for k in 0..6 {
                    let row: Vec<f64> = cols.iter().map(|c| c[k]).collect();
                    qp.add_abs(sparse(&row), r[k], mu);
                    penalty0 += r[k].abs();
                }
            }
            for c in contacts(&frames, &p.collision.pairs, &p.collision.environment, reach) {
                let g = contact_gradient(&frames, &c, &p.collision.pairs.pinned);
                let coeffs: Vec<(usize, f64)> = sparse(&g).into_iter().map(|(i, v)| (i, -v)).collect();
                let offset = threshold - c.result.distance;
                penalty0 += hinge(offset);
                qp.add_hinge(coeffs, offset, mu);
            }
        }
        Ok((qp, objective + mu * penalty0))
    }
}

/// Penalty-based trust-region sequential convex optimization.
pub fn solve(problem: &TrajectoryProblem, init: &Trajectory, params: &SolverParams, clock: &dyn Clock) -> Result<SolveReport> {
    let started = clock.now_seconds();
    problem.check_dims(init)?;
    if init.first() != problem.start.as_slice() {
        return Err(Error::InvalidArgument("initial trajectory does not start at the problem start".into()));
    }
    let ctx = Context {
        problem,
        params,
        layout: Layout { n: problem.dof(), steps: problem.steps },
        closures: problem.closure_links()?,
    };
    let n = problem.dof();
    let mut x = init.clone();
    let mut mu = params.mu0;
    let mut trust = params.trust_init;
    let mut iterations = 0;
    let mut outer = 0;
    let mut status = SolveStatus::ConstraintViolation;
    let mut failed = false;

    'outer: while outer < params.max_outer {
        outer += 1;
        let mut inner_converged = false;
        let mut inner = 0;
        let mut eval = ctx.evaluate(&x)?;
        while inner < params.max_inner {
            inner += 1;
            iterations += 1;
            let (mut qp, model0) = ctx.convexify(&x, mu)?;
            let merit0 = eval.merit(mu);
            let model_at_zero = qp.objective(&vec![0.0; qp.dim()]);
            loop {
                for t in 1..problem.steps {
                    for j in 0..n {
                        let i = ctx.layout.var(t, j).expect("interior waypoint");
                        let q = x.row(t)[j];
                        let (lo, hi) = step_bounds(q, problem.lower[j], problem.upper[j], trust);
                        qp.lower[i] = lo;
                        qp.upper[i] = hi;
                    }
                }
                let sol = match qp.solve(&params.qp) {
                    Ok(s) => s,
                    Err(_) => {
                        trust *= params.trust_shrink;
                        if trust < params.xtol {
                            failed = true;
                            break 'outer;
                        }
                        continue;
                    }
                };
                let model_new = model0 - model_at_zero + sol.objective;
                let model_improve = merit0 - model_new;
                if model_improve < params.ftol * merit0.abs().max(1.0) {
                    inner_converged = true;
                    break;
                }
                let mut candidate = x.clone();
                for t in 1..problem.steps {
                    let row = candidate.row_mut(t);
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += sol.x[ctx.layout.var(t, j).expect("interior waypoint")];
                    }
                }
                let mut cand_eval = ctx.evaluate(&candidate)?;
                let mut true_improve = merit0 - cand_eval.merit(mu);
                if ctx.has_equalities() {
                    let corrected = ctx.correct(&candidate)?;
                    let e = ctx.evaluate(&corrected)?;
                    let improve = merit0 - e.merit(mu);
                    if improve > true_improve {
                        candidate = corrected;
                        cand_eval = e;
                        true_improve = improve;
                    }
                }
                if true_improve / model_improve > params.accept_ratio {
                    let step = sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    x = candidate;
                    eval = cand_eval;
                    trust = (trust * params.trust_expand).min(params.trust_max);
                    if step < params.xtol {
                        inner_converged = true;
                    }
                    break;
                }
                trust *= params.trust_shrink;
                if trust < params.xtol {
                    inner_converged = true;
                    break;
                }
            }
            if inner_converged {
                break;
            }
        }
        let res = problem.residuals(&x)?;
        if problem.satisfied(&res) {
            status = if inner_converged { SolveStatus::Converged } else { SolveStatus::MaxIter };
            break;
        }
        mu *= params.penalty_scale;
        trust = trust.max(params.trust_init);
    }
    if failed {
        status = SolveStatus::SubproblemFailure;
    }
    let residuals = problem.residuals(&x)?;
    if status == SolveStatus::Converged && !problem.satisfied(&residuals) {
        status = SolveStatus::ConstraintViolation;
    }
    let objective = objective_value(&x, &problem.weights)?;
    Ok(SolveReport {
        status,
        trajectory: x,
        objective,
        residuals,
        iterations,
        outer_iterations: outer,
        wall_time: clock.now_seconds() - started,
    })
}

/// Trust-region box for a step of one coordinate, intersected with its limits.
/// A coordinate outside its limits may move back toward them.
fn step_bounds(q: f64, lower: f64, upper: f64, trust: f64) -> (f64, f64) {
    let mut lo = (lower - q).max(-trust);
    let mut hi = (upper - q).min(trust);
    if lo >= hi {
        if q < lower {
            lo = 0.0;
            hi = (lower - q).min(trust).max(1e-9);
        } else {
            hi = 0.0;
            lo = (upper - q).max(-trust).min(-1e-9);
        }
    }
    if hi - lo < 1e-9 {
        hi = lo + 1e-9;
    }
    (lo, hi)
}

/// `-J^T (J J^T + eps I)^-1 r`: the smallest step cancelling `J dq = -r`.
fn least_norm_step(rows: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    let k = rows.len();
    let n = rows.first()?.len();
    let mut a = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y).sum();
            a[i * k + j] = v;
            a[j * k + i] = v;
        }
        a[i * k + i] += 1e-10;
    }
    // dense Cholesky
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= a[j * k + m] * a[j * k + m];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = crate::math::sqrt(d);
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for m in 0..j {
                v -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = v / d;
        }
    }
    let mut y = r.to_vec();
    for i in 0..k {
        for m in 0..i {
            y[i] -= a[i * k + m] * y[m];
        }
        y[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for m in i + 1..k {
            y[i] -= a[m * k + i] * y[m];
        }
        y[i] /= a[i * k + i];
    }
    let mut dq = vec![0.0; n];
    for (row, yi) in rows.iter().zip(&y) {
        for (d, v) in dq.iter_mut().zip(row) {
            *d -= v * yi;
        }
    }
    Some(dq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JointKind, JointSpec, LinkSpec, TreeParts};
    use crate::NullClock;

    fn one_joint(lo: f64, hi: f64) -> KinematicTree {
        let mut p = TreeParts::new("one", "base");
        p.links.push(LinkSpec::new("base"));
        p.links.push(LinkSpec::new("tip"));
        p.joints.push(JointSpec::new("j", JointKind::Revolute, "base", "tip", Transform::IDENTITY).with_limits(lo, hi));
        KinematicTree::new(p).unwrap()
    }

    fn traj1(v: &[f64]) -> Trajectory {
        Trajectory::new(vec!["j".into()], &v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn objective_examples() {
        let w = Weights::uniform(1, 1.0, 1.0);
        assert_eq!(objective_value(&traj1(&[0.0, 1.0, 2.0]), &w).unwrap(), 2.0);
        assert_eq!(objective_value(&traj1(&[0.0, 1.0, 0.0]), &w).unwrap(), 6.0);
        assert_eq!(objective_value(&traj1(&[0.3, 0.3, 0.3]), &w).unwrap(), 0.0);
        assert_eq!(objective_value(&traj1(&[0.0, 1.0]), &w).unwrap(), 1.0);
    }

    #[test]
    fn goal_examples() {
        let tree = one_joint(-3.0, 3.0);
        let g = GoalSpec::joint("j", 1.57, 1e-3);
        assert!((goal_constraint(&tree, &[1.57], &g).unwrap() + 1e-3).abs() < 1e-15);
        assert!((goal_constraint(&tree, &[0.0], &g).unwrap() - (1.57f64 * 1.57 - 1e-3)).abs() < 1e-12);
        let unknown = GoalSpec::joint("nope", 0.0, 1e-3);
        assert_eq!(goal_constraint(&tree, &[0.0], &unknown), Err(Error::UnknownJoint("nope".into())));
    }

    #[test]
    fn limit_and_rate_examples() {
        let t = traj1(&[0.0, 1.1, 1.0, -1.0]);
        let r = joint_limit_constraint(&t, &[-1.0], &[1.0]);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 0.1).abs() < 1e-12);
        assert_eq!(r[2], 0.0);
        assert_eq!(r[3], 0.0);
        let t = Trajectory::new(vec!["a".into(), "b".into()], &[vec![0.0, 0.0], vec![0.2, -0.3], vec![0.4, -0.6]]).unwrap();
        let (v, _) = rate_constraint(&t, 0.25, 10.0);
        assert!((v[0] - 0.05).abs() < 1e-12);
        let ramp = traj1(&[0.0, 0.1, 0.2, 0.3, 0.4]);
        let (v, a) = rate_constraint(&ramp, 0.1 + 1e-12, 0.1);
        assert!(v.iter().chain(a.iter()).all(|x| *x == 0.0));
    }

    #[test]
    fn fixed_endpoint_problem_is_linear_interpolation() {
        let tree = one_joint(-3.0, 3.0);
        let mut p = TrajectoryProblem::new(tree, vec![0.0], 11).unwrap();
        p.weights = Weights::uniform(1, 1.0, 1.0);
        p.goal = Some(GoalSpec::joint("j", 1.0, 1e-6));
        let init = traj1(&[0.0; 11]);
        let rep = solve(&p, &init, &SolverParams::default(), &NullClock).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged, "{rep:?}");
        assert!((rep.objective - 0.1).abs() < 1e-6, "{}", rep.objective);
        for t in 0..11 {
            assert!((rep.trajectory.row(t)[0] - 0.1 * t as f64).abs() < 1e-4);
        }
        assert_eq!(rep.trajectory.first(), &[0.0]);
    }

    #[test]
    fn goal_outside_limits_is_never_converged() {
        let tree = one_joint(-1.0, 1.0);
        let mut p = TrajectoryProblem::new(tree, vec![0.0], 11).unwrap();
        p.goal = Some(GoalSpec::joint("j", 2.0, 1e-4));
        let rep = solve(&p, &traj1(&[0.0; 11]), &SolverParams::default(), &NullClock).unwrap();
        assert_eq!(rep.status, SolveStatus::ConstraintViolation);
    }
}
