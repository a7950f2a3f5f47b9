//! Baselines that plan the base first and then the arm.
//!
//! The base follows a grid path to an intermediate goal pose with the arm
//! frozen; the arm is then found by inverse kinematics at each waypoint.
//! Neither step knows about arm collisions. The second baseline adds a local
//! per-waypoint refinement that pushes the arm (and, under a closure, the
//! object joints) out of collision within a small box around the tracked pose.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ik::{ik_solve_with, solve6, IkOptions};
use super::{finish, Ctx, PhaseChain, PhaseResult, PlannerKind, State, TaskOutcome};
use crate::geometry::{contact_gradient, contacts, hinge};
use crate::init::{base_dofs, base_path};
use crate::kinematics::{
    attachment_joint_name, forward_kinematics, pose_residual, pose_residual_jacobian, prefixed, AttachJoint,
};
use crate::math::{ceil, hypot, sqrt, wrap_angle, Transform};
use crate::trajopt::{collision_constraint, GoalKind, GoalSpec, Trajectory, TrajectoryProblem};
use crate::{Clock, Error, Result};

use super::Scenario;

/// Separate base and arm planning without collision handling for the arm.
///
/// `goals` holds one intermediate base pose `(x, y, yaw)` per motion phase.
pub fn plan_task_b1(sc: &Scenario, base: [f64; 3], goals: &[[f64; 3]], clock: &dyn Clock) -> Result<TaskOutcome> {
    plan_baseline(sc, base, goals, false, clock)
}

/// [`plan_task_b1`] followed by per-waypoint collision refinement.
pub fn plan_task_b2(sc: &Scenario, base: [f64; 3], goals: &[[f64; 3]], clock: &dyn Clock) -> Result<TaskOutcome> {
    plan_baseline(sc, base, goals, true, clock)
}

fn plan_baseline(sc: &Scenario, base: [f64; 3], goals: &[[f64; 3]], refine: bool, clock: &dyn Clock) -> Result<TaskOutcome> {
    let ctx = Ctx::new(sc)?;
    if goals.len() != sc.motion_phase_count() {
        return Err(Error::InvalidArgument(format!(
            "expected {} intermediate base goals, got {}",
            sc.motion_phase_count(),
            goals.len()
        )));
    }
    let mut st = ctx.state(sc.start_configuration(base)?);
    let mut phases = Vec::new();
    let mut failure = None;
    let mut k = 0;
    for (i, phase) in sc.phases.iter().enumerate() {
        if !phase.kind.is_motion() {
            ctx.apply_discrete(phase, &mut st)?;
            continue;
        }
        let label = format!("phase {i} ({})", phase.kind.as_str());
        let t0 = clock.now_seconds();
        let chain = ctx.chain(&st)?;
        let goal = ctx.goal(phase, &st)?;
        let rows = match track(&ctx, &st, &chain, goal.as_ref(), goals[k])? {
            Ok(rows) => rows,
            Err(msg) => {
                failure = Some(format!("{label}: {msg}"));
                break;
            }
        };
        k += 1;
        let mut rows = rows;
        if refine {
            let p = ctx.problem(&chain, &st, goal, rows.len())?;
            let mut free = chain.arm_dofs(&ctx.world);
            if !p.closures.is_empty() {
                let base = base_dofs(&chain.tree)?;
                let extra: Vec<usize> = (0..chain.tree.dof()).filter(|d| !base.contains(d) && !free.contains(d)).collect();
                free.extend(extra);
            }
            // the last row keeps its goal coordinates
            let pinned: Vec<usize> = match &p.goal {
                Some(GoalSpec { kind: GoalKind::Joints { targets }, .. }) => {
                    targets.iter().filter_map(|(n, _)| chain.tree.dof_index_by_name(n)).collect()
                }
                _ => Vec::new(),
            };
            let last_free: Vec<usize> = match &p.goal {
                Some(GoalSpec { kind: GoalKind::Pose { .. }, .. }) => Vec::new(),
                _ => free.iter().copied().filter(|d| !pinned.contains(d)).collect(),
            };
            let n = rows.len();
            for (t, row) in rows.iter_mut().enumerate().skip(1) {
                let f = if t + 1 == n { &last_free } else { &free };
                *row = refine_waypoint(&p, row, f, sc.settings.refine_radius)?;
            }
        }
        let traj = Trajectory::new(chain.tree.dof_names(), &rows)?;
        let traj = chain.expand(&st.row, &traj, ctx.world.names())?;
        st.row = traj.last().to_vec();
        phases.push(PhaseResult {
            phase: i,
            kind: phase.kind,
            trajectory: traj,
            status: None,
            objective: None,
            iterations: 0,
            planning_time: clock.now_seconds() - t0,
        });
    }
    let planner = if refine { PlannerKind::B2 } else { PlannerKind::B1 };
    finish(sc, planner, phases, failure)
}

/// Waypoint count for a smooth `3s^2 - 2s^3` profile covering displacement
/// `d` within 90% of the rate limits.
fn profile_steps(d: f64, vel: f64, acc: f64) -> usize {
    let a = 1.5 * d / (0.9 * vel);
    let b = sqrt(6.0 * d / (0.9 * acc));
    ceil(a.max(b)).max(1.0) as usize + 1
}

fn smooth(k: usize, n: usize) -> f64 {
    let t = k as f64 / (n - 1) as f64;
    t * t * (3.0 - 2.0 * t)
}

struct Polyline {
    pts: Vec<(f64, f64)>,
    cum: Vec<f64>,
}

impl Polyline {
    fn new(pts: Vec<(f64, f64)>) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum[cum.len() - 1] + hypot(w[1].0 - w[0].0, w[1].1 - w[0].1));
        }
        Polyline { pts, cum }
    }

    fn length(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    fn at(&self, s: f64) -> (f64, f64) {
        let n = self.pts.len();
        if n == 1 || s >= self.length() {
            return self.pts[n - 1];
        }
        let seg = (0..n - 1).find(|&i| self.cum[i + 1] >= s).unwrap_or(n - 2);
        let len = self.cum[seg + 1] - self.cum[seg];
        let u = if len > 0.0 { ((s - self.cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (self.pts[seg], self.pts[seg + 1]);
        (a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1))
    }
}

type Tracked = core::result::Result<Vec<Vec<f64>>, String>;

/// Chain-coordinate rows for one motion phase, or a failure reason.
fn track(ctx: &Ctx<'_>, st: &State, chain: &PhaseChain, goal: Option<&GoalSpec>, base_goal: [f64; 3]) -> Result<Tracked> {
    let s = &ctx.sc.settings;
    let tree = &chain.tree;
    let q0 = chain.project(&st.row);
    let [bx, by, bt] = base_dofs(tree)?;
    let arm = chain.arm_dofs(&ctx.world);
    let mut target_base = base_goal;
    let mut q_goal = q0.clone();
    let mut object_goal = Vec::new();
    if let Some(GoalSpec { kind: GoalKind::Joints { targets }, .. }) = goal {
        for (n, g) in targets {
            let d = tree.dof_index_by_name(n).ok_or_else(|| Error::UnknownJoint(n.clone()))?;
            q_goal[d] = *g;
            match d {
                _ if d == bx => target_base[0] = *g,
                _ if d == by => target_base[1] = *g,
                _ if d == bt => target_base[2] = *g,
                _ if !arm.contains(&d) => object_goal.push((n.clone(), *g)),
                _ => {}
            }
        }
    }
    let yaw_goal = q0[bt] + wrap_angle(target_base[2] - q0[bt]);
    let grid = s.grid.rasterize(&chain.grid_shapes)?;
    let path = match base_path(&grid, (q0[bx], q0[by]), (target_base[0], target_base[1])) {
        Ok(p) => Polyline::new(p),
        Err(Error::NoPath) => return Ok(Err("no base path to the intermediate goal".into())),
        Err(Error::InvalidArgument(m)) => return Ok(Err(m)),
        Err(e) => return Err(e),
    };
    // A revolute grasp lets the handle turn in the gripper, so the arm tracks
    // the handle pose itself with the grasp angle as one more unknown.
    let mut ik_active = arm.clone();
    let mut ik_link = ctx.sc.ee_link.clone();
    let mut handle = None;
    if let Some(h) = &st.held {
        let obj = &ctx.sc.objects[h.object];
        if let (AttachJoint::Revolute { .. }, false) = (obj.joint, object_goal.is_empty()) {
            ik_active.push(tree.require_joint(&attachment_joint_name(&obj.name)).and_then(|j| {
                tree.dof_index(j).ok_or_else(|| Error::InvalidArgument("attachment joint has no coordinate".into()))
            })?);
            ik_link = prefixed(&obj.name, &obj.attach_link);
            handle = Some(h.object);
        }
    }
    let ik_opts = IkOptions { active: Some(ik_active), ..s.ik.clone() };
    let solve_arm = |q: &[f64], target: &Transform| ik_solve_with(tree, &ik_link, target, q, &ik_opts);
    // pose to track for object joint values `at`
    let object_target = |at: &[(String, f64)]| -> Result<Transform> {
        match handle {
            Some(o) => {
                let mut row = st.row.clone();
                for (n, g) in at {
                    if let Some(c) = ctx.world.column(n) {
                        row[c] = *g;
                    }
                }
                ctx.attach_pose(st, o, &row)
            }
            None => {
                let g = GoalSpec::joints(at.to_vec(), 1.0);
                ctx.ee_target(st, chain, &q0, &g)?
                    .ok_or_else(|| Error::InvalidArgument("goal does not move the held object".into()))
            }
        }
    };
    let base_at = |q: &mut Vec<f64>, u: f64| {
        let p = path.at(u * path.length());
        q[bx] = p.0;
        q[by] = p.1;
        q[bt] = q0[bt] + u * (yaw_goal - q0[bt]);
    };
    let mut rows = vec![q0.clone()];

    if !object_goal.is_empty() && st.held.is_some() {
        // base and object move together; the arm tracks the handle
        let mut q_end = q_goal.clone();
        base_at(&mut q_end, 1.0);
        let target = match object_target(&object_goal) {
            Ok(t) => t,
            Err(Error::InvalidArgument(m)) => return Ok(Err(m)),
            Err(e) => return Err(e),
        };
        let Ok(q_end) = solve_arm(&q_end, &target) else {
            return Ok(Err("inverse kinematics failed at the goal".into()));
        };
        let d = displacement(&q0, &q_end, &[bx, by, bt]).max(path.length());
        let n = profile_steps(d, s.vel_limit, s.acc_limit);
        let mut prev = q0.clone();
        for k in 1..n {
            let u = smooth(k, n);
            let mut q = prev.clone();
            base_at(&mut q, u);
            let mut at = Vec::new();
            for (name, g) in &object_goal {
                let d = tree.dof_index_by_name(name).expect("goal joint");
                q[d] = q0[d] + u * (g - q0[d]);
                at.push((name.clone(), q[d]));
            }
            let target = object_target(&at)?;
            match solve_arm(&q, &target) {
                Ok(sol) => q = sol,
                Err(Error::IkNoConvergence { .. }) => return Ok(Err(format!("inverse kinematics failed at waypoint {}", k + 1))),
                Err(e) => return Err(e),
            }
            rows.push(q.clone());
            prev = q;
        }
        return Ok(Ok(rows));
    }

    // base first, arm frozen
    let mut d = path.length().max((yaw_goal - q0[bt]).abs());
    let others: Vec<usize> = (0..tree.dof()).filter(|&j| j != bx && j != by && j != bt && q_goal[j] != q0[j]).collect();
    for &j in &others {
        d = d.max((q_goal[j] - q0[j]).abs());
    }
    let n = profile_steps(d, s.vel_limit, s.acc_limit);
    for k in 1..n {
        let u = smooth(k, n);
        let mut q = q0.clone();
        base_at(&mut q, u);
        for &j in &others {
            q[j] = q0[j] + u * (q_goal[j] - q0[j]);
        }
        rows.push(q);
    }
    // then the arm, by inverse kinematics at the final base pose
    let ee_goal = match goal {
        Some(g @ GoalSpec { kind: GoalKind::Pose { .. }, .. }) => ctx.ee_target(st, chain, &q0, g)?,
        _ => None,
    };
    if let Some(target) = ee_goal {
        let q1 = rows[rows.len() - 1].clone();
        let q2 = match solve_arm(&q1, &target) {
            Ok(q) => q,
            Err(Error::IkNoConvergence { .. }) => return Ok(Err("inverse kinematics failed at the goal".into())),
            Err(e) => return Err(e),
        };
        let n = profile_steps(displacement(&q1, &q2, &[]), s.vel_limit, s.acc_limit);
        for k in 1..n {
            let u = smooth(k, n);
            rows.push(q1.iter().zip(&q2).map(|(a, b)| a + u * (b - a)).collect());
        }
    }
    Ok(Ok(rows))
}

fn displacement(a: &[f64], b: &[f64], skip: &[usize]) -> f64 {
    (0..a.len()).filter(|j| !skip.contains(j)).map(|j| (b[j] - a[j]).abs()).fold(0.0, f64::max)
}

/// Extra distance the refinement aims for beyond the safety distance.
const REFINE_BUFFER: f64 = 0.01;

/// Local collision repair of one waypoint.
///
/// Gradient descent on the summed hinge `max(d_safe + buffer - d, 0)` over the
/// coordinates in `free`, each kept within `radius` of its input value and
/// within joint limits. Under closure constraints the step is projected onto
/// the closure tangent space and followed by a Gauss-Newton correction. A
/// step is accepted only if it lowers the buffered residual without raising
/// the exact collision residual or the closure error, so the output is never
/// worse than the input.
pub fn refine_waypoint(p: &TrajectoryProblem, q: &[f64], free: &[usize], radius: f64) -> Result<Vec<f64>> {
    let exact = |x: &[f64]| collision_constraint(&p.tree, x, &p.collision);
    let mut best_exact = exact(q)?;
    if best_exact <= 0.0 || free.is_empty() {
        return Ok(q.to_vec());
    }
    let threshold = p.collision.dist_safe + REFINE_BUFFER;
    let buffered = |x: &[f64]| -> Result<f64> {
        let frames = forward_kinematics(&p.tree, x)?;
        let cs = contacts(&frames, &p.collision.pairs, &p.collision.environment, threshold);
        Ok(cs.iter().map(|c| hinge(threshold - c.result.distance)).sum())
    };
    let closures = p.closures.iter().map(|c| Ok((p.tree.require_link(&c.link)?, c.anchor))).collect::<Result<Vec<_>>>()?;
    let closure_error = |x: &[f64]| -> Result<f64> {
        let frames = forward_kinematics(&p.tree, x)?;
        Ok(closures.iter().flat_map(|(l, a)| pose_residual(frames.pose(*l), a)).fold(0.0f64, |m, v| m.max(v.abs())))
    };
    let closure_cap = closure_error(q)?.max(0.5 * p.closure_tolerance);
    let lo: Vec<f64> = free.iter().map(|&d| p.lower[d].max(q[d] - radius)).collect();
    let hi: Vec<f64> = free.iter().map(|&d| p.upper[d].min(q[d] + radius)).collect();
    let clamp = |x: &mut [f64]| {
        for (k, &d) in free.iter().enumerate() {
            x[d] = x[d].clamp(lo[k], hi[k]);
        }
    };

    let mut cur = q.to_vec();
    let mut best_buffered = buffered(&cur)?;
    for _ in 0..30 {
        let frames = forward_kinematics(&p.tree, &cur)?;
        let mut g = vec![0.0; free.len()];
        for c in contacts(&frames, &p.collision.pairs, &p.collision.environment, threshold) {
            if c.result.distance >= threshold {
                continue;
            }
            let grad = contact_gradient(&frames, &c, &p.collision.pairs.pinned);
            for (k, &d) in free.iter().enumerate() {
                g[k] -= grad[d];
            }
        }
        for (l, anchor) in &closures {
            project_out(&mut g, &pose_residual_jacobian(&frames, *l, anchor), free);
        }
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(gmax > 1e-12) {
            break;
        }
        let mut alpha = 0.1;
        let mut accepted = false;
        while alpha > 1e-3 {
            let mut cand = cur.clone();
            for (k, &d) in free.iter().enumerate() {
                cand[d] -= alpha * g[k] / gmax;
            }
            clamp(&mut cand);
            correct_closure(p, &closures, &mut cand, free, &clamp)?;
            let (e, b) = (exact(&cand)?, buffered(&cand)?);
            if e <= best_exact && b < best_buffered && closure_error(&cand)? <= closure_cap {
                cur = cand;
                best_exact = e;
                best_buffered = b;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || best_exact <= 0.0 {
            break;
        }
    }
    Ok(cur)
}

/// Remove from `g` its component in the row space of the 6 x |free| closure Jacobian.
fn project_out(g: &mut [f64], cols: &[[f64; 6]], free: &[usize]) {
    let (a, ag) = normal_system(cols, free, g);
    if let Some(y) = solve6(a, ag) {
        for (k, &d) in free.iter().enumerate() {
            g[k] -= (0..6).map(|i| cols[d][i] * y[i]).sum::<f64>();
        }
    }
}

/// `(A A^T + eps I, A v)` for `A` restricted to `free` columns.
fn normal_system(cols: &[[f64; 6]], free: &[usize], v: &[f64]) -> ([[f64; 6]; 6], [f64; 6]) {
    let mut a = [[0.0; 6]; 6];
    let mut av = [0.0; 6];
    for (k, &d) in free.iter().enumerate() {
        let c = &cols[d];
        for i in 0..6 {
            av[i] += c[i] * v[k];
            for j in 0..6 {
                a[i][j] += c[i] * c[j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-9;
    }
    (a, av)
}

fn correct_closure(
    p: &TrajectoryProblem,
    closures: &[(usize, Transform)],
    x: &mut [f64],
    free: &[usize],
    clamp: &dyn Fn(&mut [f64]),
) -> Result<()> {
    for _ in 0..8 {
        let frames = forward_kinematics(&p.tree, x)?;
        let mut worst = 0.0f64;
        for (l, anchor) in closures {
            let r = pose_residual(frames.pose(*l), anchor);
            worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
            let cols = pose_residual_jacobian(&frames, *l, anchor);
            let ones = vec![0.0; free.len()];
            let (a, _) = normal_system(&cols, free, &ones);
            let Some(y) = solve6(a, r) else { continue };
            for &d in free {
                x[d] -= (0..6).map(|i| cols[d][i] * y[i]).sum::<f64>();
            }
        }
        clamp(x);
        if worst < 1e-10 {
            break;
        }
    }
    Ok(())
}
