//! Scenarios and task execution.
//!
//! A scenario lists a robot, articulated or free objects, static obstacles
//! and a sequence of phases. Motion phases (reach, manipulate) are planned on
//! the chain that exists at that point of the task: the robot with its virtual
//! base, or the virtual kinematic chain once an object is attached. Discrete
//! phases (attach, detach) rebuild that chain.
//!
//! Every planner writes trajectories in one shared column layout (see
//! [`World`]), so a task can be replayed and checked independently of how it
//! was planned.

mod baseline;
mod ik;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{build_collision_pairs, link_shapes, signed_distance, PosedShape};
use crate::init::{
    astar_init, base_dofs, base_goal_seed, interpolated_init, rasterize_environment, stationary_init, GridMap, InitStrategy,
};
use crate::kinematics::{
    add_virtual_base, attach, attachment_joint_name, forward_kinematics, invert_subtree, prefixed, AttachJoint, BASE_X_JOINT,
    BASE_Y_JOINT,
};
use crate::math::{hypot, wrap_angle, Quat, Transform, Vec3};
use crate::model::{JointRole, KinematicTree, Shape};
use crate::trajopt::{
    solve, Closure, CollisionConfig, GoalKind, GoalSpec, Residuals, SolveStatus, SolverParams, Trajectory, TrajectoryProblem,
    Weights,
};
use crate::{Clock, Error, Result};

pub use baseline::{plan_task_b1, plan_task_b2, refine_waypoint};
pub use ik::{ik_solve, ik_solve_with, IkOptions};

/// Axis-aligned box over base `(x, y, yaw)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Region {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let r = Region { min, max };
        if r.is_valid() {
            Ok(r)
        } else {
            Err(Error::InvalidArgument("region is empty or not finite".into()))
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// The point at fractional coordinates `u` (each in `[0, 1]`).
    pub fn at(&self, u: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|i| self.min[i] + u[i] * (self.max[i] - self.min[i]))
    }
}

/// Occupancy grid used by A* initialization and the baselines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub origin: (f64, f64),
    /// Footprint dilation, roughly the base's circumscribed radius.
    pub inflation: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { resolution: 0.1, width: 100, height: 100, origin: (-5.0, -5.0), inflation: 0.35 }
    }
}

impl GridSpec {
    pub fn rasterize(&self, shapes: &[PosedShape]) -> Result<GridMap> {
        rasterize_environment(shapes, self.width, self.height, self.resolution, self.origin, self.inflation)
    }
}

/// Planner parameters shared by all phases of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerSettings {
    pub solver: SolverParams,
    pub steps: usize,
    pub init: InitStrategy,
    pub vel_limit: f64,
    pub acc_limit: f64,
    pub dist_safe: f64,
    pub collision_tolerance: f64,
    pub closure_tolerance: f64,
    pub goal_tolerance: f64,
    pub feasibility_tolerance: f64,
    pub base_weight: f64,
    pub vel_weight: f64,
    pub acc_weight: f64,
    pub grid: GridSpec,
    /// Back-off of the pre-grasp pose along the approach (`z`) axis of the grasp frame.
    pub approach_offset: f64,
    /// Radius of the circle on which base goal seeds are placed.
    pub standoff: f64,
    /// Clearance the base must keep from obstacles at a seed pose.
    pub seed_clearance: f64,
    /// Per-joint bound on how far baseline refinement may move a waypoint.
    pub refine_radius: f64,
    pub ik: IkOptions,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        PlannerSettings {
            solver: SolverParams::default(),
            steps: 30,
            init: InitStrategy::AStar,
            vel_limit: 0.2,
            acc_limit: 0.1,
            dist_safe: 0.02,
            collision_tolerance: 1e-4,
            closure_tolerance: 1e-4,
            goal_tolerance: 1e-4,
            feasibility_tolerance: 1e-6,
            base_weight: 5.0,
            vel_weight: 1.0,
            acc_weight: 1.0,
            grid: GridSpec::default(),
            approach_offset: 0.05,
            standoff: 0.8,
            seed_clearance: 0.1,
            refine_radius: 0.2,
            ik: IkOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obstacle {
    pub name: String,
    pub shape: Shape,
    pub pose: Transform,
}

/// An object placed in the world.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectInstance {
    pub name: String,
    /// Model anchored at its world pose; its name is the instance name.
    pub model: KinematicTree,
    pub attach_link: String,
    /// Pose of the end-effector frame in the attachable link's frame when grasping.
    pub grasp: Transform,
    pub joint: AttachJoint,
    /// The object's root is fixed in the world (a door frame, a cabinet) and is
    /// held there by a closure constraint while attached.
    pub fixed_base: bool,
    pub initial: Vec<f64>,
}

impl ObjectInstance {
    pub fn new(
        name: impl Into<String>,
        model: KinematicTree,
        attach_link: impl Into<String>,
        grasp: Transform,
        joint: AttachJoint,
        fixed_base: bool,
    ) -> Result<Self> {
        let name = name.into();
        let mut parts = model.into_parts();
        parts.name = name.clone();
        let model = KinematicTree::new(parts)?;
        let initial = vec![0.0; model.dof()];
        Ok(ObjectInstance { name, model, attach_link: attach_link.into(), grasp, joint, fixed_base, initial })
    }

    pub fn with_initial(mut self, values: Vec<f64>) -> Self {
        self.initial = values;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseKind {
    Reach,
    Attach,
    Manipulate,
    Detach,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::Reach => "reach",
            PhaseKind::Attach => "attach",
            PhaseKind::Manipulate => "manipulate",
            PhaseKind::Detach => "detach",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reach" => Some(PhaseKind::Reach),
            "attach" => Some(PhaseKind::Attach),
            "manipulate" => Some(PhaseKind::Manipulate),
            "detach" => Some(PhaseKind::Detach),
            _ => None,
        }
    }

    pub fn is_motion(self) -> bool {
        matches!(self, PhaseKind::Reach | PhaseKind::Manipulate)
    }
}

/// Goal of a motion phase.
#[derive(Clone, Debug, PartialEq)]
pub enum PhaseGoal {
    None,
    /// End effector at the pre-grasp pose of the phase's object.
    Grasp,
    /// Joint values by world column name, e.g. `door/hinge` or `base_x`.
    Joints(Vec<(String, f64)>),
    /// World pose of a link of the current chain, e.g. `stick/tip`.
    Pose {
        link: String,
        target: Transform,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskPhase {
    pub kind: PhaseKind,
    pub object: Option<String>,
    pub goal: PhaseGoal,
    /// Overrides the scenario goal tolerance.
    pub tolerance: Option<f64>,
    /// Overrides the scenario waypoint count.
    pub steps: Option<usize>,
    /// Overrides the initialization strategy requested by the caller.
    pub init: Option<InitStrategy>,
}

impl TaskPhase {
    fn new(kind: PhaseKind, object: Option<&str>, goal: PhaseGoal) -> Self {
        TaskPhase { kind, object: object.map(String::from), goal, tolerance: None, steps: None, init: None }
    }

    pub fn reach(object: &str) -> Self {
        Self::new(PhaseKind::Reach, Some(object), PhaseGoal::Grasp)
    }

    pub fn reach_joints(targets: Vec<(String, f64)>) -> Self {
        Self::new(PhaseKind::Reach, None, PhaseGoal::Joints(targets))
    }

    pub fn attach(object: &str) -> Self {
        Self::new(PhaseKind::Attach, Some(object), PhaseGoal::None)
    }

    pub fn manipulate(object: &str, goal: PhaseGoal) -> Self {
        Self::new(PhaseKind::Manipulate, Some(object), goal)
    }

    pub fn detach(object: &str) -> Self {
        Self::new(PhaseKind::Detach, Some(object), PhaseGoal::None)
    }
}

/// A complete task description.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Robot without the virtual base; its root link is the mobile base.
    pub robot: KinematicTree,
    pub ee_link: String,
    pub arm_start: Vec<f64>,
    pub objects: Vec<ObjectInstance>,
    pub obstacles: Vec<Obstacle>,
    pub phases: Vec<TaskPhase>,
    /// Where trial start poses are sampled.
    pub start_region: Region,
    pub seed: u64,
    pub settings: PlannerSettings,
    /// One base-goal region per motion phase, for the baselines.
    pub baseline_regions: Option<Vec<Region>>,
}

impl Scenario {
    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn motion_phase_count(&self) -> usize {
        self.phases.iter().filter(|p| p.kind.is_motion()).count()
    }

    /// World configuration with the base at `base` and everything else at its start value.
    pub fn start_configuration(&self, base: [f64; 3]) -> Result<Vec<f64>> {
        let world = World::new(self)?;
        let mut row = vec![0.0; world.names.len()];
        row[..3].copy_from_slice(&base);
        let n = self.robot.dof();
        row[3..3 + n].copy_from_slice(&self.arm_start);
        for (o, obj) in self.objects.iter().enumerate() {
            for (k, &c) in world.objects[o].joints.iter().enumerate() {
                row[c] = obj.initial[k];
            }
        }
        Ok(row)
    }

    /// Structural checks: references resolve, phases are ordered sensibly and
    /// parameters are in range.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.robot.require_link(&self.ee_link)?;
        if self.arm_start.len() != self.robot.dof() {
            return bad(format!("arm_start has {} values, robot has {} joints", self.arm_start.len(), self.robot.dof()));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if self.objects[..i].iter().any(|o| o.name == obj.name) {
                return bad(format!("duplicate object \"{}\"", obj.name));
            }
            obj.model.require_link(&obj.attach_link)?;
            if obj.initial.len() != obj.model.dof() {
                return bad(format!(
                    "object \"{}\": initial has {} values, model has {}",
                    obj.name,
                    obj.initial.len(),
                    obj.model.dof()
                ));
            }
        }
        if !self.start_region.is_valid() {
            return bad("start_region is empty".into());
        }
        let s = &self.settings;
        let positive = [
            ("steps", s.steps as f64 - 1.0),
            ("vel_limit", s.vel_limit),
            ("acc_limit", s.acc_limit),
            ("goal_tolerance", s.goal_tolerance),
            ("grid.resolution", s.grid.resolution),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return bad(format!("{name} is out of range"));
            }
        }
        let world = World::new(self)?;
        let mut held: Option<&str> = None;
        for (i, p) in self.phases.iter().enumerate() {
            let label = format!("phase {i} ({})", p.kind.as_str());
            if let Some(o) = &p.object {
                if self.object_index(o).is_none() {
                    return bad(format!("{label}: unknown object \"{o}\""));
                }
            }
            if let Some(t) = p.tolerance {
                if !(t > 0.0) {
                    return bad(format!("{label}: tolerance must be positive"));
                }
            }
            if matches!(p.steps, Some(n) if n < 2) {
                return bad(format!("{label}: at least two waypoints are required"));
            }
            if let PhaseGoal::Joints(t) = &p.goal {
                if let Some((n, _)) = t.iter().find(|(n, _)| world.column(n).is_none()) {
                    return Err(Error::UnknownJoint(n.clone()));
                }
            }
            match p.kind {
                PhaseKind::Reach => {
                    if p.goal == PhaseGoal::None {
                        return bad(format!("{label}: a goal is required"));
                    }
                    if p.goal == PhaseGoal::Grasp && (p.object.is_none() || held.is_some()) {
                        return bad(format!("{label}: a grasp goal needs a free object and an empty gripper"));
                    }
                }
                PhaseKind::Attach => {
                    if held.is_some() {
                        return bad(format!("{label}: the gripper already holds an object"));
                    }
                    held = p.object.as_deref();
                    if held.is_none() {
                        return bad(format!("{label}: missing object"));
                    }
                }
                PhaseKind::Manipulate => {
                    if held.is_none() || p.object.as_deref() != held {
                        return bad(format!("{label}: object must be attached first"));
                    }
                    if matches!(p.goal, PhaseGoal::None | PhaseGoal::Grasp) {
                        return bad(format!("{label}: needs a joint or pose goal"));
                    }
                }
                PhaseKind::Detach => {
                    if held.is_none() || p.object.as_deref() != held {
                        return bad(format!("{label}: object is not attached"));
                    }
                    held = None;
                }
            }
        }
        if let Some(regions) = &self.baseline_regions {
            if regions.len() != self.motion_phase_count() {
                return bad(format!(
                    "baseline_regions has {} entries, expected one per motion phase ({})",
                    regions.len(),
                    self.motion_phase_count()
                ));
            }
            if regions.iter().any(|r| !r.is_valid()) {
                return bad("baseline_regions contains an empty region".into());
            }
        }
        Ok(())
    }
}

/// Columns of an object in the world layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectColumns {
    pub attach: Option<usize>,
    pub joints: Vec<usize>,
}

/// Column layout shared by all phases: virtual base and robot joints, then
/// for each object its revolute attachment joint (if any) and its joints.
#[derive(Clone, Debug)]
pub struct World {
    robot: KinematicTree,
    names: Vec<String>,
    objects: Vec<ObjectColumns>,
    arm: Vec<usize>,
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let robot = add_virtual_base(&scenario.robot)?;
        let mut names = robot.dof_names();
        let arm = (3..names.len()).collect();
        let mut objects = Vec::new();
        for obj in &scenario.objects {
            let attach = match obj.joint {
                AttachJoint::Revolute { .. } => {
                    names.push(attachment_joint_name(&obj.name));
                    Some(names.len() - 1)
                }
                AttachJoint::Fixed => None,
            };
            let mut joints = Vec::new();
            for n in obj.model.dof_names() {
                names.push(prefixed(&obj.name, &n));
                joints.push(names.len() - 1);
            }
            objects.push(ObjectColumns { attach, joints });
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidArgument(format!("duplicate column \"{n}\"")));
            }
        }
        Ok(World { robot, names, objects, arm })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The robot with its virtual base.
    pub fn robot(&self) -> &KinematicTree {
        &self.robot
    }

    pub fn object_columns(&self, object: usize) -> &ObjectColumns {
        &self.objects[object]
    }

    /// Physical robot joint columns.
    pub fn arm_columns(&self) -> &[usize] {
        &self.arm
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Held {
    pub object: usize,
    pub vkc: KinematicTree,
}

/// Replay state between phases.
#[derive(Clone, Debug)]
pub(crate) struct State {
    pub row: Vec<f64>,
    /// Object models anchored at their current world pose.
    pub models: Vec<KinematicTree>,
    pub held: Option<Held>,
}

/// The chain a motion phase is planned on, plus its surroundings.
#[derive(Clone, Debug)]
pub(crate) struct PhaseChain {
    pub tree: KinematicTree,
    /// World column of each chain coordinate.
    pub columns: Vec<usize>,
    pub environment: Vec<PosedShape>,
    pub environment_names: Vec<String>,
    pub closures: Vec<Closure>,
    pub pinned: Vec<usize>,
    /// Obstacles for the ground grid, including closure-pinned links.
    pub grid_shapes: Vec<PosedShape>,
}

impl PhaseChain {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&c| row[c]).collect()
    }

    pub fn project_trajectory(&self, traj: &Trajectory) -> Result<Trajectory> {
        let rows: Vec<Vec<f64>> = traj.rows().map(|r| self.project(r)).collect();
        Trajectory::new(self.tree.dof_names(), &rows)
    }

    /// World trajectory: `base` with the chain columns taken from `traj`.
    pub fn expand(&self, base: &[f64], traj: &Trajectory, names: &[String]) -> Result<Trajectory> {
        let rows: Vec<Vec<f64>> = traj
            .rows()
            .map(|r| {
                let mut row = base.to_vec();
                for (k, &c) in self.columns.iter().enumerate() {
                    row[c] = r[k];
                }
                row
            })
            .collect();
        Trajectory::new(names.to_vec(), &rows)
    }

    /// Chain coordinates that belong to the physical robot arm.
    pub fn arm_dofs(&self, world: &World) -> Vec<usize> {
        (0..self.columns.len()).filter(|&k| world.arm.contains(&self.columns[k])).collect()
    }
}

/// Scenario with its resolved world layout.
pub(crate) struct Ctx<'s> {
    pub sc: &'s Scenario,
    pub world: World,
}

impl<'s> Ctx<'s> {
    pub fn new(sc: &'s Scenario) -> Result<Self> {
        sc.validate()?;
        Ok(Ctx { sc, world: World::new(sc)? })
    }

    pub fn state(&self, row: Vec<f64>) -> State {
        State { row, models: self.sc.objects.iter().map(|o| o.model.clone()).collect(), held: None }
    }

    fn object_values(&self, o: usize, row: &[f64]) -> Vec<f64> {
        self.world.objects[o].joints.iter().map(|&c| row[c]).collect()
    }

    /// World pose of an object's attachable link.
    pub fn attach_pose(&self, st: &State, o: usize, row: &[f64]) -> Result<Transform> {
        let model = &st.models[o];
        let frames = forward_kinematics(model, &self.object_values(o, row))?;
        Ok(*frames.pose(model.require_link(&self.sc.objects[o].attach_link)?))
    }

    pub fn chain(&self, st: &State) -> Result<PhaseChain> {
        let tree = match &st.held {
            Some(h) => h.vkc.clone(),
            None => self.world.robot.clone(),
        };
        let columns = tree
            .dof_names()
            .iter()
            .map(|n| self.world.column(n).ok_or_else(|| Error::UnknownJoint(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        let mut environment = Vec::new();
        let mut environment_names = Vec::new();
        for ob in &self.sc.obstacles {
            environment.push(PosedShape::new(ob.shape, ob.pose));
            environment_names.push(ob.name.clone());
        }
        let held = st.held.as_ref().map(|h| h.object);
        for (o, obj) in self.sc.objects.iter().enumerate() {
            if Some(o) == held {
                continue;
            }
            let model = &st.models[o];
            let frames = forward_kinematics(model, &self.object_values(o, &st.row))?;
            for l in 0..model.links().len() {
                for s in link_shapes(&frames, l) {
                    environment.push(s);
                    environment_names.push(prefixed(&obj.name, &model.link(l).name));
                }
            }
        }
        let mut grid_shapes = environment.clone();
        let mut closures = Vec::new();
        let mut pinned = Vec::new();
        if let Some(h) = &st.held {
            let obj = &self.sc.objects[h.object];
            if obj.fixed_base {
                let root = prefixed(&obj.name, obj.model.root_name());
                let l = tree.require_link(&root)?;
                closures.push(Closure { link: root, anchor: st.models[h.object].anchor() });
                pinned.push(l);
                let q: Vec<f64> = columns.iter().map(|&c| st.row[c]).collect();
                let frames = forward_kinematics(&tree, &q)?;
                grid_shapes.extend(link_shapes(&frames, l));
            }
        }
        Ok(PhaseChain { tree, columns, environment, environment_names, closures, pinned, grid_shapes })
    }

    pub fn goal(&self, phase: &TaskPhase, st: &State) -> Result<Option<GoalSpec>> {
        let tol = phase.tolerance.unwrap_or(self.sc.settings.goal_tolerance);
        Ok(match &phase.goal {
            PhaseGoal::None => None,
            PhaseGoal::Grasp => {
                let o = self.object_of(phase)?;
                Some(GoalSpec::pose(self.sc.ee_link.clone(), self.pregrasp(st, o)?, tol))
            }
            PhaseGoal::Joints(t) => Some(GoalSpec::joints(t.clone(), tol)),
            PhaseGoal::Pose { link, target } => Some(GoalSpec::pose(link.clone(), *target, tol)),
        })
    }

    /// Grasp frame backed off along its approach axis.
    pub fn pregrasp(&self, st: &State, o: usize) -> Result<Transform> {
        let obj = &self.sc.objects[o];
        let back = Transform::from_translation(Vec3::new(0.0, 0.0, -self.sc.settings.approach_offset));
        Ok(self.attach_pose(st, o, &st.row)? * obj.grasp * back)
    }

    pub fn object_of(&self, phase: &TaskPhase) -> Result<usize> {
        let name = phase.object.as_deref().ok_or_else(|| Error::InvalidArgument("phase has no object".into()))?;
        self.sc.object_index(name).ok_or_else(|| Error::InvalidArgument(format!("unknown object \"{name}\"")))
    }

    pub fn problem(&self, chain: &PhaseChain, st: &State, goal: Option<GoalSpec>, steps: usize) -> Result<TrajectoryProblem> {
        let s = &self.sc.settings;
        let mut p = TrajectoryProblem::new(chain.tree.clone(), chain.project(&st.row), steps)?;
        p.weights = Weights::for_tree(&p.tree, s.base_weight, s.vel_weight, s.acc_weight);
        p.goal = goal;
        p.closures = chain.closures.clone();
        p.closure_tolerance = s.closure_tolerance;
        p.vel_limit = s.vel_limit;
        p.acc_limit = s.acc_limit;
        p.feasibility_tolerance = s.feasibility_tolerance;
        let mut pairs = build_collision_pairs(&p.tree, &chain.environment);
        pairs.pinned = chain.pinned.clone();
        p.collision = CollisionConfig {
            pairs,
            environment: chain.environment.clone(),
            environment_names: chain.environment_names.clone(),
            dist_safe: s.dist_safe,
            tolerance: s.collision_tolerance,
        };
        Ok(p)
    }

    /// Attach or detach, updating the held object and its anchor.
    pub fn apply_discrete(&self, phase: &TaskPhase, st: &mut State) -> Result<()> {
        let o = self.object_of(phase)?;
        let obj = &self.sc.objects[o];
        match phase.kind {
            PhaseKind::Attach => {
                let frames = forward_kinematics(&self.world.robot, &st.row[..self.world.robot.dof()])?;
                let ee = *frames.pose(self.world.robot.require_link(&self.sc.ee_link)?);
                let mut grasp = ee.inverse() * self.attach_pose(st, o, &st.row)?;
                if let (AttachJoint::Revolute { axis }, Some(c)) = (obj.joint, self.world.objects[o].attach) {
                    grasp = grasp * Transform::from_rotation(Quat::from_axis_angle(axis, -st.row[c]));
                }
                let inverted = invert_subtree(&st.models[o], &obj.attach_link)?;
                let vkc = attach(&self.world.robot, &inverted, &self.sc.ee_link, grasp, obj.joint)?;
                st.held = Some(Held { object: o, vkc });
            }
            PhaseKind::Detach => {
                let h = st.held.take().ok_or_else(|| Error::InvalidArgument("nothing is attached".into()))?;
                if !obj.fixed_base {
                    let cols = self.chain_columns(&h.vkc)?;
                    let q: Vec<f64> = cols.iter().map(|&c| st.row[c]).collect();
                    let frames = forward_kinematics(&h.vkc, &q)?;
                    let root = h.vkc.require_link(&prefixed(&obj.name, obj.model.root_name()))?;
                    st.models[o] = st.models[o].with_anchor(*frames.pose(root));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn chain_columns(&self, tree: &KinematicTree) -> Result<Vec<usize>> {
        tree.dof_names().iter().map(|n| self.world.column(n).ok_or_else(|| Error::UnknownJoint(n.clone()))).collect()
    }

    /// Does the robot base at `(x, y, yaw)` keep the seed clearance from `shapes`?
    pub fn base_clear(&self, shapes: &[PosedShape], x: f64, y: f64, yaw: f64) -> bool {
        let pose = self.world.robot.anchor() * Transform::planar(x, y, yaw);
        let base = self.sc.robot.link(self.sc.robot.root_index());
        base.geoms.iter().all(|g| {
            let s = PosedShape::new(g.shape, pose * g.origin);
            shapes.iter().all(|o| signed_distance(&s, o).distance >= self.sc.settings.seed_clearance)
        })
    }

    /// End-effector pose implied by the goal, if the goal constrains it.
    pub fn ee_target(&self, st: &State, chain: &PhaseChain, q0: &[f64], goal: &GoalSpec) -> Result<Option<Transform>> {
        let tree = &chain.tree;
        let frames = forward_kinematics(tree, q0)?;
        let ee = *frames.pose(tree.require_link(&self.sc.ee_link)?);
        match &goal.kind {
            GoalKind::Pose { link, target } => {
                let rel = ee.inverse() * *frames.pose(tree.require_link(link)?);
                Ok(Some(*target * rel.inverse()))
            }
            GoalKind::Joints { targets } => {
                let Some(h) = &st.held else { return Ok(None) };
                let cols = &self.world.objects[h.object].joints;
                let moves_object = targets.iter().any(|(n, _)| self.world.column(n).is_some_and(|c| cols.contains(&c)));
                if !moves_object {
                    return Ok(None);
                }
                let mut row = st.row.clone();
                for (n, g) in targets {
                    if let Some(c) = self.world.column(n) {
                        row[c] = *g;
                    }
                }
                let obj = &self.sc.objects[h.object];
                let att = *frames.pose(tree.require_link(&prefixed(&obj.name, &obj.attach_link))?);
                let ee_to_att = ee.inverse() * att;
                Ok(Some(self.attach_pose(st, h.object, &row)? * ee_to_att.inverse()))
            }
        }
    }

    /// A plausible final configuration used to build the initial trajectory:
    /// goal joints set directly, a standoff base pose facing the end-effector
    /// target, and the arm from inverse kinematics.
    pub fn seed_goal(&self, st: &State, chain: &PhaseChain, p: &TrajectoryProblem) -> Result<Vec<f64>> {
        let mut q = p.start.clone();
        let Some(goal) = &p.goal else { return Ok(q) };
        let target = self.ee_target(st, chain, &q, goal)?;
        if let GoalKind::Joints { targets } = &goal.kind {
            for (n, g) in targets {
                let d = chain.tree.dof_index_by_name(n).ok_or_else(|| Error::UnknownJoint(n.clone()))?;
                q[d] = *g;
            }
        }
        let Some(target) = target else { return Ok(q) };
        let [bx, by, bt] = base_dofs(&chain.tree)?;
        let center = (target.translation.x, target.translation.y);
        let s = &self.sc.settings;
        let seed =
            base_goal_seed(center, s.standoff, (q[bx], q[by]), 16, |x, y, yaw| self.base_clear(&chain.grid_shapes, x, y, yaw));
        if let Some((x, y, yaw)) = seed {
            q[bx] = x;
            q[by] = y;
            q[bt] += wrap_angle(yaw - q[bt]);
        }
        let opts = IkOptions { active: Some(chain.arm_dofs(&self.world)), restarts: 4, ..s.ik.clone() };
        if let Ok(sol) = ik_solve_with(&chain.tree, &self.sc.ee_link, &target, &q, &opts) {
            q = sol;
        }
        Ok(q)
    }

    pub fn initial_trajectory(
        &self,
        strategy: InitStrategy,
        chain: &PhaseChain,
        p: &TrajectoryProblem,
        seed: &[f64],
    ) -> Result<Trajectory> {
        let names = chain.tree.dof_names();
        match strategy {
            InitStrategy::Stationary => stationary_init(names, &p.start, p.steps),
            InitStrategy::Interpolated => interpolated_init(names, &p.start, seed, p.steps),
            InitStrategy::AStar => {
                let grid = self.sc.settings.grid.rasterize(&chain.grid_shapes)?;
                match astar_init(&chain.tree, &grid, &p.start, seed, p.steps) {
                    Err(Error::NoPath) | Err(Error::InvalidArgument(_)) => interpolated_init(names, &p.start, seed, p.steps),
                    r => r,
                }
            }
        }
    }

    pub fn steps(&self, phase: &TaskPhase) -> usize {
        phase.steps.unwrap_or(self.sc.settings.steps)
    }
}

/// Which planner produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlannerKind {
    Vkc,
    B1,
    B2,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Vkc, PlannerKind::B1, PlannerKind::B2];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Vkc => "vkc",
            PlannerKind::B1 => "b1",
            PlannerKind::B2 => "b2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PlannerKind::ALL.into_iter().find(|p| p.as_str() == s.to_ascii_lowercase())
    }
}

/// One planned motion phase, in world columns.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseResult {
    pub phase: usize,
    pub kind: PhaseKind,
    pub trajectory: Trajectory,
    /// Optimizer status (the baselines do not optimize).
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub planning_time: f64,
}

/// Residuals of one replayed motion phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseCheck {
    pub phase: usize,
    pub kind: PhaseKind,
    pub residuals: Residuals,
    pub passed: bool,
}

/// Result of replaying a task against every constraint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub passed: bool,
    pub phases: Vec<PhaseCheck>,
    /// Human-readable violation lines, in phase order.
    pub violations: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub success: bool,
    /// Base travel in meters.
    pub base_effort: f64,
    /// Accumulated arm joint displacement in radians.
    pub arm_effort: f64,
    /// Seconds.
    pub planning_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutcome {
    pub planner: PlannerKind,
    pub phases: Vec<PhaseResult>,
    pub check: CheckReport,
    pub metrics: Metrics,
    pub failure: Option<String>,
}

impl TaskOutcome {
    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.phases.iter().map(|p| p.trajectory.clone()).collect()
    }
}

pub(crate) fn finish(
    sc: &Scenario,
    planner: PlannerKind,
    phases: Vec<PhaseResult>,
    planning_failure: Option<String>,
) -> Result<TaskOutcome> {
    let trajs: Vec<Trajectory> = phases.iter().map(|p| p.trajectory.clone()).collect();
    let check = check_trajectory(sc, &trajs);
    let failure = planning_failure.or_else(|| check.violations.first().cloned());
    let success = failure.is_none() && check.passed;
    let times: Vec<f64> = phases.iter().map(|p| p.planning_time).collect();
    let metrics = evaluate_metrics(&sc.robot, &trajs, &times, success);
    Ok(TaskOutcome { planner, phases, check, metrics, failure })
}

/// Plan every phase on its virtual kinematic chain with trajectory
/// optimization. `base` is the start pose of the robot base.
pub fn plan_task_vkc(sc: &Scenario, base: [f64; 3], strategy: InitStrategy, clock: &dyn Clock) -> Result<TaskOutcome> {
    let ctx = Ctx::new(sc)?;
    let mut st = ctx.state(sc.start_configuration(base)?);
    let mut phases = Vec::new();
    let mut failure = None;
    for (i, phase) in sc.phases.iter().enumerate() {
        if !phase.kind.is_motion() {
            ctx.apply_discrete(phase, &mut st)?;
            continue;
        }
        let t0 = clock.now_seconds();
        let chain = ctx.chain(&st)?;
        let goal = ctx.goal(phase, &st)?;
        let p = ctx.problem(&chain, &st, goal, ctx.steps(phase))?;
        let seed = ctx.seed_goal(&st, &chain, &p)?;
        let init = ctx.initial_trajectory(phase.init.unwrap_or(strategy), &chain, &p, &seed)?;
        let report = solve(&p, &init, &sc.settings.solver, clock)?;
        let traj = chain.expand(&st.row, &report.trajectory, ctx.world.names())?;
        st.row = traj.last().to_vec();
        phases.push(PhaseResult {
            phase: i,
            kind: phase.kind,
            trajectory: traj,
            status: Some(report.status),
            objective: Some(report.objective),
            iterations: report.iterations,
            planning_time: clock.now_seconds() - t0,
        });
        if report.status != SolveStatus::Converged {
            failure = Some(format!("phase {i} ({}): solver status {}", phase.kind.as_str(), report.status.as_str()));
            break;
        }
    }
    finish(sc, PlannerKind::Vkc, phases, failure)
}

const STITCH_TOLERANCE: f64 = 1e-9;

/// Replay `trajectories` (one per motion phase, world columns) through the
/// scenario and re-evaluate every constraint on every waypoint.
pub fn check_trajectory(sc: &Scenario, trajectories: &[Trajectory]) -> CheckReport {
    let mut report = CheckReport::default();
    if let Err(e) = replay(sc, trajectories, &mut report) {
        report.violations.push(e.to_string());
    }
    report.passed = report.violations.is_empty() && report.phases.iter().all(|p| p.passed);
    report
}

fn replay(sc: &Scenario, trajectories: &[Trajectory], report: &mut CheckReport) -> Result<()> {
    let ctx = Ctx::new(sc)?;
    let Some(first) = trajectories.first() else {
        report.violations.push("no trajectories".into());
        return Ok(());
    };
    for t in trajectories {
        if t.names() != ctx.world.names() {
            report.violations.push("trajectory columns do not match the scenario".into());
            return Ok(());
        }
    }
    let mut st = ctx.state(first.first().to_vec());
    for (o, obj) in sc.objects.iter().enumerate() {
        let v = ctx.object_values(o, &st.row);
        if v.iter().zip(&obj.initial).any(|(a, b)| (a - b).abs() > STITCH_TOLERANCE) {
            report.violations.push(format!("object {} does not start at its initial configuration", obj.name));
        }
    }
    let mut next = 0;
    for (i, phase) in sc.phases.iter().enumerate() {
        let label = format!("phase {i} ({})", phase.kind.as_str());
        if !phase.kind.is_motion() {
            ctx.apply_discrete(phase, &mut st)?;
            continue;
        }
        let Some(traj) = trajectories.get(next) else {
            report.violations.push(format!("{label}: missing trajectory"));
            return Ok(());
        };
        next += 1;
        let gap = traj.first().iter().zip(&st.row).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if gap > STITCH_TOLERANCE {
            report.violations.push(format!("{label}: does not start where the previous phase ended (gap {gap:.3e})"));
        }
        st.row = traj.first().to_vec();
        let chain = ctx.chain(&st)?;
        for c in 0..traj.dof() {
            if chain.columns.contains(&c) {
                continue;
            }
            if traj.rows().any(|r| r[c] != st.row[c]) {
                report.violations.push(format!("{label}: {} moves but is not part of the chain", ctx.world.names[c]));
            }
        }
        let goal = ctx.goal(phase, &st)?;
        let p = ctx.problem(&chain, &st, goal, traj.len())?;
        let r = p.residuals(&chain.project_trajectory(traj)?)?;
        describe_violations(&label, &p, &r, &mut report.violations);
        report.phases.push(PhaseCheck { phase: i, kind: phase.kind, passed: p.satisfied(&r), residuals: r });
        st.row = traj.last().to_vec();
    }
    if next < trajectories.len() {
        report.violations.push(format!("{} trajectories for {} motion phases", trajectories.len(), next));
    }
    Ok(())
}

fn describe_violations(label: &str, p: &TrajectoryProblem, r: &Residuals, out: &mut Vec<String>) {
    if let Some(g) = &p.goal {
        if r.goal > g.tolerance {
            out.push(format!("{label}: goal residual {:.6e} exceeds tolerance {:.6e}", r.goal, g.tolerance));
        }
    }
    if r.closure > p.closure_tolerance {
        out.push(format!("{label}: closure residual {:.6e} exceeds tolerance {:.6e}", r.closure, p.closure_tolerance));
    }
    let tol = p.feasibility_tolerance;
    if r.joint_limit > tol {
        out.push(format!("{label}: joint limit violation {:.6}", r.joint_limit));
    }
    if r.velocity > tol {
        out.push(format!("{label}: velocity violation {:.6} over limit {}", r.velocity, p.vel_limit));
    }
    if r.acceleration > tol {
        out.push(format!("{label}: acceleration violation {:.6} over limit {}", r.acceleration, p.acc_limit));
    }
    if r.collision > p.collision.tolerance {
        match &r.worst_contact {
            Some(h) => out.push(format!(
                "{label}: collision violation {:.6} at t={} between {} and {} (distance {:.4})",
                r.collision,
                h.step + 1,
                h.link,
                h.other,
                h.distance
            )),
            None => out.push(format!("{label}: collision violation {:.6}", r.collision)),
        }
    }
}

/// Base travel, arm joint travel and planning time over a list of world
/// trajectories. Columns are found by name; `robot` is the robot without its
/// virtual base.
pub fn evaluate_metrics(robot: &KinematicTree, trajectories: &[Trajectory], planning_times: &[f64], success: bool) -> Metrics {
    let arm_names: Vec<String> = robot
        .dof_joints()
        .iter()
        .filter(|&&j| robot.joint(j).role == JointRole::Physical)
        .map(|&j| robot.joint(j).name.clone())
        .collect();
    let mut m = Metrics { success, planning_time: planning_times.iter().sum(), ..Metrics::default() };
    for t in trajectories {
        let col = |n: &str| t.names().iter().position(|x| x == n);
        if let (Some(x), Some(y)) = (col(BASE_X_JOINT), col(BASE_Y_JOINT)) {
            for w in 0..t.len() - 1 {
                let (a, b) = (t.row(w), t.row(w + 1));
                m.base_effort += hypot(b[x] - a[x], b[y] - a[y]);
            }
        }
        for c in arm_names.iter().filter_map(|n| col(n)) {
            for w in 0..t.len() - 1 {
                m.arm_effort += (t.row(w + 1)[c] - t.row(w)[c]).abs();
            }
        }
    }
    m
}

#[cfg(test)]
mod tests;
