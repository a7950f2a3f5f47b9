//! JSON documents for kinematic models and task scenarios.
//!
//! Models:
//!
//! ```json
//! { "name": "door", "root": "frame",
//!   "links": [{ "name": "panel",
//!               "geometry": [{ "type": "box", "half_extents": [0.02, 0.43, 0.98],
//!                              "origin": { "xyz": [0, -0.44, 1] } }] }],
//!   "joints": [{ "name": "hinge", "type": "revolute", "parent": "frame", "child": "panel",
//!                "origin": { "xyz": [0, 0.44, 0] }, "axis": [0, 0, -1],
//!                "limits": { "lower": 0, "upper": 1.6 } }] }
//! ```
//!
//! Scenarios reference models by path (relative to the scenario file) or
//! inline, and list objects, obstacles, phases, the start region, planner
//! settings and the baseline goal regions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vkc_core::init::InitStrategy;
use vkc_core::kinematics::AttachJoint;
use vkc_core::model::{Geometry, JointKind, Limits};
use vkc_core::tasks::{GridSpec, ObjectInstance, Obstacle, PhaseGoal, PhaseKind, PlannerSettings, Region, Scenario, TaskPhase};
use vkc_core::{JointSpec, KinematicTree, LinkSpec, Shape, Transform, TreeParts, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] vkc_core::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn schema<T>(msg: impl Into<String>) -> Result<T> {
    Err(FormatError::Schema(msg.into()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDoc {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl PoseDoc {
    pub fn to_transform(&self) -> Transform {
        Transform::from_xyz_rpy(self.xyz, self.rpy)
    }

    pub fn from_transform(t: &Transform) -> Self {
        PoseDoc { xyz: t.translation.to_array(), rpy: t.rotation.to_rpy() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ShapeDoc {
    Sphere { radius: f64 },
    Capsule { radius: f64, half_length: f64 },
    Box { half_extents: [f64; 3] },
}

impl ShapeDoc {
    pub fn to_shape(&self) -> Shape {
        match *self {
            ShapeDoc::Sphere { radius } => Shape::Sphere { radius },
            ShapeDoc::Capsule { radius, half_length } => Shape::Capsule { radius, half_length },
            ShapeDoc::Box { half_extents } => Shape::Box { half_extents: Vec3::from_array(half_extents) },
        }
    }

    pub fn from_shape(s: &Shape) -> Self {
        match *s {
            Shape::Sphere { radius } => ShapeDoc::Sphere { radius },
            Shape::Capsule { radius, half_length } => ShapeDoc::Capsule { radius, half_length },
            Shape::Box { half_extents } => ShapeDoc::Box { half_extents: half_extents.to_array() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryDoc {
    #[serde(flatten)]
    pub shape: ShapeDoc,
    #[serde(default)]
    pub origin: PoseDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub geometry: Vec<GeometryDoc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsDoc {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKindDoc {
    Revolute,
    Prismatic,
    Fixed,
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKindDoc,
    pub parent: String,
    pub child: String,
    #[serde(default)]
    pub origin: PoseDoc,
    #[serde(default = "z_axis")]
    pub axis: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub name: String,
    pub root: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<PoseDoc>,
    pub links: Vec<LinkDoc>,
    #[serde(default)]
    pub joints: Vec<JointDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allowed_collisions: Vec<[String; 2]>,
}

impl ModelDoc {
    pub fn to_parts(&self) -> TreeParts {
        let mut parts = TreeParts::new(self.name.clone(), self.root.clone());
        parts.anchor = self.anchor.as_ref().map(PoseDoc::to_transform);
        for l in &self.links {
            let mut link = LinkSpec::new(l.name.clone());
            for g in &l.geometry {
                link = link.with_geom(g.shape.to_shape(), g.origin.to_transform());
            }
            parts.links.push(link);
        }
        for j in &self.joints {
            let kind = match j.kind {
                JointKindDoc::Revolute => JointKind::Revolute,
                JointKindDoc::Prismatic => JointKind::Prismatic,
                JointKindDoc::Fixed => JointKind::Fixed,
            };
            let mut spec = JointSpec::new(j.name.clone(), kind, j.parent.clone(), j.child.clone(), j.origin.to_transform())
                .with_axis(Vec3::from_array(j.axis));
            if let Some(l) = j.limits {
                spec.limits = Some(Limits::new(l.lower, l.upper));
            }
            parts.joints.push(spec);
        }
        parts.allowed_collisions = self.allowed_collisions.iter().map(|[a, b]| (a.clone(), b.clone())).collect();
        parts
    }

    pub fn to_tree(&self) -> Result<KinematicTree> {
        Ok(KinematicTree::new(self.to_parts())?)
    }

    pub fn from_tree(tree: &KinematicTree) -> Self {
        let p = tree.parts();
        ModelDoc {
            name: p.name.clone(),
            root: p.root.clone(),
            anchor: p.anchor.as_ref().map(PoseDoc::from_transform),
            links: p
                .links
                .iter()
                .map(|l| LinkDoc {
                    name: l.name.clone(),
                    geometry: l
                        .geoms
                        .iter()
                        .map(|g: &Geometry| GeometryDoc {
                            shape: ShapeDoc::from_shape(&g.shape),
                            origin: PoseDoc::from_transform(&g.origin),
                        })
                        .collect(),
                })
                .collect(),
            joints: p
                .joints
                .iter()
                .map(|j| JointDoc {
                    name: j.name.clone(),
                    kind: match j.kind {
                        JointKind::Revolute => JointKindDoc::Revolute,
                        JointKind::Prismatic => JointKindDoc::Prismatic,
                        JointKind::Fixed => JointKindDoc::Fixed,
                    },
                    parent: j.parent.clone(),
                    child: j.child.clone(),
                    origin: PoseDoc::from_transform(&j.origin),
                    axis: j.axis.to_array(),
                    limits: j.limits.map(|l| LimitsDoc { lower: l.lower, upper: l.upper }),
                })
                .collect(),
            allowed_collisions: p.allowed_collisions.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
        }
    }
}

/// A model given inline or as a path relative to the referencing file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(String),
    Inline(ModelDoc),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDoc {
    pub model: ModelRef,
    pub ee_link: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_start: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachDoc {
    #[default]
    Fixed,
    Revolute([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub name: String,
    pub model: ModelRef,
    /// World pose of the model root; overrides the model's own anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<PoseDoc>,
    pub attach_link: String,
    pub grasp: PoseDoc,
    #[serde(default)]
    pub joint: AttachDoc,
    #[serde(default)]
    pub fixed_base: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleDoc {
    pub name: String,
    #[serde(flatten)]
    pub shape: ShapeDoc,
    #[serde(default)]
    pub pose: PoseDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalDoc {
    Grasp,
    Joints(BTreeMap<String, f64>),
    Pose { link: String, target: PoseDoc },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDoc {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDoc {
    pub mu0: Option<f64>,
    pub penalty_scale: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub trust_init: Option<f64>,
    pub trust_shrink: Option<f64>,
    pub trust_expand: Option<f64>,
    pub trust_max: Option<f64>,
    pub accept_ratio: Option<f64>,
    pub xtol: Option<f64>,
    pub ftol: Option<f64>,
    pub collision_buffer: Option<f64>,
    pub collision_margin: Option<f64>,
    pub qp_max_iterations: Option<usize>,
    pub qp_tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub resolution: Option<f64>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub origin: Option<[f64; 2]>,
    pub inflation: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsDoc {
    pub steps: Option<usize>,
    pub init: Option<String>,
    pub vel_limit: Option<f64>,
    pub acc_limit: Option<f64>,
    pub dist_safe: Option<f64>,
    pub collision_tolerance: Option<f64>,
    pub closure_tolerance: Option<f64>,
    pub goal_tolerance: Option<f64>,
    pub feasibility_tolerance: Option<f64>,
    pub base_weight: Option<f64>,
    pub vel_weight: Option<f64>,
    pub acc_weight: Option<f64>,
    pub approach_offset: Option<f64>,
    pub standoff: Option<f64>,
    pub seed_clearance: Option<f64>,
    pub refine_radius: Option<f64>,
    pub ik_restarts: Option<usize>,
    #[serde(default)]
    pub grid: GridDoc,
    #[serde(default)]
    pub solver: SolverDoc,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl SettingsDoc {
    pub fn to_settings(&self) -> Result<PlannerSettings> {
        let mut s = PlannerSettings::default();
        set!(s.steps, self.steps);
        if let Some(i) = &self.init {
            s.init = parse_init(i, "settings.init")?;
        }
        set!(s.vel_limit, self.vel_limit);
        set!(s.acc_limit, self.acc_limit);
        set!(s.dist_safe, self.dist_safe);
        set!(s.collision_tolerance, self.collision_tolerance);
        set!(s.closure_tolerance, self.closure_tolerance);
        set!(s.goal_tolerance, self.goal_tolerance);
        set!(s.feasibility_tolerance, self.feasibility_tolerance);
        set!(s.base_weight, self.base_weight);
        set!(s.vel_weight, self.vel_weight);
        set!(s.acc_weight, self.acc_weight);
        set!(s.approach_offset, self.approach_offset);
        set!(s.standoff, self.standoff);
        set!(s.seed_clearance, self.seed_clearance);
        set!(s.refine_radius, self.refine_radius);
        set!(s.ik.restarts, self.ik_restarts);
        let g = &self.grid;
        let mut grid = GridSpec::default();
        set!(grid.resolution, g.resolution);
        set!(grid.width, g.width);
        set!(grid.height, g.height);
        if let Some([x, y]) = g.origin {
            grid.origin = (x, y);
        }
        set!(grid.inflation, g.inflation);
        s.grid = grid;
        let v = &self.solver;
        let p = &mut s.solver;
        set!(p.mu0, v.mu0);
        set!(p.penalty_scale, v.penalty_scale);
        set!(p.max_outer, v.max_outer);
        set!(p.max_inner, v.max_inner);
        set!(p.trust_init, v.trust_init);
        set!(p.trust_shrink, v.trust_shrink);
        set!(p.trust_expand, v.trust_expand);
        set!(p.trust_max, v.trust_max);
        set!(p.accept_ratio, v.accept_ratio);
        set!(p.xtol, v.xtol);
        set!(p.ftol, v.ftol);
        set!(p.collision_buffer, v.collision_buffer);
        set!(p.collision_margin, v.collision_margin);
        set!(p.qp.max_iterations, v.qp_max_iterations);
        set!(p.qp.tolerance, v.qp_tolerance);
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub robot: RobotDoc,
    #[serde(default)]
    pub objects: Vec<ObjectDoc>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleDoc>,
    pub phases: Vec<PhaseDoc>,
    pub start_region: RegionDoc,
    #[serde(default)]
    pub settings: SettingsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_regions: Option<Vec<RegionDoc>>,
}

pub fn parse_init(s: &str, field: &str) -> Result<InitStrategy> {
    InitStrategy::parse(s).ok_or_else(|| {
        FormatError::Schema(format!("{field}: unknown initialization \"{s}\" (expected stationary, interpolated or astar)"))
    })
}

fn region(r: &RegionDoc, field: &str) -> Result<Region> {
    Region::new(r.min, r.max).map_err(|_| FormatError::Schema(format!("{field}: region is empty")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|source| FormatError::Json { path: path.to_path_buf(), source })
}

fn read_value(path: &Path) -> Result<Value> {
    serde_json::from_str(&read(path)?).map_err(|source| FormatError::Json { path: path.to_path_buf(), source })
}

pub fn load_model(path: &Path) -> Result<KinematicTree> {
    let doc: ModelDoc = parse_json(path, read_value(path)?)?;
    doc.to_tree()
}

fn resolve_model(r: &ModelRef, base: &Path, field: &str) -> Result<KinematicTree> {
    match r {
        ModelRef::Inline(doc) => doc.to_tree().map_err(|e| FormatError::Schema(format!("{field}: {e}"))),
        ModelRef::Path(p) => {
            let path = base.join(p);
            match load_model(&path) {
                Ok(t) => Ok(t),
                Err(FormatError::Core(e)) => schema(format!("{field} ({}): {e}", path.display())),
                Err(FormatError::Io { source, .. }) => schema(format!("{field}: cannot read {}: {source}", path.display())),
                Err(e) => Err(e),
            }
        }
    }
}

/// Set `value` at a dotted path such as `settings.solver.max_inner`,
/// creating intermediate objects. The value is parsed as JSON when possible
/// and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, path: &str, value: &str) -> Result<()> {
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return schema(format!("invalid override path \"{path}\""));
    }
    let mut cur = doc;
    for (i, k) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(k.to_string(), parsed);
                    return Ok(());
                }
                map.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize =
                    k.parse().map_err(|_| FormatError::Schema(format!("override {path}: \"{k}\" is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| FormatError::Schema(format!("override {path}: index {idx} out of range ({len})")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return schema(format!("override {path}: \"{k}\" is not inside an object")),
        };
    }
    Ok(())
}

/// Parse `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => schema(format!("override \"{s}\" is not of the form key=value")),
    }
}

/// Read a scenario file, apply `key=value` overrides and resolve it.
pub fn load_scenario(path: &Path, overrides: &[(String, String)]) -> Result<Scenario> {
    let mut value = read_value(path)?;
    for (k, v) in overrides {
        apply_override(&mut value, k, v)?;
    }
    let doc: ScenarioDoc = parse_json(path, value)?;
    let base = path.parent().unwrap_or(Path::new("."));
    scenario_from_doc(&doc, base)
}

pub fn scenario_from_doc(doc: &ScenarioDoc, base: &Path) -> Result<Scenario> {
    let robot = resolve_model(&doc.robot.model, base, "robot.model")?;
    if robot.link_index(&doc.robot.ee_link).is_none() {
        return schema(format!("robot.ee_link: unknown link \"{}\"", doc.robot.ee_link));
    }
    let arm_start = doc.robot.arm_start.clone().unwrap_or_else(|| vec![0.0; robot.dof()]);
    if arm_start.len() != robot.dof() {
        return schema(format!("robot.arm_start: expected {} values, got {}", robot.dof(), arm_start.len()));
    }
    let mut objects = Vec::new();
    for (i, o) in doc.objects.iter().enumerate() {
        let field = format!("objects[{i}]");
        let mut model = resolve_model(&o.model, base, &format!("{field}.model"))?;
        if let Some(a) = &o.anchor {
            model = model.with_anchor(a.to_transform());
        }
        if model.link_index(&o.attach_link).is_none() {
            return schema(format!("{field}.attach_link: unknown link \"{}\"", o.attach_link));
        }
        let joint = match o.joint {
            AttachDoc::Fixed => AttachJoint::Fixed,
            AttachDoc::Revolute(a) => AttachJoint::Revolute { axis: Vec3::from_array(a) },
        };
        let mut obj =
            ObjectInstance::new(o.name.clone(), model, o.attach_link.clone(), o.grasp.to_transform(), joint, o.fixed_base)?;
        if let Some(init) = &o.initial {
            if init.len() != obj.model.dof() {
                return schema(format!("{field}.initial: expected {} values, got {}", obj.model.dof(), init.len()));
            }
            obj = obj.with_initial(init.clone());
        }
        objects.push(obj);
    }
    let obstacles = doc
        .obstacles
        .iter()
        .map(|o| Obstacle { name: o.name.clone(), shape: o.shape.to_shape(), pose: o.pose.to_transform() })
        .collect();
    let mut phases = Vec::new();
    for (i, p) in doc.phases.iter().enumerate() {
        let field = format!("phases[{i}]");
        let kind = PhaseKind::parse(&p.kind).ok_or_else(|| {
            FormatError::Schema(format!(
                "{field}.kind: unknown phase kind \"{}\" (expected reach, attach, manipulate or detach)",
                p.kind
            ))
        })?;
        if let Some(o) = &p.object {
            if !doc.objects.iter().any(|d| &d.name == o) {
                return schema(format!("{field}.object: unknown object \"{o}\""));
            }
        }
        let goal = match &p.goal {
            None if kind == PhaseKind::Reach && p.object.is_some() => PhaseGoal::Grasp,
            None => PhaseGoal::None,
            Some(GoalDoc::Grasp) => PhaseGoal::Grasp,
            Some(GoalDoc::Joints(m)) => PhaseGoal::Joints(m.iter().map(|(k, v)| (k.clone(), *v)).collect()),
            Some(GoalDoc::Pose { link, target }) => PhaseGoal::Pose { link: link.clone(), target: target.to_transform() },
        };
        let init = match &p.init {
            Some(s) => Some(parse_init(s, &format!("{field}.init"))?),
            None => None,
        };
        phases.push(TaskPhase { kind, object: p.object.clone(), goal, tolerance: p.tolerance, steps: p.steps, init });
    }
    let baseline_regions = match &doc.baseline_regions {
        Some(rs) => {
            Some(rs.iter().enumerate().map(|(i, r)| region(r, &format!("baseline_regions[{i}]"))).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let scenario = Scenario {
        name: doc.name.clone(),
        robot,
        ee_link: doc.robot.ee_link.clone(),
        arm_start,
        objects,
        obstacles,
        phases,
        start_region: region(&doc.start_region, "start_region")?,
        seed: doc.seed,
        settings: doc.settings.to_settings()?,
        baseline_regions,
    };
    scenario.validate().map_err(|e| FormatError::Schema(e.to_string()))?;
    Ok(scenario)
}
