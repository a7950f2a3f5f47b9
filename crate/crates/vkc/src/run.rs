//! Seeded trials, reports and batch summaries.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vkc_core::init::InitStrategy;
use vkc_core::tasks::{plan_task_b1, plan_task_b2, plan_task_vkc, PlannerKind, Scenario, TaskOutcome};
use vkc_core::trajopt::Residuals;
use vkc_core::{Clock, NullClock, WallClock};

use crate::trajectory::PhaseTrajectory;

/// Start pose and baseline base goals drawn for one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSample {
    pub seed: u64,
    pub start: [f64; 3],
    pub base_goals: Vec<[f64; 3]>,
}

/// Draw the start pose, then one baseline goal per region. The start does
/// not depend on the planner, so all planners see the same starts.
pub fn sample_trial(sc: &Scenario, seed: u64) -> TrialSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || -> [f64; 3] { [rng.gen(), rng.gen(), rng.gen()] };
    let start = sc.start_region.at(unit());
    let base_goals = sc.baseline_regions.iter().flatten().map(|r| r.at(unit())).collect();
    TrialSample { seed, start, base_goals }
}

/// Problems that make a run impossible to start (as opposed to a failed plan).
pub fn check_config(sc: &Scenario, planner: PlannerKind) -> Result<(), String> {
    if planner != PlannerKind::Vkc && sc.baseline_regions.is_none() {
        return Err(format!("scenario \"{}\": planner {} requires baseline_regions", sc.name, planner.as_str()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trial {
    pub sample: TrialSample,
    pub planner: PlannerKind,
    pub init: InitStrategy,
    /// `Err` when the planner rejected its input.
    pub outcome: Result<TaskOutcome, String>,
}

impl Trial {
    pub fn success(&self) -> bool {
        self.outcome.as_ref().is_ok_and(|o| o.metrics.success)
    }

    pub fn failure(&self) -> Option<String> {
        match &self.outcome {
            Ok(o) => o.failure.clone(),
            Err(e) => Some(e.clone()),
        }
    }
}

pub fn run_trial(sc: &Scenario, planner: PlannerKind, init: InitStrategy, seed: u64, wall_time: bool) -> Trial {
    let sample = sample_trial(sc, seed);
    let wall = WallClock::new();
    let clock: &dyn Clock = if wall_time { &wall } else { &NullClock };
    let outcome = match planner {
        PlannerKind::Vkc => plan_task_vkc(sc, sample.start, init, clock),
        PlannerKind::B1 => plan_task_b1(sc, sample.start, &sample.base_goals, clock),
        PlannerKind::B2 => plan_task_b2(sc, sample.start, &sample.base_goals, clock),
    }
    .map_err(|e| e.to_string());
    Trial { sample, planner, init, outcome }
}

pub fn phase_trajectories(outcome: &TaskOutcome) -> Vec<PhaseTrajectory> {
    outcome.phases.iter().map(|p| PhaseTrajectory { phase: p.phase, trajectory: p.trajectory.clone() }).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualsDoc {
    pub goal: f64,
    pub closure: f64,
    pub joint_limit: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub collision: f64,
}

impl From<&Residuals> for ResidualsDoc {
    fn from(r: &Residuals) -> Self {
        ResidualsDoc {
            goal: r.goal,
            closure: r.closure,
            joint_limit: r.joint_limit,
            velocity: r.velocity,
            acceleration: r.acceleration,
            collision: r.collision,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseDoc {
    pub phase: usize,
    pub kind: &'static str,
    pub status: Option<&'static str>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub planning_time: f64,
    pub residuals: Option<ResidualsDoc>,
    pub check_passed: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsDoc {
    pub success: bool,
    pub base_effort: f64,
    pub arm_effort: f64,
    pub planning_time: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub planner: &'static str,
    pub init: &'static str,
    pub start: [f64; 3],
    pub base_goals: Vec<[f64; 3]>,
    pub success: bool,
    pub failure: Option<String>,
    pub metrics: Option<MetricsDoc>,
    pub phases: Vec<PhaseDoc>,
    pub violations: Vec<String>,
}

pub fn report(sc: &Scenario, trial: &Trial) -> Report {
    let mut r = Report {
        scenario: sc.name.clone(),
        seed: trial.sample.seed,
        planner: trial.planner.as_str(),
        init: trial.init.as_str(),
        start: trial.sample.start,
        base_goals: trial.sample.base_goals.clone(),
        success: trial.success(),
        failure: trial.failure(),
        metrics: None,
        phases: Vec::new(),
        violations: Vec::new(),
    };
    if let Ok(o) = &trial.outcome {
        let m = &o.metrics;
        r.metrics = Some(MetricsDoc {
            success: m.success,
            base_effort: m.base_effort,
            arm_effort: m.arm_effort,
            planning_time: m.planning_time,
        });
        r.phases = o
            .phases
            .iter()
            .map(|p| {
                let check = o.check.phases.iter().find(|c| c.phase == p.phase);
                PhaseDoc {
                    phase: p.phase,
                    kind: p.kind.as_str(),
                    status: p.status.map(|s| s.as_str()),
                    objective: p.objective,
                    iterations: p.iterations,
                    planning_time: p.planning_time,
                    residuals: check.map(|c| (&c.residuals).into()),
                    check_passed: check.map(|c| c.passed),
                }
            })
            .collect();
        r.violations = o.check.violations.clone();
    }
    r
}

pub const BATCH_HEADER: [&str; 11] = [
    "seed",
    "planner",
    "init",
    "success",
    "base_effort",
    "arm_effort",
    "planning_time",
    "failure_reason",
    "base_effort_std",
    "arm_effort_std",
    "planning_time_std",
];

fn f6(v: f64) -> String {
    crate::trajectory::fixed(v, 6)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// One row per trial in seed order, then a `summary` row holding the success
/// rate and the mean and population standard deviation of each metric.
pub fn write_batch_csv<W: Write>(out: W, trials: &[Trial]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BATCH_HEADER)?;
    let mut cols: [Vec<f64>; 3] = Default::default();
    for t in trials {
        let m = t.outcome.as_ref().map(|o| o.metrics).unwrap_or_default();
        cols[0].push(m.base_effort);
        cols[1].push(m.arm_effort);
        cols[2].push(m.planning_time);
        w.write_record([
            t.sample.seed.to_string(),
            t.planner.as_str().to_string(),
            t.init.as_str().to_string(),
            (t.success() as u8).to_string(),
            f6(m.base_effort),
            f6(m.arm_effort),
            f6(m.planning_time),
            t.failure().unwrap_or_default(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    let rate = if trials.is_empty() { 0.0 } else { trials.iter().filter(|t| t.success()).count() as f64 / trials.len() as f64 };
    let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_std(c)).collect();
    let (planner, init) = trials.first().map_or(("", ""), |t| (t.planner.as_str(), t.init.as_str()));
    w.write_record([
        "summary".to_string(),
        planner.to_string(),
        init.to_string(),
        f6(rate),
        f6(stats[0].0),
        f6(stats[1].0),
        f6(stats[2].0),
        String::new(),
        f6(stats[0].1),
        f6(stats[1].1),
        f6(stats[2].1),
    ])?;
    w.flush()?;
    Ok(())
}

/// Trials `seed, seed + 1, ...`, run in order.
pub fn run_batch(
    sc: &Scenario,
    planner: PlannerKind,
    init: InitStrategy,
    seed: u64,
    trials: usize,
    wall_time: bool,
) -> Vec<Trial> {
    (0..trials as u64).map(|i| run_trial(sc, planner, init, seed.wrapping_add(i), wall_time)).collect()
}
