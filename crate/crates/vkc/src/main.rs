use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vkc::format::{self, FormatError};
use vkc::run::{self, Trial};
use vkc::trajectory;
use vkc_core::init::InitStrategy;
use vkc_core::kinematics::forward_kinematics;
use vkc_core::tasks::{check_trajectory, PlannerKind, Scenario};

#[derive(Parser)]
#[command(name = "vkc", version, about = "Plan mobile manipulation tasks on virtual kinematic chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one trial; writes trajectory.csv and report.json.
    Plan(RunArgs),
    /// Run seeded trials; writes batch_<planner>_<init>.csv.
    Batch(BatchArgs),
    /// Check a trajectory file against a scenario.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the world pose of every link.
    Fk {
        #[arg(long)]
        model: PathBuf,
        /// Joint values in configuration order.
        #[arg(allow_negative_numbers = true)]
        q: Vec<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// vkc, b1 or b2.
    #[arg(long, default_value = "vkc")]
    planner: String,
    /// stationary, interpolated or astar; defaults to the scenario's setting.
    #[arg(long)]
    init: Option<String>,
    /// Defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "VKC_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Dotted-path override of a scenario field, e.g. settings.steps=40.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Report measured planning times instead of zeros.
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
}

/// Exit 2: the input could not be used.
struct ConfigError(String);

impl From<FormatError> for ConfigError {
    fn from(e: FormatError) -> Self {
        ConfigError(e.to_string())
    }
}

type Outcome = Result<bool, ConfigError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(&a),
        Command::Batch(a) => cmd_batch(&a),
        Command::Check { scenario, trajectory, overrides } => cmd_check(&scenario, &trajectory, &overrides),
        Command::Fk { model, q } => cmd_fk(&model, &q),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<Scenario, ConfigError> {
    let pairs = overrides.iter().map(|s| format::parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    Ok(format::load_scenario(path, &pairs)?)
}

fn setup(a: &RunArgs) -> Result<(Scenario, PlannerKind, InitStrategy, u64), ConfigError> {
    let sc = load(&a.scenario, &a.overrides)?;
    let planner = PlannerKind::parse(&a.planner)
        .ok_or_else(|| ConfigError(format!("--planner: unknown planner \"{}\" (expected vkc, b1 or b2)", a.planner)))?;
    let init = match &a.init {
        Some(s) => format::parse_init(s, "--init")?,
        None => sc.settings.init,
    };
    run::check_config(&sc, planner).map_err(ConfigError)?;
    let seed = a.seed.unwrap_or(sc.seed);
    std::fs::create_dir_all(&a.out).map_err(|e| ConfigError(format!("{}: {e}", a.out.display())))?;
    Ok((sc, planner, init, seed))
}

fn create(path: &Path) -> Result<BufWriter<File>, ConfigError> {
    File::create(path).map(BufWriter::new).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

fn cmd_plan(a: &RunArgs) -> Outcome {
    let (sc, planner, init, seed) = setup(a)?;
    let trial: Trial = run::run_trial(&sc, planner, init, seed, a.wall_time);
    if let Ok(o) = &trial.outcome {
        let path = a.out.join("trajectory.csv");
        trajectory::write_csv(create(&path)?, &run::phase_trajectories(o))
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    }
    let path = a.out.join("report.json");
    serde_json::to_writer_pretty(create(&path)?, &run::report(&sc, &trial))
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    match trial.failure() {
        None if trial.success() => println!("success"),
        reason => println!("failure: {}", reason.unwrap_or_default()),
    }
    Ok(trial.success())
}

fn cmd_batch(a: &BatchArgs) -> Outcome {
    let (sc, planner, init, seed) = setup(&a.run)?;
    let trials = run::run_batch(&sc, planner, init, seed, a.trials as usize, a.run.wall_time);
    let path = a.run.out.join(format!("batch_{}_{}.csv", planner.as_str(), init.as_str()));
    run::write_batch_csv(create(&path)?, &trials).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let ok = trials.iter().filter(|t| t.success()).count();
    println!("{ok}/{} succeeded; wrote {}", trials.len(), path.display());
    Ok(true)
}

fn cmd_check(scenario: &Path, traj: &Path, overrides: &[String]) -> Outcome {
    let sc = load(scenario, overrides)?;
    let file = File::open(traj).map_err(|e| ConfigError(format!("{}: {e}", traj.display())))?;
    let phases = trajectory::read_csv(file).map_err(|e| ConfigError(format!("{}: {e}", traj.display())))?;
    let trajs: Vec<_> = phases.into_iter().map(|p| p.trajectory).collect();
    let report = check_trajectory(&sc, &trajs);
    for p in &report.phases {
        let r = &p.residuals;
        println!(
            "phase {} ({}): goal {:.3e} closure {:.3e} limits {:.3e} velocity {:.3e} acceleration {:.3e} collision {:.3e} {}",
            p.phase,
            p.kind.as_str(),
            r.goal,
            r.closure,
            r.joint_limit,
            r.velocity,
            r.acceleration,
            r.collision,
            if p.passed { "ok" } else { "FAIL" }
        );
    }
    for v in &report.violations {
        println!("{v}");
    }
    println!("{}", if report.passed { "pass" } else { "fail" });
    Ok(report.passed)
}

fn cmd_fk(model: &Path, q: &[f64]) -> Outcome {
    let tree = format::load_model(model)?;
    if q.len() != tree.dof() {
        return Err(ConfigError(format!("model \"{}\" has {} joints, got {} values", tree.name(), tree.dof(), q.len())));
    }
    let frames = forward_kinematics(&tree, q).map_err(|e| ConfigError(e.to_string()))?;
    for (name, t) in frames.iter() {
        let p = t.translation;
        let r = t.rotation;
        let cols: Vec<String> = [p.x, p.y, p.z, r.w, r.x, r.y, r.z].iter().map(|&v| trajectory::fixed(v, 9)).collect();
        println!("{name} {}", cols.join(" "));
    }
    Ok(true)
}
