use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn vkc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vkc")).args(args).env_remove("VKC_OUT_DIR").output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn plan_door_writes_outputs_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let door = fixture("door_task.json");
    let o = vkc(&["plan", "--scenario", door.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).trim(), "success");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["success"], true);
    assert_eq!(report["seed"], 1);
    let phases = report["phases"].as_array().unwrap();
    assert_eq!(phases.len(), 2);
    assert!(phases.iter().all(|p| p["status"] == "converged"));

    // the written trajectory passes an independent check
    let traj = dir.path().join("trajectory.csv");
    let o = vkc(&["check", "--scenario", door.to_str().unwrap(), "--trajectory", traj.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stdout));
    assert_eq!(text(&o.stdout).lines().last(), Some("pass"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vkc"))
        .args(["plan", "--scenario", fixture("narrow_door.json").to_str().unwrap()])
        .env("VKC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn malformed_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"name\": \"x\", ").unwrap();
    let o = vkc(&["plan", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).starts_with("error:"));
}

#[test]
fn unknown_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = vkc(&[
        "plan",
        "--scenario",
        fixture("narrow_door.json").to_str().unwrap(),
        "--set",
        "colour=red",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("colour"), "{}", text(&o.stderr));
}

#[test]
fn baseline_without_regions_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = vkc(&[
        "plan",
        "--scenario",
        fixture("stick_arena1.json").to_str().unwrap(),
        "--planner",
        "b1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("baseline_regions"), "{}", text(&o.stderr));
}

#[test]
fn unknown_planner_and_init_exit_2() {
    let door = fixture("door_task.json");
    for extra in [["--planner", "rrt"], ["--init", "random"]] {
        let mut args = vec!["plan", "--scenario", door.to_str().unwrap()];
        args.extend(extra);
        assert_eq!(vkc(&args).status.code(), Some(2));
    }
}

#[test]
fn check_rejects_wrong_column_count() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.csv");
    std::fs::write(&f, "phase,t,base_x,base_y,base_theta,j1,j2,j3,j4,j5,j6\n0,0,0,0,0,0,0,0,0,0,0\n0,1,0,0,0,0,0\n").unwrap();
    let o = vkc(&["check", "--scenario", fixture("narrow_door.json").to_str().unwrap(), "--trajectory", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("line 3"), "{}", text(&o.stderr));
}

#[test]
fn check_reports_rate_violations_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.csv");
    let mut csv = String::from("phase,t,base_x,base_y,base_theta,j1,j2,j3,j4,j5,j6\n");
    for t in 0..4 {
        csv.push_str(&format!("0,{t},{:.1},0,0,0,0,0,0,0,0\n", -2.0 + t as f64));
    }
    std::fs::write(&f, csv).unwrap();
    let o = vkc(&["check", "--scenario", fixture("narrow_door.json").to_str().unwrap(), "--trajectory", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = text(&o.stdout);
    assert!(out.contains("velocity violation"), "{out}");
    assert_eq!(out.lines().last(), Some("fail"));
}

#[test]
fn fk_prints_fixed_decimal_poses() {
    let door = fixture("door.json");
    let o = vkc(&["fk", "--model", door.to_str().unwrap(), "0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = text(&o.stdout);
    assert!(
        out.lines().any(|l| l == "panel 0.000000000 0.440000000 0.000000000 1.000000000 0.000000000 0.000000000 0.000000000"),
        "{out}"
    );
    let again = vkc(&["fk", "--model", door.to_str().unwrap(), "0"]);
    assert_eq!(again.stdout, o.stdout);
    let turned = text(&vkc(&["fk", "--model", door.to_str().unwrap(), "--", "-0.5"]).stdout);
    assert!(turned.lines().all(|l| !l.contains(" -0.000000000")), "{turned}");
}

#[test]
fn fk_with_wrong_length_exits_2() {
    let o = vkc(&["fk", "--model", fixture("door.json").to_str().unwrap(), "0", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("1 joints, got 2"));
}

#[test]
fn batch_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = fixture("narrow_door.json");
    for d in [&a, &b] {
        let o = vkc(&["batch", "--scenario", sc.to_str().unwrap(), "--trials", "3", "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("batch_vkc_astar.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(text(&read(&a)).lines().count(), 5);
}

#[test]
fn zero_trials_is_rejected() {
    let o = vkc(&["batch", "--scenario", fixture("narrow_door.json").to_str().unwrap(), "--trials", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
