use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_combicbf"));
    c.env_remove("COMBICBF_OUT_DIR");
    c
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/demo-{name}.json"))
}

fn exec(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn write_json(dir: &Path, file: &str, v: &Value) -> PathBuf {
    let p = dir.join(file);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn corner_doc() -> Value {
    serde_json::from_str(&std::fs::read_to_string(shipped("corner")).unwrap()).unwrap()
}

fn one_dim(name: &str, primitives: Value, logic: Value, x0: f64) -> Value {
    json!({
        "version": 1,
        "name": name,
        "system": {"single_integrator": {"agents": 1, "dim": 1}},
        "primitives": primitives,
        "logic": logic,
        "desired": {"constant": [0.5]},
        "initial_state": [x0],
        "sim": {"dt": 0.01, "horizon": 0.5}
    })
}

fn hs(a: f64, b: f64) -> Value {
    json!({"halfspace": {"a": [a], "b": b}})
}

#[test]
fn count_reports_rows_and_naive_combinations() {
    let (code, out, _) = exec(bin().arg("count").arg(shipped("patrol")));
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "132 rows vs 5448 naive combinations");

    let dir = tempfile::tempdir().unwrap();
    let flat = one_dim(
        "flat",
        json!([hs(1.0, 1.0), hs(1.0, 2.0), hs(-1.0, 1.0)]),
        json!({"choose": 2, "of": [{"leaf": 0}, {"leaf": 1}, {"leaf": 2}]}),
        0.0,
    );
    let p = write_json(dir.path(), "flat.json", &flat);
    let (code, out, _) = exec(bin().arg("count").arg(&p));
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "3 rows vs 4 naive combinations");

    let single = one_dim("single", json!([hs(1.0, 1.0)]), json!({"leaf": 0}), 0.0);
    let p = write_json(dir.path(), "single.json", &single);
    assert_eq!(exec(bin().arg("count").arg(&p)).1.trim(), "1 rows vs 1 naive combinations");
}

#[test]
fn invalid_tree_exits_one_naming_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = corner_doc();
    doc["logic"] = json!({"choose": 1, "of": [{"choose": 3, "of": [{"leaf": 0}, {"leaf": 1}]}, {"leaf": 0}]});
    let p = write_json(dir.path(), "bad.json", &doc);
    let (code, _, err) = exec(bin().arg("run").arg(&p).arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 1);
    assert!(err.contains("$.of[0]") && err.contains("3 > 2"), "{err}");
    assert!(!dir.path().join("corner.jsonl").exists());
}

#[test]
fn parse_errors_carry_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    std::fs::write(&p, "{\"version\": 1,\n  \"name\": }").unwrap();
    let (code, _, err) = exec(bin().arg("run").arg(&p));
    assert_eq!(code, 1);
    assert!(err.contains("line 2"), "{err}");

    let mut doc = corner_doc();
    doc["sim"]["dt"] = json!("fast");
    let p = write_json(dir.path(), "typed.json", &doc);
    let (code, _, err) = exec(bin().arg("run").arg(&p));
    assert_eq!(code, 1);
    assert!(err.contains("sim.dt"), "{err}");

    let (code, _, err) = exec(bin().arg("run").arg(shipped("corner")).arg("--set").arg("sim.horizon=-1"));
    assert_eq!(code, 1);
    assert!(err.contains("sim.horizon"), "{err}");

    let (code, _, _) = exec(bin().arg("run").arg("--no-such-flag"));
    assert_eq!(code, 1);
}

#[test]
fn surveillance_run_is_clean_with_two_in_the_disc() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = exec(bin().arg("run").arg(shipped("surveillance")).arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 0);
    assert!(out.contains("region disc min count 2"), "{out}");
    assert!(dir.path().join("surveillance.jsonl").exists());
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("surveillance.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["region_min_counts"][0]["min_count"], 2);
    assert_eq!(summary["steps"], 2000);
}

#[test]
fn patrol_run_reports_rows_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("p.jsonl");
    let (code, out, _) = exec(bin().arg("run").arg(shipped("patrol")).arg("--out").arg(&out_path));
    assert_eq!(code, 0);
    assert!(out.contains("132 rows/step"), "{out}");
    assert!(out.contains("region L1 min count 4") && out.contains("region L2 min count 4"));
    assert!(dir.path().join("p.summary.json").exists());
}

#[test]
fn run_then_audit_is_clean_for_every_demo() {
    let dir = tempfile::tempdir().unwrap();
    for name in combicbf::sim::demos::DEMO_NAMES {
        for format in ["jsonl", "csv"] {
            let traj = dir.path().join(format!("{name}.{format}"));
            let (code, _, err) = exec(bin().args(["demo", name, "-q", "--format", format]).arg("--out").arg(&traj));
            assert_eq!(code, 0, "{name}: {err}");
            let (code, out, _) = exec(bin().arg("audit").arg("-t").arg(&traj).arg(shipped(name)));
            assert_eq!(code, 0, "{name} {format}: {out}");
        }
    }
}

#[test]
fn tampered_log_is_flagged_at_the_edited_step() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("rect.jsonl");
    let (code, _, _) = exec(bin().arg("run").arg(shipped("rectangle")).arg("-q").arg("--out").arg(&traj));
    assert_eq!(code, 0);

    let text = std::fs::read_to_string(&traj).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut rec: Value = serde_json::from_str(&lines[301]).unwrap();
    assert_eq!(rec["step"], 300);
    rec["x"] = json!([3.0, 0.0]);
    lines[301] = serde_json::to_string(&rec).unwrap();
    std::fs::write(&traj, lines.join("\n") + "\n").unwrap();

    let (code, out, _) = exec(bin().arg("audit").arg("-t").arg(&traj).arg(shipped("rectangle")));
    assert_eq!(code, 2);
    assert!(out.contains("step 300 "), "{out}");
}

#[test]
fn audit_rejects_empty_and_mismatched_logs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let (code, _, err) = exec(bin().arg("audit").arg("-t").arg(&empty).arg(shipped("corner")));
    assert_eq!(code, 1);
    assert!(err.contains("empty trajectory"), "{err}");

    let traj = dir.path().join("corner.jsonl");
    exec(bin().arg("run").arg(shipped("corner")).arg("-q").arg("--out").arg(&traj));
    let text = std::fs::read_to_string(&traj).unwrap();
    let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
    assert_ne!(bumped, text);
    std::fs::write(&traj, bumped).unwrap();
    let (code, _, err) = exec(bin().arg("audit").arg("-t").arg(&traj).arg(shipped("corner")));
    assert_eq!(code, 1);
    assert!(err.contains("version"), "{err}");

    let (code, _, err) = exec(bin().arg("audit").arg("-t").arg(&traj).arg(shipped("lshape")));
    assert_eq!(code, 1, "{err}");
}

#[test]
fn infeasible_qp_halts_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    // x >= 0 and x <= -1 at the same time
    let doc = one_dim(
        "contradiction",
        json!([hs(1.0, 0.0), hs(-1.0, -1.0)]),
        json!({"choose": 2, "of": [{"leaf": 0}, {"leaf": 1}]}),
        0.0,
    );
    let p = write_json(dir.path(), "c.json", &doc);
    let (code, out, _) = exec(bin().arg("run").arg(&p).arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 3, "{out}");
    assert!(out.contains("halted at t=0"), "{out}");

    // flagging keeps going and reports the resulting violation instead
    let (code, _, _) = exec(bin().arg("run").arg(&p).arg("-q").arg("--on-infeasible").arg("flag").arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 2);
}

#[test]
fn demo_emit_matches_shipped_files() {
    for name in combicbf::sim::demos::DEMO_NAMES {
        let (code, out, _) = exec(bin().args(["demo", name, "--emit"]));
        assert_eq!(code, 0);
        assert_eq!(out, std::fs::read_to_string(shipped(name)).unwrap(), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = exec(bin().arg("demo").arg("--emit-all").arg(dir.path()).arg("-q"));
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 6);
}

#[test]
fn env_var_sets_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = exec(bin().env("COMBICBF_OUT_DIR", dir.path()).args(["demo", "corner", "-q"]));
    assert_eq!(code, 0);
    assert!(dir.path().join("corner.jsonl").exists());
    assert!(dir.path().join("corner.summary.json").exists());
}

#[test]
fn dedicated_flags_override_set_which_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let mut c = bin();
        c.arg("run").arg(shipped("corner")).arg("-q").arg("--out-dir").arg(dir.path()).args(extra);
        exec(&mut c);
        let first = std::fs::read_to_string(dir.path().join("corner.jsonl")).unwrap();
        let header: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        header["dt"].as_f64().unwrap()
    };
    assert_eq!(run(&[]), 0.01);
    assert_eq!(run(&["--set", "sim.dt=0.02"]), 0.02);

    let fresh = tempfile::tempdir().unwrap();
    let (code, _, _) = exec(bin().arg("run").arg(shipped("corner")).arg("-q").arg("--out-dir").arg(fresh.path())
        .args(["--set", "output.format=csv", "--format", "jsonl"]));
    assert_eq!(code, 0);
    assert!(fresh.path().join("corner.jsonl").exists());
    assert!(!fresh.path().join("corner.csv").exists());
}

#[test]
fn gradcheck_passes_for_shipped_shapes() {
    for name in ["lshape", "surveillance"] {
        let (code, out, _) = exec(bin().arg("gradcheck").arg(shipped(name)));
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("0 of"));
    }
}

#[test]
fn batch_writes_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = exec(bin().arg("batch").arg(shipped("corner")).arg(shipped("cross")).args(["--workers", "2"]).arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 0, "{out}");
    assert!(dir.path().join("corner.jsonl").exists() && dir.path().join("cross.jsonl").exists());
    let names: Vec<&str> = out.lines().map(|l| l.split(':').next().unwrap()).collect();
    assert_eq!(names, vec!["corner", "cross"]);
}
