use std::path::Path;
use std::process::{Command, Output};

fn stochstab(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stochstab"));
    cmd.args(args).env_remove("STOCHSTAB_OUT_DIR");
    if let Some(dir) = out_dir {
        cmd.env("STOCHSTAB_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_prints_every_builtin() {
    let o = stochstab(&["list"], None);
    assert!(o.status.success());
    let text = stdout(&o);
    for id in [
        "krasovskii",
        "perturbed-drift",
        "perturbed-coupled",
        "radial-affine",
        "polar-radial",
        "exterior-ball",
        "periodic-orbit",
        "linear-tangential",
        "deterministic-linear",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(id)),
            "{id} missing from:\n{text}"
        );
    }
}

#[test]
fn unknown_builtin_is_a_configuration_error() {
    let o = stochstab(&["run", "--builtin", "no-such-model"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("radial-affine"), "{}", stderr(&o));
}

#[test]
fn malformed_scenario_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "name = \"bad\"\nstages = [\"verify\"\n").unwrap();
    let o = stochstab(&["run", file.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn bad_expression_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("expr.toml");
    std::fs::write(
        &file,
        r#"
name = "expr"
stages = ["verify"]

[model.inline]
states = ["x1"]
drift = ["-x1 * unknown_symbol"]
dispersion = [["0"]]
lyapunov = "x1^2"

[tolerances]
orth_tol = 1e-8
margin_tol = 1e-9
"#,
    )
    .unwrap();
    let o = stochstab(&["run", file.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown_symbol"), "{}", stderr(&o));
    assert!(!dir.path().join("expr").exists());
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochstab(
        &["run", "--builtin", "deterministic-linear", "--paths", "3"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = dir.path().join("deterministic-linear");
    for f in [
        "report.json",
        "timings.json",
        "plot.py",
        "paths/path_0000.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["monte_carlo"]["path_count"], 3);
    assert_eq!(report["passed"], true);
    assert!(stdout(&o)
        .lines()
        .any(|l| l.starts_with("PASS target_bound")));
}

#[test]
fn overrides_change_the_recorded_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochstab(
        &[
            "run",
            "--builtin",
            "linear-tangential",
            "--seed",
            "11",
            "--paths",
            "4",
            "--dt",
            "0.002",
            "--horizon",
            "1",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.code().is_some_and(|c| c <= 1));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("linear-tangential/report.json")).unwrap(),
    )
    .unwrap();
    let mc = &report["monte_carlo"];
    assert_eq!(mc["master_seed"], 11);
    assert_eq!(mc["path_count"], 4);
    assert_eq!(mc["dt"], 0.002);
    assert_eq!(mc["horizon"], 1.0);
}

#[test]
fn repository_scenarios_pass() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let o = stochstab(
            &["run", path.to_str().unwrap(), "--paths", "40"],
            Some(dir.path()),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}:\n{}{}",
            path.display(),
            stdout(&o),
            stderr(&o)
        );
    }
}
