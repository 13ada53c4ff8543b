use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparse-consensus"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("scenario.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().unwrap()
}

#[test]
fn simulate_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "scenario = full_control\nsim.horizon = 2\nmicro.n_agents = 6\n");
    let out = tmp.path().join("run");
    let o = run(bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "9", "--set", "control.k=-0.2", "--out"])
        .arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "diagnostics.csv", "lyapunov.csv", "certificate.json", "manifest.json", "resolved.cfg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["control.k"], "-0.2");

    // Replaying from the manifest reproduces the trajectory byte for byte.
    let replay = tmp.path().join("replay");
    let o = run(bin()
        .args(["simulate", "--config"])
        .arg(out.join("manifest.json"))
        .arg("--out")
        .arg(&replay));
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(out.join("trajectory.csv")).unwrap(),
        std::fs::read(replay.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.dt = -1\n");
    let o = run(bin().args(["simulate", "--config"]).arg(&cfg));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sim.dt"));
}

#[test]
fn missing_file_exits_with_three() {
    let o = run(bin().args(["simulate", "--config", "/nonexistent/scenario.cfg"]));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn analyze_prints_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "scenario = full_control\nmicro.n_agents = 5\n");
    let o = run(bin().args(["analyze", "--config"]).arg(&cfg));
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["n"], 5);
    assert_eq!(report["lambda1_closed"], -0.1);
    assert_eq!(report["asymptotically_stable"], true);
}

#[test]
fn sweep_writes_combined_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scenario = leader_follower\nkernel.family = constant\nsim.horizon = 1\nlf.n_followers = 9\n",
    );
    let out = tmp.path().join("sweep");
    let o = run(bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--key", "lf.rho_l", "--values", "0.2,0.4", "--out"])
        .arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let combined = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(combined.starts_with("t,0.2,0.4\n"));
    assert_eq!(combined.lines().count(), 1 + 11);
    assert!(out.join("lf.rho_l=0.2").join("leaders.csv").exists());

    let o = run(bin().args(["sweep", "--config"]).arg(&cfg).args(["--key", "lf.nope", "--values", "1"]));
    assert_eq!(o.status.code(), Some(1));
}
