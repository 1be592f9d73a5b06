use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nhq(config: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhq")).arg("--config").arg(config).args(extra).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn eigs_grid_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "eigs.json",
        r#"{"experiment":"eigs","params":{"J":1,"gamma_e":4},
            "sweep":[{"param":"Delta","start":-3,"stop":3,"steps":101},{"param":"J","start":0,"stop":4,"steps":101}]}"#,
    );
    let out = dir.path().join("out");
    let o = nhq(&cfg, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = data_lines(&out.join("eigs.csv"));
    assert!(lines[0].starts_with("# config_sha256="));
    assert_eq!(lines[1], "delta,J,re_dlam,im_dlam,overlap");
    assert_eq!(lines.len(), 2 + 10201);

    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["status"], "ok");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["params"]["gamma_e"], 4.0);
    assert_eq!(manifest["config"]["params"]["Delta"], 0.0);
    assert!(manifest["version"].is_string() && manifest["wall_time_s"].is_number());
    let hash = manifest["config_sha256"].as_str().unwrap();
    assert_eq!(lines[0], format!("# config_sha256={hash},seed=0"));
}

#[test]
fn transition_reports_threshold_near_gamma_over_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fig2.json",
        r#"{"experiment":"transition","params":{"J":1,"gamma_e":6.7,"gamma_f":0.25},
            "sweep":[{"param":"J","start":0.25,"stop":8,"steps":32}],"time":{"t_max":4,"n_points":200}}"#,
    );
    let out = dir.path().join("out");
    let o = nhq(&cfg, &["--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    let j0 = summary["summary"]["j0"].as_f64().unwrap();
    assert!((j0 - 1.6125).abs() < 0.03 * 1.6125, "J0 = {j0}");
    let table: Value = serde_json::from_str(&fs::read_to_string(out.join("transition.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 32);
    assert!(table["provenance"]["config_sha256"].is_string());
}

#[test]
fn seed_flag_overrides_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "traj.json",
        r#"{"experiment":"traj","params":{"J":2,"gamma_e":4,"gamma_f":0.2},"time":{"t_max":1,"n_points":11},
            "ensemble":{"n_traj":3000},"master_seed":1}"#,
    );
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = nhq(&cfg, &["--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
        fs::read(out.join("traj.csv")).unwrap()
    };
    let a = run("9", "a");
    let b = run("9", "b");
    let c = run("10", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8(a).unwrap().starts_with("# config_sha256="));
}

#[test]
fn every_experiment_runs_and_stamps_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"experiment":"evolve","params":{"J":3,"gamma_e":6.7,"gamma_f":0.25},"options":{"method":"lindblad"}}"#,
        r#"{"experiment":"eigenstates","params":{"J":0.8,"gamma_e":5.25}}"#,
        r#"{"experiment":"steadystate","params":{"J":1,"gamma_e":6.7,"gamma_f":0.25},
            "sweep":[{"param":"Delta","start":-4,"stop":4,"steps":9},{"param":"J","start":0.5,"stop":5,"steps":4}]}"#,
        r#"{"experiment":"tomo","params":{"J":6.9,"gamma_e":7.1},"time":{"t_max":1,"n_points":20},
            "ensemble":{"shots":500,"assignment_error":0.02}}"#,
        r#"{"experiment":"qfi","params":{"J":2.7,"gamma_e":8},"sweep":[{"param":"J","start":2.2,"stop":3.2,"steps":5}],
            "time":{"t_max":20,"n_points":2}}"#,
    ];
    for (k, text) in configs.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{k}.json"), text);
        let out = dir.path().join(format!("o{k}"));
        let o = nhq(&cfg, &["--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{text}: {}", String::from_utf8_lossy(&o.stderr));
        let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
        for f in summary["outputs"].as_array().unwrap() {
            let text = fs::read_to_string(f.as_str().unwrap()).unwrap();
            assert!(text.starts_with("# config_sha256="), "{f}");
            assert!(!text.contains('\r'));
        }
    }
}

#[test]
fn config_failures_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"experiment":"eigs","params":{"J":1,"gamma_e":4},"colour":"red"}"#, "unknown field `colour`"),
        (r#"{"experiment":"eigs","params":{"J":1,"gamma_e":1,"gamma_f":2}}"#, "params"),
        (r#"{"experiment":"qfi","params":{"J":1,"gamma_e":4},"sweep":[{"param":"Q","start":0,"stop":1,"steps":2}]}"#, "sweep[0].param"),
        (r#"{"experiment":"evolve","params":{"J":1,"gamma_e":4},"time":{"t_max":-1,"n_points":4}}"#, "time.t_max"),
        ("{\"experiment\":\"eigs\",\n\"params\":{\"J\":1,}}", ":2:"),
    ];
    for (k, (text, needle)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{k}.json"), text);
        let o = nhq(&cfg, &["--dry-run"]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{err}");
    }
    let o = nhq(&dir.path().join("missing.json"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dry_run_validates_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ok.json", r#"{"experiment":"eigs","params":{"J":1,"gamma_e":4}}"#);
    let out = dir.path().join("never");
    let o = nhq(&cfg, &["--dry-run", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!out.exists());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "valid");
}

#[test]
fn empty_post_selection_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "empty.json",
        r#"{"experiment":"transition","params":{"J":0.5,"gamma_e":8},"sweep":[{"param":"J","start":0.5,"stop":3,"steps":4}],
            "time":{"t_max":60,"n_points":10},"ensemble":{"n_traj":1},"options":{"source":"trajectories"}}"#,
    );
    let o = nhq(&cfg, &["--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("statistics"));
}
