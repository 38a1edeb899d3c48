use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_cavity-phase");

fn tool(dir: &Path, args: &[&str]) -> Command {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).args(args).env_remove("CAVITY_PHASE_WORKERS");
    cmd
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "ok.toml", "alpha = 0.05\nspin_periods = 0.5\n");
    write(d, "bad.toml", "epsilon = 0.01\nepsilonn = 2\n");
    write(d, "neg.toml", "epsilon = -0.5\n");
    write(d, "blowup.toml", "norm_bound = 1e-300\nt_end = 2.0\n");

    let code = |args: &[&str]| tool(d, args).output().unwrap().status.code();
    assert_eq!(code(&["spin", "--config", "ok.toml"]), Some(0));
    assert_eq!(code(&["spin", "--config", "bad.toml"]), Some(2));
    assert_eq!(code(&["evolve", "--config", "neg.toml"]), Some(2));
    assert_eq!(code(&["evolve", "--config", "missing.toml"]), Some(2));
    assert_eq!(code(&["nonsense", "--config", "ok.toml"]), Some(2));
    assert_eq!(code(&["spin"]), Some(2));
    assert_eq!(code(&["evolve", "--config", "blowup.toml"]), Some(3));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "epsilon = 0.01\n\nbasis_sise = 4\n");
    let out = tool(dir.path(), &["evolve", "--config", "bad.toml"]).output().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("basis_sise"), "{err}");
    assert!(err.contains('3'), "{err}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "run.toml", "t_end = 3.0\nbasis_size = 4\n");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let status = tool(d, &["evolve", "--config", "run.toml", "--out", "o"]).status().unwrap();
        assert!(status.success());
        outputs.push((
            fs::read(d.join("o/manifest.json")).unwrap(),
            fs::read(d.join("o/trajectory.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(csv.starts_with("# manifest "));
}

#[test]
fn worker_count_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "w.toml", "workers = 2\nalpha = 0.05\nspin_periods = 0.25\n");
    let workers = |extra: &[&str], env: Option<&str>| {
        let mut args = vec!["spin", "--config", "w.toml", "--out", "o"];
        args.extend_from_slice(extra);
        let mut cmd = tool(d, &args);
        if let Some(v) = env {
            cmd.env("CAVITY_PHASE_WORKERS", v);
        }
        assert!(cmd.status().unwrap().success());
        let m: serde_json::Value =
            serde_json::from_slice(&fs::read(d.join("o/manifest.json")).unwrap()).unwrap();
        m["config"]["workers"].as_u64().unwrap()
    };
    assert_eq!(workers(&[], None), 2);
    assert_eq!(workers(&[], Some("3")), 3);
    assert_eq!(workers(&["--workers", "4"], Some("3")), 4);
}
